"""Fresnel reflection model and classical echo features (reflection spectra, dispersion)."""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.signal import hilbert

from .waveform import WaveformConfig, gaussian_pulse, modulate, time_axis

SEQUENCE_LENGTH = 1120


class Material(Enum):
    NONCORRODED_REBAR = "non_corroded_rebar"
    CORRODED_REBAR = "corroded_rebar"
    NONLEAKED_PVC = "non_leaked_pvc"
    LEAKED_PVC = "leaked_pvc"
    CUSTOM = "custom"


# Complex refractive indices for the four target classes. These are simulation
# knobs (metal >> wall, corrosion adds loss, water-filled pipe is water-like),
# not measured constants; override per Target for anything quantitative.
MATERIAL_INDICES = {
    Material.NONCORRODED_REBAR: 80.0 + 80.0j,
    Material.CORRODED_REBAR: 30.0 + 15.0j,
    Material.NONLEAKED_PVC: 1.7 + 0.005j,
    Material.LEAKED_PVC: 9.0 + 1.0j,
}


@dataclass(frozen=True)
class FresnelPair:
    """Reflection coefficients of a wall/target interface for one incidence angle."""

    gamma_p: complex
    gamma_s: complex
    n_wall: complex
    n_target: complex
    incidence: float
    refraction: complex


def fresnel(n_wall, n_target, incidence: float = 0.0) -> FresnelPair:
    """Co-/cross-polarization reflection coefficients at a dielectric interface.

    The refraction angle follows Snell's relation
    sin(incidence)/sin(refraction) = n_target/n_wall; the complex cosine
    branch is chosen with a non-negative imaginary part (decaying evanescent
    wave).
    """
    n0 = complex(n_wall)
    ns = complex(n_target)
    if n0 == 0 or ns == 0:
        raise ValueError("refractive indices must be nonzero")
    if not 0.0 <= incidence < np.pi / 2:
        raise ValueError("incidence angle must lie in [0, pi/2)")
    sin_s = np.sin(incidence) * n0 / ns
    cos_s = np.sqrt(1.0 + 0j - sin_s**2)
    if cos_s.imag < 0:
        cos_s = -cos_s
    cos_0 = np.cos(incidence)
    gamma_p = (ns * cos_0 - n0 * cos_s) / (ns * cos_0 + n0 * cos_s)
    gamma_s = (n0 * cos_0 - ns * cos_s) / (n0 * cos_0 + ns * cos_s)
    return FresnelPair(
        gamma_p=complex(gamma_p),
        gamma_s=complex(gamma_s),
        n_wall=n0,
        n_target=ns,
        incidence=float(incidence),
        refraction=complex(np.arcsin(sin_s)),
    )


@dataclass
class PolSample:
    """Dual-polarization trace pair feeding material identification.

    Both sequences have exactly SEQUENCE_LENGTH samples; material and
    environment labels are optional (absent for field extractions, filled by
    the dataset generator).
    """

    co: np.ndarray
    cross: np.ndarray
    material: Material | None = None
    environment: str | None = None
    clamped: bool = False

    def __post_init__(self):
        self.co = np.asarray(self.co, dtype=np.float32)
        self.cross = np.asarray(self.cross, dtype=np.float32)
        for name, seq in (("co", self.co), ("cross", self.cross)):
            if seq.shape != (SEQUENCE_LENGTH,):
                raise ValueError(f"{name} sequence must have length {SEQUENCE_LENGTH}")
            if not np.all(np.isfinite(seq)):
                raise ValueError(f"{name} sequence contains non-finite values")


@dataclass(frozen=True)
class ReflectionSpectrum:
    """Band-limited reflection-coefficient estimate Gamma(f) = Echo(f)/Tx(f)."""

    freqs: np.ndarray
    gamma: np.ndarray
    valid: np.ndarray

    def fit_delay(self) -> float:
        """Delay (s) from the phase slope of Gamma over the valid band."""
        if not np.any(self.valid):
            raise ValueError("no valid bins to fit")
        f = self.freqs[self.valid]
        phase = np.unwrap(np.angle(self.gamma[self.valid]))
        slope = np.polyfit(f, phase, 1)[0]
        return float(-slope / (2.0 * np.pi))


def _reference_waveform(wf: WaveformConfig, n: int) -> np.ndarray:
    """Transmitted pulse placed circularly at zero delay on an n-sample grid."""
    t = time_axis(wf, n)
    pulse = modulate(gaussian_pulse(wf, t), t, wf)
    return np.roll(pulse, -(n // 2))


def estimate_reflection_spectrum(
    echo, wf: WaveformConfig, floor_ratio: float = 0.05
) -> ReflectionSpectrum:
    """Divide the echo spectrum by the transmitted-pulse spectrum, band-limited.

    Bins where the transmit spectrum falls below ``floor_ratio`` of its peak
    are marked invalid and set to zero instead of amplifying noise.
    """
    x = np.asarray(echo, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise ValueError("echo must be a 1-D sequence")
    ref_spec = np.fft.rfft(_reference_waveform(wf, x.size))
    echo_spec = np.fft.rfft(x)
    mag = np.abs(ref_spec)
    valid = mag > floor_ratio * mag.max()
    gamma = np.zeros_like(echo_spec)
    gamma[valid] = echo_spec[valid] / ref_spec[valid]
    freqs = np.fft.rfftfreq(x.size, d=1.0 / wf.sample_rate)
    return ReflectionSpectrum(freqs=freqs, gamma=gamma, valid=valid)


@dataclass(frozen=True)
class DispersionFeatures:
    envelope_width: float  # -3 dB width of the analytic envelope, seconds
    spectral_centroid: float  # Hz
    spectral_skewness: float


def _width_at_level(env: np.ndarray, level: float, dt: float) -> float:
    peak = int(np.argmax(env))
    left = peak
    while left > 0 and env[left] > level:
        left -= 1
    right = peak
    while right < env.size - 1 and env[right] > level:
        right += 1
    # linear interpolation of the two crossings
    if env[left] <= level and env[left + 1] > level:
        frac = (level - env[left]) / (env[left + 1] - env[left])
        t_left = left + frac
    else:
        t_left = float(left)
    if env[right] <= level and env[right - 1] > level:
        frac = (level - env[right]) / (env[right - 1] - env[right])
        t_right = right - frac
    else:
        t_right = float(right)
    return (t_right - t_left) * dt


def dispersion_features(
    echo, wf: WaveformConfig, min_peak_ratio: float = 5.0
) -> DispersionFeatures:
    """Time- and frequency-domain dispersion descriptors of a single echo.

    Requires a detectable pulse: the envelope peak must exceed
    ``min_peak_ratio`` times the median envelope.
    """
    x = np.asarray(echo, dtype=float)
    if x.ndim != 1 or x.size < 16:
        raise ValueError("echo must be a 1-D sequence")
    env = np.abs(hilbert(x))
    peak = float(env.max())
    if peak <= min_peak_ratio * float(np.median(env)):
        raise ValueError("no detectable pulse in echo")
    dt = 1.0 / wf.sample_rate
    width = _width_at_level(env, peak / np.sqrt(2.0), dt)

    power = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(x.size, d=dt)
    total = power.sum()
    centroid = float((freqs * power).sum() / total)
    var = float(((freqs - centroid) ** 2 * power).sum() / total)
    if var <= 0:
        skew = 0.0
    else:
        skew = float(((freqs - centroid) ** 3 * power).sum() / total / var**1.5)
    return DispersionFeatures(
        envelope_width=float(width),
        spectral_centroid=centroid,
        spectral_skewness=skew,
    )
