"""Transmit pulse synthesis: baseband Gaussian, carrier modulation, IQ demodulation."""

from dataclasses import dataclass

import numpy as np

_LN10 = float(np.log(10.0))


def sigma_from_bandwidth(bandwidth: float) -> float:
    """Gaussian envelope sigma (s) for a given -10 dB two-sided power bandwidth (Hz)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return float(np.sqrt(_LN10) / (np.pi * bandwidth))


@dataclass(frozen=True)
class WaveformConfig:
    """Transmitted pulse: Gaussian envelope modulated onto a cosine carrier.

    The envelope sigma is derived from the -10 dB two-sided power bandwidth,
    so the two stay consistent by construction. The sample rate must satisfy
    Nyquist for the upper band edge (carrier + half bandwidth).
    """

    amplitude: float = 1.0
    carrier: float = 7.29e9
    bandwidth: float = 1.5e9
    sample_rate: float = 23.328e9

    def __post_init__(self):
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if self.carrier <= 0:
            raise ValueError("carrier must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        nyquist_floor = 2.0 * (self.carrier + 0.5 * self.bandwidth)
        if self.sample_rate <= nyquist_floor:
            raise ValueError(
                f"sample_rate {self.sample_rate:g} Hz violates Nyquist; "
                f"needs > {nyquist_floor:g} Hz for carrier + bandwidth/2"
            )

    @property
    def sigma(self) -> float:
        return sigma_from_bandwidth(self.bandwidth)


def time_axis(cfg: WaveformConfig, n: int) -> np.ndarray:
    """Centered sample grid: n points spaced 1/sample_rate with t=0 on-grid."""
    return (np.arange(n) - n // 2) / cfg.sample_rate


def _validate_axis(t_axis, sample_rate: float) -> np.ndarray:
    t = np.asarray(t_axis, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("time axis must be 1-D with at least two samples")
    step = 1.0 / sample_rate
    if not np.allclose(np.diff(t), step, rtol=1e-6, atol=step * 1e-6):
        raise ValueError("time axis must be uniform with spacing 1/sample_rate")
    offset = t[0] * sample_rate
    if abs(offset - round(offset)) > 1e-6:
        raise ValueError("time axis must place t=0 on the sample grid")
    return t


def gaussian_pulse(cfg: WaveformConfig, t_axis) -> np.ndarray:
    """Baseband Gaussian pulse sampled on a uniform grid."""
    t = _validate_axis(t_axis, cfg.sample_rate)
    sigma = cfg.sigma
    return cfg.amplitude * np.exp(-(t**2) / (2.0 * sigma**2))


def modulate(baseband, t_axis, cfg: WaveformConfig) -> np.ndarray:
    """Mix a real baseband sequence onto the carrier: x(t) = s(t) cos(2 pi f_c t)."""
    t = _validate_axis(t_axis, cfg.sample_rate)
    s = np.asarray(baseband, dtype=float)
    if s.shape != t.shape:
        raise ValueError("baseband sequence and time axis must have the same length")
    return s * np.cos(2.0 * np.pi * cfg.carrier * t)


def lowpass_kernel(cutoff: float, sample_rate: float, taps: int = 129) -> np.ndarray:
    """Windowed-sinc FIR lowpass (Hamming), normalized to unit DC gain.

    Odd tap count keeps the kernel symmetric, so applying it with
    ``np.convolve(..., mode="same")`` is zero-phase.
    """
    if taps % 2 == 0:
        raise ValueError("taps must be odd for a zero-phase kernel")
    if not 0 < cutoff < sample_rate / 2:
        raise ValueError("cutoff must lie inside (0, sample_rate/2)")
    n = np.arange(taps) - (taps - 1) / 2
    h = 2.0 * cutoff / sample_rate * np.sinc(2.0 * cutoff * n / sample_rate)
    h *= np.hamming(taps)
    return h / h.sum()


def demodulate(rf, t_axis, cfg: WaveformConfig, taps: int = 129, cutoff: float | None = None) -> np.ndarray:
    """Quadrature demodulation to complex baseband.

    Multiplies by exp(-j 2 pi f_c t), lowpass-filters and scales by 2, so the
    magnitude of the result recovers the envelope of a modulated pulse. The
    default cutoff is twice the -10 dB bandwidth: the Gaussian envelope still
    carries a few percent of its energy beyond B/2, and a cutoff at B clips
    enough of it to break 1%-level envelope recovery at the pulse skirts.
    """
    t = _validate_axis(t_axis, cfg.sample_rate)
    x = np.asarray(rf, dtype=float)
    if x.shape[-1] != t.size:
        raise ValueError("rf sequence and time axis must have the same length")
    mixed = x * np.exp(-2j * np.pi * cfg.carrier * t)
    h = lowpass_kernel(cutoff or 2.0 * cfg.bandwidth, cfg.sample_rate, taps=taps)
    if mixed.ndim == 1:
        return 2.0 * np.convolve(mixed, h, mode="same")
    # row-wise filtering for 2-D input (one sequence per row)
    from scipy.signal import fftconvolve

    return 2.0 * fftconvolve(mixed, h[None, :], mode="same", axes=1)
