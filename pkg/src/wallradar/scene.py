"""Forward model: dual-polarization B-scan synthesis over in-wall point scatterers."""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.constants import c as C0

from .polarimetry import MATERIAL_INDICES, Material, fresnel
from .waveform import WaveformConfig

# Per-material simulation presets: complex base reflectivity and
# pulse-broadening dispersion slope in ns/GHz. Knobs, not measured constants.
# The reflection phases (180/150/0/115 degrees) are environment-invariant
# class cues; the dispersion slopes separate classes too but mix with the
# wall medium's own broadening, so they are only reliable within one wall.
MATERIAL_PRESETS = {
    Material.NONCORRODED_REBAR: {"reflectivity": -0.90 + 0.0j, "dispersion_slope": 0.0},
    Material.CORRODED_REBAR: {"reflectivity": -0.537 + 0.310j, "dispersion_slope": 0.30},
    Material.NONLEAKED_PVC: {"reflectivity": 0.25 + 0.0j, "dispersion_slope": 0.10},
    Material.LEAKED_PVC: {"reflectivity": 0.0 + 0.56j, "dispersion_slope": 0.55},
}


class Channel(Enum):
    CO = "co"
    CROSS = "cross"


@dataclass(frozen=True)
class Target:
    """Point scatterer at horizontal position x (m) and depth (m, > 0)."""

    x: float
    depth: float
    material: Material = Material.CUSTOM
    reflectivity: complex = 0.5 + 0.0j
    refractive_index: complex = 4.0 + 0.0j
    dispersion_slope: float = 0.0  # ns/GHz of extra envelope sigma

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("target depth must be positive")
        if abs(self.reflectivity) > 1.0 + 1e-12:
            raise ValueError("|reflectivity| must not exceed 1")

    @classmethod
    def of_material(cls, material: Material, x: float, depth: float) -> "Target":
        """Target with the preset reflectivity/index/dispersion of a material class."""
        if material not in MATERIAL_PRESETS:
            raise ValueError(f"no preset for material {material}")
        preset = MATERIAL_PRESETS[material]
        return cls(
            x=x,
            depth=depth,
            material=material,
            reflectivity=preset["reflectivity"],
            refractive_index=MATERIAL_INDICES[material],
            dispersion_slope=preset["dispersion_slope"],
        )


@dataclass(frozen=True)
class Scene:
    """Wall properties plus buried targets.

    dispersion_slope models the wall medium's own pulse broadening in ns/GHz
    per meter of two-way path; it adds to each target's material broadening.
    """

    permittivity: float = 9.0
    attenuation: float = 50.0  # dB/m at the carrier; placeholder default
    targets: tuple = ()
    dispersion_slope: float = 0.0  # ns/GHz per meter of two-way path

    def __post_init__(self):
        if self.permittivity < 1.0:
            raise ValueError("relative permittivity must be >= 1")
        if self.attenuation < 0.0:
            raise ValueError("attenuation must be >= 0")
        if self.dispersion_slope < 0.0:
            raise ValueError("dispersion slope must be >= 0")
        object.__setattr__(self, "targets", tuple(self.targets))
        positions = [(t.x, t.depth) for t in self.targets]
        if len(set(positions)) != len(positions):
            raise ValueError("targets must have distinct positions")

    @property
    def wave_speed(self) -> float:
        """Propagation speed in the wall: c0 / sqrt(permittivity)."""
        return C0 / math.sqrt(self.permittivity)


@dataclass(frozen=True)
class ScanConfig:
    """Probe motion, noise and sampling of one scan."""

    speed: float = 0.02  # m/s
    frame_rate: float = 40.0  # frames/s
    length: float = 0.4  # m
    noise_std: float = 0.0
    seed: int = 0
    speed_jitter: float = 0.0  # relative per-column jitter of dx; 0 disables
    n_samples: int | None = None  # range samples per column; None = auto

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("probe speed must be positive")
        if self.frame_rate <= 0:
            raise ValueError("frame rate must be positive")
        if self.noise_std < 0:
            raise ValueError("noise std must be >= 0")
        if self.speed_jitter < 0:
            raise ValueError("speed jitter must be >= 0")

    @property
    def dx(self) -> float:
        return self.speed / self.frame_rate

    @property
    def n_columns(self) -> int:
        # epsilon absorbs float representation of speed/frame_rate ratios
        return int(math.floor(self.length / self.dx + 1e-9))


@dataclass
class BScan:
    """2-D received-signal matrix, shape (n_columns, n_samples), float32.

    Rows are probe positions spaced dx apart, columns are range samples at
    sample_rate. Scene/scan provenance is present only for synthetic scans.
    """

    data: np.ndarray
    channel: Channel
    dx: float
    sample_rate: float
    waveform: WaveformConfig
    scene: Scene | None = None
    scan: ScanConfig | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("B-scan data must be a 2-D matrix")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("B-scan data contains non-finite values")
        if self.dx <= 0:
            raise ValueError("dx must be positive")

    @property
    def n_columns(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


def echo_delay(target: Target, probe_x, scene: Scene):
    """Two-way travel time from probe position(s) to a buried target.

    Traces the hyperbola t(x) = (2/c) sqrt((x - x0)^2 + z0^2); accepts a
    scalar or an array of probe positions.
    """
    r = np.hypot(np.asarray(probe_x, dtype=float) - target.x, target.depth)
    return 2.0 * r / scene.wave_speed


def _effective_sigma(target: Target, wf: WaveformConfig, scene: Scene | None = None, path=0.0):
    # dispersion slopes are ns/GHz = 1e-18 s/Hz of added envelope sigma; the
    # wall's own contribution grows with the two-way path length
    sigma = wf.sigma + target.dispersion_slope * 1e-18 * wf.bandwidth
    if scene is not None and scene.dispersion_slope > 0.0:
        sigma = sigma + scene.dispersion_slope * path * 1e-18 * wf.bandwidth
    return sigma


def _channel_gain(target: Target, scene: Scene, channel: Channel) -> float:
    pair = fresnel(math.sqrt(scene.permittivity), target.refractive_index, 0.0)
    coeff = pair.gamma_p if channel is Channel.CO else pair.gamma_s
    return abs(coeff)


def _auto_samples(scene: Scene, cfg: ScanConfig, wf: WaveformConfig) -> int:
    if not scene.targets:
        return 256
    span = max(cfg.length, cfg.n_columns * cfg.dx)
    tau_max = 0.0
    sigma_max = wf.sigma
    for t in scene.targets:
        far_x = max(abs(t.x), abs(span - t.x))
        r = math.hypot(far_x, t.depth)
        tau_max = max(tau_max, 2.0 * r / scene.wave_speed)
        sigma_max = max(sigma_max, float(_effective_sigma(t, wf, scene, path=2.0 * r)))
    n = int(math.ceil((tau_max + 6.0 * sigma_max) * wf.sample_rate))
    return max(n, 64)


def _column_rng(seed: int, channel: Channel, column: int) -> np.random.Generator:
    tag = 0 if channel is Channel.CO else 1
    return np.random.default_rng(np.random.SeedSequence([seed, tag, column]))


def _target_echoes(scene, xs, t, wf, channel):
    """Noise-free superposition of all target echoes, shape (len(xs), len(t))."""
    out = np.zeros((xs.size, t.size), dtype=float)
    c = scene.wave_speed
    for target in scene.targets:
        r = np.hypot(xs - target.x, target.depth)[:, None]
        tau = 2.0 * r / c
        gain = _channel_gain(target, scene, channel)
        spread = 1.0 / r
        atten = 10.0 ** (-scene.attenuation * 2.0 * r / 20.0)
        amp = target.reflectivity * gain * spread * atten
        sigma = _effective_sigma(target, wf, scene, path=2.0 * r)
        dt = t[None, :] - tau
        envelope = wf.amplitude * np.exp(-(dt**2) / (2.0 * sigma**2))
        phase = 2.0 * np.pi * wf.carrier * dt + np.angle(amp)
        out += np.abs(amp) * envelope * np.cos(phase)
    return out


def synthesize_ascan(
    scene: Scene,
    probe_x: float,
    cfg: ScanConfig,
    wf: WaveformConfig,
    channel: Channel = Channel.CO,
    rng: np.random.Generator | None = None,
    n_samples: int | None = None,
) -> np.ndarray:
    """One received trace at a single probe position (float64, length n_samples)."""
    n = n_samples or cfg.n_samples or _auto_samples(scene, cfg, wf)
    t = np.arange(n) / wf.sample_rate
    trace = _target_echoes(scene, np.atleast_1d(float(probe_x)), t, wf, channel)[0]
    if cfg.noise_std > 0:
        if rng is None:
            rng = _column_rng(cfg.seed, channel, 0)
        trace = trace + rng.normal(0.0, cfg.noise_std, size=n)
    return trace


def synthesize_bscan(
    scene: Scene,
    cfg: ScanConfig,
    wf: WaveformConfig,
    channel: Channel = Channel.CO,
) -> BScan:
    """Stack traces over probe positions x_i = i*dx into a B-scan.

    Deterministic for a fixed seed: per-column noise streams are derived from
    (seed, channel, column), so column synthesis order does not matter.
    """
    n_cols = cfg.n_columns
    if n_cols < 1:
        raise ValueError("scan length is shorter than one probe step")
    n = cfg.n_samples or _auto_samples(scene, cfg, wf)
    t = np.arange(n) / wf.sample_rate

    xs = np.arange(n_cols) * cfg.dx
    if cfg.speed_jitter > 0:
        jitter_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
        steps = cfg.dx * (1.0 + cfg.speed_jitter * jitter_rng.standard_normal(n_cols))
        xs = np.concatenate([[0.0], np.cumsum(steps[1:])])

    data = _target_echoes(scene, xs, t, wf, channel)
    if cfg.noise_std > 0:
        for i in range(n_cols):
            rng = _column_rng(cfg.seed, channel, i)
            data[i] += rng.normal(0.0, cfg.noise_std, size=n)

    return BScan(
        data=data.astype(np.float32),
        channel=channel,
        dx=cfg.dx,
        sample_rate=wf.sample_rate,
        waveform=wf,
        scene=scene,
        scan=cfg,
    )


def with_noise_for_snr(scene, cfg, wf, snr_db, channel=Channel.CO):
    """ScanConfig whose noise level realizes a peak-amplitude SNR in dB."""
    clean = synthesize_bscan(scene, replace(cfg, noise_std=0.0), wf, channel)
    peak = float(np.abs(clean.data).max())
    if peak == 0.0:
        raise ValueError("scene produces no signal; SNR undefined")
    return replace(cfg, noise_std=peak / 10.0 ** (snr_db / 20.0))
