"""Target detection on focused images: 2-D cell-averaging CFAR plus sequence extraction."""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .focusing import FocusedImage
from .polarimetry import SEQUENCE_LENGTH, PolSample
from .scene import BScan, Target


@dataclass(frozen=True)
class CfarConfig:
    """Cell-averaging CFAR window: training/guard cells per side and target P_fa."""

    train: int = 8
    guard: int = 2
    pfa: float = 1e-4

    def __post_init__(self):
        if self.train < 1:
            raise ValueError("need at least one training cell per side")
        if self.guard < 0:
            raise ValueError("guard cells must be >= 0")
        if not 0.0 < self.pfa < 1.0:
            raise ValueError("pfa must lie in (0, 1)")

    @property
    def reach(self) -> int:
        return self.train + self.guard

    @property
    def n_training(self) -> int:
        outer = (2 * self.reach + 1) ** 2
        inner = (2 * self.guard + 1) ** 2
        return outer - inner

    @property
    def threshold_factor(self) -> float:
        n = self.n_training
        return n * (self.pfa ** (-1.0 / n) - 1.0)


@dataclass(frozen=True)
class Detection:
    """One detected target: position in meters, peak magnitude, local SNR in dB."""

    x: float
    depth: float
    peak: float
    snr_db: float


def _box_sum(arr: np.ndarray, half: int) -> np.ndarray:
    """Sum over (2*half+1)^2 windows; valid only where the window fits."""
    if half == 0:
        return arr.copy()
    padded = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    padded[1:, 1:] = np.cumsum(np.cumsum(arr, axis=0), axis=1)
    w = 2 * half + 1
    return (
        padded[w:, w:]
        - padded[:-w, w:]
        - padded[w:, :-w]
        + padded[:-w, :-w]
    )


def cfar_threshold_map(img: FocusedImage, cfg: CfarConfig):
    """(power, noise estimate, interior slice) for the CA-CFAR decision.

    Operates on pixel power (magnitude squared); the classic threshold factor
    N*(Pfa^(-1/N)-1) is exact for exponentially distributed power cells.
    Cells whose training ring does not fit inside the image are skipped.
    """
    reach = cfg.reach
    n_x, n_z = img.data.shape
    if n_x <= 2 * reach + 1 or n_z <= 2 * reach + 1:
        raise ValueError("image too small for the CFAR window")
    power = img.data.astype(np.float64) ** 2
    outer = _box_sum(power, reach)
    if cfg.guard == 0:
        inner = power[reach:-reach, reach:-reach]
    else:
        inner = _box_sum(power, cfg.guard)[
            reach - cfg.guard : -(reach - cfg.guard), reach - cfg.guard : -(reach - cfg.guard)
        ]
    noise = (outer - inner) / cfg.n_training
    interior = (slice(reach, n_x - reach), slice(reach, n_z - reach))
    return power, noise, interior


def cfar_mask(img: FocusedImage, cfg: CfarConfig) -> np.ndarray:
    """Boolean hit map (full image size; border cells are always False)."""
    power, noise, interior = cfar_threshold_map(img, cfg)
    hits = np.zeros(img.data.shape, dtype=bool)
    hits[interior] = power[interior] > cfg.threshold_factor * noise
    return hits


def cfar_detect(img: FocusedImage, cfg: CfarConfig = CfarConfig()) -> list:
    """Cell-averaging CFAR detection with 8-connected clustering.

    Each cluster of threshold crossings collapses to a single Detection at its
    magnitude-weighted centroid (sub-pixel). Detections are returned strongest
    first.
    """
    power, noise, interior = cfar_threshold_map(img, cfg)
    hits = np.zeros(img.data.shape, dtype=bool)
    hits[interior] = power[interior] > cfg.threshold_factor * noise
    if not hits.any():
        return []

    labels, n_clusters = ndimage.label(hits, structure=np.ones((3, 3), dtype=int))
    mag = img.data.astype(np.float64)
    reach = cfg.reach
    detections = []
    for cluster in range(1, n_clusters + 1):
        rows, cols = np.nonzero(labels == cluster)
        weights = mag[rows, cols]
        wsum = weights.sum()
        row_c = float((rows * weights).sum() / wsum)
        col_c = float((cols * weights).sum() / wsum)
        peak_idx = int(np.argmax(weights))
        pr, pc = int(rows[peak_idx]), int(cols[peak_idx])
        noise_at_peak = noise[pr - reach, pc - reach]
        if noise_at_peak > 0:
            # cap keeps SNR finite on (near-)noiseless synthetic images
            snr = min(10.0 * math.log10(power[pr, pc] / noise_at_peak), 300.0)
        else:
            snr = 300.0
        detections.append(
            Detection(
                x=row_c * img.dx,
                depth=img.origin_depth + col_c * img.dz,
                peak=float(mag[pr, pc]),
                snr_db=float(snr),
            )
        )
    detections.sort(key=lambda d: (-d.peak, d.x, d.depth))
    return detections


def localization_error(detection: Detection, truth: Target):
    """(|x_e - x_a|, |z_e - z_a|) against a matched ground-truth target."""
    return abs(detection.x - truth.x), abs(detection.depth - truth.depth)


def match_detections(detections, targets):
    """Pair each detection with its nearest ground-truth target."""
    pairs = []
    for d in detections:
        best = min(targets, key=lambda t: math.hypot(d.x - t.x, d.depth - t.depth))
        pairs.append((d, best))
    return pairs


def extract_sequence(
    b_co: BScan,
    b_cross: BScan,
    detection: Detection,
    window: int = 10,
) -> PolSample:
    """Dual-polarization trace pair for one detection.

    Among columns within +/-window of the detection's x position, picks the
    column with the largest co-polarized energy and returns both channels'
    traces at that column, cropped or zero-padded to SEQUENCE_LENGTH.
    """
    if b_co.data.shape != b_cross.data.shape or not math.isclose(
        b_co.dx, b_cross.dx, rel_tol=1e-9
    ):
        raise ValueError("co- and cross-polarized scans must share axes")
    n_cols = b_co.n_columns
    center = int(round(detection.x / b_co.dx))
    lo, hi = center - window, center + window
    clamped = False
    if lo < 0 or hi > n_cols - 1:
        warnings.warn("extraction window clamped to scan bounds", stacklevel=2)
        clamped = True
        lo, hi = max(lo, 0), min(hi, n_cols - 1)
    if lo > hi:
        raise ValueError("detection lies outside the scan extent")

    block = b_co.data[lo : hi + 1].astype(np.float64)
    energies = (block**2).sum(axis=1)
    if energies.max() == 0.0:
        raise ValueError("no signal in the extraction window")
    best = lo + int(np.argmax(energies))

    def fit(seq):
        out = np.zeros(SEQUENCE_LENGTH, dtype=np.float32)
        m = min(seq.size, SEQUENCE_LENGTH)
        out[:m] = seq[:m]
        return out

    return PolSample(
        co=fit(b_co.data[best]),
        cross=fit(b_cross.data[best]),
        clamped=clamped,
    )
