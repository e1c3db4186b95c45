"""In-wall IR-UWB radar toolkit: simulation, SAR focusing, detection, datasets."""

from .detect import CfarConfig, Detection, cfar_detect, extract_sequence, localization_error
from .focusing import FocusedImage, SpectrumMatrix, backproject, image_entropy, range_compress, rma
from .polarimetry import (
    SEQUENCE_LENGTH,
    DispersionFeatures,
    FresnelPair,
    Material,
    PolSample,
    ReflectionSpectrum,
    dispersion_features,
    estimate_reflection_spectrum,
    fresnel,
)
from .scene import (
    BScan,
    Channel,
    ScanConfig,
    Scene,
    Target,
    echo_delay,
    synthesize_ascan,
    synthesize_bscan,
    with_noise_for_snr,
)
from .waveform import WaveformConfig, demodulate, gaussian_pulse, modulate, sigma_from_bandwidth, time_axis

__version__ = "0.1.0"

__all__ = [
    "BScan",
    "CfarConfig",
    "Channel",
    "Detection",
    "DispersionFeatures",
    "FocusedImage",
    "FresnelPair",
    "Material",
    "PolSample",
    "ReflectionSpectrum",
    "ScanConfig",
    "Scene",
    "SEQUENCE_LENGTH",
    "SpectrumMatrix",
    "Target",
    "WaveformConfig",
    "backproject",
    "cfar_detect",
    "demodulate",
    "dispersion_features",
    "echo_delay",
    "estimate_reflection_spectrum",
    "extract_sequence",
    "fresnel",
    "gaussian_pulse",
    "image_entropy",
    "localization_error",
    "modulate",
    "range_compress",
    "rma",
    "sigma_from_bandwidth",
    "synthesize_ascan",
    "synthesize_bscan",
    "time_axis",
    "with_noise_for_snr",
    "__version__",
]
