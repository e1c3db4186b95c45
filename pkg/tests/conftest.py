import numpy as np
import pytest

from wallradar import Channel, ScanConfig, Scene, Target, WaveformConfig, synthesize_bscan


@pytest.fixture(scope="session")
def wf():
    return WaveformConfig()


@pytest.fixture(scope="session")
def canonical_scene():
    """Single rebar-like target at (20 cm, 5 cm) in an eps=9 wall."""
    return Scene(
        permittivity=9.0,
        attenuation=30.0,
        targets=(Target(x=0.2, depth=0.05, reflectivity=-0.9 + 0.0j, refractive_index=80 + 80j),),
    )


@pytest.fixture(scope="session")
def canonical_scan():
    return ScanConfig(speed=0.02, frame_rate=40.0, length=0.4, noise_std=0.0, seed=7)


@pytest.fixture(scope="session")
def canonical_bscan(canonical_scene, canonical_scan, wf):
    return synthesize_bscan(canonical_scene, canonical_scan, wf, Channel.CO)
