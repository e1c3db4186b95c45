import subprocess
import sys

import pytest


def export_dataset(kind, n, seed, out):
    """Generate a dataset through the radar toolkit's CLI (its public interface)."""
    subprocess.run(
        [
            sys.executable,
            "-m",
            "wallradar.cli",
            "export-dataset",
            "--kind",
            kind,
            "--n",
            str(n),
            "--seed",
            str(seed),
            "--out",
            str(out),
        ],
        check=True,
        capture_output=True,
    )
    return out


@pytest.fixture(scope="session")
def mnet_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("mnet_data") / "d"
    return export_dataset("mnet", 240, 17, out)


@pytest.fixture(scope="session")
def inet_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("inet_data") / "d"
    return export_dataset("inet", 24, 17, out)
