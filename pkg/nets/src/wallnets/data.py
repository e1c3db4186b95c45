"""Reader for the radar toolkit's on-disk dataset format.

The format is the cross-package contract, so it is implemented here from its
documented layout rather than imported: a dataset directory holds
``manifest.json`` plus one blob per array. Blobs start with a 16-byte header
(8-byte magic ``RDRBIN01``, little-endian uint32 version, uint32 value count)
followed by row-major little-endian float32 values.
"""

import json
import struct
from pathlib import Path

import numpy as np
import torch

MAGIC = b"RDRBIN01"
VERSION = 1
_HEADER = struct.Struct("<8sII")


class DatasetFormatError(Exception):
    pass


def read_blob(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DatasetFormatError(f"{path}: truncated header")
        magic, version, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise DatasetFormatError(f"{path}: bad magic")
        if version != VERSION:
            raise DatasetFormatError(f"{path}: unsupported version {version}")
        payload = f.read()
    if len(payload) != 4 * count:
        raise DatasetFormatError(f"{path}: truncated payload")
    values = np.frombuffer(payload, dtype="<f4").copy()
    if not np.all(np.isfinite(values)):
        raise DatasetFormatError(f"{path}: non-finite values")
    return values


def write_blob(path, values: np.ndarray):
    """Writer counterpart, used to hand predictions back to the toolkit."""
    arr = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(arr)):
        raise DatasetFormatError(f"refusing to write non-finite values to {path}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, arr.size))
        f.write(arr.tobytes())


def load_manifest(dirpath) -> dict:
    path = Path(dirpath) / "manifest.json"
    if not path.exists():
        raise DatasetFormatError(f"{dirpath}: no manifest.json")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("record_count") != len(manifest.get("records", [])):
        raise DatasetFormatError(f"{dirpath}: record count does not match entries")
    return manifest


class ImagingPairs(torch.utils.data.Dataset):
    """(signal matrix, focused ground truth) pairs for the imaging network.

    Arrays come pre-normalized; the affine constants live in
    ``self.normalization`` for callers that need to invert them.
    """

    def __init__(self, dirpath, split: str | None = None):
        dirpath = Path(dirpath)
        manifest = load_manifest(dirpath)
        if manifest.get("record_type") != "bscan-pair":
            raise DatasetFormatError(f"{dirpath}: expected a bscan-pair dataset")
        self.normalization = manifest.get("normalization", {})
        self.manifest = manifest
        self.entries = [
            e for e in manifest["records"] if split is None or e.get("split") == split
        ]
        self._dir = dirpath

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, idx):
        entry = self.entries[idx]
        shape = tuple(entry["shape"])
        x = read_blob(self._dir / entry["input"]).reshape(shape)
        y = read_blob(self._dir / entry["target"]).reshape(shape)
        return (
            torch.from_numpy(x).unsqueeze(0),
            torch.from_numpy(y).unsqueeze(0),
            idx,
        )

    def entry(self, idx) -> dict:
        return self.entries[idx]


class PolarizationSamples(torch.utils.data.Dataset):
    """Labeled dual-polarization sequences for material identification.

    Material classes are indexed in the fixed canonical order below;
    environment labels are indexed over the distinct labels present in the
    chosen split (sorted for determinism).
    """

    MATERIALS = ("non_corroded_rebar", "corroded_rebar", "non_leaked_pvc", "leaked_pvc")

    def __init__(self, dirpath, split: str | None = None, environments: list | None = None):
        dirpath = Path(dirpath)
        manifest = load_manifest(dirpath)
        if manifest.get("record_type") != "polsample":
            raise DatasetFormatError(f"{dirpath}: expected a polsample dataset")
        self.manifest = manifest
        self.entries = [
            e for e in manifest["records"] if split is None or e.get("split") == split
        ]
        self._dir = dirpath
        if environments is None:
            environments = sorted({e["environment"] for e in self.entries})
        self.environments = list(environments)
        self._env_index = {env: i for i, env in enumerate(self.environments)}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, idx):
        entry = self.entries[idx]
        shape = tuple(entry["shape"])
        seq = read_blob(self._dir / entry["file"]).reshape(shape)
        material = self.MATERIALS.index(entry["material"])
        env = self._env_index.get(entry["environment"], -1)
        return torch.from_numpy(seq), material, env
