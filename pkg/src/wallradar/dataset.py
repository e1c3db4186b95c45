"""Bit-exact persistence for scans, images and polarization samples.

On-disk layout: a dataset is a directory holding ``manifest.json`` plus one
binary blob per array. Blobs carry a 16-byte header (8-byte magic, uint32
version, uint32 value count, little-endian) followed by row-major
little-endian float32 values; all structural metadata lives in the manifest.
The format is deliberately trivial to parse from any language.
"""

import hashlib
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .focusing import FocusedImage, rma
from .polarimetry import SEQUENCE_LENGTH, Material, PolSample
from .scene import (
    BScan,
    Channel,
    ScanConfig,
    Scene,
    Target,
    synthesize_ascan,
    synthesize_bscan,
)
from .waveform import WaveformConfig

MAGIC = b"RDRBIN01"
VERSION = 1
_HEADER = struct.Struct("<8sII")

MANIFEST_NAME = "manifest.json"
SCHEMA_VERSION = 1


class DatasetError(Exception):
    """Base class for dataset persistence failures."""


class BadHeaderError(DatasetError):
    pass


class VersionMismatchError(DatasetError):
    pass


class TruncatedFileError(DatasetError):
    pass


class NonFiniteDataError(DatasetError):
    pass


class InconsistentManifestError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# blob level


def write_blob(path, values: np.ndarray):
    arr = np.ascontiguousarray(values, dtype="<f4")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteDataError(f"refusing to write non-finite values to {path}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, arr.size))
        f.write(arr.tobytes())


def read_blob(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise BadHeaderError(f"{path}: header truncated")
        magic, version, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise BadHeaderError(f"{path}: bad magic bytes")
        if version != VERSION:
            raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
        payload = f.read()
    if len(payload) != 4 * count:
        raise TruncatedFileError(
            f"{path}: expected {4 * count} payload bytes, found {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").copy()
    if not np.all(np.isfinite(values)):
        raise NonFiniteDataError(f"{path}: payload contains non-finite values")
    return values


# ---------------------------------------------------------------------------
# config (de)serialization


def _complex_pair(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def waveform_to_dict(wf: WaveformConfig) -> dict:
    return {
        "amplitude": wf.amplitude,
        "carrier": wf.carrier,
        "bandwidth": wf.bandwidth,
        "sample_rate": wf.sample_rate,
    }


def waveform_from_dict(d: dict) -> WaveformConfig:
    return WaveformConfig(**d)


def target_to_dict(t: Target) -> dict:
    return {
        "x": t.x,
        "depth": t.depth,
        "material": t.material.value,
        "reflectivity": _complex_pair(t.reflectivity),
        "refractive_index": _complex_pair(t.refractive_index),
        "dispersion_slope": t.dispersion_slope,
    }


def target_from_dict(d: dict) -> Target:
    return Target(
        x=d["x"],
        depth=d["depth"],
        material=Material(d.get("material", "custom")),
        reflectivity=complex(*d.get("reflectivity", [0.5, 0.0])),
        refractive_index=complex(*d.get("refractive_index", [4.0, 0.0])),
        dispersion_slope=d.get("dispersion_slope", 0.0),
    )


def scene_to_dict(s: Scene) -> dict:
    return {
        "permittivity": s.permittivity,
        "attenuation": s.attenuation,
        "dispersion_slope": s.dispersion_slope,
        "targets": [target_to_dict(t) for t in s.targets],
    }


def scene_from_dict(d: dict) -> Scene:
    return Scene(
        permittivity=d.get("permittivity", 9.0),
        attenuation=d.get("attenuation", 50.0),
        dispersion_slope=d.get("dispersion_slope", 0.0),
        targets=tuple(target_from_dict(t) for t in d.get("targets", [])),
    )


def scan_to_dict(s: ScanConfig) -> dict:
    return {
        "speed": s.speed,
        "frame_rate": s.frame_rate,
        "length": s.length,
        "noise_std": s.noise_std,
        "seed": s.seed,
        "speed_jitter": s.speed_jitter,
        "n_samples": s.n_samples,
    }


def scan_from_dict(d: dict) -> ScanConfig:
    return ScanConfig(
        speed=d.get("speed", 0.02),
        frame_rate=d.get("frame_rate", 40.0),
        length=d.get("length", 0.4),
        noise_std=d.get("noise_std", 0.0),
        seed=d.get("seed", 0),
        speed_jitter=d.get("speed_jitter", 0.0),
        n_samples=d.get("n_samples"),
    )


# ---------------------------------------------------------------------------
# record level


def record_type_of(record) -> str:
    if isinstance(record, BScan):
        return "bscan"
    if isinstance(record, FocusedImage):
        return "image"
    if isinstance(record, PolSample):
        return "polsample"
    raise TypeError(f"unsupported record type {type(record).__name__}")


def write_record(path, record, extra: dict | None = None) -> dict:
    """Write one record blob at ``path``.bin and return its manifest entry."""
    path = Path(path)
    filename = path.name + ".bin"
    kind = record_type_of(record)
    if kind == "bscan":
        write_blob(path.with_suffix(".bin"), record.data.ravel())
        entry = {
            "file": filename,
            "shape": list(record.data.shape),
            "channel": record.channel.value,
            "dx": record.dx,
            "sample_rate": record.sample_rate,
            "waveform": waveform_to_dict(record.waveform),
            "scene": scene_to_dict(record.scene) if record.scene else None,
            "scan": scan_to_dict(record.scan) if record.scan else None,
        }
    elif kind == "image":
        write_blob(path.with_suffix(".bin"), record.data.ravel())
        entry = {
            "file": filename,
            "shape": list(record.data.shape),
            "dx": record.dx,
            "dz": record.dz,
            "origin_depth": record.origin_depth,
        }
    else:
        payload = np.stack([record.co, record.cross])
        write_blob(path.with_suffix(".bin"), payload.ravel())
        entry = {
            "file": filename,
            "shape": list(payload.shape),
            "material": record.material.value if record.material else None,
            "environment": record.environment,
            "clamped": record.clamped,
        }
    if extra:
        entry.update(extra)
    return entry


def read_record(directory, entry: dict, kind: str):
    """Rebuild a record object from its manifest entry."""
    directory = Path(directory)
    values = read_blob(directory / entry["file"])
    shape = tuple(entry["shape"])
    if values.size != int(np.prod(shape)):
        raise InconsistentManifestError(
            f"{entry['file']}: payload size does not match manifest shape"
        )
    data = values.reshape(shape)
    if kind == "bscan":
        return BScan(
            data=data,
            channel=Channel(entry["channel"]),
            dx=entry["dx"],
            sample_rate=entry["sample_rate"],
            waveform=waveform_from_dict(entry["waveform"]),
            scene=scene_from_dict(entry["scene"]) if entry.get("scene") else None,
            scan=scan_from_dict(entry["scan"]) if entry.get("scan") else None,
        )
    if kind == "image":
        return FocusedImage(
            data=data,
            dx=entry["dx"],
            dz=entry["dz"],
            origin_depth=entry.get("origin_depth", 0.0),
        )
    if kind == "polsample":
        material = entry.get("material")
        return PolSample(
            co=data[0],
            cross=data[1],
            material=Material(material) if material else None,
            environment=entry.get("environment"),
            clamped=entry.get("clamped", False),
        )
    raise InconsistentManifestError(f"unknown record type {kind!r}")


# ---------------------------------------------------------------------------
# dataset directories


@dataclass
class DatasetContents:
    manifest: dict
    records: list
    entries: list


def _write_manifest(dirpath: Path, manifest: dict):
    text = json.dumps(manifest, sort_keys=True, indent=2)
    (dirpath / MANIFEST_NAME).write_text(text, encoding="utf-8")


def write_dataset(
    dirpath,
    records,
    record_type: str | None = None,
    normalization: dict | None = None,
    generator: dict | None = None,
    extras: list | None = None,
):
    """Persist a homogeneous list of records plus their manifest."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    records = list(records)
    if not records:
        raise ValueError("refusing to write an empty dataset")
    kind = record_type or record_type_of(records[0])
    entries = []
    for i, record in enumerate(records):
        extra = extras[i] if extras else None
        entries.append(write_record(dirpath / f"rec_{i:05d}", record, extra=extra))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "record_type": kind,
        "record_count": len(records),
        "channel_order": ["co", "cross"],
        "normalization": normalization,
        "generator": generator,
        "records": entries,
    }
    _write_manifest(dirpath, manifest)
    return manifest


def load_manifest(dirpath) -> dict:
    dirpath = Path(dirpath)
    path = dirpath / MANIFEST_NAME
    if not path.exists():
        raise InconsistentManifestError(f"{dirpath}: no {MANIFEST_NAME}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InconsistentManifestError(f"{path}: unreadable manifest: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise VersionMismatchError(
            f"{path}: schema version {manifest.get('schema_version')}, "
            f"expected {SCHEMA_VERSION}"
        )
    entries = manifest.get("records", [])
    if manifest.get("record_count") != len(entries):
        raise InconsistentManifestError(
            f"{path}: record_count {manifest.get('record_count')} does not match "
            f"{len(entries)} entries"
        )
    referenced = set()
    for entry in entries:
        for key in ("file", "input", "target"):
            if key in entry and entry[key]:
                referenced.add(entry[key])
    on_disk = {p.name for p in dirpath.glob("*.bin")}
    if referenced != on_disk:
        raise InconsistentManifestError(
            f"{dirpath}: manifest references {len(referenced)} blobs but "
            f"{len(on_disk)} are present"
        )
    return manifest


def read_dataset(dirpath) -> DatasetContents:
    dirpath = Path(dirpath)
    manifest = load_manifest(dirpath)
    kind = manifest["record_type"]
    records = []
    for entry in manifest["records"]:
        if kind == "bscan-pair":
            shape = tuple(entry["shape"])
            pair = {
                "input": read_blob(dirpath / entry["input"]).reshape(shape),
                "target": read_blob(dirpath / entry["target"]).reshape(shape),
            }
            records.append(pair)
        else:
            records.append(read_record(dirpath, entry, kind))
    return DatasetContents(manifest=manifest, records=records, entries=manifest["records"])


def tile_crops(matrix: np.ndarray, size: int = 200):
    """Overlapping size x size crops covering a larger matrix.

    Stride is half the crop size; the final row/column of crops is aligned to
    the matrix edge. A matrix no larger than the crop returns itself once.
    """
    n_r, n_c = matrix.shape
    if n_r <= size and n_c <= size:
        return [((0, 0), matrix)]
    stride = size // 2

    def starts(extent):
        if extent <= size:
            return [0]
        vals = list(range(0, extent - size, stride))
        vals.append(extent - size)
        return vals

    crops = []
    for r in starts(n_r):
        for c in starts(n_c):
            crops.append(((r, c), matrix[r : r + size, c : c + size]))
    return crops


# ---------------------------------------------------------------------------
# dataset generators


@dataclass(frozen=True)
class InetSampler:
    """Scene/scan randomization ranges for imaging-network training pairs."""

    permittivity_bands: tuple = ((5.0, 8.0), (8.0, 11.0), (11.0, 14.0))
    speed_bands_cm_s: tuple = ((1.0, 2.0), (2.0, 3.0), (3.0, 4.0))
    depth_range: tuple = (0.03, 0.10)
    target_count: tuple = (1, 5)
    # contact-probe scans are coherent-integration friendly; the upper band
    # keeps the focused ground truth's speckle floor below the blob structure
    snr_db_range: tuple = (25.0, 40.0)
    size: int = 200
    test_environments: tuple = (1, 5, 6)

    @property
    def environments(self) -> tuple:
        return tuple(range(len(self.permittivity_bands) * len(self.speed_bands_cm_s)))

    @property
    def train_environments(self) -> tuple:
        return tuple(e for e in self.environments if e not in self.test_environments)


_MATERIAL_CYCLE = (
    Material.NONCORRODED_REBAR,
    Material.CORRODED_REBAR,
    Material.NONLEAKED_PVC,
    Material.LEAKED_PVC,
)


def _inet_record(seed: int, index: int, split: str, sampler: InetSampler, wf: WaveformConfig):
    """Deterministically generate pair #index: (input matrix, target image, entry meta)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 100, index]))
    envs = sampler.train_environments if split == "train" else sampler.test_environments
    env = int(envs[rng.integers(len(envs))])
    eps_band = sampler.permittivity_bands[env // len(sampler.speed_bands_cm_s)]
    v_band = sampler.speed_bands_cm_s[env % len(sampler.speed_bands_cm_s)]
    eps = float(rng.uniform(*eps_band))
    speed = float(rng.uniform(*v_band)) / 100.0

    dx = speed / 40.0
    length = (sampler.size + 0.5) * dx
    k = int(rng.integers(sampler.target_count[0], sampler.target_count[1] + 1))
    targets = []
    for _ in range(k):
        x = float(rng.uniform(0.15 * length, 0.85 * length))
        depth = float(rng.uniform(*sampler.depth_range))
        material = _MATERIAL_CYCLE[rng.integers(4)]
        targets.append(Target.of_material(material, x, depth))
    scene = Scene(permittivity=eps, attenuation=30.0, targets=tuple(targets))
    cfg = ScanConfig(
        speed=speed,
        frame_rate=40.0,
        length=length,
        noise_std=0.0,
        seed=int(rng.integers(2**31)),
        n_samples=sampler.size,
    )
    clean = synthesize_bscan(scene, cfg, wf, Channel.CO)
    peak = float(np.abs(clean.data).max())
    snr_db = float(rng.uniform(*sampler.snr_db_range))
    noise_std = peak / 10.0 ** (snr_db / 20.0)
    noisy = clean.data.astype(np.float64) + rng.normal(0.0, noise_std, clean.data.shape)
    bscan = BScan(
        data=noisy.astype(np.float32),
        channel=Channel.CO,
        dx=cfg.dx,
        sample_rate=wf.sample_rate,
        waveform=wf,
        scene=scene,
        scan=replace(cfg, noise_std=noise_std),
    )
    truth = rma(bscan, eps, speed)
    meta = {
        "environment": env,
        "split": split,
        "permittivity": eps,
        "speed": speed,
        "snr_db": snr_db,
        "targets": [[t.x, t.depth] for t in targets],
    }
    return bscan.data.astype(np.float64), truth.data.astype(np.float64), meta


def _normalizer(total, total_sq, count, mean_out, std_out):
    pre_mean = total / count
    pre_var = max(total_sq / count - pre_mean**2, 0.0)
    pre_std = math.sqrt(pre_var)
    scale = std_out / pre_std if pre_std > 0 else 0.0
    params = {
        "pre_mean": pre_mean,
        "pre_std": pre_std,
        "mean": mean_out,
        "std": std_out,
    }

    def apply(x):
        return ((x - pre_mean) * scale + mean_out).astype(np.float32)

    return params, apply


def _generator_digest(params: dict) -> str:
    return hashlib.sha256(json.dumps(params, sort_keys=True).encode()).hexdigest()


def generate_inet_dataset(
    dirpath,
    n: int,
    seed: int,
    sampler: InetSampler | None = None,
    wf: WaveformConfig | None = None,
    train_fraction: float = 0.75,
) -> dict:
    """Write n (signal matrix, focused ground truth) pairs for imaging training.

    Ground truth is the Stolt migration with the generator's true permittivity
    and speed. Inputs are normalized dataset-wide to mean 0 / std 0.017 and
    targets to mean 0.092 / std 0.2423; the affine constants live in the
    manifest. Train and test records come from disjoint environment buckets.
    """
    if n < 1:
        raise ValueError("need at least one record")
    sampler = sampler or InetSampler()
    wf = wf or WaveformConfig()
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    n_train = int(round(train_fraction * n))
    splits = ["train"] * n_train + ["test"] * (n - n_train)

    # pass 1: dataset-wide statistics (records are a pure function of the seed)
    sums = np.zeros(2)
    sumsqs = np.zeros(2)
    count = 0
    for i in range(n):
        x, y, _ = _inet_record(seed, i, splits[i], sampler, wf)
        sums += (x.sum(), y.sum())
        sumsqs += ((x**2).sum(), (y**2).sum())
        count += x.size
    in_params, norm_in = _normalizer(sums[0], sumsqs[0], count, 0.0, 0.017)
    gt_params, norm_gt = _normalizer(sums[1], sumsqs[1], count, 0.092, 0.2423)

    # pass 2: regenerate, normalize, persist
    entries = []
    for i in range(n):
        x, y, meta = _inet_record(seed, i, splits[i], sampler, wf)
        in_name = f"pair_{i:05d}_in.bin"
        gt_name = f"pair_{i:05d}_gt.bin"
        write_blob(dirpath / in_name, norm_in(x).ravel())
        write_blob(dirpath / gt_name, norm_gt(y).ravel())
        entry = {"input": in_name, "target": gt_name, "shape": list(x.shape)}
        entry.update(meta)
        entries.append(entry)

    gen_params = {
        "kind": "inet",
        "n": n,
        "seed": seed,
        "train_fraction": train_fraction,
        "size": sampler.size,
    }
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "record_type": "bscan-pair",
        "record_count": n,
        "channel_order": ["co", "cross"],
        "normalization": {"input": in_params, "target": gt_params},
        "generator": {
            **gen_params,
            "digest": _generator_digest(gen_params),
            "train_environments": list(sampler.train_environments),
            "test_environments": list(sampler.test_environments),
        },
        "records": entries,
    }
    _write_manifest(dirpath, manifest)
    return manifest


# environment grid for polarization samples: wall material x depth bucket x
# water content. Each wall carries its own medium dispersion (ns/GHz per meter
# of two-way path) which water content amplifies; these broadenings overlap
# the material signatures, which is exactly the confound the adversarial
# training is meant to remove.
_WALLS = (("drywall", 2.5, 0.10), ("wood", 2.0, 0.30), ("brick", 4.5, 0.90), ("concrete", 9.0, 0.50))
_DEPTH_BUCKETS = (("shallow", (0.03, 0.05)), ("mid", (0.05, 0.08)), ("deep", (0.08, 0.10)))
_WATER = (("dry", 1.0, 30.0, 1.0), ("damp", 1.25, 60.0, 1.6), ("wet", 1.55, 90.0, 2.2))

# entire wall type held out of training: unseen-combination splits are too
# easy to make the environment shift meaningful
_TEST_WALL = "brick"


def polsample_environments():
    """All (label, wall_eps, depth_range, attenuation, dispersion) combinations."""
    envs = []
    for wall_name, wall_eps, wall_disp in _WALLS:
        for depth_name, depth_range in _DEPTH_BUCKETS:
            for water_name, eps_mult, atten, disp_mult in _WATER:
                label = f"{wall_name}:{depth_name}:{water_name}"
                envs.append(
                    (label, wall_eps * eps_mult, depth_range, atten, wall_disp * disp_mult)
                )
    return envs


def _mnet_record(seed: int, index: int, env, material: Material, wf: WaveformConfig):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 200, index]))
    label, eps, depth_range, atten, dispersion = env
    depth = float(rng.uniform(*depth_range))
    target = Target.of_material(material, x=0.0, depth=depth)
    scene = Scene(
        permittivity=eps, attenuation=atten, dispersion_slope=dispersion, targets=(target,)
    )
    cfg = ScanConfig(noise_std=0.0, n_samples=SEQUENCE_LENGTH)
    probe_x = float(rng.uniform(-0.002, 0.002))  # apex jitter

    co = synthesize_ascan(scene, probe_x, cfg, wf, Channel.CO)
    cross = synthesize_ascan(scene, probe_x, cfg, wf, Channel.CROSS)
    peak = float(np.abs(co).max())
    snr_db = float(rng.uniform(12.0, 25.0))
    noise_std = peak / 10.0 ** (snr_db / 20.0)
    co = co + rng.normal(0.0, noise_std, co.size)
    cross = cross + rng.normal(0.0, noise_std, cross.size)
    return co, cross, label


def generate_mnet_dataset(
    dirpath,
    n: int,
    seed: int,
    wf: WaveformConfig | None = None,
    train_fraction: float = 0.75,
) -> dict:
    """Write n labeled dual-polarization samples for material identification.

    Material classes are balanced (uniform within +/-1); environments are the
    wall/depth/water grid with an environment-disjoint train/test split.
    Channels are normalized dataset-wide to mean (0, 0) and std
    (0.0052, 0.0021).
    """
    if n < 1:
        raise ValueError("need at least one record")
    wf = wf or WaveformConfig()
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)

    envs = polsample_environments()
    test_envs = [e for e in envs if e[0].startswith(_TEST_WALL + ":")]
    train_envs = [e for e in envs if not e[0].startswith(_TEST_WALL + ":")]
    n_train = int(round(train_fraction * n))

    def env_for(rng, split):
        pool = train_envs if split == "train" else test_envs
        return pool[rng.integers(len(pool))]

    def build(index):
        split = "train" if index < n_train else "test"
        material = _MATERIAL_CYCLE[index % 4]
        rng = np.random.default_rng(np.random.SeedSequence([seed, 201, index]))
        env = env_for(rng, split)
        co, cross, label = _mnet_record(seed, index, env, material, wf)
        return co, cross, label, material, split

    # pass 1: per-channel statistics
    sums = np.zeros(2)
    sumsqs = np.zeros(2)
    count = 0
    for i in range(n):
        co, cross, _, _, _ = build(i)
        sums += (co.sum(), cross.sum())
        sumsqs += ((co**2).sum(), (cross**2).sum())
        count += co.size
    co_params, norm_co = _normalizer(sums[0], sumsqs[0], count, 0.0, 0.0052)
    cross_params, norm_cross = _normalizer(sums[1], sumsqs[1], count, 0.0, 0.0021)

    entries = []
    for i in range(n):
        co, cross, label, material, split = build(i)
        sample = PolSample(
            co=norm_co(co), cross=norm_cross(cross), material=material, environment=label
        )
        entry = write_record(dirpath / f"rec_{i:05d}", sample, extra={"split": split})
        entries.append(entry)

    gen_params = {"kind": "mnet", "n": n, "seed": seed, "train_fraction": train_fraction}
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "record_type": "polsample",
        "record_count": n,
        "channel_order": ["co", "cross"],
        "normalization": {"co": co_params, "cross": cross_params},
        "generator": {
            **gen_params,
            "digest": _generator_digest(gen_params),
            "train_environments": sorted(e[0] for e in train_envs),
            "test_environments": sorted(e[0] for e in test_envs),
        },
        "records": entries,
    }
    _write_manifest(dirpath, manifest)
    return manifest
