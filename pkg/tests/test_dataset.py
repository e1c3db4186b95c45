import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from wallradar import (
    BScan,
    Channel,
    FocusedImage,
    Material,
    PolSample,
    ScanConfig,
    Scene,
    Target,
    WaveformConfig,
)
from wallradar.dataset import (
    SEQUENCE_LENGTH,
    BadHeaderError,
    InconsistentManifestError,
    NonFiniteDataError,
    TruncatedFileError,
    VersionMismatchError,
    generate_inet_dataset,
    generate_mnet_dataset,
    InetSampler,
    read_blob,
    read_dataset,
    read_record,
    tile_crops,
    write_blob,
    write_dataset,
    write_record,
)


def dir_digest(path):
    """Order-independent digest of every file in a directory."""
    h = hashlib.sha256()
    for p in sorted(Path(path).iterdir()):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def make_bscan(wf, seed=0, with_provenance=True):
    rng = np.random.default_rng(seed)
    scene = Scene(permittivity=7.5, attenuation=40.0, targets=(Target(x=0.03, depth=0.06),))
    cfg = ScanConfig(speed=0.02, length=0.05, noise_std=0.01, seed=seed, n_samples=48)
    data = rng.normal(size=(cfg.n_columns, 48)).astype(np.float32)
    return BScan(
        data=data,
        channel=Channel.CO,
        dx=cfg.dx,
        sample_rate=wf.sample_rate,
        waveform=wf,
        scene=scene if with_provenance else None,
        scan=cfg if with_provenance else None,
    )


class TestBlobs:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(1)
        values = rng.normal(size=1000).astype(np.float32)
        path = tmp_path / "x.bin"
        write_blob(path, values)
        out = read_blob(path)
        assert out.tobytes() == values.tobytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.bin"
        write_blob(path, np.zeros(4, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(BadHeaderError):
            read_blob(path)

    def test_short_header(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"RDR")
        with pytest.raises(BadHeaderError):
            read_blob(path)

    def test_version_mismatch(self, tmp_path):
        path = tmp_path / "x.bin"
        write_blob(path, np.zeros(4, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[8] = 99  # version field
        path.write_bytes(bytes(raw))
        with pytest.raises(VersionMismatchError):
            read_blob(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "x.bin"
        write_blob(path, np.arange(16, dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(TruncatedFileError):
            read_blob(path)

    def test_non_finite_write_rejected(self, tmp_path):
        with pytest.raises(NonFiniteDataError):
            write_blob(tmp_path / "x.bin", np.array([1.0, np.nan], dtype=np.float32))

    def test_non_finite_read_rejected(self, tmp_path):
        path = tmp_path / "x.bin"
        write_blob(path, np.zeros(2, dtype=np.float32))
        raw = bytearray(path.read_bytes())
        raw[16:20] = np.array([np.inf], dtype="<f4").tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(NonFiniteDataError):
            read_blob(path)


class TestRecordRoundtrip:
    def test_bscan(self, tmp_path, wf):
        b = make_bscan(wf)
        entry = write_record(tmp_path / "r", b)
        out = read_record(tmp_path, entry, "bscan")
        assert out.data.tobytes() == b.data.tobytes()
        assert out.channel == b.channel
        assert out.dx == b.dx and out.sample_rate == b.sample_rate
        assert out.waveform == b.waveform
        assert out.scene == b.scene
        assert out.scan == b.scan

    def test_bscan_without_provenance(self, tmp_path, wf):
        b = make_bscan(wf, with_provenance=False)
        entry = write_record(tmp_path / "r", b)
        out = read_record(tmp_path, entry, "bscan")
        assert out.scene is None and out.scan is None

    def test_image(self, tmp_path):
        img = FocusedImage(
            data=np.abs(np.random.default_rng(2).normal(size=(30, 40))).astype(np.float32),
            dx=5e-4,
            dz=2e-3,
            origin_depth=0.01,
        )
        entry = write_record(tmp_path / "r", img)
        out = read_record(tmp_path, entry, "image")
        assert out.data.tobytes() == img.data.tobytes()
        assert (out.dx, out.dz, out.origin_depth) == (img.dx, img.dz, img.origin_depth)

    def test_polsample(self, tmp_path):
        rng = np.random.default_rng(3)
        sample = PolSample(
            co=rng.normal(size=SEQUENCE_LENGTH).astype(np.float32),
            cross=rng.normal(size=SEQUENCE_LENGTH).astype(np.float32),
            material=Material.CORRODED_REBAR,
            environment="concrete:mid:dry",
        )
        entry = write_record(tmp_path / "r", sample)
        out = read_record(tmp_path, entry, "polsample")
        assert out.co.tobytes() == sample.co.tobytes()
        assert out.cross.tobytes() == sample.cross.tobytes()
        assert out.material == sample.material
        assert out.environment == sample.environment


class TestDatasetDirs:
    def test_write_read_roundtrip(self, tmp_path, wf):
        records = [make_bscan(wf, seed=i) for i in range(3)]
        write_dataset(tmp_path / "d", records)
        contents = read_dataset(tmp_path / "d")
        assert contents.manifest["record_count"] == 3
        for got, want in zip(contents.records, records):
            assert got.data.tobytes() == want.data.tobytes()

    def test_manifest_count_mismatch(self, tmp_path, wf):
        write_dataset(tmp_path / "d", [make_bscan(wf)])
        manifest_path = tmp_path / "d" / "manifest.json"
        manifest = json.loads(manifest_path.read_text())
        manifest["record_count"] = 5
        manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(InconsistentManifestError):
            read_dataset(tmp_path / "d")

    def test_missing_blob_detected(self, tmp_path, wf):
        write_dataset(tmp_path / "d", [make_bscan(wf, seed=i) for i in range(2)])
        (tmp_path / "d" / "rec_00001.bin").unlink()
        with pytest.raises(InconsistentManifestError):
            read_dataset(tmp_path / "d")

    def test_stray_blob_detected(self, tmp_path, wf):
        write_dataset(tmp_path / "d", [make_bscan(wf)])
        (tmp_path / "d" / "stray.bin").write_bytes(b"junk")
        with pytest.raises(InconsistentManifestError):
            read_dataset(tmp_path / "d")

    def test_missing_manifest(self, tmp_path):
        (tmp_path / "d").mkdir()
        with pytest.raises(InconsistentManifestError):
            read_dataset(tmp_path / "d")


class TestTileCrops:
    def test_small_matrix_passthrough(self):
        m = np.zeros((100, 150))
        crops = tile_crops(m, size=200)
        assert len(crops) == 1 and crops[0][0] == (0, 0)

    def test_coverage_and_shape(self):
        m = np.arange(300 * 450).reshape(300, 450).astype(float)
        crops = tile_crops(m, size=200)
        covered = np.zeros_like(m, dtype=bool)
        for (r, c), crop in crops:
            assert crop.shape == (200, 200)
            np.testing.assert_array_equal(crop, m[r : r + 200, c : c + 200])
            covered[r : r + 200, c : c + 200] = True
        assert covered.all()


@pytest.fixture()
def small_sampler():
    return InetSampler(size=64)


class TestInetGenerator:
    def test_generation(self, tmp_path, small_sampler):
        manifest = generate_inet_dataset(tmp_path / "d", n=8, seed=3, sampler=small_sampler)
        assert manifest["record_count"] == 8
        contents = read_dataset(tmp_path / "d")
        assert len(contents.records) == 8
        for pair in contents.records:
            assert pair["input"].shape == (64, 64)
            assert pair["target"].shape == (64, 64)

    def test_normalization_constants(self, tmp_path, small_sampler):
        generate_inet_dataset(tmp_path / "d", n=8, seed=3, sampler=small_sampler)
        contents = read_dataset(tmp_path / "d")
        xs = np.concatenate([p["input"].ravel() for p in contents.records]).astype(np.float64)
        ys = np.concatenate([p["target"].ravel() for p in contents.records]).astype(np.float64)
        assert abs(xs.mean()) < 1e-6 and abs(xs.std() - 0.017) < 1e-6
        assert abs(ys.mean() - 0.092) < 1e-6 and abs(ys.std() - 0.2423) < 1e-6

    def test_environment_disjoint_split(self, tmp_path, small_sampler):
        generate_inet_dataset(tmp_path / "d", n=12, seed=3, sampler=small_sampler)
        manifest = read_dataset(tmp_path / "d").manifest
        train_envs = {e["environment"] for e in manifest["records"] if e["split"] == "train"}
        test_envs = {e["environment"] for e in manifest["records"] if e["split"] == "test"}
        assert train_envs and test_envs
        assert not train_envs & test_envs

    def test_seeded_byte_reproducibility(self, tmp_path, small_sampler):
        generate_inet_dataset(tmp_path / "a", n=5, seed=11, sampler=small_sampler)
        generate_inet_dataset(tmp_path / "b", n=5, seed=11, sampler=small_sampler)
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")
        generate_inet_dataset(tmp_path / "c", n=5, seed=12, sampler=small_sampler)
        assert dir_digest(tmp_path / "a") != dir_digest(tmp_path / "c")


class TestMnetGenerator:
    def test_generation_and_balance(self, tmp_path):
        manifest = generate_mnet_dataset(tmp_path / "d", n=26, seed=5)
        counts = {}
        for entry in manifest["records"]:
            counts[entry["material"]] = counts.get(entry["material"], 0) + 1
        assert max(counts.values()) - min(counts.values()) <= 1
        contents = read_dataset(tmp_path / "d")
        for sample in contents.records:
            assert sample.co.shape == (SEQUENCE_LENGTH,)
            assert sample.cross.shape == (SEQUENCE_LENGTH,)

    def test_channel_normalization(self, tmp_path):
        generate_mnet_dataset(tmp_path / "d", n=24, seed=5)
        contents = read_dataset(tmp_path / "d")
        co = np.concatenate([s.co for s in contents.records]).astype(np.float64)
        cross = np.concatenate([s.cross for s in contents.records]).astype(np.float64)
        assert abs(co.mean()) < 1e-6 and abs(co.std() - 0.0052) < 1e-6
        assert abs(cross.mean()) < 1e-6 and abs(cross.std() - 0.0021) < 1e-6

    def test_environment_disjoint_split(self, tmp_path):
        manifest = generate_mnet_dataset(tmp_path / "d", n=40, seed=6)
        train = {e["environment"] for e in manifest["records"] if e["split"] == "train"}
        test = {e["environment"] for e in manifest["records"] if e["split"] == "test"}
        assert len(train) >= 3
        assert not train & test

    def test_seeded_byte_reproducibility(self, tmp_path):
        generate_mnet_dataset(tmp_path / "a", n=12, seed=9)
        generate_mnet_dataset(tmp_path / "b", n=12, seed=9)
        assert dir_digest(tmp_path / "a") == dir_digest(tmp_path / "b")
