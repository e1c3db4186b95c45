import numpy as np
import pytest
from scipy.constants import c as C0
from scipy.signal import hilbert

from wallradar import (
    BScan,
    Channel,
    FocusedImage,
    ScanConfig,
    Scene,
    Target,
    WaveformConfig,
    backproject,
    echo_delay,
    gaussian_pulse,
    image_entropy,
    modulate,
    range_compress,
    rma,
    synthesize_bscan,
    time_axis,
)
from wallradar.focusing import forward_spectrum, inverse_spectrum


def bscan_from_rows(rows, wf, dx=5e-4):
    return BScan(
        data=np.asarray(rows, dtype=np.float32),
        channel=Channel.CO,
        dx=dx,
        sample_rate=wf.sample_rate,
        waveform=wf,
    )


class TestRangeCompress:
    def test_zero_delay_peak(self, wf):
        n = 512
        t = time_axis(wf, n)
        pulse = np.roll(modulate(gaussian_pulse(wf, t), t, wf), -(n // 2))
        b = bscan_from_rows([pulse], wf)
        out = range_compress(b, wf)
        assert int(np.argmax(np.abs(out[0]))) == 0

    def test_delayed_echo_peak_sample(self, wf):
        # tau = 1 ns at 23.328 GHz -> round(tau * fs) = 23
        tau = 1.0e-9
        n = 256
        t = np.arange(n) / wf.sample_rate
        sigma = wf.sigma
        echo = np.exp(-((t - tau) ** 2) / (2 * sigma**2)) * np.cos(
            2 * np.pi * wf.carrier * (t - tau)
        )
        b = bscan_from_rows([echo], wf)
        out = range_compress(b, wf)
        assert int(np.argmax(np.abs(out[0]))) == 23

    def test_compression_narrows_pulse(self, wf):
        def width3db(mag):
            peak = mag.max()
            i = int(np.argmax(mag))
            level = peak / np.sqrt(2.0)
            left = i
            while left > 0 and mag[left] > level:
                left -= 1
            right = i
            while right < mag.size - 1 and mag[right] > level:
                right += 1
            return right - left

        tau = 4.0e-9
        n = 512
        t = np.arange(n) / wf.sample_rate
        echo = np.exp(-((t - tau) ** 2) / (2 * wf.sigma**2)) * np.cos(
            2 * np.pi * wf.carrier * (t - tau)
        )
        uncompressed = width3db(np.abs(hilbert(echo)))
        compressed = width3db(np.abs(range_compress(bscan_from_rows([echo], wf), wf)[0]))
        assert compressed < uncompressed

    def test_sample_rate_mismatch_rejected(self, wf):
        other = WaveformConfig(sample_rate=30.0e9)
        b = bscan_from_rows([np.zeros(64)], wf)
        with pytest.raises(ValueError):
            range_compress(b, other)


class TestSpectrumRoundtrip:
    def test_fft_inverse_roundtrip(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(64, 96)) + 1j * rng.normal(size=(64, 96))
        spec = forward_spectrum(m, dx=1e-3, sample_rate=23.328e9)
        back = inverse_spectrum(spec)
        rel = np.abs(back - m).max() / np.abs(m).max()
        assert rel < 1e-9

    def test_spectrum_axes(self):
        spec = forward_spectrum(np.ones((8, 16), dtype=complex), dx=2e-3, sample_rate=1e9)
        assert spec.kx.size == 8 and spec.omega.size == 16
        assert spec.kx[0] == pytest.approx(-2 * np.pi / (2 * 2e-3))


class TestRma:
    def test_point_target_localization(self, canonical_bscan):
        img = rma(canonical_bscan, 9.0, 0.02)
        x, z = img.argmax_position()
        c = C0 / 3.0
        half_cell = c / (4.0 * canonical_bscan.waveform.bandwidth)
        assert abs(x - 0.2) < 0.01
        assert abs(z - 0.05) < min(half_cell, 0.008)

    def test_wrong_permittivity_defocuses(self, canonical_bscan):
        e_true = image_entropy(rma(canonical_bscan, 9.0, 0.02))
        e_wrong = image_entropy(rma(canonical_bscan, 7.0, 0.02))
        assert e_wrong > e_true

    def test_monotone_defocus_ladder(self, canonical_bscan):
        ladder = {
            eh: image_entropy(rma(canonical_bscan, eh, 0.02)) for eh in (7, 8, 9, 10, 11)
        }
        assert ladder[7] >= ladder[8] >= ladder[9]
        assert ladder[9] <= ladder[10] <= ladder[11]

    def test_zero_input_zero_image(self, wf):
        b = bscan_from_rows(np.zeros((32, 64)), wf)
        img = rma(b, 9.0, 0.02)
        np.testing.assert_allclose(img.data, 0.0, atol=1e-20)

    def test_shift_covariance(self, wf):
        shift_cols = 14
        scans = []
        for x0 in (0.08, 0.08 + shift_cols * 5e-4):
            scene = Scene(permittivity=9.0, targets=(Target(x=x0, depth=0.05),))
            cfg = ScanConfig(speed=0.02, length=0.2, noise_std=0.0, n_samples=128)
            scans.append(synthesize_bscan(scene, cfg, wf))
        imgs = [rma(b, 9.0, 0.02) for b in scans]
        p0 = np.unravel_index(np.argmax(imgs[0].data), imgs[0].data.shape)
        p1 = np.unravel_index(np.argmax(imgs[1].data), imgs[1].data.shape)
        assert p1[0] - p0[0] == shift_cols
        assert p1[1] == p0[1]

    def test_invalid_parameters_rejected(self, canonical_bscan):
        with pytest.raises(ValueError):
            rma(canonical_bscan, 0.5, 0.02)
        with pytest.raises(ValueError):
            rma(canonical_bscan, 9.0, 0.0)

    def test_depth_pixel_pitch(self, canonical_bscan):
        img = rma(canonical_bscan, 9.0, 0.02)
        assert img.dz == pytest.approx(C0 / 3.0 / (2 * 23.328e9))


class TestBackprojection:
    def test_point_target_and_oracle_agreement(self, canonical_bscan):
        img = rma(canonical_bscan, 9.0, 0.02)
        bp = backproject(canonical_bscan, 9.0, 0.02)
        xb, zb = bp.argmax_position()
        assert abs(xb - 0.2) < 0.01 and abs(zb - 0.05) < 0.008
        p_rma = np.unravel_index(np.argmax(img.data), img.data.shape)
        p_bp = np.unravel_index(np.argmax(bp.data), bp.data.shape)
        assert max(abs(p_rma[0] - p_bp[0]), abs(p_rma[1] - p_bp[1])) <= 1

    def test_zero_input_zero_image(self, wf):
        b = bscan_from_rows(np.zeros((16, 32)), wf)
        img = backproject(b, 9.0, 0.02)
        np.testing.assert_allclose(img.data, 0.0, atol=1e-20)

    def test_invalid_parameters_rejected(self, canonical_bscan):
        with pytest.raises(ValueError):
            backproject(canonical_bscan, 0.9, 0.02)


class TestImageEntropy:
    def test_delta_image(self):
        data = np.zeros((10, 10), dtype=np.float32)
        data[3, 4] = 2.0
        img = FocusedImage(data=data, dx=1.0, dz=1.0)
        assert image_entropy(img) == 0.0

    def test_uniform_image(self):
        img = FocusedImage(data=np.full((20, 30), 0.7, dtype=np.float32), dx=1.0, dz=1.0)
        assert image_entropy(img) == pytest.approx(np.log(600), rel=1e-12)

    def test_all_zero_rejected(self):
        img = FocusedImage(data=np.zeros((4, 4), dtype=np.float32), dx=1.0, dz=1.0)
        with pytest.raises(ValueError):
            image_entropy(img)


class TestFocusedImageInvariants:
    def test_negative_entries_rejected(self):
        with pytest.raises(ValueError):
            FocusedImage(data=np.array([[-1.0, 0.0]]), dx=1.0, dz=1.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            FocusedImage(data=np.array([[np.inf, 0.0]]), dx=1.0, dz=1.0)
