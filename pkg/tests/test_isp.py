import numpy as np
import pytest

from isptune.imaging import (
    BayerMosaic,
    BayerPattern,
    ColorDomain,
    PlanarImage,
    bayer_subsample,
    gaussian_kernel,
)
from isptune.isp import (
    BLOCK_PARAM_SPECS,
    PIPELINE_ORDER,
    BlockId,
    BlockParams,
    PipelineTuning,
    bayer_nr,
    default_params,
    demosaic,
    passthrough_params,
    passthrough_tuning,
    run_pipeline,
    sharpen,
    yuv_nr,
)
from isptune.refgen import NoiseModel


def params(block, **overrides):
    values = dict(passthrough_params(block).values)
    values.update(overrides)
    return BlockParams(block, values)


def noise_mosaic(rng, shape=(128, 128), level=0.5, sigma=0.03):
    data = np.clip(level + sigma * rng.standard_normal(shape), 0.0, 1.0)
    return BayerMosaic(data, BayerPattern.RGGB)


NM = NoiseModel(a=0.0, b=9e-4)  # sigma 0.03 everywhere


class TestBlockParams:
    def test_rejects_missing_and_extra_names(self):
        with pytest.raises(ValueError, match="exactly"):
            BlockParams(BlockId.BAYER_NR, {"strength": 0.5})
        bad = dict(passthrough_params(BlockId.SHARPEN).values, extra=1.0)
        with pytest.raises(ValueError, match="exactly"):
            BlockParams(BlockId.SHARPEN, bad)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError, match="outside"):
            params(BlockId.BAYER_NR, strength=1.5)

    def test_pipeline_order(self):
        assert PIPELINE_ORDER == (BlockId.BAYER_NR, BlockId.DEMOSAIC,
                                  BlockId.YUV_NR, BlockId.SHARPEN)

    def test_tuning_must_be_complete(self):
        with pytest.raises(ValueError, match="missing blocks"):
            PipelineTuning({BlockId.BAYER_NR: passthrough_params(BlockId.BAYER_NR)})

    def test_tuning_dict_round_trip(self):
        t = passthrough_tuning()
        assert PipelineTuning.from_dict(t.to_dict()).to_dict() == t.to_dict()

    def test_default_params_are_mid_range(self):
        p = default_params(BlockId.SHARPEN)
        for s in BLOCK_PARAM_SPECS[BlockId.SHARPEN]:
            assert p[s.name] == 0.5 * (s.physical_min + s.physical_max)


class TestBayerNr:
    def test_zero_strength_is_identity(self):
        rng = np.random.default_rng(0)
        m = noise_mosaic(rng, (16, 16))
        out = bayer_nr(m, params(BlockId.BAYER_NR, strength=0.0, range_scale=4.0), NM)
        np.testing.assert_array_equal(out.data, m.data)

    def test_constant_mosaic_unchanged(self):
        m = BayerMosaic(np.full((16, 16), 0.4), BayerPattern.RGGB)
        p = params(BlockId.BAYER_NR, strength=1.0, range_scale=8.0, spatial_sigma=2.0, radius=3.0)
        out = bayer_nr(m, p, NM)
        np.testing.assert_allclose(out.data, 0.4, atol=1e-12)

    def test_reduces_noise_variance(self):
        rng = np.random.default_rng(1)
        m = noise_mosaic(rng, (128, 128))  # >= 1e4 pixels
        p = params(BlockId.BAYER_NR, strength=1.0, range_scale=8.0,
                   spatial_sigma=2.0, radius=3.0)
        out = bayer_nr(m, p, NM)
        assert out.data.var() < m.data.var()

    def test_variance_monotone_in_strength(self):
        rng = np.random.default_rng(2)
        m = noise_mosaic(rng, (128, 128))
        p_base = dict(range_scale=6.0, spatial_sigma=1.5, radius=2.0)
        variances = []
        for beta in (0.0, 0.3, 0.7, 1.0):
            out = bayer_nr(m, params(BlockId.BAYER_NR, strength=beta, **p_base), NM)
            variances.append(out.data.var())
        # 3-sigma slack on the variance estimate for n samples
        slack = 3.0 * np.sqrt(2.0 / (m.data.size - 1))
        for lo, hi in zip(variances[1:], variances):
            assert lo <= hi * (1.0 + slack)

    def test_wrong_block(self):
        m = noise_mosaic(np.random.default_rng(3), (8, 8))
        with pytest.raises(ValueError, match="expected bayer_nr"):
            bayer_nr(m, passthrough_params(BlockId.SHARPEN), NM)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        m = noise_mosaic(rng, (32, 32))
        p = params(BlockId.BAYER_NR, strength=0.8, range_scale=3.0)
        a = bayer_nr(m, p, NM)
        b = bayer_nr(m, p, NM)
        np.testing.assert_array_equal(a.data, b.data)


class TestDemosaic:
    def test_constant_gray_exact(self):
        m = BayerMosaic(np.full((16, 16), 0.37), BayerPattern.RGGB)
        out = demosaic(m, passthrough_params(BlockId.DEMOSAIC))
        assert out.domain is ColorDomain.LINEAR_RGB
        np.testing.assert_allclose(out.data, 0.37, atol=1e-12)

    @pytest.mark.parametrize("pattern", list(BayerPattern))
    def test_achromatic_ramp_interior(self, pattern):
        h, w = 20, 24
        ramp = np.tile(np.linspace(0.1, 0.9, w), (h, 1))
        rgb = PlanarImage(np.stack([ramp] * 3), ColorDomain.LINEAR_RGB)
        m = bayer_subsample(rgb, pattern)
        out = demosaic(m, passthrough_params(BlockId.DEMOSAIC))
        err = np.abs(out.data - rgb.data)[:, 2:-2, 2:-2]
        assert err.max() < 1e-3

    def test_disabled_suppression_matches_pre_suppression(self):
        rng = np.random.default_rng(5)
        m = noise_mosaic(rng, (24, 24))
        base = demosaic(m, params(BlockId.DEMOSAIC, chroma_strength=0.0, chroma_median=0.0))
        widened = demosaic(m, params(BlockId.DEMOSAIC, chroma_strength=0.0, chroma_median=2.0))
        np.testing.assert_array_equal(base.data, widened.data)

    def test_suppression_changes_output(self):
        rng = np.random.default_rng(6)
        m = noise_mosaic(rng, (24, 24))
        off = demosaic(m, params(BlockId.DEMOSAIC))
        on = demosaic(m, params(BlockId.DEMOSAIC, chroma_strength=1.0, chroma_median=2.0))
        assert np.max(np.abs(on.data - off.data)) > 0

    def test_wrong_block(self):
        m = noise_mosaic(np.random.default_rng(7), (8, 8))
        with pytest.raises(ValueError, match="expected demosaic"):
            demosaic(m, passthrough_params(BlockId.BAYER_NR))


class TestYuvNr:
    def _yuv(self, rng, chroma_sigma=0.05):
        y = np.full((128, 128), 0.5)
        u = chroma_sigma * rng.standard_normal((128, 128))
        v = chroma_sigma * rng.standard_normal((128, 128))
        return PlanarImage(np.stack([y, u, v]), ColorDomain.YUV)

    def test_zero_strength_identity(self):
        img = self._yuv(np.random.default_rng(8))
        out = yuv_nr(img, params(BlockId.YUV_NR, strength=0.0, luma_sigma=0.1))
        np.testing.assert_array_equal(out.data, img.data)

    def test_constant_unchanged(self):
        img = PlanarImage(np.stack([np.full((16, 16), 0.5),
                                    np.full((16, 16), 0.1),
                                    np.full((16, 16), -0.1)]), ColorDomain.YUV)
        p = params(BlockId.YUV_NR, strength=1.0, luma_sigma=0.1, chroma_sigma=0.2,
                   spatial_sigma=2.0)
        out = yuv_nr(img, p)
        np.testing.assert_allclose(out.data, img.data, atol=1e-12)

    def test_chroma_noise_variance_decreases(self):
        img = self._yuv(np.random.default_rng(9))
        p = params(BlockId.YUV_NR, strength=1.0, chroma_sigma=0.2, spatial_sigma=2.0)
        out = yuv_nr(img, p)
        assert out.data[1].var() < img.data[1].var()
        assert out.data[2].var() < img.data[2].var()

    def test_variance_monotone_in_strength(self):
        img = self._yuv(np.random.default_rng(20))
        slack = 3.0 * np.sqrt(2.0 / (img.data[1].size - 1))
        variances = []
        for beta in (0.0, 0.4, 0.8, 1.0):
            out = yuv_nr(img, params(BlockId.YUV_NR, strength=beta, chroma_sigma=0.2,
                                     spatial_sigma=2.0))
            variances.append(out.data[1].var() + out.data[2].var())
        for lo, hi in zip(variances[1:], variances):
            assert lo <= hi * (1.0 + slack)

    def test_zero_luma_sigma_leaves_y_untouched(self):
        rng = np.random.default_rng(10)
        img = PlanarImage(np.stack([rng.random((16, 16)),
                                    np.zeros((16, 16)), np.zeros((16, 16))]),
                          ColorDomain.YUV)
        out = yuv_nr(img, params(BlockId.YUV_NR, strength=1.0, luma_sigma=0.0,
                                 chroma_sigma=0.1))
        np.testing.assert_array_equal(out.data[0], img.data[0])

    def test_wrong_domain(self):
        img = PlanarImage(np.zeros((3, 8, 8)), ColorDomain.LINEAR_RGB)
        with pytest.raises(ValueError, match="YUV"):
            yuv_nr(img, passthrough_params(BlockId.YUV_NR))


def step_edge_yuv(width=40, height=24, lo=0.2, hi=0.8):
    y = np.where(np.arange(width) < width // 2, lo, hi)
    y = np.tile(y, (height, 1)).astype(np.float64)
    return PlanarImage(np.stack([y, np.zeros_like(y), np.zeros_like(y)]), ColorDomain.YUV)


def sharpen_row_oracle(row, sigma, gain, coring, overshoot):
    """Direct 1-D computation of the unsharp chain on one profile row.

    Valid for images constant along y: the 2-D Gaussian then acts as its
    column-summed 1-D projection.
    """
    taps2d = gaussian_kernel(9, sigma).taps
    taps = taps2d.sum(axis=0)
    n = len(row)
    blur = np.empty(n)
    for x in range(n):
        acc = 0.0
        for k in range(-4, 5):
            xx = min(max(x - k, 0), n - 1)
            acc += taps[k + 4] * row[xx]
        blur[x] = acc
    detail = row - blur
    detail = np.sign(detail) * np.maximum(np.abs(detail) - coring, 0.0)
    out = row + gain * detail
    for x in range(n):
        lo = min(row[max(x - 1, 0):x + 2].min(), row[x])
        hi = max(row[max(x - 1, 0):x + 2].max(), row[x])
        out[x] = min(max(out[x], lo - overshoot), hi + overshoot)
    return out


class TestSharpen:
    def test_zero_gain_identity(self):
        img = step_edge_yuv()
        out = sharpen(img, params(BlockId.SHARPEN, gain=0.0))
        np.testing.assert_array_equal(out.data, img.data)

    def test_constant_unchanged_any_params(self):
        img = PlanarImage(np.full((3, 16, 16), 0.5), ColorDomain.YUV)
        for gain in (0.5, 2.0, 4.0):
            out = sharpen(img, params(BlockId.SHARPEN, gain=gain, usm_sigma=2.0,
                                      overshoot=0.3))
            np.testing.assert_allclose(out.data, img.data, atol=1e-12)

    def test_step_edge_contrast_increases_and_matches_oracle(self):
        img = step_edge_yuv()
        p = params(BlockId.SHARPEN, gain=1.0, coring=0.0, overshoot=0.5, usm_sigma=2.0)
        out = sharpen(img, p)
        row = out.data[0][12]  # constant along y: any interior row
        expected = sharpen_row_oracle(img.data[0][12], 2.0, 1.0, 0.0, 0.5)
        np.testing.assert_allclose(row, expected, atol=1e-12)
        assert row.max() - row.min() > img.data[0].max() - img.data[0].min()

    def test_chroma_untouched(self):
        rng = np.random.default_rng(11)
        data = np.stack([rng.random((16, 16)),
                         rng.random((16, 16)) - 0.5,
                         rng.random((16, 16)) - 0.5])
        img = PlanarImage(data, ColorDomain.YUV)
        out = sharpen(img, params(BlockId.SHARPEN, gain=2.0))
        np.testing.assert_array_equal(out.data[1:], img.data[1:])

    def test_overshoot_clamp_active(self):
        img = step_edge_yuv()
        tight = sharpen(img, params(BlockId.SHARPEN, gain=4.0, overshoot=0.0))
        loose = sharpen(img, params(BlockId.SHARPEN, gain=4.0, overshoot=0.5))
        assert tight.data[0].max() <= img.data[0].max() + 1e-12
        assert loose.data[0].max() > img.data[0].max()


class TestRunPipeline:
    def _clean_mosaic(self, rng):
        rgb = PlanarImage(np.clip(rng.random((3, 32, 32)), 0.05, 0.95),
                          ColorDomain.LINEAR_RGB)
        smooth = PlanarImage(
            np.stack([np.convolve(ch.ravel(), np.ones(5) / 5, mode="same").reshape(32, 32)
                      for ch in rgb.data]), ColorDomain.LINEAR_RGB)
        return bayer_subsample(smooth, BayerPattern.RGGB)

    def test_passthrough_equals_plain_demosaic(self):
        m = self._clean_mosaic(np.random.default_rng(12))
        taps = run_pipeline(m, passthrough_tuning(), NM)
        plain = demosaic(m, passthrough_params(BlockId.DEMOSAIC))
        np.testing.assert_allclose(taps.final_rgb.data,
                                   np.clip(plain.data, 0.0, 1.0), atol=1e-9)

    def test_constant_gray_stays_constant(self):
        m = BayerMosaic(np.full((16, 16), 0.5), BayerPattern.RGGB)
        tuning = PipelineTuning({
            BlockId.BAYER_NR: params(BlockId.BAYER_NR, strength=1.0, range_scale=4.0),
            BlockId.DEMOSAIC: passthrough_params(BlockId.DEMOSAIC),
            BlockId.YUV_NR: params(BlockId.YUV_NR, strength=1.0, chroma_sigma=0.1),
            BlockId.SHARPEN: params(BlockId.SHARPEN, gain=1.5),
        })
        taps = run_pipeline(m, tuning, NM)
        np.testing.assert_allclose(taps.final_rgb.data, 0.5, atol=1e-9)

    def test_taps_match_manual_composition(self):
        from isptune.imaging import rgb_to_yuv, yuv_to_rgb
        rng = np.random.default_rng(13)
        m = noise_mosaic(rng, (32, 32))
        tuning = PipelineTuning({
            BlockId.BAYER_NR: params(BlockId.BAYER_NR, strength=0.9, range_scale=5.0),
            BlockId.DEMOSAIC: params(BlockId.DEMOSAIC, chroma_strength=0.6, chroma_median=1.0),
            BlockId.YUV_NR: params(BlockId.YUV_NR, strength=0.8, chroma_sigma=0.15,
                                   luma_sigma=0.05),
            BlockId.SHARPEN: params(BlockId.SHARPEN, gain=1.2, coring=0.01),
        })
        taps = run_pipeline(m, tuning, NM)
        a = bayer_nr(m, tuning[BlockId.BAYER_NR], NM)
        b = demosaic(a, tuning[BlockId.DEMOSAIC])
        c = yuv_nr(rgb_to_yuv(b), tuning[BlockId.YUV_NR])
        d = sharpen(c, tuning[BlockId.SHARPEN])
        np.testing.assert_array_equal(taps.bayer_nr.data, a.data)
        np.testing.assert_array_equal(taps.demosaic.data, b.data)
        np.testing.assert_array_equal(taps.yuv_nr.data, c.data)
        np.testing.assert_array_equal(taps.sharpen.data, d.data)
        np.testing.assert_array_equal(taps.final_rgb.data,
                                      np.clip(yuv_to_rgb(d).data, 0.0, 1.0))

    def test_outputs_finite_and_shaped(self):
        rng = np.random.default_rng(14)
        m = noise_mosaic(rng, (32, 32))
        taps = run_pipeline(m, passthrough_tuning(), NM)
        for img in (taps.demosaic, taps.yuv_nr, taps.sharpen, taps.final_rgb):
            assert img.data.shape == (3, 32, 32)
            assert np.all(np.isfinite(img.data))
        assert taps.final_rgb.data.min() >= 0.0 and taps.final_rgb.data.max() <= 1.0

    def test_missing_tap_error(self):
        from isptune.isp import PipelineTaps
        with pytest.raises(ValueError, match="not available"):
            PipelineTaps().for_block(BlockId.YUV_NR)
