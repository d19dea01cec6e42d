import numpy as np
import pytest

from weakseg.backend import FileScoreBackend, PatchScoreGrid
from weakseg.errors import BackendError, ConfigError, ShapeError
from weakseg.pipeline import (
    PipelineConfig,
    fuse,
    gold_standard_localisation,
    gold_standard_segment,
    localisation_from_scores,
    merge_localisation,
    score_block_map,
    segment,
    segment_with_localisation,
)
from weakseg.raster import make_patch_grid, mirror_pad


def grid_of(scores, patch=32, stride=16, src_w=64, src_h=64):
    return PatchScoreGrid(
        patch_size=patch,
        stride=stride,
        src_w=src_w,
        src_h=src_h,
        scores=np.asarray(scores, dtype=np.float32),
    )


def textured_crack_image(w=64, h=64, row=32):
    img = np.empty((h, w), dtype=np.float32)
    img[0::2, :] = 0.75
    img[1::2, :] = 0.85
    img[row, :] = 0.05
    return img


class TestScoreBlockMap:
    def test_constant_scores(self):
        g = grid_of(np.full((3, 3), 0.7))
        blocks = score_block_map(g, 64, 64)
        assert blocks.shape == (4, 4)
        assert np.allclose(blocks, 0.7)

    def test_interior_block_mean_of_four(self):
        scores = np.arange(9, dtype=np.float32).reshape(3, 3) / 10.0
        g = grid_of(scores)
        blocks = score_block_map(g, 64, 64)
        # block (1,1) covers pixels 16..31; the four patches with origins in
        # {0,16}x{0,16} all overlap it
        expected = (scores[0, 0] + scores[0, 1] + scores[1, 0] + scores[1, 1]) / 4.0
        assert blocks[1, 1] == pytest.approx(float(expected), abs=1e-7)

    def test_corner_block_single_patch(self):
        scores = np.arange(9, dtype=np.float32).reshape(3, 3) / 10.0
        g = grid_of(scores)
        blocks = score_block_map(g, 64, 64)
        assert blocks[0, 0] == pytest.approx(float(scores[0, 0]), abs=1e-7)

    def test_brute_force_coverage(self, rng):
        scores = rng.random((4, 5)).astype(np.float32)
        g = grid_of(scores, patch=16, stride=8, src_w=44, src_h=36)
        blocks = score_block_map(g, 44, 36)
        grid = make_patch_grid(44, 36, 16, 8)
        xs, ys = grid.x_origins, grid.y_origins
        for by in range(blocks.shape[0]):
            for bx in range(blocks.shape[1]):
                bx0, bx1 = bx * 8, min(bx * 8 + 8, 44)
                by0, by1 = by * 8, min(by * 8 + 8, 36)
                vals = np.array(
                    [
                        scores[gy, gx]
                        for gy, oy in enumerate(ys)
                        for gx, ox in enumerate(xs)
                        if ox < bx1 and ox + 16 > bx0 and oy < by1 and oy + 16 > by0
                    ],
                    dtype=np.float64,
                )
                assert blocks[by, bx] == pytest.approx(float(vals.mean()), rel=1e-12)

    def test_mismatched_source_rejected(self):
        g = grid_of(np.zeros((3, 3)))
        with pytest.raises(ConfigError):
            localisation_from_scores(g, 128, 128)


class TestLocalisationFromScores:
    def test_constant_upsample(self):
        g = grid_of(np.full((3, 3), 0.5))
        out = localisation_from_scores(g, 64, 64)
        assert out.shape == (64, 64)
        assert np.allclose(out, 0.5, atol=1e-5)

    def test_single_hot_patch_support_is_local(self):
        scores = np.zeros((3, 3), dtype=np.float32)
        scores[0, 0] = 1.0
        out = localisation_from_scores(grid_of(scores), 64, 64)
        # hot patch footprint is [0,32)^2; far corner must stay near zero
        assert out[48:, 48:].max() < 0.05
        assert out[:16, :16].min() > 0.2


class TestMergeLocalisation:
    def test_all_ones(self):
        cfg = PipelineConfig()
        ones = np.ones((20, 20), dtype=np.float32)
        assert np.array_equal(merge_localisation(ones, ones, cfg), ones)

    def test_below_cut_zeroed(self):
        cfg = PipelineConfig()
        a = np.full((16, 16), 0.6, dtype=np.float32)
        b = np.full((16, 16), 0.2, dtype=np.float32)
        assert not merge_localisation(a, b, cfg).any()

    def test_above_cut_retains_value_then_erodes(self):
        cfg = PipelineConfig()
        a = np.full((20, 20), 0.9, dtype=np.float32)
        b = np.full((20, 20), 0.7, dtype=np.float32)
        out = merge_localisation(a, b, cfg)
        assert np.allclose(out, 0.8, atol=1e-7)  # continuous value survives

    def test_disk_shrinks_by_iterated_erosion(self):
        cfg = PipelineConfig()
        h = w = 41
        yy, xx = np.mgrid[0:h, 0:w]
        disk = ((yy - 20) ** 2 + (xx - 20) ** 2 <= 100).astype(np.float32)
        out = merge_localisation(disk, disk, cfg)
        # confidence 1.0 inside the disk; erosion by 3x3 x4 = min over 9x9:
        # survivors are exactly the centers whose 9x9 window fits in the disk
        expected = np.zeros_like(disk)
        for y in range(4, h - 4):
            for x in range(4, w - 4):
                if disk[y - 4 : y + 5, x - 4 : x + 5].all():
                    expected[y, x] = 1.0
        assert np.array_equal(out, expected)

    def test_shape_mismatch(self):
        cfg = PipelineConfig()
        with pytest.raises(ShapeError):
            merge_localisation(np.zeros((4, 4)), np.zeros((5, 4)), cfg)


class TestFuse:
    def test_zero_segmentation_annihilates(self, rng):
        cfg = PipelineConfig()
        loc = rng.random((24, 24)).astype(np.float32)
        seg = np.zeros((24, 24), dtype=np.uint8)
        assert not fuse(loc, seg, cfg).any()

    def test_identity_when_poststeps_disabled(self, rng):
        cfg = PipelineConfig(enable_bilateral=False, enable_closing=False)
        seg = (rng.random((16, 16)) > 0.5).astype(np.uint8)
        loc = np.ones((16, 16), dtype=np.float32)
        out = fuse(loc, seg, cfg)
        assert np.array_equal(out, seg.astype(np.float32))

    def test_closing_fills_line_gap(self):
        cfg = PipelineConfig(enable_bilateral=False)
        seg = np.zeros((15, 15), dtype=np.uint8)
        seg[7, 2:13] = 1
        seg[7, 7] = 0
        loc = np.ones((15, 15), dtype=np.float32)
        out = fuse(loc, seg, cfg)
        assert out[7, 7] > 0.0

    def test_monotone_in_localisation(self, rng):
        cfg = PipelineConfig(enable_bilateral=False, enable_closing=False)
        seg = (rng.random((12, 12)) > 0.4).astype(np.uint8)
        lo = (rng.random((12, 12)) * 0.5).astype(np.float32)
        hi = np.clip(lo + 0.3, 0, 1).astype(np.float32)
        assert np.all(fuse(hi, seg, cfg) >= fuse(lo, seg, cfg))


class FailingBackend:
    """Raises on any call; proves a path never consults the classifier."""

    def score_patches(self, img, patch_size, stride):
        raise BackendError("the gold-standard path must not consult the classifier")


class TestSegment:
    def test_flat_zero_inputs_give_near_zero(self):
        cfg = PipelineConfig()
        img = np.full((64, 64), 0.5, dtype=np.float32)
        zeros = np.zeros((3, 3), dtype=np.float32)
        backend = FileScoreBackend(grid_of(zeros))
        cam = np.zeros((64, 64), dtype=np.float32)
        out = segment(img, backend, cam, cfg)
        assert out.max() < 0.05

    def test_crack_confidence_confined(self):
        cfg = PipelineConfig()
        img = textured_crack_image()
        # classifier is confident everywhere along the crack band
        scores = np.zeros((3, 3), dtype=np.float32)
        scores[1, :] = 1.0  # patches whose rows straddle the crack
        scores[2, :] = 1.0
        backend = FileScoreBackend(grid_of(scores))
        cam = np.zeros((64, 64), dtype=np.float32)
        cam[24:41, :] = 1.0
        out = segment(img, backend, cam, cfg)
        assert out[32, 5:59].max() > 0.2  # crack detected
        off_crack = out.copy()
        off_crack[26:39, :] = 0.0
        assert off_crack.max() < 0.1  # confidence confined near the crack

    def test_deterministic(self, rng):
        cfg = PipelineConfig()
        img = textured_crack_image()
        scores = rng.random((3, 3)).astype(np.float32)
        backend = FileScoreBackend(grid_of(scores))
        cam = rng.random((64, 64)).astype(np.float32)
        a = segment(img, backend, cam, cfg)
        b = segment(img, backend, cam, cfg)
        assert a.tobytes() == b.tobytes()

    def test_zero_localisation_zero_output_when_closing_off(self, rng):
        cfg = PipelineConfig(enable_bilateral=False, enable_closing=False)
        img = textured_crack_image()
        loc = np.zeros((64, 64), dtype=np.float32)
        loc[28:37, 10:50] = 0.9
        out = segment_with_localisation(img, loc, cfg)
        assert not out[loc == 0].any()

    def test_bilateral_spreads_at_most_d(self):
        cfg = PipelineConfig(enable_closing=False)
        img = textured_crack_image()
        loc = np.zeros((64, 64), dtype=np.float32)
        loc[28:37, 10:50] = 0.9
        out = segment_with_localisation(img, loc, cfg)
        d = cfg.bilateral_d
        far = np.ones_like(out, dtype=bool)
        far[28 - d : 37 + d, 10 - d : 50 + d] = False
        assert not out[far].any()

    def test_mirror_pad_crop_consistency(self, rng):
        cfg = PipelineConfig()
        img = textured_crack_image()
        same = mirror_pad(img, 3, 2, 1, 4)[1:65, 3:67]
        scores = rng.random((3, 3)).astype(np.float32)
        backend = FileScoreBackend(grid_of(scores))
        cam = rng.random((64, 64)).astype(np.float32)
        assert np.array_equal(
            segment(img, backend, cam, cfg), segment(same, backend, cam, cfg)
        )


class TestGoldStandard:
    def test_empty_gt_empty_map(self):
        cfg = PipelineConfig()
        gt = np.zeros((40, 40), dtype=np.uint8)
        assert not gold_standard_localisation(gt, cfg).any()

    def test_single_pixel_becomes_8x8(self):
        cfg = PipelineConfig()
        gt = np.zeros((40, 40), dtype=np.uint8)
        gt[20, 20] = 1
        out = gold_standard_localisation(gt, cfg)
        # 16x16 dilation spans [13, 28]; eroding by 9x9 leaves [17, 24]
        expected = np.zeros((40, 40), dtype=np.float32)
        expected[17:25, 17:25] = 1.0
        assert np.array_equal(out, expected)

    def test_line_becomes_band_of_8(self):
        cfg = PipelineConfig()
        gt = np.zeros((40, 60), dtype=np.uint8)
        gt[20, :] = 1
        out = gold_standard_localisation(gt, cfg)
        col = out[:, 30]
        assert col.sum() == 8.0
        assert col[17:25].all()

    def test_never_consults_backend(self):
        # the gold path takes no backend argument at all; a poisoned backend
        # in scope proves nothing reaches for one
        FailingBackend()
        cfg = PipelineConfig()
        img = textured_crack_image()
        gt = np.zeros((64, 64), dtype=np.uint8)
        gt[32, :] = 1
        out = gold_standard_segment(img, gt, cfg)
        assert out.shape == (64, 64)
        # crack row inside the widened band keeps positive confidence
        assert out[32, 10:54].max() > 0.2

    def test_goldstd_cli_accepts_no_backend_inputs(self):
        from weakseg.cli import build_parser

        with pytest.raises(SystemExit):
            build_parser().parse_args(
                ["goldstd", "--image-dir", "a", "--gt-dir", "b", "--out-dir", "c",
                 "--scores", "x.psg"]
            )

    def test_gold_detects_crack_and_suppresses_background(self):
        cfg = PipelineConfig()
        img = textured_crack_image()
        gt = np.zeros((64, 64), dtype=np.uint8)
        gt[32, :] = 1
        out = gold_standard_segment(img, gt, cfg)
        off_band = out.copy()
        off_band[24:41, :] = 0
        assert off_band.max() < 0.05


class TestPipelineConfig:
    def test_roundtrip_json(self, tmp_path):
        cfg = PipelineConfig(thr_stride=16, enable_closing=False)
        path = tmp_path / "cfg.json"
        path.write_text(__import__("json").dumps(cfg.to_json()))
        assert PipelineConfig.from_file(path) == cfg

    def test_unknown_field_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_json({"nope": 1})

    def test_invalid_values_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(retention_cut=1.5)
        with pytest.raises(ConfigError):
            PipelineConfig(thr_stride=64)
        with pytest.raises(ConfigError):
            PipelineConfig(otsu_mode="five")

    def test_sigma_r_converted_from_8bit_scale(self):
        cfg = PipelineConfig()
        assert cfg.bilateral_params.sigma_r == pytest.approx(120.0 / 255.0)
        assert cfg.bilateral_params.sigma_s == 120.0
