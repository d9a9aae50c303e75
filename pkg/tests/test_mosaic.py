import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from demcloud.errors import DataError
from demcloud.mosaic import (
    StripSequence,
    accumulate,
    apply_mask,
    clip_mask,
    motion_mask,
    read_manifest,
    write_manifest,
)
from demcloud.raster import DemGrid, MaskGrid, write_dem

NODATA = -9999.0


def grid(values):
    return DemGrid(values=np.asarray(values, dtype=np.float32), nodata=NODATA)


def mask(values):
    return MaskGrid(values=np.asarray(values, dtype=np.uint8))


def random_strip(rng, shape, density=0.6):
    values = rng.normal(scale=100.0, size=shape).astype(np.float32)
    values[rng.random(shape) >= density] = NODATA
    return grid(values)


class TestAccumulate:
    def test_single_strip_identity(self):
        g = grid([[1.0, NODATA], [3.0, 4.0]])
        out = accumulate(StripSequence(strips=((0, g),)))
        assert out == [g]

    def test_nodata_does_not_overwrite(self):
        a = grid([[5.0]])
        b = grid([[NODATA]])
        out = accumulate(StripSequence(strips=((0, a), (1, b))))
        assert out[1].values[0, 0] == 5.0

    def test_matches_per_pixel_history_scan(self):
        rng = np.random.default_rng(11)
        strips = [random_strip(rng, (6, 5)) for _ in range(3)]
        seq = StripSequence(strips=tuple(enumerate(strips)))
        got = accumulate(seq)
        want = oracles.accumulate_history([s.values for s in strips], np.float32(NODATA))
        for g, w in zip(got, want):
            assert np.array_equal(g.values, w)

    def test_idempotent_under_all_nodata_strip(self):
        rng = np.random.default_rng(4)
        a = random_strip(rng, (4, 4))
        empty = grid(np.full((4, 4), NODATA))
        two = accumulate(StripSequence(strips=((0, a), (1, empty))))
        assert two[0] == two[1]

    def test_empty_sequence_rejected(self):
        with pytest.raises(DataError, match="empty"):
            StripSequence(strips=())

    def test_nonincreasing_timesteps_rejected(self):
        g = grid([[1.0]])
        with pytest.raises(DataError, match="increasing"):
            StripSequence(strips=((1, g), (1, g)))


class TestMotionMask:
    def test_all_nodata_strip(self):
        prev = grid(np.zeros((3, 3)))
        strip = grid(np.full((3, 3), NODATA))
        assert motion_mask(prev, strip).popcount() == 0

    def test_marks_exactly_the_valid_pixels(self):
        values = np.full((4, 4), NODATA, dtype=np.float32)
        values[0, 1] = values[2, 2] = values[3, 0] = 7.0
        m = motion_mask(grid(np.zeros((4, 4))), grid(values))
        assert m.popcount() == 3
        assert m.values[0, 1] == m.values[2, 2] == m.values[3, 0] == 1

    def test_full_strip_gives_all_ones(self):
        m = motion_mask(grid(np.zeros((2, 5))), grid(np.ones((2, 5))))
        assert m.popcount() == 10

    def test_dimension_mismatch(self):
        with pytest.raises(DataError, match="mismatch"):
            motion_mask(grid(np.zeros((2, 2))), grid(np.zeros((3, 2))))


class TestClipMask:
    def test_all_ones_is_identity(self):
        m = mask([[1, 0], [0, 1]])
        assert clip_mask(mask(np.ones((2, 2))), m) == m

    def test_disjoint_masks_clear(self):
        a = mask([[1, 0], [0, 0]])
        b = mask([[0, 1], [0, 0]])
        assert clip_mask(a, b).popcount() == 0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_matches_boolean_and_and_commutes(self, seed):
        rng = np.random.default_rng(seed)
        a = mask((rng.random((5, 6)) < 0.5).astype(np.uint8))
        b = mask((rng.random((5, 6)) < 0.5).astype(np.uint8))
        got = clip_mask(a, b)
        assert np.array_equal(got.values, a.values.astype(bool) & b.values.astype(bool))
        assert got == clip_mask(b, a)
        assert got.popcount() <= min(a.popcount(), b.popcount())


class TestApplyMask:
    def test_zero_mask_keeps_strip(self):
        g = grid([[1.0, 2.0], [3.0, 4.0]])
        assert apply_mask(g, mask(np.zeros((2, 2)))) == g

    def test_full_mask_clears_strip(self):
        g = grid([[1.0, 2.0], [3.0, 4.0]])
        out = apply_mask(g, mask(np.ones((2, 2))))
        assert not out.valid_mask().any()

    def test_single_pixel(self):
        g = grid([[1.0, 2.0], [3.0, 4.0]])
        m = mask([[0, 1], [0, 0]])
        out = apply_mask(g, m)
        assert out.values[0, 1] == np.float32(NODATA)
        assert (out.values != g.values).sum() == 1

    def test_masked_pixel_never_resurrected(self):
        rng = np.random.default_rng(9)
        strip = random_strip(rng, (5, 5), density=1.0)
        cloud = mask((rng.random((5, 5)) < 0.4).astype(np.uint8))
        cleaned = apply_mask(strip, cloud)
        out = accumulate(StripSequence(strips=((0, cleaned),)))
        assert not out[0].valid_mask()[cloud.values.astype(bool)].any()


class TestManifest:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        names = []
        for t in (0, 3, 7):
            g = random_strip(rng, (3, 3))
            write_dem(g, tmp_path / f"s{t}.cfdr")
            names.append((t, f"s{t}.cfdr"))
        write_manifest(names, tmp_path / "manifest.txt")
        seq = read_manifest(tmp_path / "manifest.txt")
        assert [t for t, _ in seq.strips] == [0, 3, 7]

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("0 a.cfdr\nbogus\n")
        with pytest.raises(DataError, match="m.txt:2"):
            read_manifest(p)
