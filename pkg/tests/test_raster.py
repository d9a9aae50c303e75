import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from demcloud.errors import DataError
from demcloud.raster import (
    ConfidenceGrid,
    DemGrid,
    MaskGrid,
    hillshade,
    read_confidence,
    read_dem,
    read_gray,
    read_mask,
    read_stack,
    write_confidence,
    write_dem,
    write_gray,
    write_mask,
    write_stack,
)

NODATA = -9999.0


def grid(values, nodata=NODATA):
    return DemGrid(values=np.asarray(values, dtype=np.float32), nodata=nodata)


class TestCfdr:
    def test_round_trip_identity(self, tmp_path):
        g = grid([[1.0, 2.0], [3.0, NODATA]])
        path = tmp_path / "g.cfdr"
        write_dem(g, path)
        assert read_dem(path) == g

    def test_empty_grid_is_header_only(self, tmp_path):
        path = tmp_path / "empty.cfdr"
        write_dem(grid(np.zeros((0, 0))), path)
        assert path.stat().st_size == 18

    def test_single_pixel_layout(self, tmp_path):
        path = tmp_path / "one.cfdr"
        write_dem(grid([[5.0]]), path)
        data = path.read_bytes()
        assert len(data) == 22
        assert data[:4] == b"CFDR"
        assert np.frombuffer(data[18:], dtype="<f4")[0] == 5.0

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.cfdr"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(DataError, match="magic"):
            read_dem(path)

    def test_truncated_payload_rejected(self, tmp_path):
        # a full-region header followed by a 10-byte payload
        import struct
        path = tmp_path / "trunc.cfdr"
        path.write_bytes(struct.pack("<4sHIIf", b"CFDR", 1, 3473, 2840, NODATA) + bytes(10))
        with pytest.raises(DataError, match="truncated"):
            read_dem(path)

    def test_nan_payload_rejected_with_position(self, tmp_path):
        import struct
        vals = np.arange(6, dtype="<f4")
        vals[4] = np.nan
        path = tmp_path / "nan.cfdr"
        path.write_bytes(struct.pack("<4sHIIf", b"CFDR", 1, 3, 2, NODATA) + vals.tobytes())
        with pytest.raises(DataError, match="row 1, col 1"):
            read_dem(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            read_dem(tmp_path / "nope.cfdr")

    def test_grid_invariants_enforced(self):
        with pytest.raises(DataError):
            grid([[np.nan]])
        with pytest.raises(DataError):
            DemGrid(values=np.zeros((2, 2), dtype=np.float64), nodata=0.0)

    @settings(max_examples=40, deadline=None)
    @given(st.data())
    def test_round_trip_random(self, tmp_path_factory, data):
        h = data.draw(st.integers(0, 12))
        w = data.draw(st.integers(0, 12))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
        values = rng.normal(scale=1000.0, size=(h, w)).astype(np.float32)
        values[rng.random((h, w)) < 0.2] = NODATA
        g = grid(values)
        path = tmp_path_factory.mktemp("rt") / "g.cfdr"
        write_dem(g, path)
        assert read_dem(path) == g


class TestStack:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        stack = rng.random((5, 4, 52)).astype(np.float32)
        path = tmp_path / "s.cfdr"
        write_stack(stack, path, nodata=NODATA)
        got, nodata = read_stack(path)
        assert np.array_equal(got, stack)
        assert nodata == np.float32(NODATA)

    def test_grid_reader_rejects_stack(self, tmp_path):
        path = tmp_path / "s.cfdr"
        write_stack(np.zeros((2, 2, 3), dtype=np.float32), path)
        with pytest.raises(DataError, match="version"):
            read_dem(path)


class TestPgm:
    def test_all_zero_mask(self, tmp_path):
        path = tmp_path / "z.pgm"
        write_mask(MaskGrid(values=np.zeros((4, 4), dtype=np.uint8)), path)
        assert read_mask(path).popcount() == 0

    def test_intermediate_gray_rejected(self, tmp_path):
        path = tmp_path / "gray.pgm"
        write_gray(np.full((2, 2), 128, dtype=np.uint8), path)
        with pytest.raises(DataError, match="128"):
            read_mask(path)

    def test_non_pgm_rejected(self, tmp_path):
        path = tmp_path / "no.pgm"
        path.write_bytes(b"JUNKJUNK")
        with pytest.raises(DataError, match="P5"):
            read_mask(path)

    def test_comment_in_header(self, tmp_path):
        path = tmp_path / "c.pgm"
        path.write_bytes(b"P5\n# made by hand\n2 1\n255\n\x00\xff")
        m = read_mask(path)
        assert m.values.tolist() == [[0, 1]]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32 - 1))
    def test_round_trip_random(self, tmp_path_factory, h, w, seed):
        rng = np.random.default_rng(seed)
        m = MaskGrid(values=(rng.random((h, w)) < 0.5).astype(np.uint8))
        path = tmp_path_factory.mktemp("pgm") / "m.pgm"
        write_mask(m, path)
        assert read_mask(path) == m

    def test_gray_round_trip(self, tmp_path):
        img = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        path = tmp_path / "g.pgm"
        write_gray(img, path)
        assert np.array_equal(read_gray(path), img)


class TestConfidence:
    def test_round_trip(self, tmp_path):
        c = ConfidenceGrid(values=np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4))
        path = tmp_path / "c.cfdr"
        write_confidence(c, path)
        assert read_confidence(path) == c

    def test_range_enforced(self):
        with pytest.raises(DataError):
            ConfidenceGrid(values=np.array([[1.5]], dtype=np.float32))


class TestHillshade:
    def test_flat_grid_value(self):
        g = grid(np.full((6, 7), 100.0))
        out = hillshade(g, azimuth=315.0, altitude=45.0)
        interior = out[1:-1, 1:-1]
        assert (interior == round(1 + 253 * math.sin(math.radians(45.0)))).all()
        assert (interior == 180).all()
        assert (out[0, :] == 0).all() and (out[:, 0] == 0).all()

    def test_altitude_90_ignores_azimuth(self):
        rng = np.random.default_rng(3)
        g = grid(rng.normal(scale=5.0, size=(8, 8)))
        a = hillshade(g, azimuth=0.0, altitude=90.0)
        b = hillshade(g, azimuth=222.0, altitude=90.0)
        assert np.array_equal(a, b)

    def test_constant_gradient_plane_uniform(self):
        # oracle: closed-form Horn evaluation on the plane z = ax + by + c
        a, b = 0.3, -0.2
        yy, xx = np.mgrid[0:10, 0:12].astype(np.float64)
        g = grid(a * xx + b * yy + 50.0)
        out = hillshade(g, azimuth=315.0, altitude=45.0)
        interior = out[1:-1, 1:-1]
        p, q = a, -b  # dz/dx east, dz/dy north (rows grow southward)
        slope = math.atan(math.hypot(p, q))
        aspect = math.atan2(-p, -q)
        alt = math.radians(45.0)
        az = math.radians(315.0)
        shade = math.sin(alt) * math.cos(slope) + math.cos(alt) * math.sin(slope) * math.cos(az - aspect)
        expected = round(1 + 253 * min(max(shade, 0.0), 1.0))
        assert (interior == expected).all()

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        values = rng.normal(scale=10.0, size=(9, 9)).astype(np.float32)
        base = hillshade(grid(values))
        shifted = hillshade(grid(values + np.float32(500.0)))
        assert np.array_equal(base, shifted)

    def test_nw_facing_slope_is_brightest_at_nw_light(self):
        yy, xx = np.mgrid[0:9, 0:9].astype(np.float64)
        nw_facing = grid(xx + yy)        # descends toward the northwest
        se_facing = grid(-xx - yy)
        bright = hillshade(nw_facing, azimuth=315.0, altitude=45.0)
        dark = hillshade(se_facing, azimuth=315.0, altitude=45.0)
        assert bright[4, 4] > 180 > dark[4, 4]

    def test_nodata_neighborhood_emits_zero(self):
        values = np.full((5, 5), 100.0, dtype=np.float32)
        values[2, 2] = NODATA
        out = hillshade(grid(values))
        assert (out[1:4, 1:4] == 0).all()
        assert out[1, 1] == 0

    def test_degenerate_grid_rejected(self):
        with pytest.raises(DataError):
            hillshade(grid(np.zeros((2, 5))))
