import numpy as np
import pytest

from deen.core import DimensionError
from deen.diagnostics import (
    Grid2D,
    GridGeometry,
    VectorField2D,
    curl_grid,
    curl_stats,
    eval_energy_grid,
    eval_score_grid,
    pgm_bytes,
    ssd_denoise,
    tile_patches,
    write_grid_csv,
    write_pgm,
)
from deen.model import energy, score
from test_model import random_net, zero_last


def field_from(geom, fn):
    X, Y = np.meshgrid(geom.xs, geom.ys)
    u, v = fn(X, Y)
    return VectorField2D(geom, u, v)


class TestGeometry:
    def test_defaults(self):
        g = GridGeometry()
        assert (g.nx, g.ny) == (100, 100)
        assert g.xs[0] == -4.0 and g.xs[-1] == 4.0
        assert g.hx == pytest.approx(8 / 99)

    def test_points_row_major_y_rows(self):
        g = GridGeometry(0, 1, 10, 12, nx=2, ny=3)
        assert g.points().tolist() == [[0, 10], [1, 10], [0, 11], [1, 11], [0, 12], [1, 12]]

    def test_bad_extent(self):
        with pytest.raises(ValueError):
            GridGeometry(1, 0)


class TestGridEval:
    def test_energy_grid_and_display_density(self):
        p = random_net(2, (4, 4), 1)
        g = GridGeometry(nx=7, ny=5)
        e, q = eval_energy_grid(p, g)
        assert e.values.shape == (5, 7)
        assert e.values[2, 3] == pytest.approx(energy(p, np.array([g.xs[3], g.ys[2]])), abs=1e-14)
        assert q.values.max() == 1.0
        assert q.meta["energy_shift"] == e.values.min()

    def test_score_grid(self):
        p = random_net(2, (4,), 2)
        g = GridGeometry(nx=4, ny=6)
        f = eval_score_grid(p, g)
        s = score(p, np.array([g.xs[1], g.ys[4]]))
        assert (f.u[4, 1], f.v[4, 1]) == pytest.approx(tuple(s), abs=1e-14)

    def test_needs_2d_model(self):
        with pytest.raises(DimensionError):
            eval_energy_grid(random_net(3, (4,), 0), GridGeometry(nx=3, ny=3))


class TestCurl:
    def test_rotation(self):
        g = GridGeometry(nx=11, ny=9)
        c = curl_grid(field_from(g, lambda X, Y: (-Y, X)))
        inner = c.values[c.meta["interior"]]
        assert np.allclose(inner, 2.0, atol=1e-12, rtol=0)
        assert np.all(c.values[~c.meta["interior"]] == 0)

    def test_quadratic_field_exact(self):
        # u = x y, v = x^2: curl = 2x - x = x, exact under central differences
        g = GridGeometry(nx=13, ny=17)
        c = curl_grid(field_from(g, lambda X, Y: (X * Y, X ** 2)))
        X, _ = np.meshgrid(g.xs, g.ys)
        m = c.meta["interior"]
        assert np.allclose(c.values[m], X[m], atol=1e-12, rtol=0)

    def test_gradient_field_is_curl_free(self):
        g = GridGeometry(nx=21, ny=21)
        c = curl_grid(field_from(g, lambda X, Y: (2 * X * Y, X ** 2 + 3 * Y ** 2)))
        assert curl_stats(c)["max_abs"] < 1e-12

    def test_stats(self):
        g = GridGeometry(nx=4, ny=3)
        vals = np.zeros((3, 4))
        vals[1, 1:3] = [-3.0, 1.0]
        interior = np.zeros((3, 4), bool)
        interior[1, 1:3] = True
        st = curl_stats(Grid2D(g, vals, {"interior": interior}))
        assert st == {"median_abs": 2.0, "max_abs": 3.0, "mean_abs": 2.0}

    def test_too_small(self):
        g = GridGeometry(nx=2, ny=5)
        with pytest.raises(ValueError):
            curl_grid(field_from(g, lambda X, Y: (X, Y)))


class TestDenoise:
    def test_zero_sigma_is_identity_copy(self):
        p = random_net(2, (3,), 0)
        xi = np.array([[1.0, 2.0]])
        out = ssd_denoise(p, xi, 0.0)
        assert np.array_equal(out, xi) and out is not xi

    def test_step(self):
        p = random_net(2, (3,), 0)
        xi = np.array([0.3, -0.2])
        assert np.allclose(ssd_denoise(p, xi, 0.5), xi + 0.25 * score(p, xi), atol=1e-15, rtol=0)

    def test_flat_energy_does_nothing(self):
        p = zero_last(random_net(2, (3,), 0))
        xi = np.array([0.3, -0.2])
        assert np.array_equal(ssd_denoise(p, xi, 1.0), xi)


class TestWriters:
    def test_grid_csv(self, tmp_path):
        g = GridGeometry(nx=3, ny=2)
        write_grid_csv(Grid2D(g, np.arange(6.0).reshape(2, 3)), tmp_path / "e.csv")
        lines = (tmp_path / "e.csv").read_text().splitlines()
        assert lines[0] == "x,y,value" and len(lines) == 7
        assert lines[4] == "-4.0,4.0,3.0"
        write_grid_csv(field_from(g, lambda X, Y: (X, Y)), tmp_path / "s.csv")
        assert (tmp_path / "s.csv").read_text().startswith("x,y,u,v\n")

    def test_grid_csv_refuses_nan(self, tmp_path):
        g = GridGeometry(nx=2, ny=2)
        with pytest.raises(ValueError):
            write_grid_csv(Grid2D(g, np.array([[0, np.nan], [0, 0]])), tmp_path / "n.csv")

    def test_pgm(self, tmp_path):
        img = np.array([[0.0, 1.0, 2.0], [4.0, 3.0, 2.0]])
        data, lo, hi = pgm_bytes(img)
        assert data.startswith(b"P5\n3 2\n255\n")
        assert list(data[-6:]) == [0, 64, 128, 255, 191, 128]
        assert (lo, hi) == (0.0, 4.0)
        write_pgm(img, tmp_path / "a.pgm")
        assert (tmp_path / "a.pgm").read_bytes() == data
        assert "max 4.0" in (tmp_path / "a.pgm.txt").read_text()

    def test_pgm_constant(self):
        data, lo, hi = pgm_bytes(np.full((2, 2), 7.0))
        assert data[-4:] == b"\x00" * 4 and lo == hi == 7.0

    def test_tiles(self):
        t = tile_patches(np.arange(3 * 4.0).reshape(3, 4), 2, 2, cols=2, pad=1)
        assert t.shape == (5, 5)
        assert t[0:2, 0:2].tolist() == [[0, 1], [2, 3]]
        assert t[3:5, 0:2].tolist() == [[8, 9], [10, 11]]
