import numpy as np
import pytest
from _oracles import sibson_weights_by_counting

from scanbudget.image import Image, SparseImage
from scanbudget.interpolation import InterpMethod, interpolate, sibson_coordinates

METHODS = ["nearest", "bilinear", "bicubic", "nn"]


def affine_field(h, w, gx=0.001, gy=0.002, c=0.1):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return gx * xx + gy * yy + c


def sparse_from(data, mask):
    return SparseImage(Image(data), mask)


class TestSibsonCoordinates:
    def test_query_at_site(self):
        sites = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]])
        w = sibson_coordinates(sites, (4.0, 0.0))
        assert w[1] == 1.0
        assert w.sum() == pytest.approx(1.0)

    def test_midpoint_symmetry(self):
        sites = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
        w = sibson_coordinates(sites, (1.0, 0.5))
        # the two near sites (bottom edge) share weight equally, as do the far two
        assert w[0] == pytest.approx(w[1], abs=1e-12)
        assert w[2] == pytest.approx(w[3], abs=1e-12)
        assert w[0] > w[2]
        assert w.sum() == pytest.approx(1.0, abs=1e-9)

    def test_partition_of_unity(self, rng):
        sites = rng.random((12, 2)) * 10
        q = sites.mean(axis=0)
        w = sibson_coordinates(sites, q)
        assert (w >= 0).all()
        assert abs(w.sum() - 1.0) < 1e-9

    def test_matches_area_counting_oracle(self, rng):
        for trial in range(10):
            n = int(rng.integers(5, 10))
            sites = rng.random((n, 2)) * 8.0
            # query near the middle so it is inside the hull
            q = sites.mean(axis=0) + rng.normal(0, 0.3, 2)
            try:
                w = sibson_coordinates(sites, q)
            except ValueError:
                continue  # rare: query fell outside the hull
            ref = sibson_weights_by_counting(sites, q, resolution=2048)
            assert np.abs(w - ref).max() < 0.01, trial

    def test_outside_hull_rejected(self):
        sites = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0], [4.0, 4.0]])
        with pytest.raises(ValueError):
            sibson_coordinates(sites, (10.0, 10.0))

    def test_collinear_sites_rejected(self):
        sites = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        with pytest.raises(ValueError):
            sibson_coordinates(sites, (1.5, 1.5))

    def test_continuity_under_small_query_motion(self, rng):
        sites = rng.random((30, 2)) * 10
        q = sites.mean(axis=0)
        sites_vals = rng.random(30)
        w0 = sibson_coordinates(sites, q)
        w1 = sibson_coordinates(sites, q + np.array([0.01, -0.005]))
        v0 = float(w0 @ sites_vals)
        v1 = float(w1 @ sites_vals)
        assert abs(v0 - v1) <= 0.01


class TestInterpolate:
    @pytest.mark.parametrize("method", METHODS)
    def test_fully_sampled_identity(self, rng, method):
        data = rng.random((12, 12))
        sp = sparse_from(data, np.ones((12, 12), dtype=bool))
        out = interpolate(sp, method)
        assert np.array_equal(out.data, data)

    @pytest.mark.parametrize("method", METHODS)
    def test_sampled_pixels_exact(self, rng, method):
        data = rng.random((24, 24))
        mask = rng.random((24, 24)) < 0.3
        mask[0, 0] = mask[0, -1] = mask[-1, 0] = mask[-1, -1] = True
        sp = sparse_from(data, mask)
        out = interpolate(sp, method)
        assert np.array_equal(out.data[mask], data[mask])

    def test_empty_mask_rejected(self, rng):
        sp = sparse_from(rng.random((8, 8)), np.zeros((8, 8), dtype=bool))
        for method in METHODS:
            with pytest.raises(ValueError):
                interpolate(sp, method)

    def test_natural_neighbor_linear_precision(self, rng):
        data = affine_field(64, 64)
        mask = np.zeros((64, 64), dtype=bool)
        idx = rng.choice(64 * 64, size=200, replace=False)
        mask.reshape(-1)[idx] = True
        sp = sparse_from(data, mask)
        out = interpolate(sp, "nn")
        # linear precision holds strictly inside the convex hull of the sites
        from scipy.spatial import ConvexHull
        ys, xs = np.nonzero(mask)
        hull = ConvexHull(np.stack([xs, ys], axis=1).astype(float))
        gy, gx = np.mgrid[0:64, 0:64].astype(np.float64)
        pts = np.stack([gx.reshape(-1), gy.reshape(-1), np.ones(64 * 64)], axis=1)
        inside = (pts @ hull.equations.T < -1e-9).all(axis=1).reshape(64, 64)
        assert inside.sum() > 2000  # the hull covers most of the frame
        err = np.abs(out.data - data)[inside]
        assert err.max() < 1e-6

    def test_natural_neighbor_matches_weight_oracle_samples(self, rng):
        data = rng.random((64, 64))
        mask = rng.random((64, 64)) < 0.25
        sp = sparse_from(data, mask)
        out = interpolate(sp, "nn")
        ys, xs = np.nonzero(mask)
        sites = np.stack([xs, ys], axis=1).astype(float)
        values = data[mask]
        # spot-check a handful of interior missing pixels against the
        # counting oracle composed with the site values
        interior = [(y, x) for y, x in zip(*np.nonzero(~mask))
                    if 24 <= y < 40 and 24 <= x < 40][:3]
        for y, x in interior:
            local = np.argsort(((sites - (x, y)) ** 2).sum(axis=1))[:24]
            ref_w = sibson_weights_by_counting(sites[local], (x, y),
                                               resolution=1024, margin=3.0)
            ref = float(ref_w @ values[local])
            assert abs(out.data[y, x] - ref) < 1e-3, (y, x)

    def test_bilinear_linear_precision_interior(self, rng):
        data = affine_field(32, 32)
        mask = rng.random((32, 32)) < 0.4
        mask[0, 0] = mask[0, -1] = mask[-1, 0] = mask[-1, -1] = True
        out = interpolate(sparse_from(data, mask), "bilinear")
        assert np.abs(out.data - data).max() < 1e-6

    def test_nearest_tie_breaks_to_lowest_row_major_site(self):
        # two sites equidistant from the query pixel
        data = np.zeros((3, 3))
        data[0, 2] = 0.25
        data[2, 0] = 0.75
        mask = np.zeros((3, 3), dtype=bool)
        mask[0, 2] = mask[2, 0] = True
        out = interpolate(sparse_from(data, mask), "nearest")
        # pixel (1,1) is equidistant; site (0,2) comes first in row-major order
        assert out.data[1, 1] == 0.25

    def test_methods_stay_in_sample_range(self, rng):
        data = rng.random((24, 24)) * 0.5 + 0.25
        mask = rng.random((24, 24)) < 0.25
        mask[[0, 0, -1, -1], [0, -1, 0, -1]] = True
        sp = sparse_from(data, mask)
        lo, hi = data[mask].min(), data[mask].max()
        for method in ("nearest", "bilinear", "nn"):
            out = interpolate(sp, method)
            assert out.data.min() >= lo - 1e-9
            assert out.data.max() <= hi + 1e-9
        bicubic = interpolate(sp, "bicubic")  # may overshoot, but clamped
        assert bicubic.data.min() >= 0.0
        assert bicubic.data.max() <= 1.0

    def test_unknown_method_rejected(self, rng):
        sp = sparse_from(rng.random((8, 8)), np.ones((8, 8), dtype=bool))
        with pytest.raises(ValueError):
            interpolate(sp, "sinc")

    def test_method_aliases(self):
        assert InterpMethod.parse("natural_neighbor") is InterpMethod.NATURAL_NEIGHBOR
        assert InterpMethod.parse("linear") is InterpMethod.BILINEAR
