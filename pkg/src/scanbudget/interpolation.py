"""Scattered-data reconstruction of sparse scans.

Four methods: nearest (Voronoi cell owner), bilinear (barycentric over the
Delaunay triangulation), bicubic (Clough-Tocher patches), and natural
neighbor (Sibson coordinates, after Sibson 1981). Sampled pixels are always
reproduced exactly; queries outside the convex hull of the samples fall back
to the nearest site so a full raster is produced.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.interpolate import CloughTocher2DInterpolator, LinearNDInterpolator
from scipy.spatial import Delaunay, QhullError, cKDTree

from .backend import kernels
from .image import Image, SparseImage

__all__ = ["InterpMethod", "interpolate", "sibson_coordinates"]


class InterpMethod(Enum):
    NEAREST = "nearest"
    BILINEAR = "bilinear"
    BICUBIC = "bicubic"
    NATURAL_NEIGHBOR = "nn"

    @classmethod
    def parse(cls, name: str) -> "InterpMethod":
        aliases = {
            "nearest": cls.NEAREST,
            "bilinear": cls.BILINEAR, "linear": cls.BILINEAR,
            "bicubic": cls.BICUBIC, "cubic": cls.BICUBIC,
            "nn": cls.NATURAL_NEIGHBOR,
            "natural_neighbor": cls.NATURAL_NEIGHBOR,
        }
        try:
            return aliases[name.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown interpolation method {name!r}") from None


def _site_arrays(sparse: SparseImage):
    """Sampled pixel centers as (x, y) points in row-major site order."""
    ys, xs = np.nonzero(sparse.mask)
    sites = np.stack([xs, ys], axis=1).astype(np.float64)
    values = sparse.image.data[sparse.mask]
    return sites, values


def _ccw_triangulation(tri: Delaunay):
    """Simplices and neighbor table with every triangle oriented CCW, plus
    per-triangle circumcenters."""
    pts = tri.points
    simplices = np.array(tri.simplices, dtype=np.int64)
    neighbors = np.array(tri.neighbors, dtype=np.int64)
    a = pts[simplices[:, 0]]
    b = pts[simplices[:, 1]]
    c = pts[simplices[:, 2]]
    cross = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
             - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
    flip = cross < 0
    simplices[flip, 1], simplices[flip, 2] = (simplices[flip, 2].copy(),
                                              simplices[flip, 1].copy())
    neighbors[flip, 1], neighbors[flip, 2] = (neighbors[flip, 2].copy(),
                                              neighbors[flip, 1].copy())
    b = pts[simplices[:, 1]]
    c = pts[simplices[:, 2]]
    bx, by = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    cx, cy = c[:, 0] - a[:, 0], c[:, 1] - a[:, 1]
    d = 2.0 * (bx * cy - by * cx)
    b2 = bx * bx + by * by
    c2 = cx * cx + cy * cy
    centers = np.stack([a[:, 0] + (cy * b2 - by * c2) / d,
                        a[:, 1] + (bx * c2 - cx * b2) / d], axis=1)
    return simplices, neighbors, centers


def _nearest_fill(sites, values, queries):
    """Nearest-site values with ties broken by lowest row-major site index."""
    tree = cKDTree(sites)
    kq = min(len(sites), 8)
    dist, idx = tree.query(queries, k=kq)
    if kq == 1:
        return values[idx]
    tied = dist == dist[:, :1]
    best = np.where(tied, idx, len(sites)).min(axis=1)
    # a point with more equidistant sites than kq needs an exhaustive pass
    saturated = np.nonzero(tied.all(axis=1))[0]
    for i in saturated:
        around = tree.query_ball_point(queries[i], dist[i, 0] * (1 + 1e-12))
        best[i] = min(around)
    return values[best]


def sibson_coordinates(sites, query) -> np.ndarray:
    """Sibson (natural-neighbor) coordinates of a query point.

    Returns one weight per site: the Voronoi area the query would steal from
    that site, normalized to sum 1. Requires >= 3 non-collinear sites and a
    query inside their convex hull.
    """
    sites = np.asarray(sites, dtype=np.float64)
    if sites.ndim != 2 or sites.shape[1] != 2 or len(sites) < 3:
        raise ValueError("need at least 3 two-dimensional sites")
    try:
        tri = Delaunay(sites)
    except QhullError as exc:
        raise ValueError(f"degenerate site configuration: {exc}") from None
    simplices, neighbors, centers = _ccw_triangulation(tri)
    q = np.asarray(query, dtype=np.float64)
    start = int(tri.find_simplex(q[None, :])[0])
    if start < 0:
        raise ValueError(f"query {query} lies outside the convex hull")
    idx, w, status = kernels.sibson_weights(q, start, tri.points,
                                            simplices, neighbors, centers)
    if status != kernels.SIBSON_OK:
        raise ValueError(f"query {query} admits no bounded inserted cell "
                         "(on the hull boundary or degenerate)")
    weights = np.zeros(len(sites), dtype=np.float64)
    weights[idx] = w
    return weights


def interpolate(sparse: SparseImage, method: InterpMethod | str) -> Image:
    """Reconstruct a full raster from a sparse scan.

    Sampled pixels are copied through verbatim. Natural neighbor evaluates
    Sibson coordinates per missing pixel; bilinear/bicubic triangulate the
    sites; outside-hull pixels take the nearest site's value everywhere.
    """
    if isinstance(method, str):
        method = InterpMethod.parse(method)
    if sparse.sampled_count == 0:
        raise ValueError("cannot interpolate an empty sampling mask")
    h, w = sparse.shape
    out = sparse.image.data.copy()
    missing = ~sparse.mask
    if not missing.any():
        return Image(out)
    sites, values = _site_arrays(sparse)
    ys, xs = np.nonzero(missing)
    queries = np.stack([xs, ys], axis=1).astype(np.float64)

    if method is InterpMethod.NEAREST:
        out[missing] = _nearest_fill(sites, values, queries)
        return Image(out)

    if method is InterpMethod.NATURAL_NEIGHBOR:
        if len(sites) < 3:
            raise ValueError("natural neighbor needs at least 3 sampled pixels")
        try:
            tri = Delaunay(sites)
        except QhullError:
            raise ValueError(
                "natural neighbor needs non-collinear sampled pixels") from None
        simplices, neighbors, centers = _ccw_triangulation(tri)
        starts = tri.find_simplex(queries).astype(np.int64)
        filled, status = kernels.natural_neighbor_values(
            queries, starts, tri.points, values, simplices, neighbors, centers)
        bad = status != kernels.SIBSON_OK
        if bad.any():
            filled[bad] = _nearest_fill(sites, values, queries[bad])
        out[missing] = filled
        return Image(out)

    # bilinear / bicubic on the Delaunay triangulation
    try:
        tri = Delaunay(sites)
    except QhullError:
        out[missing] = _nearest_fill(sites, values, queries)
        return Image(out)
    if method is InterpMethod.BILINEAR:
        interp = LinearNDInterpolator(tri, values)
    else:
        interp = CloughTocher2DInterpolator(tri, values)
    filled = interp(queries)
    bad = ~np.isfinite(filled)
    if bad.any():
        filled[bad] = _nearest_fill(sites, values, queries[bad])
    out[missing] = np.clip(filled, 0.0, 1.0)
    return Image(out)
