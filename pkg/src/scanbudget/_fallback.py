"""Pure-numpy implementations of the hot kernels.

The compiled module scanbudget._native exposes the same functions with the
same semantics; scanbudget.backend picks whichever is available. Keep the
two in lockstep: the backend equivalence tests compare them directly.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import expit

BACKEND_NAME = "pure"

# Sibson query status codes (shared with the native kernel)
SIBSON_OK = 0
SIBSON_OUTSIDE = 1    # query outside the convex hull (no start simplex)
SIBSON_DEGENERATE = 2 # on-hull or inconsistent cavity; caller falls back


# ---------------------------------------------------------------------------
# Natural-neighbor (Sibson) weights by virtual Bowyer-Watson insertion

def _incircle(ax, ay, bx, by, cx, cy, qx, qy):
    """> 0 when q lies strictly inside the circumcircle of CCW (a, b, c).

    Exact for integer-valued coordinates of magnitude up to ~2^17 because
    every intermediate product stays below 2^53.
    """
    adx, ady = ax - qx, ay - qy
    bdx, bdy = bx - qx, by - qy
    cdx, cdy = cx - qx, cy - qy
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (adx * (bdy * cd - cdy * bd)
            - ady * (bdx * cd - cdx * bd)
            + ad * (bdx * cdy - cdx * bdy))


def _circumcenter(ax, ay, bx, by, cx, cy):
    """Circumcenter of a triangle, or None when the points are collinear."""
    bx_, by_ = bx - ax, by - ay
    cx_, cy_ = cx - ax, cy - ay
    d = 2.0 * (bx_ * cy_ - by_ * cx_)
    if d == 0.0:
        return None
    b2 = bx_ * bx_ + by_ * by_
    c2 = cx_ * cx_ + cy_ * cy_
    ux = (cy_ * b2 - by_ * c2) / d
    uy = (bx_ * c2 - cx_ * b2) / d
    return ax + ux, ay + uy


def _sibson_cavity(qx, qy, start, points, simplices, neighbors):
    """Breadth-first collection of all triangles whose circumcircle strictly
    contains the query. Returns (set of triangle ids) or None on failure."""
    in_cav = {}

    def test(t):
        got = in_cav.get(t)
        if got is None:
            i0, i1, i2 = simplices[t]
            got = _incircle(points[i0, 0], points[i0, 1],
                            points[i1, 0], points[i1, 1],
                            points[i2, 0], points[i2, 1], qx, qy) > 0.0
            in_cav[t] = got
        return got

    if not test(start):
        return None
    cavity = {start}
    stack = [start]
    while stack:
        t = stack.pop()
        for nb in neighbors[t]:
            if nb >= 0 and nb not in cavity and test(nb):
                cavity.add(nb)
                stack.append(nb)
    return cavity


def _sibson_single(qx, qy, start, points, simplices, neighbors, centers):
    """Natural neighbors of one query point and the Voronoi area stolen from
    each: ((site indices, areas), status)."""
    if start < 0:
        return None, SIBSON_OUTSIDE
    # query coincides with a site of its containing triangle
    for v in simplices[start]:
        if points[v, 0] == qx and points[v, 1] == qy:
            return ([int(v)], [1.0]), SIBSON_OK

    cavity = _sibson_cavity(qx, qy, start, points, simplices, neighbors)
    if cavity is None:
        return None, SIBSON_DEGENERATE

    # boundary edges of the cavity, oriented CCW (cavity interior on the left)
    succ = {}
    edge_tri = {}
    for t in cavity:
        verts = simplices[t]
        for j in range(3):
            nb = neighbors[t][j]
            if nb >= 0 and nb in cavity:
                continue
            a = int(verts[(j + 1) % 3])
            b = int(verts[(j + 2) % 3])
            if a in succ:  # pinched cavity: boundary is not a simple cycle
                return None, SIBSON_DEGENERATE
            succ[a] = b
            edge_tri[(a, b)] = t
    if not succ:
        return None, SIBSON_DEGENERATE
    first = next(iter(succ))
    ring = [first]
    v = succ[first]
    while v != first:
        ring.append(v)
        v = succ.get(v)
        if v is None or len(ring) > len(succ):
            return None, SIBSON_DEGENERATE
    if len(ring) != len(succ):
        return None, SIBSON_DEGENERATE

    m = len(ring)
    # circumcenters of the would-be triangles (q, ring[i], ring[i+1])
    new_cc = []
    for i in range(m):
        a = ring[i]
        b = ring[(i + 1) % m]
        cc = _circumcenter(qx, qy, points[a, 0], points[a, 1],
                           points[b, 0], points[b, 1])
        if cc is None:  # q collinear with a boundary edge: on-hull query
            return None, SIBSON_DEGENERATE
        new_cc.append(cc)

    areas = []
    max_fan = len(cavity) + 1
    for i in range(m):
        vi = ring[i]
        prev_v = ring[(i - 1) % m]
        next_v = ring[(i + 1) % m]
        t = edge_tri[(prev_v, vi)]
        t_stop = edge_tri[(vi, next_v)]
        poly = [new_cc[(i - 1) % m]]
        steps = 0
        while True:
            poly.append((centers[t, 0], centers[t, 1]))
            if t == t_stop:
                break
            verts = list(simplices[t])
            w = next(x for x in verts if x != vi and x != prev_v)
            t_next = neighbors[t][verts.index(prev_v)]
            if t_next < 0 or t_next not in cavity:
                return None, SIBSON_DEGENERATE
            prev_v = w
            t = t_next
            steps += 1
            if steps > max_fan:
                return None, SIBSON_DEGENERATE
        poly.append(new_cc[i])
        area = 0.0
        for j in range(len(poly)):
            x0, y0 = poly[j]
            x1, y1 = poly[(j + 1) % len(poly)]
            area += x0 * y1 - x1 * y0
        areas.append(abs(area) * 0.5)

    total = sum(areas)
    if not (total > 0.0) or not math.isfinite(total):
        return None, SIBSON_DEGENERATE
    return (ring, [a / total for a in areas]), SIBSON_OK


def sibson_weights(query, start, points, simplices, neighbors, centers):
    """Sibson weights of one query: (site_indices, weights, status)."""
    res, status = _sibson_single(float(query[0]), float(query[1]), int(start),
                                 points, simplices, neighbors, centers)
    if status != SIBSON_OK:
        return None, None, status
    ring, weights = res
    return (np.asarray(ring, dtype=np.int64),
            np.asarray(weights, dtype=np.float64), status)


def natural_neighbor_values(queries, starts, points, values, simplices,
                            neighbors, centers):
    """Sibson-interpolated values for many queries.

    Returns (out, status) where status is per query (see SIBSON_* codes);
    out is only meaningful where status == SIBSON_OK.
    """
    nq = len(queries)
    out = np.zeros(nq, dtype=np.float64)
    status = np.zeros(nq, dtype=np.uint8)
    for i in range(nq):
        res, st = _sibson_single(float(queries[i, 0]), float(queries[i, 1]),
                                 int(starts[i]), points, simplices,
                                 neighbors, centers)
        status[i] = st
        if st == SIBSON_OK:
            ring, weights = res
            out[i] = sum(w * values[v] for v, w in zip(ring, weights))
    return out, status


# ---------------------------------------------------------------------------
# BPFA Gibbs sweep phases
#
# Layouts: patches X and residual R are (N, P); masks M are (N, P) float;
# per-atom quantities are row-contiguous: D is (K, P), Z/S/W are (K, N).
# The residual R always equals M * (X - W.T @ D) for the *current* W, D.

def bpfa_sample_dictionary(R, M, W, D, gamma_eps, normals):
    """Sample every dictionary row d_k | rest in index order (in place).

    Prior d_k ~ N(0, I/P). `normals` is (K, P) of pre-drawn standard
    normals, consumed row by row.
    """
    K, P = D.shape
    for k in range(K):
        w = W[k]
        q = (w * w) @ M                      # (P,) masked usage energy
        c = w @ R                            # (P,)
        prec = P + gamma_eps * q
        mean = gamma_eps * (c + D[k] * q) / prec
        dnew = mean + normals[k] / np.sqrt(prec)
        delta = dnew - D[k]
        R -= M * np.outer(w, delta)
        D[k] = dnew


def bpfa_sample_zs(R, M, W, D, Z, S, pi, gamma_eps, gamma_s,
                   uniforms, normals):
    """Sample (z_ik, s_ik) | rest for every patch, atom by atom (in place).

    z is drawn with s collapsed out, then s from its conditional (prior when
    z = 0). `uniforms` and `normals` are (K, N), consumed row by row.
    """
    K, P = D.shape
    for k in range(K):
        d = D[k]
        g = M @ (d * d)                      # (N,)
        w_old = W[k]
        h = R @ d + w_old * g                # (N,)
        alpha = gamma_s + gamma_eps * g
        mu = gamma_eps * h / alpha
        with np.errstate(divide="ignore"):
            logodds = (np.log(pi[k]) - np.log1p(-pi[k])
                       + 0.5 * (np.log(gamma_s) - np.log(alpha))
                       + 0.5 * mu * mu * alpha)
        z = uniforms[k] < expit(logodds)
        s = np.where(z, mu + normals[k] / np.sqrt(alpha),
                     normals[k] / np.sqrt(gamma_s))
        w_new = np.where(z, s, 0.0)
        R -= M * np.outer(w_new - w_old, d)
        Z[k] = z
        S[k] = s
        W[k] = w_new
