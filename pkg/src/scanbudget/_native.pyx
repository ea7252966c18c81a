# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementations of the hot kernels.

Function-for-function mirror of scanbudget._fallback (same signatures, same
semantics, same random-number consumption); kept in lockstep by the backend
equivalence tests.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, isfinite, log, log1p, sqrt

cnp.import_array()

BACKEND_NAME = "native"

SIBSON_OK = 0
SIBSON_OUTSIDE = 1
SIBSON_DEGENERATE = 2

cdef int _OK = 0
cdef int _DEGENERATE = 2


# ---------------------------------------------------------------------------
# Natural-neighbor (Sibson) weights

cdef inline double _incircle(double ax, double ay, double bx, double by,
                             double cx, double cy, double qx, double qy) nogil:
    cdef double adx = ax - qx, ady = ay - qy
    cdef double bdx = bx - qx, bdy = by - qy
    cdef double cdx = cx - qx, cdy = cy - qy
    cdef double ad = adx * adx + ady * ady
    cdef double bd = bdx * bdx + bdy * bdy
    cdef double cd = cdx * cdx + cdy * cdy
    return (adx * (bdy * cd - cdy * bd)
            - ady * (bdx * cd - cdx * bd)
            + ad * (bdx * cdy - cdx * bdy))


cdef int _sibson_core(double qx, double qy, long start,
                      double[:, ::1] points, long[:, ::1] simplices,
                      long[:, ::1] neighbors, double[:, ::1] centers,
                      long[::1] cav_stamp, long stamp,
                      long[::1] stack, long[::1] cavity,
                      long[::1] ring, long[::1] ring_tri,
                      long[::1] succ_to, long[::1] succ_tri,
                      double[::1] new_cx, double[::1] new_cy,
                      double[::1] areas, long* ring_len) except -1:
    """Cavity BFS + boundary walk + stolen-area accumulation for one query.

    Returns a SIBSON_* status; on success `ring[:ring_len]` holds the natural
    neighbors (CCW) and `areas[:ring_len]` the stolen areas. Scratch arrays
    are caller-provided; `cav_stamp` marks cavity membership with `stamp`
    (even values = in cavity, odd = tested and out).
    """
    cdef long i0, i1, i2, t, nb, j, a, b, v
    cdef long n_cavity = 0, n_stack = 0, n_ring = 0
    cdef double det

    if start < 0:
        return SIBSON_OUTSIDE
    # coincident site: handled by the caller via exact comparison
    i0 = simplices[start, 0]; i1 = simplices[start, 1]; i2 = simplices[start, 2]
    det = _incircle(points[i0, 0], points[i0, 1], points[i1, 0], points[i1, 1],
                    points[i2, 0], points[i2, 1], qx, qy)
    if det <= 0.0:
        return _DEGENERATE
    cav_stamp[start] = stamp
    stack[n_stack] = start; n_stack += 1
    cavity[n_cavity] = start; n_cavity += 1
    while n_stack > 0:
        n_stack -= 1
        t = stack[n_stack]
        for j in range(3):
            nb = neighbors[t, j]
            if nb < 0 or cav_stamp[nb] == stamp or cav_stamp[nb] == stamp + 1:
                continue
            i0 = simplices[nb, 0]; i1 = simplices[nb, 1]; i2 = simplices[nb, 2]
            det = _incircle(points[i0, 0], points[i0, 1],
                            points[i1, 0], points[i1, 1],
                            points[i2, 0], points[i2, 1], qx, qy)
            if det > 0.0:
                cav_stamp[nb] = stamp
                stack[n_stack] = nb; n_stack += 1
                cavity[n_cavity] = nb; n_cavity += 1
            else:
                cav_stamp[nb] = stamp + 1  # tested, outside cavity

    # boundary edges, oriented CCW; succ_to/succ_tri are dense site-indexed
    # maps validated via ring reconstruction below
    cdef long n_edges = 0, first = -1
    for i0 in range(n_cavity):
        t = cavity[i0]
        for j in range(3):
            nb = neighbors[t, j]
            if nb >= 0 and cav_stamp[nb] == stamp:
                continue
            a = simplices[t, (j + 1) % 3]
            b = simplices[t, (j + 2) % 3]
            if succ_tri[a] == stamp:
                return _DEGENERATE  # pinched cavity: vertex starts two edges
            succ_to[a] = b
            succ_tri[a] = stamp
            ring_tri[a] = t  # triangle owning edge (a -> b), keyed by a
            n_edges += 1
            first = a
    if n_edges == 0:
        return _DEGENERATE
    v = first
    n_ring = 0
    while True:
        if n_ring >= n_edges:
            return _DEGENERATE
        ring[n_ring] = v
        n_ring += 1
        v = succ_to[v]
        if succ_tri[v] != stamp and v != first:
            return _DEGENERATE
        if v == first:
            break
    if n_ring != n_edges:
        return _DEGENERATE

    # circumcenters of the new triangles (q, ring[i], ring[i+1])
    cdef double bx_, by_, cx_, cy_, dd, b2, c2
    for j in range(n_ring):
        a = ring[j]
        b = ring[(j + 1) % n_ring]
        bx_ = points[a, 0] - qx; by_ = points[a, 1] - qy
        cx_ = points[b, 0] - qx; cy_ = points[b, 1] - qy
        dd = 2.0 * (bx_ * cy_ - by_ * cx_)
        if dd == 0.0:
            return _DEGENERATE  # query collinear with a hull edge
        b2 = bx_ * bx_ + by_ * by_
        c2 = cx_ * cx_ + cy_ * cy_
        new_cx[j] = qx + (cy_ * b2 - by_ * c2) / dd
        new_cy[j] = qy + (bx_ * c2 - cx_ * b2) / dd

    # stolen area per neighbor: fan of old circumcenters between the two new
    # Voronoi vertices, pivoting around ring[i] inside the cavity
    cdef long vi, prev_v, next_v, t_stop, w, steps, pos
    cdef double area, x0, y0, x1, y1, px, py
    cdef double total = 0.0
    for j in range(n_ring):
        vi = ring[j]
        prev_v = ring[(j - 1 + n_ring) % n_ring]
        next_v = ring[(j + 1) % n_ring]
        t = ring_tri[prev_v]       # cavity triangle of edge (prev_v -> vi)
        t_stop = ring_tri[vi]      # cavity triangle of edge (vi -> next_v)
        x0 = new_cx[(j - 1 + n_ring) % n_ring]
        y0 = new_cy[(j - 1 + n_ring) % n_ring]
        px = x0; py = y0
        area = 0.0
        steps = 0
        while True:
            x1 = centers[t, 0]; y1 = centers[t, 1]
            area += px * y1 - x1 * py
            px = x1; py = y1
            if t == t_stop:
                break
            w = -1
            for pos in range(3):
                i0 = simplices[t, pos]
                if i0 != vi and i0 != prev_v:
                    w = i0
            pos = 0
            while simplices[t, pos] != prev_v:
                pos += 1
            nb = neighbors[t, pos]
            if nb < 0 or cav_stamp[nb] != stamp:
                return _DEGENERATE
            prev_v = w
            t = nb
            steps += 1
            if steps > n_cavity + 1:
                return _DEGENERATE
        x1 = new_cx[j]; y1 = new_cy[j]
        area += px * y1 - x1 * py
        area += x1 * y0 - x0 * y1  # close the polygon back to the start
        area = fabs(area) * 0.5
        areas[j] = area
        total += area
    if not (total > 0.0) or not isfinite(total):
        return _DEGENERATE
    for j in range(n_ring):
        areas[j] /= total
    ring_len[0] = n_ring
    return SIBSON_OK


cdef class _SibsonWorkspace:
    cdef long[::1] cav_stamp, stack, cavity, ring, ring_tri, succ_to, succ_tri
    cdef double[::1] new_cx, new_cy, areas
    cdef long stamp

    def __init__(self, long n_simplices, long n_points):
        self.cav_stamp = np.full(n_simplices, -3, dtype=np.int64)
        self.stack = np.empty(n_simplices, dtype=np.int64)
        self.cavity = np.empty(n_simplices, dtype=np.int64)
        self.ring = np.empty(n_points + 4, dtype=np.int64)
        self.ring_tri = np.empty(n_points, dtype=np.int64)
        self.succ_to = np.full(n_points, -1, dtype=np.int64)
        self.succ_tri = np.full(n_points, -3, dtype=np.int64)
        self.new_cx = np.empty(n_points + 4, dtype=np.float64)
        self.new_cy = np.empty(n_points + 4, dtype=np.float64)
        self.areas = np.empty(n_points + 4, dtype=np.float64)
        self.stamp = 0


def sibson_weights(query, start, points, simplices, neighbors, centers):
    """Sibson weights of one query: (site_indices, weights, status)."""
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef long[:, ::1] simp = np.ascontiguousarray(simplices, dtype=np.int64)
    cdef long[:, ::1] neigh = np.ascontiguousarray(neighbors, dtype=np.int64)
    cdef double[:, ::1] cent = np.ascontiguousarray(centers, dtype=np.float64)
    cdef double qx = float(query[0]), qy = float(query[1])
    cdef long st = int(start)
    if st < 0:
        return None, None, SIBSON_OUTSIDE
    cdef long v
    for v in simp[st, :]:
        if pts[v, 0] == qx and pts[v, 1] == qy:
            return (np.array([v], dtype=np.int64),
                    np.array([1.0], dtype=np.float64), SIBSON_OK)
    ws = _SibsonWorkspace(simp.shape[0], pts.shape[0])
    cdef long ring_len = 0
    ws.stamp += 2
    cdef int status = _sibson_core(qx, qy, st, pts, simp, neigh, cent,
                                   ws.cav_stamp, ws.stamp, ws.stack, ws.cavity,
                                   ws.ring, ws.ring_tri, ws.succ_to, ws.succ_tri,
                                   ws.new_cx, ws.new_cy, ws.areas, &ring_len)
    if status != SIBSON_OK:
        return None, None, status
    idx = np.asarray(ws.ring[:ring_len]).copy()
    weights = np.asarray(ws.areas[:ring_len]).copy()
    return idx, weights, SIBSON_OK


def natural_neighbor_values(queries, starts, points, values, simplices,
                            neighbors, centers):
    """Sibson-interpolated values for many queries; see the fallback for the
    status contract."""
    cdef double[:, ::1] qs = np.ascontiguousarray(queries, dtype=np.float64)
    cdef long[::1] sts = np.ascontiguousarray(starts, dtype=np.int64)
    cdef double[:, ::1] pts = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef long[:, ::1] simp = np.ascontiguousarray(simplices, dtype=np.int64)
    cdef long[:, ::1] neigh = np.ascontiguousarray(neighbors, dtype=np.int64)
    cdef double[:, ::1] cent = np.ascontiguousarray(centers, dtype=np.float64)
    cdef long nq = qs.shape[0]
    out_arr = np.zeros(nq, dtype=np.float64)
    status_arr = np.zeros(nq, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] status = status_arr
    ws = _SibsonWorkspace(simp.shape[0], pts.shape[0])
    cdef long i, j, ring_len, v
    cdef int st
    cdef double qx, qy, acc
    cdef bint at_site
    for i in range(nq):
        qx = qs[i, 0]; qy = qs[i, 1]
        if sts[i] < 0:
            status[i] = SIBSON_OUTSIDE
            continue
        at_site = False
        for j in range(3):
            v = simp[sts[i], j]
            if pts[v, 0] == qx and pts[v, 1] == qy:
                out[i] = vals[v]
                at_site = True
                break
        if at_site:
            continue
        ws.stamp += 2
        ring_len = 0
        st = _sibson_core(qx, qy, sts[i], pts, simp, neigh, cent,
                          ws.cav_stamp, ws.stamp, ws.stack, ws.cavity,
                          ws.ring, ws.ring_tri, ws.succ_to, ws.succ_tri,
                          ws.new_cx, ws.new_cy, ws.areas, &ring_len)
        status[i] = <unsigned char> st
        if st == SIBSON_OK:
            acc = 0.0
            for j in range(ring_len):
                acc += ws.areas[j] * vals[ws.ring[j]]
            out[i] = acc
    return out_arr, status_arr


# ---------------------------------------------------------------------------
# BPFA Gibbs sweep phases (layouts documented in the fallback module)

cdef inline double _expit(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def bpfa_sample_dictionary(double[:, ::1] R, double[:, ::1] M,
                           double[:, ::1] W, double[:, ::1] D,
                           double gamma_eps, double[:, ::1] normals):
    """Sample every dictionary row d_k | rest in index order (in place)."""
    cdef long K = D.shape[0], P = D.shape[1], N = R.shape[0]
    cdef long k, i, p
    cdef double wi, dnew, delta, prec
    q_arr = np.empty(P, dtype=np.float64)
    c_arr = np.empty(P, dtype=np.float64)
    dn_arr = np.empty(P, dtype=np.float64)
    cdef double[::1] q = q_arr, c = c_arr, dn = dn_arr
    with nogil:
        for k in range(K):
            for p in range(P):
                q[p] = 0.0
                c[p] = 0.0
            for i in range(N):
                wi = W[k, i]
                if wi != 0.0:
                    for p in range(P):
                        q[p] += wi * wi * M[i, p]
                        c[p] += wi * R[i, p]
            for p in range(P):
                prec = P + gamma_eps * q[p]
                dnew = (gamma_eps * (c[p] + D[k, p] * q[p]) / prec
                        + normals[k, p] / sqrt(prec))
                dn[p] = dnew - D[k, p]
                D[k, p] = dnew
            for i in range(N):
                wi = W[k, i]
                if wi != 0.0:
                    for p in range(P):
                        R[i, p] -= M[i, p] * wi * dn[p]


def bpfa_sample_zs(double[:, ::1] R, double[:, ::1] M, double[:, ::1] W,
                   double[:, ::1] D, unsigned char[:, ::1] Z,
                   double[:, ::1] S, double[::1] pi, double gamma_eps,
                   double gamma_s, double[:, ::1] uniforms,
                   double[:, ::1] normals):
    """Sample (z_ik, s_ik) | rest for every patch, atom by atom (in place)."""
    cdef long K = D.shape[0], P = D.shape[1], N = R.shape[0]
    cdef long k, i, p
    cdef double g, h, alpha, mu, logodds, prob, w_old, w_new, s_new, delta
    cdef double log_pi, log_1mpi, log_gs, dkp
    cdef double sqrt_gs
    d2_arr = np.empty(P, dtype=np.float64)
    cdef double[::1] d2 = d2_arr
    with nogil:
        log_gs = log(gamma_s)
        sqrt_gs = sqrt(gamma_s)
        for k in range(K):
            log_pi = log(pi[k])
            log_1mpi = log1p(-pi[k])
            for p in range(P):
                d2[p] = D[k, p] * D[k, p]
            for i in range(N):
                w_old = W[k, i]
                g = 0.0
                h = 0.0
                for p in range(P):
                    g += M[i, p] * d2[p]
                    h += R[i, p] * D[k, p]
                h += w_old * g
                alpha = gamma_s + gamma_eps * g
                mu = gamma_eps * h / alpha
                logodds = (log_pi - log_1mpi
                           + 0.5 * (log_gs - log(alpha))
                           + 0.5 * mu * mu * alpha)
                if uniforms[k, i] < _expit(logodds):
                    Z[k, i] = 1
                    s_new = mu + normals[k, i] / sqrt(alpha)
                    w_new = s_new
                else:
                    Z[k, i] = 0
                    s_new = normals[k, i] / sqrt_gs
                    w_new = 0.0
                S[k, i] = s_new
                delta = w_new - w_old
                if delta != 0.0:
                    for p in range(P):
                        R[i, p] -= M[i, p] * delta * D[k, p]
                W[k, i] = w_new
