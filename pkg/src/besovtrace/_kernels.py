"""Compiled inner loops: pair distances, grid-hash ball sums, nearest-set distances.

All distance evaluations go through ``_dist`` so that ball membership decided
by any routine here agrees bit-for-bit with every other.
"""

import numpy as np
from numba import njit

MODE_DIFF = 0  # accumulate w_y |v_y - c|^p
MODE_MEAN = 1  # accumulate w_y v_y


@njit(cache=True)
def _dist(a, i, b, j, blocks):
    best = 0.0
    for q in range(blocks.shape[0] - 1):
        acc = 0.0
        for k in range(blocks[q], blocks[q + 1]):
            diff = a[i, k] - b[j, k]
            acc += diff * diff
        d = np.sqrt(acc)
        if d > best:
            best = d
    return best


@njit(cache=True)
def _cell_bounds(c, r, origin, cs, counts, lo, hi, cur):
    D = c.shape[0]
    for k in range(D):
        a = int(np.floor((c[k] - r - origin[k]) / cs)) - 1
        b = int(np.floor((c[k] + r - origin[k]) / cs)) + 1
        if a < 0:
            a = 0
        if b > counts[k] - 1:
            b = counts[k] - 1
        if a > b:
            return False
        lo[k] = a
        hi[k] = b
        cur[k] = a
    return True


@njit(cache=True)
def _advance(cur, lo, hi):
    k = cur.shape[0] - 1
    while k >= 0:
        cur[k] += 1
        if cur[k] <= hi[k]:
            return True
        cur[k] = lo[k]
        k -= 1
    return False


@njit(cache=True)
def grid_ball_sums(ccoords, cvals, tcoords, tw, tvals, origin, cs, counts,
                   strides, cell_start, order, blocks, r, p, mode, out0, out1):
    nc = ccoords.shape[0]
    D = ccoords.shape[1]
    m = tvals.shape[1]
    lo = np.empty(D, np.int64)
    hi = np.empty(D, np.int64)
    cur = np.empty(D, np.int64)
    for c in range(nc):
        s0 = 0.0
        for q in range(m):
            out1[c, q] = 0.0
        if not _cell_bounds(ccoords[c], r, origin, cs, counts, lo, hi, cur):
            out0[c] = 0.0
            continue
        while True:
            cell = 0
            for k in range(D):
                cell += cur[k] * strides[k]
            for ptr in range(cell_start[cell], cell_start[cell + 1]):
                j = order[ptr]
                if _dist(ccoords, c, tcoords, j, blocks) < r:
                    w = tw[j]
                    s0 += w
                    if mode == 0:
                        for q in range(m):
                            diff = abs(tvals[j, q] - cvals[c, q])
                            if p == 1.0:
                                out1[c, q] += w * diff
                            elif p == 2.0:
                                out1[c, q] += w * diff * diff
                            elif p == 4.0:
                                d2 = diff * diff
                                out1[c, q] += w * d2 * d2
                            else:
                                out1[c, q] += w * diff ** p
                    else:
                        for q in range(m):
                            out1[c, q] += w * tvals[j, q]
            if not _advance(cur, lo, hi):
                break
        out0[c] = s0


@njit(cache=True)
def grid_ball_members(c, tcoords, origin, cs, counts, strides, cell_start,
                      order, blocks, r):
    D = c.shape[1]
    lo = np.empty(D, np.int64)
    hi = np.empty(D, np.int64)
    cur = np.empty(D, np.int64)
    found = np.empty(order.shape[0], np.int64)
    nf = 0
    if not _cell_bounds(c[0], r, origin, cs, counts, lo, hi, cur):
        return found[:0]
    while True:
        cell = 0
        for k in range(D):
            cell += cur[k] * strides[k]
        for ptr in range(cell_start[cell], cell_start[cell + 1]):
            j = order[ptr]
            if _dist(c, 0, tcoords, j, blocks) < r:
                found[nf] = j
                nf += 1
        if not _advance(cur, lo, hi):
            break
    return np.sort(found[:nf])


@njit(cache=True)
def matrix_ball_sums(cidx, cvals, tidx, tw, tvals, dmat, r, p, mode, out0, out1):
    nc = cidx.shape[0]
    m = tvals.shape[1]
    for c in range(nc):
        s0 = 0.0
        for q in range(m):
            out1[c, q] = 0.0
        row = cidx[c]
        for j in range(tidx.shape[0]):
            if dmat[row, tidx[j]] < r:
                w = tw[j]
                s0 += w
                if mode == 0:
                    for q in range(m):
                        diff = abs(tvals[j, q] - cvals[c, q])
                        if p == 1.0:
                            out1[c, q] += w * diff
                        elif p == 2.0:
                            out1[c, q] += w * diff * diff
                        elif p == 4.0:
                            d2 = diff * diff
                            out1[c, q] += w * d2 * d2
                        else:
                            out1[c, q] += w * diff ** p
                else:
                    for q in range(m):
                        out1[c, q] += w * tvals[j, q]
        out0[c] = s0


@njit(cache=True)
def min_dist_to_set(a, b, blocks):
    out = np.empty(a.shape[0])
    for i in range(a.shape[0]):
        best = np.inf
        for j in range(b.shape[0]):
            d = _dist(a, i, b, j, blocks)
            if d < best:
                best = d
        out[i] = best
    return out


@njit(cache=True)
def max_pair_dist(a, blocks):
    best = 0.0
    for i in range(a.shape[0]):
        for j in range(i + 1, a.shape[0]):
            d = _dist(a, i, a, j, blocks)
            if d > best:
                best = d
    return best


@njit(cache=True)
def min_pair_dist(a, blocks):
    best = np.inf
    for i in range(a.shape[0]):
        for j in range(i + 1, a.shape[0]):
            d = _dist(a, i, a, j, blocks)
            if d < best:
                best = d
    return best


@njit(cache=True)
def pair_dists(a, b, blocks):
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        for j in range(b.shape[0]):
            out[i, j] = _dist(a, i, b, j, blocks)
    return out


@njit(cache=True)
def greedy_disjoint(coords, blocks, order, radii):
    """Scan ``order`` and keep each point whose ball is disjoint from every kept ball.

    Disjointness is the metric condition ``d(x, x_j) >= r_x + r_j``.
    """
    keep = np.empty(order.shape[0], np.int64)
    nk = 0
    for a in range(order.shape[0]):
        i = order[a]
        ok = True
        for b in range(nk):
            j = keep[b]
            if _dist(coords, i, coords, j, blocks) < radii[i] + radii[j]:
                ok = False
                break
        if ok:
            keep[nk] = i
            nk += 1
    return keep[:nk]


@njit(cache=True)
def greedy_disjoint_matrix(dmat, order, radii):
    keep = np.empty(order.shape[0], np.int64)
    nk = 0
    for a in range(order.shape[0]):
        i = order[a]
        ok = True
        for b in range(nk):
            j = keep[b]
            if dmat[i, j] < radii[i] + radii[j]:
                ok = False
                break
        if ok:
            keep[nk] = i
            nk += 1
    return keep[:nk]


@njit(cache=True)
def max_window_count(ptr, radii_sorted, ratio):
    """Per segment of ``radii_sorted`` (CSR ``ptr``), the most entries fitting in ``[r, ratio r]``."""
    best = 0
    for s in range(ptr.shape[0] - 1):
        lo = ptr[s]
        for hi in range(ptr[s], ptr[s + 1]):
            while radii_sorted[hi] > ratio * radii_sorted[lo]:
                lo += 1
            if hi - lo + 1 > best:
                best = hi - lo + 1
    return best


@njit(cache=True)
def grid_lipschitz(xs, coords, origin, cs, counts, strides, cell_start, order, blocks, r, vals):
    """``max |vals[y] - vals[x]| r / d(x, y)`` over ``x`` in ``xs`` and ``0 < d(x, y) < r``."""
    D = coords.shape[1]
    lo = np.empty(D, np.int64)
    hi = np.empty(D, np.int64)
    cur = np.empty(D, np.int64)
    best = 0.0
    for a in range(xs.shape[0]):
        x = xs[a]
        if not _cell_bounds(coords[x], r, origin, cs, counts, lo, hi, cur):
            continue
        while True:
            cell = 0
            for k in range(D):
                cell += cur[k] * strides[k]
            for ptr in range(cell_start[cell], cell_start[cell + 1]):
                y = order[ptr]
                d = _dist(coords, x, coords, y, blocks)
                if d > 0.0 and d < r:
                    v = abs(vals[y] - vals[x]) * r / d
                    if v > best:
                        best = v
            if not _advance(cur, lo, hi):
                break
    return best
