"""Compiled agglomeration kernel.

Stored-matrix agglomerative clustering with per-row nearest-neighbour caching
and Lance-Williams updates (single and complete linkage use the
``gamma * |d1 - d2|`` term). Cluster ``slot`` indices are the smallest member
of the cluster, so scanning slots in order breaks ties on the
lexicographically smallest pair.
"""

import numpy as np
from numba import njit

AVERAGE, WEIGHTED, WARD, CENTROID, MEDIAN, SINGLE, COMPLETE = range(7)


@njit(cache=True)
def lw_coefficients(method, na, nb, nk):
    """(alpha1, alpha2, beta, gamma) for merging clusters of sizes na, nb, seen from nk."""
    if method == AVERAGE:
        s = na + nb
        return na / s, nb / s, 0.0, 0.0
    if method == WEIGHTED:
        return 0.5, 0.5, 0.0, 0.0
    if method == WARD:
        s = na + nb + nk
        return (na + nk) / s, (nb + nk) / s, -nk / s, 0.0
    if method == CENTROID:
        s = na + nb
        return na / s, nb / s, -na * nb / (s * s), 0.0
    if method == MEDIAN:
        return 0.5, 0.5, -0.25, 0.0
    if method == SINGLE:
        return 0.5, 0.5, 0.0, -0.5
    return 0.5, 0.5, 0.0, 0.5


@njit(cache=True)
def _row_min(D, active, i, n):
    best = np.inf
    arg = -1
    for j in range(i + 1, n):
        if active[j] and D[i, j] < best:
            best = D[i, j]
            arg = j
    return arg, best


@njit(cache=True)
def agglomerate(D, method, n_steps):
    """Run ``n_steps`` merges on the square dissimilarity matrix ``D`` (modified in place).

    Returns (slot_a, slot_b, heights, tie) where slot_a < slot_b are the
    merged slots and the merged cluster keeps slot_a.
    """
    n = D.shape[0]
    active = np.ones(n, dtype=np.bool_)
    size = np.ones(n, dtype=np.float64)
    nn = np.full(n, -1, dtype=np.int64)
    nnd = np.full(n, np.inf)
    for i in range(n - 1):
        nn[i], nnd[i] = _row_min(D, active, i, n)

    out_a = np.empty(n_steps, dtype=np.int64)
    out_b = np.empty(n_steps, dtype=np.int64)
    heights = np.empty(n_steps)
    tie = False
    for t in range(n_steps):
        best = np.inf
        a = -1
        for i in range(n):
            if active[i] and nnd[i] < best:
                best = nnd[i]
                a = i
        b = nn[a]
        out_a[t] = a
        out_b[t] = b
        heights[t] = best

        if not tie:
            for i in range(n):
                if i != a and active[i] and nnd[i] == best:
                    tie = True
                    break
            if not tie:
                for j in range(a + 1, n):
                    if j != b and active[j] and D[a, j] == best:
                        tie = True
                        break

        na = size[a]
        nb = size[b]
        dab = D[a, b]
        for k in range(n):
            if not active[k] or k == a or k == b:
                continue
            a1, a2, beta, gamma = lw_coefficients(method, na, nb, size[k])
            dak = D[a, k]
            dbk = D[b, k]
            d = a1 * dak + a2 * dbk + beta * dab
            if gamma != 0.0:
                d += gamma * abs(dak - dbk)
            D[a, k] = d
            D[k, a] = d
        active[b] = False
        size[a] = na + nb
        nnd[b] = np.inf

        for k in range(a):
            if not active[k]:
                continue
            if nn[k] == a or nn[k] == b:
                nn[k], nnd[k] = _row_min(D, active, k, n)
            elif D[a, k] < nnd[k] or (D[a, k] == nnd[k] and a < nn[k]):
                nn[k] = a
                nnd[k] = D[a, k]
        for k in range(a + 1, b):
            if active[k] and nn[k] == b:
                nn[k], nnd[k] = _row_min(D, active, k, n)
        nn[a], nnd[a] = _row_min(D, active, a, n)
    return out_a, out_b, heights, tie


@njit(cache=True)
def slot_labels(n, slot_a, slot_b):
    """Final slot label of every observation after the recorded merges."""
    label = np.arange(n)
    for t in range(slot_a.shape[0]):
        a = slot_a[t]
        b = slot_b[t]
        for i in range(n):
            if label[i] == b:
                label[i] = a
    return label


@njit(cache=True)
def pair_preserved(label, c1, c2):
    """True when c1 and c2 are exactly two clusters of the labelling."""
    n = label.shape[0]
    l1 = label[c1[0]]
    l2 = label[c2[0]]
    if l1 == l2:
        return False
    count1 = 0
    count2 = 0
    for i in range(n):
        if label[i] == l1:
            count1 += 1
        elif label[i] == l2:
            count2 += 1
    if count1 != c1.shape[0] or count2 != c2.shape[0]:
        return False
    for i in c1:
        if label[i] != l1:
            return False
    for i in c2:
        if label[i] != l2:
            return False
    return True


@njit(cache=True)
def sq_dist_from_quadratics(A, B, C, phi):
    """Dissimilarity matrix ``A phi^2 + B phi + C`` for one value of phi."""
    n = A.shape[0]
    D = np.empty((n, n))
    for i in range(n):
        D[i, i] = 0.0
        for j in range(i + 1, n):
            d = (A[i, j] * phi + B[i, j]) * phi + C[i, j]
            if d < 0.0:
                d = 0.0
            D[i, j] = d
            D[j, i] = d
    return D


@njit(cache=True)
def preserved_at(A, B, C, phis, method, n_steps, c1, c2):
    """Pair-preservation indicator of each phi, reclustering ``A phi^2 + B phi + C``."""
    n = A.shape[0]
    out = np.zeros(phis.shape[0], dtype=np.bool_)
    for s in range(phis.shape[0]):
        D = sq_dist_from_quadratics(A, B, C, phis[s])
        sa, sb, _, _ = agglomerate(D, method, n_steps)
        out[s] = pair_preserved(slot_labels(n, sa, sb), c1, c2)
    return out
