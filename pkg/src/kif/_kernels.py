"""Numba kernels shared by the rank statistics, the pair engine and the permutation test.

All kernels work on dense integer ranks, never on the raw floats, so any
strictly increasing transform of a column leaves every count unchanged.
"""

import numpy as np
from numba import njit, types
from numba.extending import intrinsic


@njit(cache=True, nogil=True)
def _merge_count(a, buf, lo, mid, hi):
    # strict inversions only: equal keys are taken from the left run first
    i = lo
    j = mid
    k = lo
    inv = 0
    while i < mid and j < hi:
        if a[i] <= a[j]:
            buf[k] = a[i]
            i += 1
        else:
            buf[k] = a[j]
            inv += mid - i
            j += 1
        k += 1
    while i < mid:
        buf[k] = a[i]
        i += 1
        k += 1
    while j < hi:
        buf[k] = a[j]
        j += 1
        k += 1
    for t in range(lo, hi):
        a[t] = buf[t]
    return inv


@njit(cache=True, nogil=True)
def sort_count_inversions(a, buf):
    """Bottom-up merge sort of ``a`` in place; returns the strict inversion count."""
    m = a.shape[0]
    inv = np.int64(0)
    width = 1
    while width < m:
        lo = 0
        while lo < m - width:
            mid = lo + width
            hi = min(lo + 2 * width, m)
            inv += _merge_count(a, buf, lo, mid, hi)
            lo += 2 * width
        width *= 2
    return inv


@njit(cache=True, nogil=True)
def _tied_pairs_sorted(a):
    # a is sorted; sum of c(c-1)/2 over runs of equal values
    m = a.shape[0]
    total = np.int64(0)
    run = np.int64(1)
    for t in range(1, m):
        if a[t] == a[t - 1]:
            run += 1
        else:
            total += run * (run - 1) // 2
            run = 1
    total += run * (run - 1) // 2
    return total


@njit(cache=True, nogil=True)
def concordant_sorted(xs, ys, buf):
    """Strictly concordant pair count of a sample given in (x, y) lexicographic order.

    ``ys`` is consumed (sorted in place). Tied-in-x pairs are ordered by y and
    so never show up as inversions; tied-in-y pairs are not strict inversions.
    Hence C = N - Tx - Ty + Txy - D.
    """
    m = xs.shape[0]
    total = np.int64(m) * (m - 1) // 2
    tx = _tied_pairs_sorted(xs)
    txy = np.int64(0)
    run = np.int64(1)
    for t in range(1, m):
        if xs[t] == xs[t - 1] and ys[t] == ys[t - 1]:
            run += 1
        else:
            txy += run * (run - 1) // 2
            run = 1
    txy += run * (run - 1) // 2
    disc = sort_count_inversions(ys, buf)
    ty = _tied_pairs_sorted(ys)
    return total - tx - ty + txy - disc


@njit(cache=True, nogil=True)
def tau_from_count(c, m):
    return 4.0 * c / (m * (m - 1.0)) - 1.0


@njit(cache=True, nogil=True)
def lex_order(rx, ry, order_y, starts_x, pos, out):
    """Stable counting sort of ``order_y`` by ``rx``: yields (rx, ry) lexicographic order."""
    nx = starts_x.shape[0] - 1
    for r in range(nx):
        pos[r] = starts_x[r]
    for t in range(order_y.shape[0]):
        idx = order_y[t]
        r = rx[idx]
        out[pos[r]] = idx
        pos[r] += 1


@njit(cache=True, nogil=True)
def class_taus(order, rx, ry, codes, counts, xs, ys, buf, taus, skip):
    """Within-class taus for a sample already in lexicographic order.

    Classes with fewer than two rows get NaN when ``skip`` is set; the caller
    validates sizes beforehand otherwise.
    """
    n_classes = counts.shape[0]
    for k in range(n_classes):
        if counts[k] < 2:
            taus[k] = np.nan
            continue
        m = 0
        for t in range(order.shape[0]):
            idx = order[t]
            if codes[idx] == k:
                xs[m] = rx[idx]
                ys[m] = ry[idx]
                m += 1
        c = concordant_sorted(xs[:m], ys[:m], buf)
        taus[k] = tau_from_count(c, m)


@njit(cache=True, nogil=True)
def weighted_deviation(tau, taus, counts, n):
    # sum_k (n_k / n) |tau_k - tau|; NaN taus (skipped classes) contribute 0
    w = 0.0
    for k in range(counts.shape[0]):
        if taus[k] == taus[k]:
            w += (counts[k] / n) * abs(taus[k] - tau)
    return w


@njit(cache=True, nogil=True)
def score_pairs(ranks, orders, starts, codes, counts, pj, pl, out, skip):
    """KIF scores for the pairs (pj[t], pl[t]); results written to ``out[t]``."""
    n = ranks.shape[1]
    n_classes = counts.shape[0]
    pos = np.empty(n + 1, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    xs = np.empty(n, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    taus = np.empty(n_classes, dtype=np.float64)
    for t in range(pj.shape[0]):
        j = pj[t]
        l = pl[t]
        rx = ranks[j]
        ry = ranks[l]
        lex_order(rx, ry, orders[l], starts[j], pos, order)
        for s in range(n):
            xs[s] = rx[order[s]]
            ys[s] = ry[order[s]]
        tau = tau_from_count(concordant_sorted(xs, ys, buf), n)
        class_taus(order, rx, ry, codes, counts, xs, ys, buf, taus, skip)
        out[t] = weighted_deviation(tau, taus, counts, n)


@njit(cache=True, nogil=True)
def score_permutations(lex, rxs, rys, tau_obs, perms, codes, counts, out):
    """KIF scores of fixed pairs under label permutations.

    ``lex[q]`` is the lexicographic row order of pair q, ``rxs[q]``/``rys[q]``
    its ranks; ``tau_obs[q]`` the cached marginal tau. Row ``t`` of ``perms``
    relabels observation i with ``codes[perms[t, i]]``.
    """
    n_perm = perms.shape[0]
    n_pairs = lex.shape[0]
    n = lex.shape[1]
    n_classes = counts.shape[0]
    xs = np.empty(n, dtype=np.int64)
    ys = np.empty(n, dtype=np.int64)
    buf = np.empty(n, dtype=np.int64)
    taus = np.empty(n_classes, dtype=np.float64)
    permuted = np.empty(n, dtype=np.int64)
    for t in range(n_perm):
        for i in range(n):
            permuted[i] = codes[perms[t, i]]
        for q in range(n_pairs):
            class_taus(lex[q], rxs[q], rys[q], permuted, counts, xs, ys, buf, taus, True)
            out[t, q] = weighted_deviation(tau_obs[q], taus, counts, n)


@intrinsic
def _popcount(typingctx, x):
    sig = types.uint64(types.uint64)

    def codegen(context, builder, signature, args):
        return builder.ctpop(args[0])

    return sig, codegen


@njit(cache=True, nogil=True)
def build_greater_sets(ranks, words):
    """Bitsets G[j, i] = {t : rank_j[t] > rank_j[i]} packed into ``words`` uint64s."""
    p, n = ranks.shape
    out = np.zeros((p, n, words), dtype=np.uint64)
    acc = np.zeros(words, dtype=np.uint64)
    one = np.uint64(1)
    for j in range(p):
        order = np.argsort(ranks[j], kind="mergesort")[::-1]
        acc[:] = 0
        t = 0
        while t < n:
            # a block of equal ranks sees only strictly greater rows
            u = t
            r = ranks[j, order[t]]
            while u < n and ranks[j, order[u]] == r:
                for w in range(words):
                    out[j, order[u], w] = acc[w]
                u += 1
            for s in range(t, u):
                idx = order[s]
                acc[idx >> 6] |= one << np.uint64(idx & 63)
            t = u
    return out


@njit(cache=True, nogil=True)
def class_masks(codes, n_classes, words):
    out = np.zeros((n_classes, words), dtype=np.uint64)
    one = np.uint64(1)
    for i in range(codes.shape[0]):
        out[codes[i], i >> 6] |= one << np.uint64(i & 63)
    return out


@njit(cache=True, nogil=True)
def score_pairs_bitset(greater, masks, codes, counts, pj, pl, out):
    """Same scores as :func:`score_pairs`; strict concordances counted by popcount.

    Row i contributes |G_j[i] & G_l[i]|: every strictly concordant pair is
    counted once, from its lower point. Classes with < 2 rows contribute 0.
    """
    n = greater.shape[1]
    words = greater.shape[2]
    n_classes = counts.shape[0]
    ck = np.zeros(n_classes, dtype=np.int64)
    for t in range(pj.shape[0]):
        gj = greater[pj[t]]
        gl = greater[pl[t]]
        c = np.int64(0)
        ck[:] = 0
        for i in range(n):
            k = codes[i]
            s = np.int64(0)
            sk = np.int64(0)
            for w in range(words):
                v = gj[i, w] & gl[i, w]
                s += _popcount(v)
                sk += _popcount(v & masks[k, w])
            c += s
            ck[k] += sk
        tau = tau_from_count(c, n)
        w_sum = 0.0
        for k in range(n_classes):
            if counts[k] >= 2:
                w_sum += (counts[k] / n) * abs(tau_from_count(ck[k], counts[k]) - tau)
        out[t] = w_sum


@njit(cache=True, nogil=True)
def pair_intersections(greater, pj, pl):
    """G_j[i] & G_l[i] for each target pair; fixed under label permutation."""
    n = greater.shape[1]
    words = greater.shape[2]
    out = np.empty((pj.shape[0], n, words), dtype=np.uint64)
    for q in range(pj.shape[0]):
        for i in range(n):
            for w in range(words):
                out[q, i, w] = greater[pj[q], i, w] & greater[pl[q], i, w]
    return out


@njit(cache=True, nogil=True)
def score_permutations_bitset(inter, tau_obs, perms, codes, counts, out):
    """Bitset counterpart of :func:`score_permutations`."""
    n_perm = perms.shape[0]
    n_pairs = inter.shape[0]
    n = inter.shape[1]
    words = inter.shape[2]
    n_classes = counts.shape[0]
    permuted = np.empty(n, dtype=np.int64)
    ck = np.zeros(n_classes, dtype=np.int64)
    for t in range(n_perm):
        for i in range(n):
            permuted[i] = codes[perms[t, i]]
        masks = class_masks(permuted, n_classes, words)
        for q in range(n_pairs):
            ck[:] = 0
            for i in range(n):
                k = permuted[i]
                for w in range(words):
                    ck[k] += _popcount(inter[q, i, w] & masks[k, w])
            w_sum = 0.0
            for k in range(n_classes):
                if counts[k] >= 2:
                    w_sum += (counts[k] / n) * abs(tau_from_count(ck[k], counts[k]) - tau_obs[q])
            out[t, q] = w_sum
