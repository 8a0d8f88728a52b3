"""Pure numpy implementations of the hot loops.

Same signatures as the compiled ``_kernels`` module.  Prefix indices run over
``0..n`` with ``P[:, 0] = 0``; a triple ``(i1, i2, i3)`` compares the columns
``[i1, i2)`` with ``[i2, i3)`` (0-based), i.e. sample indices ``k = i + 1``.
Ties resolve to the lexicographically smallest ``(i1, i2, i3)``.
"""

import numpy as np


def kahan_cumsum(x):
    x = np.ascontiguousarray(x, dtype=np.float64)
    p, n = x.shape
    out = np.zeros((p, n + 1))
    s = np.zeros(p)
    comp = np.zeros(p)
    for j in range(n):
        y = x[:, j] - comp
        t = s + y
        comp = (t - s) - y
        s = t
        out[:, j + 1] = s
    return out


def _gram_values(G, i1, i2, i3, weighted):
    # broadcasts over index arrays; keep the operation order in sync with _kernels.pyx
    l1 = (i2 - i1).astype(np.float64)
    l2 = (i3 - i2).astype(np.float64)
    w1 = 1.0 / l1
    w3 = 1.0 / l2
    w2 = w1 + w3
    q = (
        w3 * w3 * G[i3, i3]
        + w2 * w2 * G[i2, i2]
        + w1 * w1 * G[i1, i1]
        - 2.0 * w3 * w2 * G[i2, i3]
        + 2.0 * w1 * w3 * G[i1, i3]
        - 2.0 * w1 * w2 * G[i1, i2]
    )
    if weighted:
        q = q * (l1 * l2 / (l1 + l2))
    return q


def gram_values(G, triples, weighted):
    """Values for an explicit (K, 3) array of prefix-index triples."""
    t = np.asarray(triples, dtype=np.int64)
    return _gram_values(np.asarray(G), t[:, 0], t[:, 1], t[:, 2], weighted)


def scan_gram_max(G, n, min_gap, weighted):
    """Max of ``N |C|^2`` (or ``|C|^2``) over triples with both gaps >= min_gap.

    Returns ``(best, i1, i2, i3, count)``; ``count == 0`` when the set is empty.
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    m = int(min_gap)
    best = -np.inf
    arg = (-1, -1, -1)
    count = 0
    for i2 in range(m, n - m + 1):
        i1 = np.arange(0, i2 - m + 1)[:, None]
        i3 = np.arange(i2 + m, n + 1)[None, :]
        vals = _gram_values(G, i1, np.int64(i2), i3, weighted)
        count += vals.size
        v = vals.max()
        if v < best:
            continue
        r, c = np.argwhere(vals == v)[0]
        cand = (int(r), i2, int(c) + i2 + m)
        if v > best or cand < arg:
            best = v
            arg = cand
    return float(best), arg[0], arg[1], arg[2], count


def scan_linf_max(P, n, min_gap):
    """Max of ``|C|_inf`` over the same triple set as :func:`scan_gram_max`."""
    P = np.ascontiguousarray(P, dtype=np.float64)
    m = int(min_gap)
    best = -np.inf
    arg = (-1, -1, -1)
    count = 0
    for i1 in range(0, n - 2 * m + 1):
        for i2 in range(i1 + m, n - m + 1):
            left = (P[:, i2] - P[:, i1]) / (i2 - i1)
            i3 = np.arange(i2 + m, n + 1)
            right = (P[:, i3] - P[:, i2][:, None]) / (i3 - i2)
            vals = np.abs(right - left[:, None]).max(axis=0)
            count += vals.size
            j = int(np.argmax(vals))
            if vals[j] > best:
                best = float(vals[j])
                arg = (i1, i2, int(i3[j]))
    return best, arg[0], arg[1], arg[2], count


def dense_sup(cum, min_gap):
    """Per-path supremum of the quadratic-form Gaussian field on a cell grid.

    ``cum`` has shape (B, r + 1, r + 1) and holds 2-D prefix sums of iid
    standard normal r x r matrices.
    """
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    B, r1, _ = cum.shape
    r = r1 - 1
    m = int(min_gap)
    sup = np.full(B, -np.inf)
    for i2 in range(m, r - m + 1):
        i1 = np.arange(0, i2 - m + 1)
        i3 = np.arange(i2 + m, r + 1)
        # block sums, shapes (B, len(i1)) / (B, len(i3)) / (B, len(i1), len(i3))
        a = cum[:, i2, i2][:, None] - cum[:, i1, i2] - cum[:, i2, i1] + cum[:, i1, i1]
        c = cum[:, i3, i3] - cum[:, i2, i3] - cum[:, i3, i2] + cum[:, i2, i2][:, None]
        s12 = (
            cum[:, i2, i3][:, None, :]
            - cum[:, i1][:, :, i3]
            - cum[:, i2, i2][:, None, None]
            + cum[:, i1, i2][:, :, None]
        )
        s21 = (
            cum[:, i3, i2][:, None, :]
            - cum[:, i2, i2][:, None, None]
            - np.transpose(cum[:, i3][:, :, i1], (0, 2, 1))
            + cum[:, i2, i1][:, :, None]
        )
        l1 = (i2 - i1).astype(np.float64)[:, None]
        l2 = (i3 - i2).astype(np.float64)[None, :]
        val = (l1 * l2 / (l1 + l2)) * (
            a[:, :, None] / (l1 * l1) - (s12 + s21) / (l1 * l2) + c[:, None, :] / (l2 * l2)
        )
        np.maximum(sup, val.reshape(B, -1).max(axis=1), out=sup)
    return sup
