"""CUSUM contrasts, the standardized statistic and the three scan statistics.

Every scan reduces to prefix-index triples ``(i1, i2, i3)`` with
``0 <= i1 < i2 < i3 <= n`` (sample indices ``k = i + 1``).  Squared contrast
norms come from the Gram matrix of prefix sums, so a triple costs O(1) after an
O(p n^2) setup.  ``D`` is increasing in ``V``, hence the argmax is taken on
``V`` and only the maximum is standardized.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _backend
from .datamodel import (
    SegmentPrefix,
    effective_size_from_indices,
    iceil,
    ifloor,
    k_of,
    segment_mean,
)
from .exceptions import DegenerateDataError, ValidationError
from .spectral import RidgeContext

DEFAULT_MAX_N = 600
MODES = ("SC", "MC", "MC_GRID")
_GAP_TOL = 1e-9


@dataclass(frozen=True)
class ScanTriple:
    """Scanning triple ``t1 < t2 < t3`` with its resolved sample indices."""

    t1: float
    t2: float
    t3: float
    k1: int
    k2: int
    k3: int

    def __post_init__(self):
        if not (self.k1 < self.k2 < self.k3):
            raise ValidationError(f"empty segment in triple ({self.k1}, {self.k2}, {self.k3})")

    @classmethod
    def from_times(cls, t1: float, t2: float, t3: float, n: int) -> "ScanTriple":
        if not t1 < t2 < t3:
            raise ValidationError(f"times must be increasing, got ({t1}, {t2}, {t3})")
        return cls(t1, t2, t3, k_of(t1, n), k_of(t2, n), k_of(t3, n))

    @classmethod
    def from_indices(cls, k1: int, k2: int, k3: int, n: int) -> "ScanTriple":
        """Times are the left ends ``(k - 1)/n`` of each index cell."""
        return cls((k1 - 1) / n, (k2 - 1) / n, (k3 - 1) / n, int(k1), int(k2), int(k3))

    @property
    def indices(self) -> tuple[int, int, int]:
        return self.k1, self.k2, self.k3

    @property
    def times(self) -> tuple[float, float, float]:
        return self.t1, self.t2, self.t3

    def effective_size(self) -> float:
        return effective_size_from_indices(self.k1, self.k2, self.k3)

    def to_dict(self) -> dict:
        return {"t1": self.t1, "t2": self.t2, "t3": self.t3, "k1": self.k1, "k2": self.k2, "k3": self.k3}


@dataclass(frozen=True)
class ScanResult:
    statistic: float
    argmax: ScanTriple
    mode: str
    epsilon: float
    lam: float
    n: int
    p: int
    n_triples: int
    v_max: float = math.nan
    all_values: dict | None = field(default=None, compare=False, repr=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "lambda": self.lam,
            "epsilon": self.epsilon,
            "statistic": self.statistic,
            "argmax": self.argmax.to_dict(),
            "n": self.n,
            "p": self.p,
            "n_triples": self.n_triples,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def cusum_contrast(prefix: SegmentPrefix, triple: ScanTriple) -> np.ndarray:
    """Mean of ``[k2, k3)`` minus mean of ``[k1, k2)``."""
    return segment_mean(prefix, triple.k2, triple.k3) - segment_mean(prefix, triple.k1, triple.k2)


def v_statistic(triple: ScanTriple, contrast: np.ndarray, N: float | None = None) -> float:
    if N is None:
        N = triple.effective_size()
    return float(N * np.dot(contrast, contrast))


def d_statistic(v, p: int, theta_hat: float, gamma_hat: float):
    """``sqrt(p) (V/p - theta_hat) / sqrt(gamma_hat)``; vectorizes over ``v``."""
    if not gamma_hat > 0:
        raise DegenerateDataError(
            f"gamma_hat = {gamma_hat:.3e} <= 0; the spectrum is degenerate, try a larger lambda"
        )
    return math.sqrt(p) * (np.asarray(v) / p - theta_hat) / math.sqrt(gamma_hat)


def _check_epsilon(epsilon: float, n: int, upper: float = 0.5) -> None:
    if not 0 < epsilon <= upper:
        raise ValidationError(f"epsilon must lie in (0, {upper}], got {epsilon}")
    if epsilon * n < 1 - _GAP_TOL:
        raise ValidationError(f"epsilon * n = {epsilon * n:.3g} < 1; no admissible segments")


def sc_triples(n: int, epsilon: float) -> np.ndarray:
    """Prefix triples ``(0, j, n)`` for every split ``j/n`` in ``[eps, 1 - eps]``."""
    _check_epsilon(epsilon, n)
    j = np.arange(iceil(epsilon * n), ifloor((1 - epsilon) * n) + 1)
    j = j[(j > 0) & (j < n)]
    if j.size == 0:
        raise ValidationError(f"no admissible split for n={n}, epsilon={epsilon}")
    return np.column_stack([np.zeros_like(j), j, np.full_like(j, n)])


def grid_points(epsilon: float) -> np.ndarray:
    """``{j eps} in [0, 1]`` with the right end 1 always included."""
    if not 0 < epsilon <= 0.5:
        raise ValidationError(f"epsilon must lie in (0, 0.5], got {epsilon}")
    J = ifloor(1 / epsilon)
    g = [j * epsilon for j in range(J + 1)]
    if abs(g[-1] - 1.0) <= _GAP_TOL:
        g[-1] = 1.0
    else:
        g.append(1.0)
    return np.asarray(g)


def grid_time_triples(epsilon: float) -> np.ndarray:
    """All ``(t1, t2, t3)`` on the grid with both gaps at least ``eps`` (lexicographic)."""
    g = grid_points(epsilon)
    out = [
        (a, b, c)
        for ia, a in enumerate(g)
        for ib, b in enumerate(g[ia + 1 :], ia + 1)
        if b - a >= epsilon - _GAP_TOL
        for c in g[ib + 1 :]
        if c - b >= epsilon - _GAP_TOL
    ]
    if not out:
        raise ValidationError(f"empty grid scanning set for epsilon={epsilon}")
    return np.asarray(out)


def grid_triples(n: int, epsilon: float) -> tuple[np.ndarray, np.ndarray]:
    """Grid time triples and their prefix-index images ``floor(n t)``."""
    _check_epsilon(epsilon, n)
    times = grid_time_triples(epsilon)
    idx = np.floor(times * n + 1e-9).astype(np.int64)
    idx = np.minimum(idx, n)
    return times, idx


def mc_min_gap(n: int, epsilon: float) -> int:
    _check_epsilon(epsilon, n)
    return max(1, iceil(epsilon * n))


def mc_triples(n: int, epsilon: float, anchored: bool = False) -> np.ndarray:
    """Explicit prefix triples of the full multiple-change scan (lexicographic).

    With ``anchored`` only triples touching an end of the sample are kept.
    """
    out = _mc_triples_cached(int(n), float(epsilon), bool(anchored))
    return out.copy()


@functools.lru_cache(maxsize=32)
def _mc_triples_cached(n: int, epsilon: float, anchored: bool) -> np.ndarray:
    m = mc_min_gap(n, epsilon)
    parts = []
    for i1 in range(0, n - 2 * m + 1):
        i2 = np.arange(i1 + m, n - m + 1)
        if anchored and i1 != 0:
            i2 = i2[n - i2 >= m]
            parts.append(np.column_stack([np.full_like(i2, i1), i2, np.full_like(i2, n)]))
            continue
        # for each i2, i3 runs over i2 + m .. n
        reps = n - m - i2 + 1
        a2 = np.repeat(i2, reps)
        start = np.repeat(np.cumsum(reps) - reps, reps)
        a3 = a2 + m + np.arange(a2.size) - start
        parts.append(np.column_stack([np.full_like(a2, i1), a2, a3]))
    if not parts or sum(len(x) for x in parts) == 0:
        raise ValidationError(f"no admissible triple for n={n}, epsilon={epsilon}")
    out = np.concatenate(parts).astype(np.int64)
    out.setflags(write=False)
    return out


def gram_of(prefix: SegmentPrefix | np.ndarray) -> np.ndarray:
    P = prefix.cumsum if isinstance(prefix, SegmentPrefix) else np.asarray(prefix)
    return np.ascontiguousarray(P.T @ P)


def max_over_triples(
    G: np.ndarray,
    n: int,
    mode: str,
    epsilon: float,
    weighted: bool = True,
    max_n: int | None = DEFAULT_MAX_N,
    keep_values: bool = False,
):
    """Maximum of ``N |C|^2`` (or ``|C|^2``) over a scanning set.

    Returns ``(value, prefix_triple, count, values_or_None, times_or_None)``.
    Shared by the ridge statistics and the unwhitened baselines.
    """
    if mode == "SC":
        tri = sc_triples(n, epsilon)
        times = None
    elif mode == "MC_GRID":
        times, tri = grid_triples(n, epsilon)
    elif mode == "MC":
        if max_n is not None and n > max_n:
            raise ValidationError(
                f"full multiple-change scan is O(n^3) and n={n} exceeds the cap {max_n}; "
                "use the grid scan (MC_GRID) or raise the cap"
            )
        if keep_values:
            tri = mc_triples(n, epsilon)
            times = None
        else:
            best, i1, i2, i3, count = _backend.scan_gram_max(G, n, mc_min_gap(n, epsilon), weighted)
            return best, (i1, i2, i3), count, None, None
    else:
        raise ValidationError(f"unknown scan mode {mode!r}; expected one of {MODES}")
    vals = _backend.gram_values(G, tri, weighted)
    j = int(np.argmax(vals))  # lexicographic order, first tie wins
    t = None if times is None else tuple(times[j])
    keep = (vals, tri, times) if keep_values else None
    return float(vals[j]), tuple(int(x) for x in tri[j]), len(tri), keep, t


def _run(ctx: RidgeContext, mode: str, epsilon: float, max_n: int | None, keep_values: bool) -> ScanResult:
    n, p = ctx.n, ctx.p
    if not ctx.gamma_hat > 0:
        d_statistic(0.0, p, ctx.theta_hat, ctx.gamma_hat)  # raises
    best, (i1, i2, i3), count, kept, t = max_over_triples(
        ctx.gram, n, mode, epsilon, weighted=True, max_n=max_n, keep_values=keep_values
    )
    if t is not None:
        triple = ScanTriple(float(t[0]), float(t[1]), float(t[2]), i1 + 1, i2 + 1, i3 + 1)
    else:
        triple = ScanTriple.from_indices(i1 + 1, i2 + 1, i3 + 1, n)
    stat = float(d_statistic(best, p, ctx.theta_hat, ctx.gamma_hat))
    values = None
    if kept is not None:
        vals, tri, _ = kept
        d = d_statistic(vals, p, ctx.theta_hat, ctx.gamma_hat)
        values = {tuple(int(x) + 1 for x in row): float(v) for row, v in zip(tri, d)}
    return ScanResult(stat, triple, mode, float(epsilon), ctx.lam, n, p, int(count), float(best), values)


def t_sc(ctx: RidgeContext, epsilon: float = 0.1, keep_values: bool = False) -> ScanResult:
    """Single-change statistic: max of ``D(0, t, 1)`` over every split ``t = j/n``."""
    return _run(ctx, "SC", epsilon, None, keep_values)


def t_mc(
    ctx: RidgeContext, epsilon: float = 0.1, max_n: int | None = DEFAULT_MAX_N, keep_values: bool = False
) -> ScanResult:
    """Multiple-change statistic over all index triples with both segments ``>= eps n``.

    Raises
    ------
    ValidationError
        When ``n`` exceeds ``max_n``; the scan is cubic in ``n``.
    """
    return _run(ctx, "MC", epsilon, max_n, keep_values)


def t_mc_grid(ctx: RidgeContext, epsilon: float = 0.1, keep_values: bool = False) -> ScanResult:
    """Multiple-change statistic restricted to triples on the grid ``{j eps}``."""
    return _run(ctx, "MC_GRID", epsilon, None, keep_values)


def scan(ctx: RidgeContext, mode: str, epsilon: float = 0.1, **kw) -> ScanResult:
    fn = {"SC": t_sc, "MC": t_mc, "MC_GRID": t_mc_grid}.get(mode)
    if fn is None:
        raise ValidationError(f"unknown scan mode {mode!r}; expected one of {MODES}")
    return fn(ctx, epsilon, **kw)


def d_values(ctx: RidgeContext, triples: Iterable[ScanTriple]) -> np.ndarray:
    """``D`` at explicit triples (diagnostics and oracle tests)."""
    tri = np.asarray([[t.k1 - 1, t.k2 - 1, t.k3 - 1] for t in triples], dtype=np.int64)
    v = _backend.gram_values(ctx.gram, tri, True)
    return d_statistic(v, ctx.p, ctx.theta_hat, ctx.gamma_hat)
