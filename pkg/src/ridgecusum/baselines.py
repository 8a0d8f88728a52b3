"""Competing statistics and calibration engines.

``l2``, ``linf`` and ``zl`` use raw (unwhitened) segment means computed from
the same level-removed prefix sums as the ridge scan, so index conventions are
identical.  Calibration is by Monte Carlo under a known covariance, by a
circular non-overlapping block bootstrap, or by pivotal simulation under the
identity.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _backend
from .datamodel import ObservationMatrix, SegmentPrefix
from .exceptions import DegenerateDataError, ValidationError
from .gplimit import empirical_quantile
from .scan import (
    DEFAULT_MAX_N,
    ScanTriple,
    gram_of,
    grid_triples,
    max_over_triples,
    mc_min_gap,
    mc_triples,
    sc_triples,
    scan,
)
from .seeds import substream
from .spectral import RidgeContext, center

METHODS = ("ridge", "l2", "linf", "zl")
MIN_REPS = 200

StatisticFn = Callable[[ObservationMatrix], float]


@dataclass(frozen=True)
class BaselineResult:
    method: str
    mode: str
    statistic: float
    argmax: ScanTriple | None
    critical_value: float = math.nan
    calibration: str | None = None

    @property
    def reject(self) -> bool:
        return bool(self.statistic > self.critical_value)

    def with_critical_value(self, cv: float, calibration: str) -> "BaselineResult":
        return BaselineResult(self.method, self.mode, self.statistic, self.argmax, float(cv), calibration)


def _data(X) -> np.ndarray:
    return X.data if isinstance(X, ObservationMatrix) else np.asarray(X, dtype=float)


def raw_prefix(X) -> SegmentPrefix:
    """Prefix sums of the level-removed raw panel (``U_i`` in the ZL normalizer)."""
    return SegmentPrefix.from_array(center(_data(X)))


def _triple(prefix_triple, n) -> ScanTriple:
    i1, i2, i3 = prefix_triple
    return ScanTriple.from_indices(i1 + 1, i2 + 1, i3 + 1, n)


def l2_cusum(X, epsilon: float = 0.1, mode: str = "SC", max_n: int | None = DEFAULT_MAX_N) -> BaselineResult:
    """Maximum of ``|C|_2^2`` with raw segment means."""
    P = raw_prefix(X)
    best, tri, _, _, _ = max_over_triples(gram_of(P), P.n, mode, epsilon, weighted=False, max_n=max_n)
    return BaselineResult("l2", mode, max(float(best), 0.0), _triple(tri, P.n))


def _linf_values(P: np.ndarray, tri: np.ndarray, weighted: bool = False) -> np.ndarray:
    i1, i2, i3 = tri[:, 0], tri[:, 1], tri[:, 2]
    left = (P[:, i2] - P[:, i1]) / (i2 - i1)
    right = (P[:, i3] - P[:, i2]) / (i3 - i2)
    vals = np.abs(right - left).max(axis=0)
    if weighted:
        vals = vals * np.sqrt((i2 - i1) * (i3 - i2) / (i3 - i1))
    return vals


def linf_cusum(
    X, epsilon: float = 0.1, mode: str = "SC", max_n: int | None = DEFAULT_MAX_N, weighted: bool = False
) -> BaselineResult:
    """Maximum of ``|C|_inf`` (unsquared) with raw segment means.

    ``weighted=True`` scales each contrast by ``sqrt(N)``, the usual CUSUM
    standardization; it is available for the SC and MC_GRID scans.
    """
    P = raw_prefix(X)
    n = P.n
    cs = np.ascontiguousarray(P.cumsum)
    if weighted and mode == "MC":
        raise ValidationError("the weighted sup-norm statistic supports SC and MC_GRID")
    if mode == "MC":
        if max_n is not None and n > max_n:
            raise ValidationError(f"n={n} exceeds the full-scan cap {max_n}")
        best, i1, i2, i3, _ = _backend.scan_linf_max(cs, n, mc_min_gap(n, epsilon))
        return BaselineResult("linf", mode, float(best), _triple((i1, i2, i3), n))
    if mode == "SC":
        tri = sc_triples(n, epsilon)
    elif mode == "MC_GRID":
        tri = grid_triples(n, epsilon)[1]
    else:
        raise ValidationError(f"unknown scan mode {mode!r}")
    vals = _linf_values(cs, tri, weighted)
    j = int(np.argmax(vals))
    return BaselineResult("linf", mode, float(vals[j]), _triple(tri[j], n))


def zl_normalizer(P: SegmentPrefix) -> float:
    """``G_n = n^-2 sum_{i=1}^{n-1} |U_i|^2``."""
    U = P.cumsum[:, 1 : P.n]
    return float(np.sum(U * U) / P.n**2)


def zhang_lavitas(X, epsilon: float = 0.1, mode: str = "SC") -> BaselineResult:
    """Self-normalized ratio ``sup p^-1 N |C|^2 / G_n``.

    SC scans ``(0, t, 1)``; MC scans triples anchored at an end of the sample,
    ``(0, t2, t3)`` and ``(t1, t2, 1)``, with both segments ``>= eps n``.
    """
    P = raw_prefix(X)
    n, p = P.n, P.p
    Gn = zl_normalizer(P)
    if not Gn > 0:
        raise DegenerateDataError("self-normalizer G_n is zero (constant data)")
    if mode == "SC":
        tri = sc_triples(n, epsilon)
    elif mode == "MC":
        tri = mc_triples(n, epsilon, anchored=True)
    else:
        raise ValidationError(f"the ZL statistic supports modes SC and MC, got {mode!r}")
    vals = _backend.gram_values(gram_of(P), tri, True)
    j = int(np.argmax(vals))
    return BaselineResult("zl", mode, float(vals[j] / p / Gn), _triple(tri[j], n))


def make_statistic(
    method: str, epsilon: float = 0.1, mode: str = "SC", lambda_rel: float = 0.1
) -> StatisticFn:
    """Callable panel -> statistic for ``ridge``, ``l2``, ``linf`` or ``zl``."""
    if method == "ridge":

        def fn(X):
            obs = X if isinstance(X, ObservationMatrix) else ObservationMatrix(X)
            return scan(RidgeContext.build(obs, lambda_rel * obs.gamma_n), mode, epsilon).statistic

        return fn
    table = {"l2": l2_cusum, "linf": linf_cusum, "zl": zhang_lavitas}
    if method not in table:
        raise ValidationError(f"unknown method {method!r}; expected one of {METHODS}")
    f = table[method]
    return lambda X: f(X, epsilon, mode).statistic


def sqrt_psd(Sigma: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh((Sigma + Sigma.T) / 2)
    return (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T


def _map(fn, count: int, workers: int) -> np.ndarray:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return np.asarray(list(ex.map(fn, range(count))), dtype=float)
    return np.asarray([fn(r) for r in range(count)], dtype=float)


def null_statistics(
    statistic_fn: StatisticFn, Sigma, p: int, n: int, reps: int, seed: int, workers: int = 1,
    stream: str = "calibrate_mc",
) -> np.ndarray:
    """Statistic over ``reps`` null panels ``X = Sigma^{1/2} Z`` (replicate ``r`` uses substream ``r``)."""
    root = None if Sigma is None else sqrt_psd(np.asarray(Sigma, dtype=float))

    def one(r):
        Z = substream(seed, stream, r).standard_normal((p, n))
        X = Z if root is None else root @ Z
        return statistic_fn(ObservationMatrix(X))

    return _map(one, reps, workers)


def calibrate_mc(
    statistic_fn: StatisticFn,
    Sigma,
    p: int,
    n: int,
    reps: int = 500,
    alpha: float = 0.05,
    seed: int = 1,
    workers: int = 1,
    return_samples: bool = False,
):
    """Type-1 empirical ``1 - alpha`` quantile of the statistic under ``N(0, Sigma)``."""
    if reps < MIN_REPS:
        raise ValidationError(f"reps={reps} is below the minimum of {MIN_REPS}")
    if not 0 <= alpha < 1:
        raise ValidationError(f"alpha must lie in [0, 1), got {alpha}")
    stats = null_statistics(statistic_fn, Sigma, p, n, reps, seed, workers)
    cv = empirical_quantile(stats, 1 - alpha)
    return (cv, stats) if return_samples else cv


def calibrate_pivotal(statistic_fn: StatisticFn, p: int, n: int, reps: int = 500, alpha: float = 0.05,
                      seed: int = 1, workers: int = 1) -> float:
    """Calibration of a pivotal statistic by simulation under the identity covariance."""
    return calibrate_mc(statistic_fn, None, p, n, reps, alpha, seed, workers)


def bootstrap_indices(n: int, block_len: int, rng: np.random.Generator) -> np.ndarray:
    """Column indices of one circular non-overlapping block resample of length ``n``."""
    n_starts = -(-n // block_len)
    starts = rng.integers(0, n_starts, size=n_starts) * block_len
    idx = (starts[:, None] + np.arange(block_len)[None, :]) % n
    return idx.ravel()[:n]


def calibrate_block_bootstrap(
    X,
    block_len: int,
    reps: int,
    alpha: float,
    statistic_fn: StatisticFn,
    seed: int = 1,
    workers: int = 1,
    return_samples: bool = False,
):
    """Block-bootstrap critical value of ``statistic_fn`` under the centered null.

    Blocks start on the grid ``0, b, 2b, ...`` and wrap around the end, so every
    replicate has exactly ``n`` columns.  ``block_len = n`` reproduces the
    centered panel in every replicate.
    """
    data = _data(X)
    n = data.shape[1]
    if not 1 <= block_len <= n:
        raise ValidationError(f"block length must lie in [1, n={n}], got {block_len}")
    if reps < 1:
        raise ValidationError("reps must be positive")
    xc = data - data.mean(axis=1, keepdims=True)

    def one(r):
        idx = bootstrap_indices(n, block_len, substream(seed, "bootstrap", r))
        return statistic_fn(ObservationMatrix(xc[:, idx]))

    stats = _map(one, reps, workers)
    cv = empirical_quantile(stats, 1 - alpha)
    return (cv, stats) if return_samples else cv
