"""The limiting Gaussian process of the standardized statistic and its suprema.

For a triple ``a = (t1, t2, t3)`` let ``u_a`` be ``-1/(t2-t1)`` on ``[t1, t2)``,
``1/(t3-t2)`` on ``[t2, t3)`` and 0 elsewhere, ``kappa(a; b) = int u_a u_b`` and
``kappa(a) = kappa(a; a)``.  The null limit ``G`` is centered with covariance
``kappa(a; b)^2 / (kappa(a) kappa(b))``.

Three geometries are simulated:

``SC``
    ``(0, t, 1)`` on ``m`` equispaced points of ``[eps, 1 - eps]``.
``MC_GRID``
    All grid triples of ``{j eps} U {1}`` with both gaps ``>= eps``.
``MC_DENSE``
    Every triple on a fine cell grid of resolution ``r``.  Paths use the exact
    representation ``G(a) = phi_a^T Xi phi_a`` with ``Xi`` an ``r x r`` matrix of
    iid standard normals, evaluated through 2-D prefix sums in O(1) per triple.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _backend
from .datamodel import iceil
from .exceptions import CacheIOError, ConvergenceError, ValidationError
from .scan import grid_time_triples
from .seeds import chunk_sizes, substream

log = logging.getLogger(__name__)

CACHE_VERSION = 1
MIN_PATHS = 1000
DEFAULT_ALPHAS = (0.10, 0.05, 0.01)
DEFAULT_DENSE_RESOLUTION = 100
_CHUNK = 1000
_DENSE_CHUNK = 200
MODES = ("SC", "MC_GRID", "MC_DENSE")


def _as_times(triple) -> tuple[float, float, float]:
    if hasattr(triple, "times"):
        return triple.times
    t1, t2, t3 = triple
    return float(t1), float(t2), float(t3)


def u_eval(x: float, triple) -> float:
    t1, t2, t3 = _as_times(triple)
    if t1 <= x < t2:
        return -1.0 / (t2 - t1)
    if t2 <= x < t3:
        return 1.0 / (t3 - t2)
    return 0.0


def _pieces(T: np.ndarray):
    """Start, end and level of the two pieces of each row of ``T``, shape (K, 2)."""
    start = T[:, [0, 1]]
    end = T[:, [1, 2]]
    level = np.column_stack([-1.0 / (T[:, 1] - T[:, 0]), 1.0 / (T[:, 2] - T[:, 1])])
    return start, end, level


def kappa_matrix(A, B=None) -> np.ndarray:
    """``kappa(a; b)`` for all pairs of rows, by exact overlap of the pieces."""
    A = np.atleast_2d(np.asarray([_as_times(t) for t in A] if not isinstance(A, np.ndarray) else A, float))
    B = A if B is None else np.atleast_2d(
        np.asarray([_as_times(t) for t in B] if not isinstance(B, np.ndarray) else B, float)
    )
    sa, ea, la = _pieces(A)
    sb, eb, lb = _pieces(B)
    out = np.zeros((A.shape[0], B.shape[0]))
    for i in range(2):
        for j in range(2):
            ov = np.minimum(ea[:, i, None], eb[None, :, j]) - np.maximum(sa[:, i, None], sb[None, :, j])
            out += la[:, i, None] * lb[None, :, j] * np.maximum(ov, 0.0)
    return out


def kappa(a, b=None) -> float:
    """Exact ``int u_a u_b``; ``kappa(a)`` alone is ``1/(t2-t1) + 1/(t3-t2)``."""
    b = a if b is None else b
    return float(kappa_matrix(np.asarray([_as_times(a)]), np.asarray([_as_times(b)]))[0, 0])


@dataclass(frozen=True)
class KernelSpec:
    triples: np.ndarray  # (K, 3) times
    kernel: np.ndarray  # (K, K)

    @property
    def size(self) -> int:
        return self.triples.shape[0]

    @cached_property
    def sqrt_factor(self) -> np.ndarray:
        """``L`` with ``L L^T = kernel`` from a clipped eigendecomposition."""
        K = self.kernel
        for jitter in (0.0, 1e-12, 1e-10, 1e-8, 1e-6):
            try:
                w, V = np.linalg.eigh(K + jitter * np.eye(K.shape[0]))
            except np.linalg.LinAlgError:
                continue
            if w.min() < -1e-8 * max(w.max(), 1.0):
                continue
            return np.ascontiguousarray(V * np.sqrt(np.clip(w, 0.0, None)))
        raise ConvergenceError("kernel square root failed even with jitter 1e-6")

    def sample_paths(self, B: int, seed: int, stream: str = "paths") -> np.ndarray:
        """``B`` paths of the process on ``triples``, shape (B, K)."""
        L = self.sqrt_factor
        out = np.empty((B, self.size))
        pos = 0
        for c, size in enumerate(chunk_sizes(B, _CHUNK)):
            Z = substream(seed, stream, c).standard_normal((size, self.size))
            out[pos : pos + size] = Z @ L.T
            pos += size
        return out


def kernel_matrix(triples) -> KernelSpec:
    T = np.asarray([_as_times(t) for t in triples], dtype=float)
    if T.size == 0:
        raise ValidationError("kernel_matrix needs at least one triple")
    k = kappa_matrix(T)
    d = np.sqrt(np.diag(k))
    K = (k / np.outer(d, d)) ** 2
    np.fill_diagonal(K, 1.0)
    return KernelSpec(T, (K + K.T) / 2)


def sc_times(epsilon: float, m: int) -> np.ndarray:
    if not 0 < epsilon < 0.5:
        raise ValidationError(f"epsilon must lie in (0, 0.5), got {epsilon}")
    if m < 1:
        raise ValidationError("grid size m must be positive")
    t = np.linspace(epsilon, 1 - epsilon, m)
    return np.column_stack([np.zeros(m), t, np.ones(m)])


def geometry_triples(mode: str, epsilon: float, m: int | None = None) -> np.ndarray:
    if mode == "SC":
        return sc_times(epsilon, 1000 if m is None else m)
    if mode == "MC_GRID":
        return grid_time_triples(epsilon)
    raise ValidationError(f"no finite kernel geometry for mode {mode!r}")


def _sup_kernel(spec: KernelSpec, B: int, seed: int, stream: str, workers: int, drift=None) -> np.ndarray:
    L = spec.sqrt_factor
    sizes = chunk_sizes(B, _CHUNK)

    def one(c):
        Z = substream(seed, stream, c).standard_normal((sizes[c], spec.size))
        paths = Z @ L.T
        if drift is not None:
            paths += drift
        return paths.max(axis=1)

    return _map_chunks(one, len(sizes), workers)


def _sup_dense(r: int, min_gap: int, B: int, seed: int, stream: str, workers: int) -> np.ndarray:
    sizes = chunk_sizes(B, _DENSE_CHUNK)

    def one(c):
        xi = substream(seed, stream, c).standard_normal((sizes[c], r, r))
        cum = np.zeros((sizes[c], r + 1, r + 1))
        cum[:, 1:, 1:] = xi.cumsum(axis=1).cumsum(axis=2)
        return _backend.dense_sup(cum, min_gap)

    return _map_chunks(one, len(sizes), workers)


def _map_chunks(fn, count: int, workers: int) -> np.ndarray:
    if workers > 1 and count > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(fn, range(count)))
    else:
        parts = [fn(c) for c in range(count)]
    return np.concatenate(parts)


def empirical_quantile(samples: np.ndarray, level: float) -> float:
    """Type-1 order statistic: the ``ceil(level B)``-th smallest sample."""
    s = np.sort(np.asarray(samples, dtype=float))
    B = s.size
    idx = min(max(math.ceil(level * B - 1e-9), 1), B)
    return float(s[idx - 1])


def quantile_stderr(samples: np.ndarray, level: float, z: float = 1.0) -> float:
    """Order-statistic standard error: half-width of the ``+-z`` binomial band."""
    s = np.sort(np.asarray(samples, dtype=float))
    B = s.size
    half = z * math.sqrt(B * level * (1 - level))
    lo = min(max(math.ceil(level * B - half), 1), B)
    hi = min(max(math.ceil(level * B + half), 1), B)
    return float((s[hi - 1] - s[lo - 1]) / 2)


@dataclass(frozen=True)
class QuantileTable:
    mode: str
    epsilon: float
    grid: dict
    B: int
    seed: int
    quantiles: dict  # alpha -> xi(1 - alpha)
    samples: np.ndarray | None = field(default=None, compare=False, repr=False)

    def critical_value(self, alpha: float) -> float:
        for a, q in self.quantiles.items():
            if abs(a - alpha) < 1e-12:
                return q
        if self.samples is not None:
            return empirical_quantile(self.samples, 1 - alpha)
        raise ValidationError(f"alpha={alpha} not tabulated; available {sorted(self.quantiles)}")

    def to_record(self) -> dict:
        return {
            "version": CACHE_VERSION,
            "mode": self.mode,
            "epsilon": self.epsilon,
            "grid": self.grid,
            "B": self.B,
            "seed": self.seed,
            "quantiles": {repr(float(a)): q for a, q in sorted(self.quantiles.items())},
        }

    @classmethod
    def from_record(cls, rec: dict) -> "QuantileTable":
        if rec.get("version") != CACHE_VERSION:
            raise CacheIOError(f"unsupported quantile cache version {rec.get('version')}")
        q = {float(a): float(v) for a, v in rec["quantiles"].items()}
        return cls(rec["mode"], float(rec["epsilon"]), rec["grid"], int(rec["B"]), int(rec["seed"]), q)


def cache_key(mode: str, epsilon: float, grid: dict, B: int, seed: int, alphas: Sequence[float]) -> str:
    payload = json.dumps(
        {
            "version": CACHE_VERSION,
            "mode": mode,
            "epsilon": repr(float(epsilon)),
            "grid": grid,
            "B": int(B),
            "seed": int(seed),
            "alphas": [repr(float(a)) for a in sorted(alphas)],
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _grid_spec(mode: str, epsilon: float, m: int | None, resolution: int | None) -> dict:
    if mode == "SC":
        return {"m": int(1000 if m is None else m)}
    if mode == "MC_GRID":
        return {"points": len(np.unique(grid_time_triples(epsilon)))}
    if mode == "MC_DENSE":
        return {"resolution": int(DEFAULT_DENSE_RESOLUTION if resolution is None else resolution)}
    raise ValidationError(f"unknown quantile mode {mode!r}; expected one of {MODES}")


def simulate_sup_quantiles(
    mode: str,
    epsilon: float = 0.1,
    m: int | None = None,
    B: int = 20000,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    seed: int = 1,
    cache_dir: str | os.PathLike | None = None,
    resolution: int | None = None,
    workers: int = 1,
    keep_samples: bool = False,
) -> QuantileTable:
    """Monte Carlo quantiles of ``sup G`` over a scan geometry.

    Parameters
    ----------
    mode : {"SC", "MC_GRID", "MC_DENSE"}
    epsilon : float
        Trimming.
    m : int, optional
        SC grid size (default 1000).
    B : int
        Number of paths, at least 1000.
    alphas : sequence of float
        Levels; the table maps each ``alpha`` to the ``1 - alpha`` quantile.
    seed : int
        Master seed.  Same inputs give a bit-identical table.
    cache_dir : path, optional
        JSON cache directory keyed by a hash of the inputs.
    resolution : int, optional
        Cell count ``r`` for MC_DENSE (default 100).
    workers : int
        Threads; never changes the result.
    """
    if B < MIN_PATHS:
        raise ValidationError(f"B={B} is below the minimum of {MIN_PATHS} paths")
    alphas = tuple(float(a) for a in alphas)
    if any(not 0 <= a < 1 for a in alphas):
        raise ValidationError(f"alphas must lie in [0, 1), got {alphas}")
    grid = _grid_spec(mode, epsilon, m, resolution)
    path = None
    if cache_dir is not None and not keep_samples:
        path = Path(cache_dir) / f"{mode.lower()}_{cache_key(mode, epsilon, grid, B, seed, alphas)}.json"
        if path.exists():
            try:
                table = QuantileTable.from_record(json.loads(path.read_text()))
            except (OSError, ValueError, KeyError) as exc:
                raise CacheIOError(f"cannot read quantile cache {path}: {exc}") from exc
            log.info("quantile cache hit: %s", path)
            return table
    sups = simulate_sups(mode, epsilon, m=m, B=B, seed=seed, resolution=resolution, workers=workers)
    q = {a: empirical_quantile(sups, 1 - a) for a in alphas}
    table = QuantileTable(mode, float(epsilon), grid, int(B), int(seed), q, sups if keep_samples else None)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(table.to_record(), indent=2, sort_keys=True))
            tmp.replace(path)
        except OSError as exc:
            raise CacheIOError(f"cannot write quantile cache {path}: {exc}") from exc
        log.info("quantile cache written: %s", path)
    return table


def simulate_sups(
    mode: str,
    epsilon: float = 0.1,
    m: int | None = None,
    B: int = 20000,
    seed: int = 1,
    resolution: int | None = None,
    workers: int = 1,
) -> np.ndarray:
    """Raw per-path suprema (length ``B``) behind :func:`simulate_sup_quantiles`."""
    if mode in ("SC", "MC_GRID"):
        spec = kernel_matrix(geometry_triples(mode, epsilon, m))
        return _sup_kernel(spec, B, seed, f"quantiles/{mode}", workers)
    if mode == "MC_DENSE":
        r = DEFAULT_DENSE_RESOLUTION if resolution is None else int(resolution)
        gap = max(1, iceil(epsilon * r))
        if 2 * gap > r:
            raise ValidationError(f"resolution {r} too coarse for epsilon={epsilon}")
        return _sup_dense(r, gap, B, seed, "quantiles/MC_DENSE", workers)
    raise ValidationError(f"unknown quantile mode {mode!r}; expected one of {MODES}")


def drifted_sup_probability(
    kernel_spec: KernelSpec,
    drift,
    threshold: float,
    B: int = 20000,
    seed: int = 1,
    workers: int = 1,
    stream: str = "power",
) -> tuple[float, float]:
    """``P(sup (G + drift) > threshold)`` and its binomial standard error.

    Paths for a given ``(seed, stream)`` are shared across drifts, so
    probabilities for ordered drifts are pathwise ordered.
    """
    d = np.broadcast_to(np.asarray(drift, dtype=float), (kernel_spec.size,))
    sups = _sup_kernel(kernel_spec, B, seed, stream, workers, drift=d)
    prob = float(np.mean(sups > threshold))
    return prob, math.sqrt(max(prob * (1 - prob), 1.0 / B) / B)
