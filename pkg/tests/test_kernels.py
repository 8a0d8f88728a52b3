"""The compiled kernels and the numpy fallback must agree."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ridgecusum import _kernels_py as py
from ridgecusum.scan import gram_of, mc_min_gap, sc_triples

cy = pytest.importorskip("ridgecusum._kernels", reason="compiled core not built")


def _prefix(rng, p, n):
    return np.ascontiguousarray(np.hstack([np.zeros((p, 1)), np.cumsum(rng.standard_normal((p, n)), axis=1)]))


def test_backend_selected():
    from ridgecusum import BACKEND

    assert BACKEND == "cython"


def test_pure_python_switch():
    env = dict(os.environ, RIDGECUSUM_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import ridgecusum; print(ridgecusum.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_kahan_cumsum_agrees(rng):
    X = rng.standard_normal((7, 50)) * 1e3
    a, b = py.kahan_cumsum(X), cy.kahan_cumsum(X)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)
    assert a.shape == (7, 51) and np.all(a[:, 0] == 0)


def test_kahan_cumsum_compensates():
    x = np.full((1, 10000), 0.1)
    exact = np.arange(10001) * 0.1
    for m in (py, cy):
        assert np.max(np.abs(m.kahan_cumsum(x)[0] - exact)) < 1e-11


@settings(max_examples=25, deadline=None)
@given(st.integers(12, 45), st.integers(1, 6), st.integers(0, 2**31 - 1), st.booleans())
def test_scan_gram_max_agrees(n, p, seed, weighted):
    rng = np.random.default_rng(seed)
    G = gram_of(_prefix(rng, p, n))
    gap = mc_min_gap(n, 0.1)
    a = py.scan_gram_max(G, n, gap, weighted)
    b = cy.scan_gram_max(G, n, gap, weighted)
    assert a[1:] == b[1:]
    assert a[0] == pytest.approx(b[0], rel=1e-12)


def test_scan_gram_max_tie_rule():
    n = 20
    G = np.zeros((n + 1, n + 1))
    for m in (py, cy):
        best, i1, i2, i3, count = m.scan_gram_max(G, n, 2, True)
        assert (i1, i2, i3) == (0, 2, 4)
        assert best == 0


def test_scan_gram_max_counts_all_triples():
    n, gap = 25, 3
    expected = sum(1 for i in range(n + 1) for j in range(i + gap, n + 1) for k in range(j + gap, n + 1))
    G = np.eye(n + 1)
    for m in (py, cy):
        assert m.scan_gram_max(G, n, gap, True)[4] == expected


@settings(max_examples=15, deadline=None)
@given(st.integers(12, 40), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_scan_linf_agrees(n, p, seed):
    rng = np.random.default_rng(seed)
    P = _prefix(rng, p, n)
    a = py.scan_linf_max(P, n, 2)
    b = cy.scan_linf_max(P, n, 2)
    assert a[1:] == b[1:]
    assert a[0] == pytest.approx(b[0], rel=1e-12)


def test_gram_values_agrees(rng):
    n = 60
    G = gram_of(_prefix(rng, 4, n))
    tri = sc_triples(n, 0.1)
    for w in (True, False):
        np.testing.assert_allclose(py.gram_values(G, tri, w), cy.gram_values(G, tri, w), rtol=1e-12)


def test_dense_sup_agrees(rng):
    r = 12
    Xi = rng.standard_normal((5, r, r))
    cum = np.zeros((5, r + 1, r + 1))
    cum[:, 1:, 1:] = Xi.cumsum(1).cumsum(2)
    np.testing.assert_allclose(py.dense_sup(cum, 2), cy.dense_sup(cum, 2), rtol=1e-12)


def test_fallback_module_imports_without_extension():
    mod = importlib.import_module("ridgecusum._kernels_py")
    assert callable(mod.scan_gram_max)
