import json

import numpy as np
import pytest

from ridgecusum import CacheIOError, ValidationError
from ridgecusum.bench import (
    CovarianceModel,
    Design,
    ExperimentConfig,
    Method,
    SignalModel,
    change_columns,
    draw_signal,
    generate_panel,
    load_config,
    make_sigma,
    run_power_experiment,
    run_size_experiment,
    tidy_rows,
    write_csv,
)


def test_toeplitz_and_identity():
    S = make_sigma(CovarianceModel("TOEPLITZ", 5))
    assert S[0, 2] == pytest.approx(0.09)
    assert np.trace(S) == pytest.approx(5)
    np.testing.assert_array_equal(make_sigma(CovarianceModel("ID", 4)), np.eye(4))


def test_poly_decay_two_dims():
    w = np.sort(np.linalg.eigvalsh(make_sigma(CovarianceModel("POLY_DECAY", 2))))[::-1]
    np.testing.assert_allclose(w, [2 * 1.22 / 1.24, 2 * 0.02 / 1.24], rtol=1e-12)
    assert w[0] / w[1] == pytest.approx(61.0)


@pytest.mark.parametrize("kind", ["ID", "TOEPLITZ", "POLY_DECAY", "EXP_DECAY"])
@pytest.mark.parametrize("p", [10, 100, 400])
def test_trace_is_p(kind, p):
    assert np.trace(make_sigma(CovarianceModel(kind, p))) == pytest.approx(p, rel=1e-12)


def test_custom_covariance():
    M = np.diag([1.0, 3.0])
    np.testing.assert_allclose(make_sigma(CovarianceModel("CUSTOM", 2, matrix=M)), np.diag([0.5, 1.5]))
    with pytest.raises(ValidationError):
        CovarianceModel("CUSTOM", 2)
    with pytest.raises(ValidationError):
        CovarianceModel("XYZ", 2)


def test_signals(rng):
    S = make_sigma(CovarianceModel("TOEPLITZ", 8))
    for kind in ("IID_GAUSS", "SIGMA_GAUSS", "SPARSE"):
        assert np.all(draw_signal(SignalModel(kind, 0.0), S, 8, rng) == 0)
    d = draw_signal(SignalModel("SPARSE", 0.4), S, 8, rng)
    assert np.count_nonzero(d) == 3 and np.allclose(np.abs(d[d != 0]), 2.0)
    draws = np.array([draw_signal(SignalModel("SIGMA_GAUSS", 2.0), S, 8, rng) for _ in range(10000)])
    emp = draws.T @ draws / len(draws)
    assert np.linalg.norm(emp - 2 * S) <= 0.1 * np.linalg.norm(2 * S)


def test_change_columns():
    mask, truth = change_columns(ExperimentConfig(alternative="NONE", n=100))
    assert not mask.any() and truth["changes"] == []
    mask, truth = change_columns(ExperimentConfig(alternative="SINGLE", n=100))
    assert np.flatnonzero(mask).tolist() == list(range(50, 100)) and truth["changes"] == [51]
    mask, truth = change_columns(ExperimentConfig(alternative="EPIDEMIC", n=200))
    assert mask.sum() == 60 and truth["changes"] == [71, 131]
    with pytest.raises(ValidationError):
        ExperimentConfig(alternative="EPIDEMIC", tau=(0.4, 0.4))


def test_panels_reproducible():
    cfg = ExperimentConfig(signal=SignalModel("IID_GAUSS", 1.0), alternative="SINGLE", p=5, n=40, seed=3)
    a, _ = generate_panel(cfg, 2)
    b, _ = Design(cfg).panel(2)
    np.testing.assert_array_equal(a.data, b.data)
    c, _ = generate_panel(cfg, 3)
    assert not np.array_equal(a.data, c.data)
    none, _ = generate_panel(ExperimentConfig(signal=SignalModel("IID_GAUSS", 5.0), alternative="NONE",
                                              p=5, n=40, seed=3), 2)
    jump = a.data - none.data
    assert np.allclose(jump[:, :20], 0) and np.allclose(jump[:, 20:], jump[:, 20:21])


def test_size_stubs():
    cfg = ExperimentConfig(p=3, n=20, reps=100)
    always = Method("always", 0.0, fn=lambda X: 1.0)
    never = Method("never", 1.0, fn=lambda X: 0.0)
    assert run_size_experiment(cfg, [always, never]) == {"always": 1.0, "never": 0.0}
    with pytest.raises(ValidationError):
        run_size_experiment(ExperimentConfig(p=3, n=20, reps=10), [always])
    with pytest.raises(ValidationError):
        run_size_experiment(ExperimentConfig(alternative="SINGLE", p=3, n=20, reps=100), [always])


def test_power_small_design(qcache):
    cfg = ExperimentConfig(alternative="SINGLE", p=20, n=60, reps=100, seed=4, quantile_paths=5000,
                           methods=("ridge:SC",))
    table = run_power_experiment(cfg, [0.0, 0.1, 2.0], cache_dir=qcache, workers=2)
    powers = [table[c]["ridge:SC"] for c in (0.0, 0.1, 2.0)]
    assert powers[0] <= 0.12
    assert powers[2] >= 0.99
    assert powers[0] <= powers[1] + 0.05 <= powers[2] + 0.05
    rows = tidy_rows(cfg, table, "power")
    assert len(rows) == 3 and {"c", "method", "power", "se"} <= set(rows[0])


def test_workers_do_not_change_tables(qcache):
    cfg = ExperimentConfig(p=10, n=40, reps=100, seed=8, quantile_paths=2000)
    assert run_size_experiment(cfg, cache_dir=qcache, workers=1) == run_size_experiment(cfg, cache_dir=qcache, workers=3)


def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(cov=CovarianceModel("TOEPLITZ", 30), signal=SignalModel("SPARSE", 0.2),
                           alternative="EPIDEMIC", p=30, n=90, methods=("ridge:MC", "linf:SC"))
    f = tmp_path / "c.json"
    f.write_text(json.dumps(cfg.to_dict()))
    assert load_config(f) == cfg
    with pytest.raises(CacheIOError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ValidationError):
        load_config(bad)
    with pytest.raises(ValidationError):
        ExperimentConfig(methods=("zl:MC_GRID",))


def test_write_csv(tmp_path):
    write_csv([{"a": 1, "b": 2.5}], tmp_path / "x" / "t.csv")
    assert (tmp_path / "x" / "t.csv").read_text().splitlines() == ["a,b", "1,2.5"]
