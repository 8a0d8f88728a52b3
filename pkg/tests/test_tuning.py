import numpy as np
import pytest

from ridgecusum import DegenerateDataError, ObservationMatrix, RidgeContext, ValidationError
from ridgecusum import tuning
from ridgecusum.mp import PSDModel
from ridgecusum.spectral import SpectralDecomposition, pooled_covariance
from ridgecusum.tuning import (
    LambdaGrid,
    PriorSpec,
    asnr_hat,
    contexts_on_grid,
    default_grid,
    lambda_floor,
    parse_prior,
    population_asnr,
    q_hat,
    select_bayes,
    select_minimax,
    select_minimax_population,
)


def data(rng, p=30, n=80, scale=1.0):
    return ObservationMatrix(scale * rng.standard_normal((p, n)))


def test_lambda_floor_examples(rng):
    assert lambda_floor(np.eye(7)) == pytest.approx(0.01)
    assert lambda_floor(2 * np.eye(10)) == pytest.approx(0.02)
    S = pooled_covariance(data(rng, 50, 400, scale=2.0))
    assert lambda_floor(S) == pytest.approx(0.04, rel=0.2)
    with pytest.raises(DegenerateDataError):
        lambda_floor(np.zeros((3, 3)))


def test_q_hat_identity_and_zero_spectrum(rng):
    obs = data(rng)
    S = pooled_covariance(obs)
    ctx = RidgeContext.build(obs, 0.3)
    p = obs.p
    assert q_hat(ctx, PriorSpec.identity()) == pytest.approx(np.trace(np.linalg.inv(S + 0.3 * np.eye(p))) / p, rel=1e-10)
    zero = SpectralDecomposition(np.zeros(4), np.eye(4))
    ctx0 = RidgeContext(ObservationMatrix(np.zeros((4, 6))), 0.5, zero, 2.0, 4.0, 0.0, 0.0)
    assert q_hat(ctx0, PriorSpec("matrix", matrix=np.eye(4))) == pytest.approx(2.0)


def test_q_hat_dense_oracle(rng):
    obs = data(rng, 12, 40)
    S = pooled_covariance(obs)
    M = rng.standard_normal((12, 12))
    B = M @ M.T
    ctx = RidgeContext.build(obs, 0.2)
    prior = PriorSpec("matrix", matrix=B, normalize=False)
    ref = np.trace(np.linalg.solve(S + 0.2 * np.eye(12), B)) / 12
    assert q_hat(ctx, prior) == pytest.approx(ref, rel=1e-10)
    lin = PriorSpec.linear(0.4)
    Bl = 0.6 * np.eye(12) + 0.4 * S / (np.trace(S) / 12)
    assert q_hat(ctx, lin) == pytest.approx(np.trace(np.linalg.solve(S + 0.2 * np.eye(12), Bl)) / 12, rel=1e-10)


def test_asnr_linear_in_scale(rng):
    ctx = RidgeContext.build(data(rng), 0.2)
    a = asnr_hat(ctx, PriorSpec("linear", 0.3))
    b = asnr_hat(ctx, PriorSpec("linear", 0.3, scale=2.5))
    assert b == pytest.approx(2.5 * a, rel=1e-14)


def test_asnr_decreasing_identity_data():
    rng = np.random.default_rng(3)
    obs = data(rng, 100, 300)
    grid = LambdaGrid(np.geomspace(0.05, 5, 15))
    vals = [asnr_hat(c, PriorSpec.identity()) for c in contexts_on_grid(obs, grid)]
    assert np.all(np.diff(vals) < 0)


def test_asnr_decreasing_in_theta(rng):
    ctx = RidgeContext.build(data(rng, 40, 100), 0.5)
    vals = [asnr_hat(ctx, PriorSpec.linear(t)) for t in np.linspace(0, 1, 11)]
    assert np.all(np.diff(vals) < 0)


def test_select_bayes_linear_family_gives_floor(rng):
    obs = data(rng)
    grid = default_grid(obs)
    ctxs = contexts_on_grid(obs, grid)
    for theta in (0.0, 0.5, 1.0):
        assert select_bayes(ctxs, PriorSpec.linear(theta)) == grid.lower
    assert select_minimax(ctxs) == grid.lower
    assert select_minimax(ctxs, [PriorSpec.linear(0.0), PriorSpec.linear(1.0)]) == grid.lower


def test_single_point_grid(rng):
    obs = data(rng)
    ctxs = contexts_on_grid(obs, LambdaGrid.log_spaced(0.3, points=1))
    assert select_bayes(ctxs, PriorSpec.identity()) == 0.3


def _stub(monkeypatch, table):
    monkeypatch.setattr(tuning, "_asnr_or_nan", lambda ctx, prior: table(ctx.lam, prior.theta))


def test_non_monotone_stub(monkeypatch, rng):
    obs = data(rng)
    ctxs = contexts_on_grid(obs, LambdaGrid(np.array([0.1, 0.2, 0.4, 0.8])))
    _stub(monkeypatch, lambda lam, th: -(np.log(lam) - np.log(0.4)) ** 2)
    assert select_bayes(ctxs, PriorSpec.identity()) == 0.4
    # family of one prior is Bayes
    assert select_minimax(ctxs, [PriorSpec.identity()]) == 0.4


def test_minimax_crossing_stub(monkeypatch, rng):
    obs = data(rng)
    lams = np.geomspace(0.1, 10, 9)
    ctxs = contexts_on_grid(obs, LambdaGrid(lams))
    curve = {0.0: lambda l: 1.0 - 0.2 * np.log(l), 1.0: lambda l: 0.5 + 0.3 * np.log(l)}
    _stub(monkeypatch, lambda lam, th: curve[th](lam))
    fam = [PriorSpec.linear(0.0), PriorSpec.linear(1.0)]
    envelope = [min(curve[0.0](l), curve[1.0](l)) for l in lams]
    assert select_minimax(ctxs, fam) == pytest.approx(lams[int(np.argmax(envelope))])


def test_parse_prior(tmp_path):
    assert parse_prior("identity") == PriorSpec.identity()
    assert parse_prior("sigma").theta == 1.0
    assert parse_prior("linear:0.25").theta == 0.25
    f = tmp_path / "b.csv"
    np.savetxt(f, 2 * np.eye(3), delimiter=",")
    pr = parse_prior(f"matrix:{f}")
    np.testing.assert_allclose(pr.matrix, np.eye(3))
    for bad in ("linear:x", "linear:2", "what", f"matrix:{tmp_path / 'none.csv'}"):
        with pytest.raises(ValidationError):
            parse_prior(bad)


def test_prior_validation():
    with pytest.raises(ValidationError):
        PriorSpec("matrix", matrix=np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValidationError):
        PriorSpec("matrix", matrix=np.diag([1.0, -1.0]))
    with pytest.raises(ValidationError):
        LambdaGrid(np.array([0.1, -1.0]))


def test_population_minimax_floor():
    H = PSDModel.point(1.0)
    lams = np.geomspace(0.01, 20, 12)
    assert select_minimax_population(lams, 0.5, H) == pytest.approx(0.01)
    vals = [population_asnr(l, 0.5, H, PriorSpec.identity()) for l in lams]
    assert np.all(np.diff(vals) < 0)
