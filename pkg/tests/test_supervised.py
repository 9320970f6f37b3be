import math

import numpy as np
import pytest

from pseudoboost.distributions import MixtureModel, sample
from pseudoboost.exceptions import DegeneratePseudolabelerError, PreconditionError
from pseudoboost.numerics import RngStream
from pseudoboost.oracles import exact_gaussian_err
from pseudoboost.supervised import (
    SupervisedConfig,
    logistic_sgd_run,
    runs_for_delta,
    select_pseudolabeler,
    sgd_path,
    theorem2_schedule,
    train_pseudolabeler,
    validation_errors,
)


def test_runs_for_delta():
    assert runs_for_delta(0.01) == 20
    assert runs_for_delta(math.exp(-1)) == 4
    assert runs_for_delta(0.5) == 4
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(PreconditionError):
            runs_for_delta(bad)


def test_config_accounting_and_validation():
    cfg = SupervisedConfig(eta=0.01, n_iter=2000, runs=4, validation_size=200)
    assert cfg.n_labeled == 8200
    assert SupervisedConfig.from_delta(0.01).runs == 20
    with pytest.raises(PreconditionError):
        SupervisedConfig(n_iter=0)
    with pytest.raises(PreconditionError):
        SupervisedConfig(validation_size=0)


def test_sgd_path_matches_reference_loop():
    gen = RngStream(4).generator()
    X = gen.standard_normal((50, 3))
    y = np.where(gen.random(50) < 0.5, -1, 1)
    eta = 0.3
    beta = np.zeros(3)
    ref = []
    for x, lab in zip(X, y):
        beta = beta + eta * lab * x / (1.0 + math.exp(lab * (beta @ x)))
        ref.append(beta.copy())
    np.testing.assert_allclose(sgd_path(X, y, eta), np.array(ref), rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(sgd_path(X, y, eta)[0], eta * 0.5 * y[0] * X[0])


def test_validation_errors_marks_zero_rows():
    X = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]])
    y = np.array([1, -1, -1])
    errs = validation_errors(np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]), X, y)
    assert errs[0] == pytest.approx(1 / 3)
    assert errs[1] == np.inf
    # sgn(0) never matches a label
    assert errs[2] == pytest.approx(1.0)


def test_selection_tie_breaks_by_run_then_iteration():
    X = np.array([[1.0, 0.0], [2.0, 0.0]])
    y = np.array([1, 1])
    good = np.array([1.0, 0.0])
    runs = [
        np.array([[0.0, 0.0], [-1.0, 0.0], good, 2 * good]),
        np.array([3 * good]),
    ]
    res = select_pseudolabeler(runs, X, y)
    assert (res.selected_run, res.selected_iter) == (0, 2)
    np.testing.assert_array_equal(res.beta_pl, good)
    assert res.validation_err == 0.0
    res2 = select_pseudolabeler([runs[0][:2], runs[1]], X, y)
    assert (res2.selected_run, res2.selected_iter) == (1, 0)


def test_selection_rejects_degenerate_inputs():
    X = np.ones((2, 2))
    y = np.array([1, -1])
    with pytest.raises(DegeneratePseudolabelerError):
        select_pseudolabeler([np.zeros((3, 2))], X, y)
    with pytest.raises(PreconditionError):
        select_pseudolabeler([np.ones((3, 2))], np.ones((0, 2)), y[:0])


def test_theorem2_schedule_formulas():
    model = MixtureModel.build(10, 3.0)
    cfg = theorem2_schedule(model, 0.05, delta=0.01)
    eta = 0.05 / (8 * (9 + 10))
    assert cfg.eta == pytest.approx(eta, rel=1e-15)
    assert cfg.n_iter == math.ceil(8 * 9 / (eta * 0.05) - 1e-6)
    assert cfg.runs == 20
    with pytest.raises(PreconditionError):
        theorem2_schedule(model, 1.5)


def test_run_streams_are_per_run():
    model = MixtureModel.build(4, 2.0)
    cfg = SupervisedConfig(n_iter=30, seed=1)
    a = logistic_sgd_run(model, cfg, 0)
    b = logistic_sgd_run(model, cfg, 1)
    assert a.shape == (30, 4)
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(a, logistic_sgd_run(model, cfg, 0))


def test_desk_scale_pseudolabeler():
    model = MixtureModel.build(10, 3.0)
    cfg = SupervisedConfig(eta=0.01, n_iter=2000, runs=4, validation_size=200, seed=2)
    res, paths, (Xv, yv) = train_pseudolabeler(model, cfg, return_paths=True)
    assert res.n_labeled == 8200
    assert len(paths) == 4 and Xv.shape == (200, 10)
    assert exact_gaussian_err(res.beta_pl, model).value <= 0.05
    res2 = train_pseudolabeler(model, cfg)
    np.testing.assert_array_equal(res.beta_pl, res2.beta_pl)


def _best_oracle_err(paths, model):
    mu_bar = model.mu_bar
    best = 1.0
    for path in paths:
        nz = path[np.any(path != 0, axis=1)]
        cos = nz @ mu_bar / np.linalg.norm(nz, axis=1)
        best = min(best, exact_gaussian_err(nz[np.argmax(cos)], model).value)
    return best


def test_more_runs_never_hurt_the_median():
    # weak individual runs: short horizon, so amplification has room to act
    model = MixtureModel.build(20, 2.0)
    one, eight = [], []
    for seed in range(50):
        r1, p1, _ = train_pseudolabeler(model, SupervisedConfig(eta=0.01, n_iter=50, runs=1, seed=seed),
                                        return_paths=True)
        r8, p8, _ = train_pseudolabeler(model, SupervisedConfig(eta=0.01, n_iter=50, runs=8, seed=seed),
                                        return_paths=True)
        # run 0 and the validation split are shared across the two configs
        assert r8.validation_err <= r1.validation_err
        assert _best_oracle_err(p8, model) <= _best_oracle_err(p1, model)
        one.append(exact_gaussian_err(r1.beta_pl, model).value)
        eight.append(exact_gaussian_err(r8.beta_pl, model).value)
    assert np.median(eight) <= np.median(one)
