import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import LogisticRegression
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import FunctionTransformer

from pseudoboost import LogisticSGDClassifier, MixtureModel, SelfTrainingClassifier
from pseudoboost.distributions import sample
from pseudoboost.numerics import RngStream, angle_between
from pseudoboost.oracles import exact_gaussian_err


@pytest.fixture(scope="module")
def data():
    model = MixtureModel.build(10, 3.0)
    X, y = sample(model, 8200, RngStream(1).generator())
    U, _ = sample(model, 40_000, RngStream(2).generator())
    return model, X, y, U


def test_params_and_clone():
    est = LogisticSGDClassifier(eta=0.02, n_runs=3)
    assert est.get_params()["eta"] == 0.02
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    st = SelfTrainingClassifier(pseudolabeler=est, sigma=3.0)
    assert "pseudolabeler__n_runs" in st.get_params(deep=True)


def test_logistic_sgd_fit_and_predict(data):
    model, X, y, _ = data
    labels = np.where(y > 0, "pos", "neg")
    est = LogisticSGDClassifier(n_iter=2000, n_runs=4, random_state=0).fit(X, labels)
    assert list(est.classes_) == ["neg", "pos"]
    assert est.coef_.shape == (10,) and est.n_labeled_ == 8200
    assert 0 <= est.selected_run_ < 4
    assert exact_gaussian_err(est.coef_, model).value <= 0.05
    assert set(est.predict(X[:50])) <= {"neg", "pos"}
    assert est.score(X, labels) > 0.9


def test_self_training_refines_a_fitted_pseudolabeler(data):
    model, X, y, U = data
    pl = LogisticSGDClassifier(n_iter=300, n_runs=1, random_state=0).fit(X, y)
    st = SelfTrainingClassifier(pseudolabeler=pl, sigma=3.0, batch_size=200).fit(U)
    assert st.n_iter_ == 200 and list(st.classes_) == [-1, 1]
    assert angle_between(st.coef_, model.mu) < angle_between(pl.coef_, model.mu)


def test_self_training_accepts_sklearn_and_vector_pseudolabelers(data):
    model, X, y, U = data
    lr = LogisticRegression().fit(X[:500], y[:500])
    st = SelfTrainingClassifier(pseudolabeler=lr, sigma=3.0, n_iter=50).fit(U)
    assert st.coef_.shape == (10,)
    st2 = SelfTrainingClassifier(pseudolabeler=lr.coef_.ravel(), sigma=3.0, n_iter=50).fit(U)
    np.testing.assert_allclose(st.coef_, st2.coef_)


def test_works_inside_a_pipeline(data):
    _, X, y, _ = data
    pipe = make_pipeline(FunctionTransformer(), LogisticSGDClassifier(n_iter=1000, random_state=0))
    assert pipe.fit(X, y).score(X, y) > 0.9


def test_estimator_errors(data):
    _, X, y, U = data
    with pytest.raises(NotFittedError):
        LogisticSGDClassifier().predict(X)
    with pytest.raises(ValueError, match="binary"):
        LogisticSGDClassifier().fit(X[:300], np.arange(300) % 3)
    est = LogisticSGDClassifier(n_iter=500, random_state=0).fit(X, y)
    with pytest.raises(ValueError, match="features"):
        est.predict(X[:, :3])
    with pytest.raises(ValueError):
        SelfTrainingClassifier().fit(U)
