"""scikit-learn compatible wrappers around the two training procedures.

``LogisticSGDClassifier`` fits the labelled pseudolabeler;
``SelfTrainingClassifier`` refines any linear pseudolabeler on unlabeled
data. Both expose ``coef_``, ``decision_function`` and ``predict`` so they
compose with pipelines, ``clone`` and model selection utilities.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils import check_random_state
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from pseudoboost.losses import LossSpec
from pseudoboost.selftrain import SelfTrainConfig, fit_batches
from pseudoboost.supervised import select_pseudolabeler, sgd_path


class _LinearSignMixin:
    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, but {type(self).__name__} expects {self.n_features_in_}"
            )
        return X @ self.coef_

    def predict(self, X):
        scores = self.decision_function(X)
        # a zero score has probability zero under continuous noise; send it to classes_[1]
        return self.classes_[(scores >= 0).astype(int)]


class LogisticSGDClassifier(_LinearSignMixin, ClassifierMixin, BaseEstimator):
    """Single-pass logistic SGD from zero, repeated ``n_runs`` times.

    The training rows are split into ``n_runs`` disjoint streams of
    ``n_iter`` points plus a held-out validation block of
    ``validation_size`` rows; the iterate with the lowest validation 0-1
    error across all runs becomes ``coef_``.

    Parameters
    ----------
    eta : float
        SGD step size.
    n_iter : int or None
        Steps per run. ``None`` uses every non-validation row.
    n_runs : int
        Independent runs used for amplification.
    validation_size : int
        Rows held out for iterate selection.
    shuffle : bool
        Permute rows (with ``random_state``) before splitting.
    random_state : int, RandomState or None
    """

    def __init__(self, eta=0.01, n_iter=None, n_runs=4, validation_size=200, shuffle=True,
                 random_state=None):
        self.eta = eta
        self.n_iter = n_iter
        self.n_runs = n_runs
        self.validation_size = validation_size
        self.shuffle = shuffle
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        if len(self.classes_) != 2:
            raise ValueError(f"binary labels required, got {len(self.classes_)} classes")
        y_pm = np.where(y == self.classes_[1], 1, -1)
        n, d = X.shape
        if self.shuffle:
            order = check_random_state(self.random_state).permutation(n)
            X, y_pm = X[order], y_pm[order]
        n_val = int(self.validation_size)
        n_train = n - n_val
        n_iter = n_train // self.n_runs if self.n_iter is None else int(self.n_iter)
        if n_val < 1 or n_iter < 1 or self.n_runs * n_iter > n_train:
            raise ValueError(
                f"need n_runs * n_iter + validation_size <= n_samples "
                f"({self.n_runs} * {n_iter} + {n_val} > {n})"
            )
        paths = [
            sgd_path(X[i * n_iter:(i + 1) * n_iter], y_pm[i * n_iter:(i + 1) * n_iter], self.eta)
            for i in range(self.n_runs)
        ]
        res = select_pseudolabeler(paths, X[n_train:], y_pm[n_train:])
        self.coef_ = res.beta_pl
        self.selected_run_ = res.selected_run
        self.selected_iter_ = res.selected_iter
        self.validation_error_ = res.validation_err
        self.n_iter_ = n_iter
        self.n_labeled_ = self.n_runs * n_iter + n_val
        self.n_features_in_ = d
        return self


class SelfTrainingClassifier(_LinearSignMixin, ClassifierMixin, BaseEstimator):
    """Weight-normalized self-training on unlabeled rows.

    ``fit(X)`` splits ``X`` into ``n_iter`` consecutive batches of
    ``batch_size`` rows and runs one normalized gradient step per batch,
    starting from the direction of ``pseudolabeler``. ``y`` is accepted and
    ignored so the estimator drops into supervised pipelines.

    Parameters
    ----------
    pseudolabeler : array-like of shape (n_features,) or fitted linear estimator
        Initial direction. Estimators contribute ``coef_`` (and ``classes_``).
    eta : float or None
        Step size; ``None`` means ``0.1 / n_features``.
    sigma : float
        Temperature dividing the margin inside the loss.
    batch_size : int
    n_iter : int or None
        Number of batches; ``None`` uses ``n_samples // batch_size``.
    loss : {"logistic", "exponential"}
    shuffle : bool
        Permute rows (with ``random_state``) before batching.
    random_state : int, RandomState or None
    """

    def __init__(self, pseudolabeler=None, eta=None, sigma=1.0, batch_size=200, n_iter=None,
                 loss="logistic", shuffle=False, random_state=None):
        self.pseudolabeler = pseudolabeler
        self.eta = eta
        self.sigma = sigma
        self.batch_size = batch_size
        self.n_iter = n_iter
        self.loss = loss
        self.shuffle = shuffle
        self.random_state = random_state

    def _initial(self, d):
        pl = self.pseudolabeler
        if pl is None:
            raise ValueError("SelfTrainingClassifier needs a pseudolabeler (vector or fitted estimator)")
        classes = np.array([-1, 1])
        if hasattr(pl, "fit"):
            check_is_fitted(pl, "coef_")
            coef = np.ravel(pl.coef_)
            classes = np.asarray(getattr(pl, "classes_", classes))
        else:
            coef = np.ravel(np.asarray(pl, dtype=np.float64))
        if coef.shape[0] != d:
            raise ValueError(f"pseudolabeler has {coef.shape[0]} coefficients, X has {d} features")
        if not np.any(coef != 0):
            raise ValueError("pseudolabeler is the zero vector")
        return coef, classes

    def fit(self, X, y=None):
        X = check_array(X)
        n, d = X.shape
        beta0, self.classes_ = self._initial(d)
        if self.shuffle:
            X = X[check_random_state(self.random_state).permutation(n)]
        B = int(self.batch_size)
        T = n // B if self.n_iter is None else int(self.n_iter)
        if T < 1 or T * B > n:
            raise ValueError(f"need n_iter * batch_size <= n_samples ({T} * {B} > {n})")
        cfg = SelfTrainConfig(
            eta=0.1 / d if self.eta is None else float(self.eta),
            sigma=float(self.sigma),
            batch_size=B,
            n_iter=T,
            loss=LossSpec.from_name(self.loss),
        )
        trace = fit_batches(beta0, (X[t * B:(t + 1) * B] for t in range(T)), cfg)
        self.coef_ = trace.final_beta
        self.trace_ = trace
        self.n_iter_ = T
        self.n_features_in_ = d
        return self
