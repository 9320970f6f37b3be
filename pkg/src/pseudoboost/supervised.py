"""Online logistic-regression SGD with amplification over independent runs."""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from pseudoboost.distributions import MixtureModel, sample
from pseudoboost.exceptions import DegeneratePseudolabelerError, PreconditionError
from pseudoboost.losses import logistic_signed_grad
from pseudoboost.numerics import RngStream
from pseudoboost.oracles import c_err_threshold

DEFAULT_VALIDATION = 200


def runs_for_delta(delta: float) -> int:
    if not 0.0 < delta < 1.0:
        raise PreconditionError("delta must lie in (0, 1)")
    # guard against log(1/e^-1) evaluating to 1.0000000000000002
    return 4 * math.ceil(math.log(1.0 / delta) - 1e-12)


@dataclass(frozen=True)
class SupervisedConfig:
    eta: float = 0.01
    n_iter: int = 2000
    runs: int = 4
    delta: float | None = None
    validation_size: int = DEFAULT_VALIDATION
    seed: int = 0
    stream: int = 0

    def __post_init__(self):
        if self.eta < 0:
            raise PreconditionError("eta must be nonnegative")
        if self.n_iter < 1 or self.runs < 1:
            raise PreconditionError("n_iter and runs must be >= 1")
        if self.validation_size < 1:
            raise PreconditionError("validation_size must be >= 1")

    @classmethod
    def from_delta(cls, delta: float, **kwargs) -> "SupervisedConfig":
        return cls(runs=runs_for_delta(delta), delta=delta, **kwargs)

    @property
    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream)

    @property
    def n_labeled(self) -> int:
        return self.n_iter * self.runs + self.validation_size


@dataclass
class PseudolabelerResult:
    beta_pl: np.ndarray
    selected_run: int
    selected_iter: int
    validation_err: float
    all_iterates_kept: bool = True
    n_labeled: int = 0

    def __post_init__(self):
        if not 0.0 <= self.validation_err <= 1.0:
            raise ValueError("validation error must lie in [0, 1]")


def sgd_path(X: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """Iterates ``beta_1 .. beta_T`` of single-pass logistic SGD from zero."""
    T, d = X.shape
    out = np.empty((T, d))
    beta = np.zeros(d)
    for t in range(T):
        margin = y[t] * (X[t] @ beta)
        beta = beta - eta * logistic_signed_grad(margin) * y[t] * X[t]
        out[t] = beta
    return out


def logistic_sgd_run(model: MixtureModel, config: SupervisedConfig, run_index: int) -> np.ndarray:
    """One run of online SGD on fresh labelled draws; returns ``(T, d)`` iterates."""
    X, y = sample(model, config.n_iter, config.rng.child(0, run_index))
    return sgd_path(X, y, config.eta)


def theorem2_schedule(model: MixtureModel, c_err: float, delta: float = 0.01, **kwargs) -> SupervisedConfig:
    """``eta = c_err / (8 (|mu|^2 + d))``, ``T = ceil(8 |mu|^2 / (eta c_err))``, ``4 ceil(log 1/delta)`` runs."""
    if not 0.0 < c_err < 1.0:
        raise PreconditionError("c_err must lie in (0, 1)")
    m2 = model.mu_norm**2
    eta = c_err / (8.0 * (m2 + model.d))
    x = 8.0 * m2 / (eta * c_err)
    T = max(1, math.ceil(x * (1.0 - 1e-12)))
    return SupervisedConfig.from_delta(delta, eta=eta, n_iter=T, **kwargs)


def validation_errors(candidates: np.ndarray, X_val: np.ndarray, y_val: np.ndarray) -> np.ndarray:
    """0-1 validation error of each candidate row; zero rows get ``inf``."""
    C = np.asarray(candidates, dtype=np.float64)
    errs = np.mean(np.sign(C @ X_val.T) != y_val[None, :], axis=1)
    zero = ~np.any(C != 0.0, axis=1)
    errs[zero] = np.inf
    return errs


def select_pseudolabeler(iterates, X_val: np.ndarray, y_val: np.ndarray) -> PseudolabelerResult:
    """Pick the iterate with the lowest validation error.

    ``iterates`` is a sequence over runs of ``(T_i, d)`` arrays. Ties go to
    the smaller run index, then the smaller iteration index; all-zero
    iterates are never selected.
    """
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val)
    if X_val.shape[0] == 0:
        raise PreconditionError("validation set is empty")
    best = (math.inf, -1, -1)
    for i, path in enumerate(iterates):
        path = np.atleast_2d(np.asarray(path, dtype=np.float64))
        errs = validation_errors(path, X_val, y_val)
        t = int(np.argmin(errs))
        if errs[t] < best[0]:
            best = (float(errs[t]), i, t)
    err, i, t = best
    if i < 0:
        raise DegeneratePseudolabelerError("every candidate iterate is the zero vector")
    beta = np.atleast_2d(np.asarray(iterates[i], dtype=np.float64))[t].copy()
    return PseudolabelerResult(beta_pl=beta, selected_run=i, selected_iter=t, validation_err=err)


def train_pseudolabeler(model: MixtureModel, config: SupervisedConfig, return_paths: bool = False):
    """Run all SGD runs, then select on a fresh labelled validation split."""
    paths = [logistic_sgd_run(model, config, i) for i in range(config.runs)]
    X_val, y_val = sample(model, config.validation_size, config.rng.child(1))
    res = select_pseudolabeler(paths, X_val, y_val)
    res.n_labeled = config.n_labeled
    if return_paths:
        return res, paths, (X_val, y_val)
    return res


__all__ = [
    "PseudolabelerResult",
    "SupervisedConfig",
    "c_err_threshold",
    "logistic_sgd_run",
    "runs_for_delta",
    "select_pseudolabeler",
    "sgd_path",
    "theorem2_schedule",
    "train_pseudolabeler",
]
