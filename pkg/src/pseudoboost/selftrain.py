"""Self-training with pseudolabels and weight normalization.

At each iteration a fresh unlabeled batch is pseudolabelled with
``sgn(<beta_t, x>)``, one gradient step is taken on the temperature-scaled
weight-normalized loss, and the iterate is projected back to the sphere.
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from pseudoboost.distributions import MixtureModel, sample
from pseudoboost.exceptions import PreconditionError
from pseudoboost.losses import LossSpec, dloss, loss
from pseudoboost.numerics import (
    RngStream,
    angle_between,
    as_generator,
    as_vector,
    delta_sq,
    normalize,
    require_unit,
)
from pseudoboost.oracles import ErrEstimate, c_err_threshold, classification_err, mc_err

DEFAULT_DELTA = 0.01


@dataclass(frozen=True)
class SelfTrainConfig:
    eta: float
    sigma: float
    batch_size: int
    n_iter: int
    loss: LossSpec = field(default_factory=LossSpec)
    seed: int = 0
    stream: int = 0
    delta: float = DEFAULT_DELTA
    err_mc_samples: int = 10_000

    def __post_init__(self):
        if not isinstance(self.loss, LossSpec):
            object.__setattr__(self, "loss", LossSpec.from_name(str(self.loss)))
        if self.eta < 0:
            raise PreconditionError("eta must be nonnegative")
        if self.sigma <= 0:
            raise PreconditionError("sigma must be positive")
        if self.batch_size < 1 or self.n_iter < 1:
            raise PreconditionError("batch_size and n_iter must be >= 1")

    @classmethod
    def theorem_compliant(cls, model: MixtureModel, **kwargs) -> "SelfTrainConfig":
        """Build a config, refusing temperatures below ``max(R, ||mu||)``."""
        cfg = cls(**kwargs)
        if not cfg.is_compliant(model):
            raise PreconditionError(
                f"sigma={cfg.sigma} is below max(R, ||mu||) = "
                f"{max(model.params.R, model.mu_norm)}"
            )
        return cfg

    def is_compliant(self, model: MixtureModel) -> bool:
        return self.sigma >= max(model.params.R, model.mu_norm)

    @property
    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream)


@dataclass(frozen=True)
class IterateRecord:
    t: int
    theta: float
    delta_sq: float
    grad_norm: float
    alignment: float
    err: float
    err_method: str
    # diagnostics used by the invariant checks, not exported to CSV
    grad_dot_beta: float = 0.0
    tilde_norm_sq: float = 1.0
    max_sq_norm: float = 0.0


@dataclass
class TrainTrace:
    records: list
    final_beta: np.ndarray
    beta0: np.ndarray
    config: SelfTrainConfig
    last_beta: np.ndarray | None = None

    @property
    def n_unlabeled(self) -> int:
        return self.config.batch_size * self.config.n_iter

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def empirical_risk(beta, X: np.ndarray, sigma: float, spec: LossSpec) -> float:
    """Weight-normalized pseudo-label risk ``mean loss(|<beta/|beta|, x>| / sigma)``."""
    beta = as_vector(beta)
    margins = X @ (beta / np.linalg.norm(beta))
    return float(np.mean(loss(spec, np.abs(margins) / sigma)))


def pseudo_gradient(beta, batch: np.ndarray, sigma: float, spec: LossSpec) -> np.ndarray:
    """Gradient of :func:`empirical_risk` at a unit ``beta``.

    ``(1/(sigma B)) sum loss'(|m_i|/sigma) sgn(m_i) (x_i - beta m_i)`` with
    ``m_i = <beta, x_i>``; points with ``m_i = 0`` contribute nothing.
    """
    beta = require_unit(beta, "beta")
    X = np.asarray(batch, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise PreconditionError("batch must be a nonempty 2-D array")
    m = X @ beta
    w = dloss(spec, np.abs(m) / sigma) * np.sign(m)
    v = w @ X
    # project after summing so the result is orthogonal to beta to rounding
    g = v - beta * (beta @ v)
    return g / (sigma * X.shape[0])


def step(beta, batch, config: SelfTrainConfig, model: MixtureModel | None = None, t: int = 0,
         err_oracle=None):
    """One weight-normalized update; returns ``(beta_next, record)``.

    Geometry fields of the record (angle, distance, alignment) need
    ``model``; they are NaN without it. ``err_oracle(beta) -> ErrEstimate``
    fills the error column.
    """
    beta = require_unit(beta, "beta")
    X = np.asarray(batch, dtype=np.float64)
    g = pseudo_gradient(beta, X, config.sigma, config.loss)
    tilde = beta - config.eta * g
    tilde_sq = float(tilde @ tilde)
    new_beta = tilde / math.sqrt(tilde_sq)
    grad_norm = float(np.linalg.norm(g))

    theta = dsq = align = math.nan
    if model is not None and model.mu_norm > 0:
        mu_bar = model.mu_bar
        theta = angle_between(beta, mu_bar)
        dsq = delta_sq(beta, mu_bar)
        align = float(-(mu_bar @ g))
    err, method = math.nan, "none"
    if err_oracle is not None:
        e = err_oracle(beta)
        err, method = e.value, e.method
    rec = IterateRecord(
        t=t,
        theta=theta,
        delta_sq=dsq,
        grad_norm=grad_norm,
        alignment=align,
        err=err,
        err_method=method,
        grad_dot_beta=float(g @ beta),
        tilde_norm_sq=tilde_sq,
        max_sq_norm=float(np.max(np.einsum("ij,ij->i", X, X))),
    )
    return new_beta, rec


def make_err_oracle(model: MixtureModel, n_mc: int, rng):
    """Exact oracle for Gaussian noise, else MC on one held-out sample.

    The held-out sample is drawn once from its own stream so error traces are
    smooth across iterations and training draws are unaffected.
    """
    if model.is_gaussian:
        return lambda beta: classification_err(beta, model)
    X, y = sample(model, n_mc, rng)

    def oracle(beta):
        p = float(np.mean(np.sign(X @ beta) != y))
        return ErrEstimate(p, "monte_carlo", math.sqrt(p * (1 - p) / n_mc), n_mc)

    return oracle


def run(model: MixtureModel, beta_pl, config: SelfTrainConfig, record_err: bool = True) -> TrainTrace:
    """Run ``config.n_iter`` self-training steps from ``beta_pl``.

    Each step consumes ``batch_size`` fresh points drawn from ``model``;
    their labels are dropped immediately. ``final_beta`` is ``beta_{T-1}``,
    the last iterate whose record is in the trace.
    """
    beta = normalize(beta_pl)
    if beta.shape[0] != model.d:
        raise PreconditionError("pseudolabeler dimension does not match the model")
    beta0 = beta.copy()
    gen = config.rng.child(0).generator()
    oracle = None
    if record_err:
        oracle = make_err_oracle(model, config.err_mc_samples, config.rng.child(1))
    records = []
    prev = beta
    for t in range(config.n_iter):
        X, _ = sample(model, config.batch_size, gen)
        prev = beta
        beta, rec = step(beta, X, config, model, t, oracle)
        records.append(rec)
    return TrainTrace(records=records, final_beta=prev, beta0=beta0, config=config, last_beta=beta)


def fit_batches(beta_pl, batches, config: SelfTrainConfig, model: MixtureModel | None = None):
    """Self-training over a fixed sequence of unlabeled batches."""
    beta = normalize(beta_pl)
    records = []
    prev = beta
    for t, X in enumerate(batches):
        prev = beta
        beta, rec = step(beta, X, config, model, t)
        records.append(rec)
    return TrainTrace(records=records, final_beta=prev, beta0=normalize(beta_pl), config=config,
                      last_beta=beta)


# --------------------------------------------------------------------------
# schedules


def gradient_constant(model: MixtureModel, sigma: float, spec: LossSpec) -> float:
    """``C_g = 72 sigma C_ell U' / (R^2 ||mu||)``."""
    p = model.params
    return 72.0 * sigma * spec.c_ell * p.U_prime / (p.R**2 * model.mu_norm)


def dimension_constant(model: MixtureModel, B: int, T: int, delta: float) -> float:
    """``C_d = 2 ||mu||^2 + 2 d K^2 log^2(d B T / delta)``."""
    K = model.params.K
    d = model.d
    return 2.0 * model.mu_norm**2 + 2.0 * d * K * K * math.log(d * B * T / delta) ** 2


def schedule_from_constants(c_d: float, c_g: float, sigma: float, eps: float):
    """``(eta, T)`` with ``eta = eps / (16 C_d C_g sigma^2)`` and
    ``T = ceil(x log x)``, ``x = 32 C_d C_g^2 sigma^2 / eps``."""
    if not 0.0 < eps < 1.0:
        raise PreconditionError("eps must lie in (0, 1)")
    eta = eps / (16.0 * c_d * c_g * sigma**2)
    x = 32.0 * c_d * c_g**2 * sigma**2 / eps
    return eta, math.ceil(x * math.log(x))


def theorem_schedule(d: int, eps: float, model: MixtureModel, spec: LossSpec,
                     delta: float = DEFAULT_DELTA, c_b: float = 1.0, sigma: float | None = None,
                     seed: int = 0, stream: int = 0) -> SelfTrainConfig:
    """Step size, batch size and horizon from the convergence constants.

    ``C_d`` depends on ``T`` only through a log, so ``T`` is found by
    fixed-point iteration. ``B = ceil(c_b log(2/delta) / eps)``.
    """
    if not 0.0 < eps < 1.0:
        raise PreconditionError("eps must lie in (0, 1)")
    if d != model.d:
        raise PreconditionError("d does not match the model dimension")
    sigma = max(model.params.R, model.mu_norm) if sigma is None else sigma
    B = max(1, math.ceil(c_b * math.log(2.0 / delta) / eps))
    c_g = gradient_constant(model, sigma, spec)
    T = 1
    for _ in range(200):
        c_d = dimension_constant(model, B, T, delta)
        eta, T_new = schedule_from_constants(c_d, c_g, sigma, eps)
        if T_new == T:
            break
        T = T_new
    return SelfTrainConfig(eta=eta, sigma=sigma, batch_size=B, n_iter=T, loss=spec,
                           seed=seed, stream=stream, delta=delta)


def practical_schedule(d: int, eps: float, sigma: float, spec: LossSpec, seed: int = 0,
                       stream: int = 0, delta: float = DEFAULT_DELTA) -> SelfTrainConfig:
    """Desk-scale schedule: ``eta = 0.1/d``, ``B = ceil(4/eps)``, ``T = ceil(2d/eps)``.

    Keeps the ``B ~ 1/eps``, ``T ~ d/eps``, ``eta ~ 1/d`` shape with small
    constants; at ``d = 20``, ``eps = 0.02`` it gives (0.005, 200, 2000).
    """
    if not 0.0 < eps < 1.0:
        raise PreconditionError("eps must lie in (0, 1)")
    return SelfTrainConfig(eta=0.1 / d, sigma=sigma, batch_size=math.ceil(4.0 / eps - 1e-9),
                           n_iter=math.ceil(2.0 * d / eps - 1e-9), loss=spec, seed=seed,
                           stream=stream, delta=delta)


__all__ = [
    "IterateRecord",
    "SelfTrainConfig",
    "TrainTrace",
    "c_err_threshold",
    "empirical_risk",
    "fit_batches",
    "mc_err",
    "practical_schedule",
    "pseudo_gradient",
    "run",
    "schedule_from_constants",
    "step",
    "theorem_schedule",
]
