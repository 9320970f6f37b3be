"""Well-behaved margin losses used by the self-training objective.

A loss is well-behaved with constant ``c_ell`` if it is 1-Lipschitz and
decreasing on ``[0, inf)`` and ``-loss'(z) >= exp(-z) / c_ell`` for ``z > 0``.
Only nonnegative arguments are accepted: the self-training loss is always
evaluated at ``|<beta, x>| / sigma``.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from pseudoboost.exceptions import PreconditionError


class LossKind(str, Enum):
    EXPONENTIAL = "exponential"
    LOGISTIC = "logistic"


_C_ELL = {LossKind.EXPONENTIAL: 1.0, LossKind.LOGISTIC: 2.0}


@dataclass(frozen=True)
class LossSpec:
    kind: LossKind = LossKind.LOGISTIC

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))

    @property
    def c_ell(self) -> float:
        return _C_ELL[self.kind]

    @classmethod
    def from_name(cls, name: str) -> "LossSpec":
        try:
            return cls(LossKind(name.lower()))
        except ValueError:
            raise ValueError(
                f"unknown loss {name!r}; expected one of {[k.value for k in LossKind]}"
            ) from None

    def value(self, z):
        return loss(self, z)

    def derivative(self, z):
        return dloss(self, z)


def _check_nonneg(z):
    arr = np.asarray(z, dtype=np.float64)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise PreconditionError("loss arguments must be nonnegative (pass |margin|)")
    return arr


def _out(arr, scalar_in):
    return float(arr) if scalar_in else arr


def loss(spec: LossSpec, z):
    scalar = np.ndim(z) == 0
    z = _check_nonneg(z)
    if spec.kind is LossKind.EXPONENTIAL:
        return _out(np.exp(-z), scalar)
    # log(1 + e^-z) without forming e^z
    return _out(np.log1p(np.exp(-z)), scalar)


def dloss(spec: LossSpec, z):
    scalar = np.ndim(z) == 0
    z = _check_nonneg(z)
    if spec.kind is LossKind.EXPONENTIAL:
        return _out(-np.exp(-z), scalar)
    # -1 / (1 + e^z) = -e^-z / (1 + e^-z); z >= 0 so e^-z never overflows
    e = np.exp(-z)
    return _out(-e / (1.0 + e), scalar)


def logistic_signed(margin):
    """``log(1 + exp(-m))`` for arbitrary real margins (supervised stage)."""
    m = np.asarray(margin, dtype=np.float64)
    return np.logaddexp(0.0, -m)


def logistic_signed_grad(margin):
    """Derivative of ``log(1 + exp(-m))`` in ``m``: ``-1 / (1 + exp(m))``."""
    m = np.asarray(margin, dtype=np.float64)
    return -0.5 * (1.0 - np.tanh(0.5 * m))


@dataclass
class AuditResult:
    finite_difference_max_err: float
    finite_difference_ok: bool
    well_behaved_min_margin: float
    well_behaved_ok: bool
    lipschitz_max: float
    lipschitz_ok: bool

    @property
    def ok(self) -> bool:
        return self.finite_difference_ok and self.well_behaved_ok and self.lipschitz_ok


def audit(spec: LossSpec, h: float = 1e-5) -> AuditResult:
    """Numerical well-behavedness audit on fixed grids.

    Checks the derivative against central differences on ``[0, 20]`` (bound
    ``10 h^2``), the exponential lower bound on ``-loss'`` on ``[1e-6, 30]``
    and ``|loss'| <= 1``.
    """
    zs = np.linspace(h, 20.0, 2001)
    fd = (loss(spec, zs + h) - loss(spec, zs - h)) / (2 * h)
    fd_err = float(np.max(np.abs(dloss(spec, zs) - fd)))

    zw = np.concatenate([np.geomspace(1e-6, 1.0, 200), np.linspace(1.0, 30.0, 600)])
    margin = -dloss(spec, zw) - np.exp(-zw) / spec.c_ell
    min_margin = float(np.min(margin))
    lip = float(np.max(np.abs(dloss(spec, np.linspace(0.0, 30.0, 3001)))))
    return AuditResult(
        finite_difference_max_err=fd_err,
        finite_difference_ok=fd_err <= 10 * h**2,
        well_behaved_min_margin=min_margin,
        well_behaved_ok=min_margin >= 0.0,
        lipschitz_max=lip,
        lipschitz_ok=lip <= 1.0,
    )
