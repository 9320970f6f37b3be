"""Self-training with pseudolabels on rotationally symmetric mixture models."""

from pseudoboost.distributions import DistParams, MixtureModel, NoiseFamily, NoiseSpec
from pseudoboost.losses import LossSpec
from pseudoboost.numerics import RngStream

__version__ = "0.1.0"


def __getattr__(name):
    # keep sklearn out of the import path of the CLI and core modules
    if name in ("LogisticSGDClassifier", "SelfTrainingClassifier"):
        from pseudoboost import estimators

        return getattr(estimators, name)
    raise AttributeError(f"module 'pseudoboost' has no attribute {name!r}")


__all__ = [
    "DistParams",
    "LogisticSGDClassifier",
    "LossSpec",
    "MixtureModel",
    "NoiseFamily",
    "NoiseSpec",
    "RngStream",
    "SelfTrainingClassifier",
]
