"""Experiment runners behind the ``selftrain``, ``supervised`` and ``pipeline`` commands.

A trial owns the streams ``RngStream(seed, (trial, k))``:

    k = 0  random mean direction        k = 3  supervised stage
    k = 1  oracle-angle start vector    k = 4  held-out error evaluation
    k = 2  self-training stage

so results do not depend on ``--jobs`` or on which other trials ran.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import csv
import dataclasses
import io
import json
import math
import os
from pathlib import Path
import tempfile

import numpy as np

from pseudoboost.config import ExperimentConfig
from pseudoboost.distributions import MixtureModel, NoiseFamily, NoiseSpec, sample
from pseudoboost.exceptions import ConfigError, PipelineAbortError
from pseudoboost.losses import LossSpec
from pseudoboost.numerics import RngStream, sample_unit_sphere, unit_at_angle
from pseudoboost.oracles import c_err_threshold, classification_err, err_from_margins
from pseudoboost.selftrain import SelfTrainConfig, practical_schedule, run, theorem_schedule
from pseudoboost.supervised import SupervisedConfig, theorem2_schedule, train_pseudolabeler

TRACE_COLUMNS = ("t", "theta", "delta_sq", "err", "err_method", "grad_norm", "alignment")
TRACE_MC_SAMPLES = 10_000
SUMMARY_NAME = "summary.json"


# --------------------------------------------------------------------------
# building blocks


def trial_stream(cfg: ExperimentConfig, trial: int, k: int) -> RngStream:
    return RngStream(cfg.seed, (trial, k))


def build_model(cfg: ExperimentConfig, trial: int = 0) -> MixtureModel:
    direction = None
    if cfg.mu_direction == "random":
        direction = sample_unit_sphere(cfg.dimension, trial_stream(cfg, trial, 0).generator())
    return MixtureModel.build(cfg.dimension, cfg.mu_norm, NoiseSpec(NoiseFamily(cfg.noise)),
                              direction=direction, R=cfg.R)


def load_vector(path, d: int) -> np.ndarray:
    path = Path(path)
    try:
        if path.suffix == ".npy":
            v = np.load(path)
        else:
            v = np.loadtxt(path, delimiter="," if "," in path.read_text() else None)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"selftrain.init.path: cannot read {path}: {exc}") from exc
    v = np.ravel(np.asarray(v, dtype=np.float64))
    if v.shape[0] != d or not np.all(np.isfinite(v)) or not np.any(v != 0):
        raise ConfigError(f"selftrain.init.path: expected a finite nonzero vector of length {d}")
    return v


def initial_vector(cfg: ExperimentConfig, model: MixtureModel, trial: int) -> np.ndarray:
    init = cfg.selftrain.init
    if init.mode == "file":
        return load_vector(init.path, model.d)
    if model.mu_norm == 0.0:
        raise ConfigError("selftrain.init.mode: 'angle' needs mu_norm > 0")
    return unit_at_angle(model.mu_bar, math.radians(init.theta0_deg),
                         rng=trial_stream(cfg, trial, 1).generator())


def _cap(n: int, cfg: ExperimentConfig, what: str) -> None:
    if n > cfg.max_iterations:
        raise ConfigError(
            f"{what} schedule asks for {n} iterations, above max_iterations={cfg.max_iterations}; "
            "raise max_iterations to run it anyway"
        )


def selftrain_config(cfg: ExperimentConfig, model: MixtureModel, trial: int) -> SelfTrainConfig:
    st = cfg.selftrain
    spec = LossSpec.from_name(cfg.loss)
    sigma = max(cfg.R, cfg.mu_norm) if st.sigma is None else st.sigma
    stream = (trial, 2)
    if st.schedule == "theorem":
        if model.mu_norm == 0.0:
            raise ConfigError("selftrain.schedule: 'theorem' needs mu_norm > 0")
        sc = theorem_schedule(model.d, st.eps, model, spec, delta=st.delta, c_b=st.c_b, sigma=sigma,
                              seed=cfg.seed, stream=stream)
    else:
        sc = practical_schedule(model.d, st.eps, sigma, spec, seed=cfg.seed, stream=stream,
                                delta=st.delta)
    over = {k: v for k, v in (("eta", st.eta), ("batch_size", st.batch_size),
                              ("n_iter", st.iterations)) if v is not None}
    sc = dataclasses.replace(sc, err_mc_samples=min(TRACE_MC_SAMPLES, cfg.err_mc_samples), **over)
    _cap(sc.n_iter, cfg, "self-training")
    return sc


def supervised_config(cfg: ExperimentConfig, model: MixtureModel, trial: int) -> SupervisedConfig:
    sv = cfg.supervised
    kw = dict(validation_size=sv.validation_size, seed=cfg.seed, stream=(trial, 3))
    if sv.schedule == "theorem2":
        c_err = sv.c_err
        if c_err is None:
            c_err = c_err_threshold(model.params, LossSpec.from_name(cfg.loss))
        sc = theorem2_schedule(model, c_err, 0.01 if sv.delta is None else sv.delta, **kw)
    elif sv.delta is not None:
        sc = SupervisedConfig.from_delta(sv.delta, eta=sv.eta, n_iter=sv.iterations, **kw)
    else:
        sc = SupervisedConfig(eta=sv.eta, n_iter=sv.iterations, runs=sv.runs, **kw)
    _cap(sc.n_iter, cfg, "supervised")
    return sc


def evaluate(cfg: ExperimentConfig, model: MixtureModel, trial: int, *betas):
    """Errors of ``betas`` and of ``mu_bar``; exact for Gaussian noise.

    Non-Gaussian errors share one held-out sample so differences to the
    baseline are not swamped by independent noise.
    """
    cands = [*betas, model.mu_bar]
    if model.is_gaussian:
        vals = [classification_err(b, model).value for b in cands]
        return vals, "exact_gaussian"
    X, y = sample(model, cfg.err_mc_samples, trial_stream(cfg, trial, 4))
    return [err_from_margins(X @ b, y) for b in cands], "monte_carlo"


def trace_rows(trace, stride: int = 1):
    last = len(trace.records) - 1
    for r in trace.records:
        if r.t % stride == 0 or r.t == last:
            yield [r.t, r.theta, r.delta_sq, r.err, r.err_method, r.grad_norm, r.alignment]


def trace_csv(trace, stride: int = 1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for row in trace_rows(trace, stride):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def theory_status(cfg: ExperimentConfig, model: MixtureModel, sigma: float) -> dict:
    p = model.params
    spec = LossSpec.from_name(cfg.loss)
    c_err = c_err_threshold(p, spec)
    sep_cor = 3 * p.K * max(math.log(144 * p.U_prime / p.R**2), 22 * p.K)
    sep_sup = 3 * p.K * max(math.log(8 / c_err), 22 * p.K)
    return {
        "K": p.K, "U": p.U, "U_prime": p.U_prime, "R": p.R,
        "c_ell": spec.c_ell,
        "c_err": c_err,
        "sigma": sigma,
        "sigma_compliant": sigma >= max(p.R, model.mu_norm),
        "separation_pipeline_required": sep_cor,
        "separation_pipeline_satisfied": model.mu_norm >= sep_cor,
        "separation_supervised_required": sep_sup,
        "separation_supervised_satisfied": model.mu_norm >= sep_sup,
    }


def _schedule_echo(sc: SelfTrainConfig) -> dict:
    return {"eta": sc.eta, "sigma": sc.sigma, "batch_size": sc.batch_size,
            "iterations": sc.n_iter, "loss": sc.loss.kind.value}


# --------------------------------------------------------------------------
# trials


def _selftrain_stage(cfg, model, trial, beta0, stride):
    sc = selftrain_config(cfg, model, trial)
    trace = run(model, beta0, sc)
    (init_err, final_err, base), method = evaluate(cfg, model, trial, trace.beta0, trace.final_beta)
    out = {
        "init_err": init_err,
        "final_err": final_err,
        "baseline_err": base,
        "gap": final_err - base,
        "err_method": method,
        "init_delta_sq": trace.records[0].delta_sq,
        "final_delta_sq": float(np.sum((trace.final_beta - model.mu_bar) ** 2)),
        "unlabeled": trace.n_unlabeled,
        "passed": final_err - base <= cfg.selftrain.eps,
        "schedule": _schedule_echo(sc),
    }
    return out, trace_csv(trace, stride)


def selftrain_trial(cfg: ExperimentConfig, trial: int, stride: int = 1):
    model = build_model(cfg, trial)
    beta0 = initial_vector(cfg, model, trial)
    res, csv_text = _selftrain_stage(cfg, model, trial, beta0, stride)
    res = {"trial": trial, "labeled": 0, **res}
    res["contracted"] = res["final_delta_sq"] < res["init_delta_sq"]
    return res, csv_text


def _supervised_stage(cfg, model, trial):
    sc = supervised_config(cfg, model, trial)
    res = train_pseudolabeler(model, sc)
    (oracle_err, base), method = evaluate(cfg, model, trial, res.beta_pl)
    return res, sc, {
        "selected_run": res.selected_run,
        "selected_iter": res.selected_iter,
        "validation_err": res.validation_err,
        "pseudolabeler_err": oracle_err,
        "baseline_err": base,
        "err_method": method,
        "labeled": sc.n_labeled,
        "runs": sc.runs,
        "supervised_iterations": sc.n_iter,
        "supervised_eta": sc.eta,
    }


def supervised_trial(cfg: ExperimentConfig, trial: int, stride: int = 1):
    model = build_model(cfg, trial)
    _, _, out = _supervised_stage(cfg, model, trial)
    out = {"trial": trial, **out, "passed": out["pseudolabeler_err"] <= cfg.supervised.target_err}
    return out, None


def pipeline_trial(cfg: ExperimentConfig, trial: int, stride: int = 1):
    """Supervised stage, hand-off gate, then self-training from the selected iterate.

    Raises :class:`PipelineAbortError` when the pseudolabeler's validation
    error exceeds ``pipeline.handoff_threshold``.
    """
    model = build_model(cfg, trial)
    res, _, sup = _supervised_stage(cfg, model, trial)
    if res.validation_err > cfg.pipeline.handoff_threshold:
        raise PipelineAbortError(
            f"trial {trial}: pseudolabeler validation error {res.validation_err:.4f} exceeds the "
            f"hand-off threshold {cfg.pipeline.handoff_threshold}",
            {"trial": trial, **sup},
        )
    st, csv_text = _selftrain_stage(cfg, model, trial, res.beta_pl, stride)
    sup_keys = {f"supervised_{k}" if k in st else k: v for k, v in sup.items()}
    return {"trial": trial, **sup_keys, **st,
            "handoff_below_c_err": sup["pseudolabeler_err"] <= c_err_threshold(
                model.params, LossSpec.from_name(cfg.loss))}, csv_text


def _pipeline_trial_safe(cfg, trial, stride):
    try:
        return pipeline_trial(cfg, trial, stride)
    except PipelineAbortError as exc:
        return {"trial": trial, "aborted": True, "passed": False, "message": str(exc),
                "diagnostics": exc.diagnostics}, None


TRIAL_FUNCS = {
    "selftrain": selftrain_trial,
    "supervised": supervised_trial,
    "pipeline": _pipeline_trial_safe,
}


def _run_one(args):
    command, cfg, trial, stride = args
    return TRIAL_FUNCS[command](cfg, trial, stride)


def run_trials(command: str, cfg: ExperimentConfig, jobs: int = 1, stride: int = 1):
    tasks = [(command, cfg, k, stride) for k in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_one, tasks))
    return [_run_one(t) for t in tasks]


# --------------------------------------------------------------------------
# summaries and files


def summarize(command: str, cfg: ExperimentConfig, results) -> dict:
    trials = [r for r, _ in results]
    model = build_model(cfg, 0)
    need = math.ceil(cfg.min_pass_fraction * cfg.trials - 1e-9)
    n_passed = sum(bool(t["passed"]) for t in trials)
    sigma = max(cfg.R, cfg.mu_norm) if cfg.selftrain.sigma is None else cfg.selftrain.sigma
    summary = {
        "command": command,
        "config": cfg.to_dict(),
        "trials": trials,
        "n_trials": len(trials),
        "n_passed": n_passed,
        "required_passes": need,
        "passed": n_passed >= need,
        "theory": theory_status(cfg, model, sigma),
    }
    ok = [t for t in trials if not t.get("aborted")]
    if command in ("selftrain", "pipeline"):
        summary["target_eps"] = cfg.selftrain.eps
        summary["unlabeled_count"] = sorted({t["unlabeled"] for t in ok})
    summary["labeled_count"] = sorted({t["labeled"] for t in ok})
    if command == "selftrain":
        summary["n_contracted"] = sum(t["contracted"] for t in ok)
    if command == "supervised":
        summary["target_err"] = cfg.supervised.target_err
    if command == "pipeline":
        n_abort = len(trials) - len(ok)
        summary["n_aborted"] = n_abort
        summary["handoff"] = {
            "threshold": cfg.pipeline.handoff_threshold,
            "practical_condition_met": sum(t["validation_err"] <= cfg.pipeline.handoff_threshold
                                           for t in ok),
            "theoretical_condition_met": sum(t["handoff_below_c_err"] for t in ok),
        }
    if model.mu_norm > 0:
        (base,), method = evaluate(cfg, model, 0)
        summary["baseline_err"] = base if model.is_gaussian else None
        summary["baseline_method"] = method
    summary["selection_rule"] = "validation" if command != "selftrain" else None
    return summary


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_path(out_dir, trial: int) -> Path:
    return Path(out_dir) / f"trace_trial{trial:03d}.csv"


def execute(command: str, cfg: ExperimentConfig, out_dir, jobs: int = 1, stride: int = 1) -> dict:
    """Run every trial, write traces and the summary, return the summary."""
    if stride < 1:
        raise ConfigError("--stride must be >= 1")
    results = run_trials(command, cfg, jobs, stride)
    for (res, csv_text) in results:
        if csv_text is not None:
            write_atomic(trace_path(out_dir, res["trial"]), csv_text)
    summary = summarize(command, cfg, results)
    write_atomic(Path(out_dir) / SUMMARY_NAME, dumps(summary))
    return summary


__all__ = [
    "SUMMARY_NAME",
    "TRACE_COLUMNS",
    "build_model",
    "evaluate",
    "execute",
    "initial_vector",
    "pipeline_trial",
    "selftrain_config",
    "selftrain_trial",
    "summarize",
    "supervised_config",
    "supervised_trial",
    "theory_status",
    "trace_csv",
    "write_atomic",
]
