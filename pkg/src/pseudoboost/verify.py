"""The verification suite behind ``pseudoboost verify``.

Each named group expands to a fixed list of checks. Every check owns the
stream ``RngStream(seed, check_id)``, so a check produces the same report
whether it runs alone, inside ``all``, serially or in a worker process.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
import math

import numpy as np
from scipy import stats

from pseudoboost.distributions import (
    MixtureModel,
    NoiseFamily,
    NoiseSpec,
    marginal_tail,
    sample_noise,
    sample_noise_2d_marginal,
)
from pseudoboost.losses import LossSpec, audit
from pseudoboost.numerics import RngStream, sample_unit_sphere, unit_at_angle
from pseudoboost.oracles import (
    SLACK,
    RecursionParams,
    VerificationReport,
    _model_echo,
    bayes_optimality_check,
    calibrate_batch_constant,
    err_gap_bound_check,
    lemma1_alignment_estimate,
    lemma_b2_check,
    norm_bound_check,
    recursion_check,
    subexp_err_bound_check,
)

FAMILIES = tuple(NoiseFamily)
SELECTORS = ("all", "fact1", "lemma1", "lemmaB1", "lemmaB2", "lemmaD1", "lemmaD2", "errgap",
             "losses", "distributions")
LOGISTIC = LossSpec.from_name("logistic")
EXPONENTIAL = LossSpec.from_name("exponential")


def _model(d, mu_norm, family="gaussian"):
    return MixtureModel.build(d, mu_norm, NoiseSpec(NoiseFamily(family)))


# --------------------------------------------------------------------------
# individual checks; each takes (rng: RngStream, **params)


def _fact1(rng, family, d=10, mu_norm=2.0, n_directions=50, n_mc=100_000):
    return [bayes_optimality_check(_model(d, mu_norm, family), n_directions, n_mc, rng)]


def _lemma1(rng, mu_norm, sigma, thetas_deg, regime, d=20, n=1_000_000):
    model = _model(d, mu_norm)
    out = []
    for i, deg in enumerate(thetas_deg):
        beta = unit_at_angle(model.mu_bar, math.radians(deg))
        rep = lemma1_alignment_estimate(model, beta, sigma, LOGISTIC, n, rng.child(i))
        rep.details["regime"] = regime
        out.append(rep)
    return out


def _lemma1_batch(rng, mu_norm=2.0, sigma=2.0, theta_deg=30.0, eps=0.1, delta=0.05, trials=400, d=20):
    model = _model(d, mu_norm)
    beta = unit_at_angle(model.mu_bar, math.radians(theta_deg))
    c_b, B, rep = calibrate_batch_constant(model, beta, sigma, LOGISTIC, eps, delta, trials, rng,
                                           steps=12)
    rep.check = "lemma1_batch_calibrated"
    rep.details.update({"calibrated_c_b": c_b, "calibrated_B": B, "regime": "practical"})
    return [rep]


def _lemmaB1(rng, family, mu_norm, d=10, n_mc=200_000):
    return [subexp_err_bound_check(_model(d, mu_norm, family), n_mc, rng)]


def _lemmaB2(rng, family, mu_norm, loss, d=10):
    if mu_norm == "threshold":
        mu_norm = 64.0 * _model(d, 1.0, family).params.K ** 2
    model = _model(d, mu_norm, family)
    return [lemma_b2_check(model, LossSpec.from_name(loss))]


def _lemmaB2_closed_form(rng, mu_norms=(0.5, 1.0, 2.0, 4.0), d=10, tol=1e-9):
    worst = 0.0
    rel = []
    for m in mu_norms:
        rep = lemma_b2_check(_model(d, m), EXPONENTIAL)
        rel.append(rep.details["closed_form_rel_err"])
        worst = max(worst, rel[-1])
    return [VerificationReport(
        check="lemmaB2_closed_form",
        passed=worst <= tol,
        estimate=worst,
        bound=tol,
        parameters={"mu_norms": list(mu_norms), "d": d, "loss": "exponential"},
        details={"rel_errs": rel},
    )]


def _lemmaD1(rng, family, mu_norm, d=20, B=200, T=100, delta=0.01):
    return [norm_bound_check(_model(d, mu_norm, family), B, T, delta, rng)]


def _lemmaD2_example(rng):
    return [recursion_check(RecursionParams(1.0, 1.0, 1.0, 0.1, 4.0))]


def _lemmaD2_sweep(rng, n_draws=100):
    gen = rng.generator()
    worst_ratio, failures, draws = 0.0, 0, 0
    while draws < n_draws:
        c_g = float(np.exp(gen.uniform(-1.0, 1.5)))
        c_d = float(np.exp(gen.uniform(-1.0, 1.5)))
        # sigma >= 1 as in every use (sigma >= max(R, |mu|) with R = 1)
        sigma = float(np.exp(gen.uniform(0.0, 1.0)))
        eps = float(gen.uniform(0.01, 0.9))
        d0 = float(gen.uniform(1e-3, 4.0))
        if c_d * c_g**2 * sigma**2 < 1.0:
            continue
        rep = recursion_check(RecursionParams(c_g, c_d, sigma, eps, d0))
        draws += 1
        failures += not rep.passed
        worst_ratio = max(worst_ratio, rep.estimate / eps)
    return [VerificationReport(
        check="lemmaD2_random_sweep",
        passed=failures == 0,
        estimate=worst_ratio,
        bound=1.0,
        parameters={"n_draws": n_draws, "sigma_range": [1.0, math.e]},
        details={"failures": failures, "note": "estimate is max final/eps over draws"},
    )]


def _lemmaD2_small_sigma(rng):
    # documents the sigma < 1 regime where the recursion settles above eps
    return [recursion_check(RecursionParams(4.0, 1.0, 0.5, 0.1, 4.0))]


def _errgap(rng, mu_norm, d=10):
    grid = np.radians(np.arange(0.0, 90.0 + 1e-9, 5.0))
    return [err_gap_bound_check(_model(d, mu_norm), grid)]


def _losses(rng, loss):
    res = audit(LossSpec.from_name(loss))
    return [
        VerificationReport(
            check="loss_finite_difference", passed=res.finite_difference_ok,
            estimate=res.finite_difference_max_err, bound=10 * 1e-10,
            parameters={"loss": loss, "h": 1e-5}),
        VerificationReport(
            check="loss_well_behaved", passed=res.well_behaved_ok,
            estimate=-res.well_behaved_min_margin, bound=0.0,
            parameters={"loss": loss},
            details={"note": "estimate is -min(-loss'(z) - exp(-z)/C_ell)"}),
        VerificationReport(
            check="loss_lipschitz", passed=res.lipschitz_ok,
            estimate=res.lipschitz_max, bound=1.0, parameters={"loss": loss}),
    ]


def _distributions(rng, family, d=10, n=200_000):
    noise = NoiseSpec(NoiseFamily(family))
    model = _model(d, 0.0, family)
    p = model.params
    echo = _model_echo(model)
    gen = rng.generator()
    Z = sample_noise(noise, d, n, gen)
    out = []

    # isotropy: covariance close to the identity
    cov = Z.T @ Z / n
    dev = float(np.max(np.abs(cov - np.eye(d))))
    out.append(VerificationReport(
        check="distribution_isotropy", passed=dev <= 0.03, estimate=dev, bound=0.03,
        parameters={**echo, "n": n}))

    # rotational symmetry: projections on e1 and a random direction share a law
    v = sample_unit_sphere(d, gen)
    ks = stats.ks_2samp(Z[: n // 2, 0], Z[n // 2:] @ v)
    out.append(VerificationReport(
        check="distribution_rotational_symmetry", passed=ks.pvalue >= 1e-3,
        estimate=float(ks.pvalue), bound=1e-3, parameters={**echo, "n": n},
        details={"ks_statistic": float(ks.statistic), "note": "estimate is the KS p-value, a lower bound check"}))

    # certified sub-exponential tail: empirical P(|<v,z>| >= t) <= exp(-t/K)
    proj = np.abs(Z @ sample_unit_sphere(d, gen))
    worst, worst_t, rows = -math.inf, 0.0, []
    for t in np.linspace(0.25, 6.0, 24):
        emp = float(np.mean(proj >= t))
        se = math.sqrt(emp * (1 - emp) / n)
        bound = math.exp(-t / p.K)
        rows.append([float(t), emp, bound, marginal_tail(noise, d, float(t))])
        excess = emp - bound - SLACK * se
        if excess > worst:
            worst, worst_t = excess, float(t)
    out.append(VerificationReport(
        check="distribution_subexp_tail", passed=worst <= 0.0, estimate=worst, bound=0.0,
        parameters={**echo, "n": n},
        details={"worst_t": worst_t, "rows_t_empirical_bound_numeric": rows}))

    # 2-D floor: mass of the radius-R disk is at least pi R^2 / U'
    W = sample_noise_2d_marginal(noise, d, n, gen)
    frac = float(np.mean(np.einsum("ij,ij->i", W, W) <= p.R**2))
    se = math.sqrt(frac * (1 - frac) / n)
    floor = math.pi * p.R**2 / p.U_prime
    out.append(VerificationReport(
        check="distribution_2d_floor", passed=frac >= floor - SLACK * se, estimate=frac,
        bound=floor, stderr=se, parameters={**echo, "n": n},
        details={"note": "estimate is the disk mass, a lower bound check"}))
    return out


# --------------------------------------------------------------------------
# registry: (check_id, function, kwargs) per selector; ids never change


def _registry():
    reg = {s: [] for s in SELECTORS if s != "all"}
    cid = 0

    def add(group, fn, **kw):
        nonlocal cid
        reg[group].append((cid, fn.__name__, kw))
        cid += 1

    for fam in FAMILIES:
        add("fact1", _fact1, family=fam.value)
    add("lemma1", _lemma1, mu_norm=2.0, sigma=2.0, thetas_deg=(5.0, 15.0, 30.0, 45.0), regime="practical")
    add("lemma1", _lemma1, mu_norm=3.5, sigma=3.5, thetas_deg=(5.0, 15.0), regime="strict")
    add("lemma1", _lemma1_batch)
    for fam in ("gaussian", "radial_gamma", "uniform_ball"):
        for m in (1.0, 2.0, 3.0):
            add("lemmaB1", _lemmaB1, family=fam, mu_norm=m)
    for fam in ("gaussian", "radial_gamma"):
        for m in (1.0, 2.0, 3.0, "threshold"):
            for loss in ("logistic", "exponential"):
                add("lemmaB2", _lemmaB2, family=fam, mu_norm=m, loss=loss)
    add("lemmaB2", _lemmaB2_closed_form)
    for fam in FAMILIES:
        add("lemmaD1", _lemmaD1, family=fam.value, mu_norm=2.0)
    for fam in ("gaussian", "radial_gamma"):
        for m in (1.0, 3.0):
            add("lemmaD1", _lemmaD1, family=fam, mu_norm=m)
    add("lemmaD2", _lemmaD2_example)
    add("lemmaD2", _lemmaD2_sweep)
    add("lemmaD2", _lemmaD2_small_sigma)
    for m in (1.0, 2.0, 3.0):
        add("errgap", _errgap, mu_norm=m)
    for loss in ("exponential", "logistic"):
        add("losses", _losses, loss=loss)
    for fam in FAMILIES:
        add("distributions", _distributions, family=fam.value)
    return reg


REGISTRY = _registry()
_FUNCS = {f.__name__: f for f in (
    _fact1, _lemma1, _lemma1_batch, _lemmaB1, _lemmaB2, _lemmaB2_closed_form, _lemmaD1,
    _lemmaD2_example, _lemmaD2_sweep, _lemmaD2_small_sigma, _errgap, _losses, _distributions)}


def tasks_for(which: str):
    if which not in SELECTORS:
        raise ValueError(f"unknown selector {which!r}; choose from {', '.join(SELECTORS)}")
    if which == "all":
        return [t for s in SELECTORS[1:] for t in REGISTRY[s]]
    return list(REGISTRY[which])


def _run_task(task, seed):
    cid, name, kw = task
    return [r.to_dict() for r in _FUNCS[name](RngStream(seed, cid), **kw)]


def run_verification(which: str, seed: int = 0, jobs: int = 1) -> dict:
    """Run a selector and return the report document (plain JSON types)."""
    tasks = tasks_for(which)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks, [seed] * len(tasks)))
    else:
        chunks = [_run_task(t, seed) for t in tasks]
    reports = [r for chunk in chunks for r in chunk]
    failed = [r for r in reports if not r["passed"] and not r["vacuous"]]
    return {
        "selector": which,
        "seed": seed,
        "n_reports": len(reports),
        "n_failed": len(failed),
        "n_vacuous": sum(r["vacuous"] for r in reports),
        "passed": not failed,
        "reports": reports,
    }


__all__ = ["REGISTRY", "SELECTORS", "run_verification", "tasks_for"]
