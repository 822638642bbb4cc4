"""Experiment runners: each turns an :class:`ExperimentConfig` into tables, a summary and verdicts.

Vectors in ``params`` are coefficient lists in the L^2 eigenbasis, zero-padded
to ``n_modes``. Distances (``gap``, ``gaps``, ``d0``) are H^gamma norms along
the H-unit vector of mode ``direction``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import models
from ..analysis import estimators as est
from ..analysis.exponents import beta_theory, corollary31_grid
from ..analysis.steering import steer_deterministic
from ..conditions import ConditionSampler, check_conditions
from ..coupling import run_couplings
from ..integrator import _hnorm, advance, convergence_probe, simulate_ensemble, simulate_path
from ..spectral import h_unit_vector, pad
from .config import PARAM_DEFAULTS, ExperimentConfig

# separate substream ranges for the sub-studies of one experiment
CONDITION_SUBSTREAM = 1 << 50


@dataclass
class ExperimentOutput:
    columns: list
    rows: list
    summary: dict
    verdicts: dict
    tables: dict = field(default_factory=dict)  # extra CSV files: name -> (columns, rows)


def _vec(cfg, key):
    return pad(cfg.param(key), cfg.model.space)


def _f(cfg):
    spec = {**PARAM_DEFAULTS[cfg.experiment]["f"], **cfg.params.get("f", {})}
    return est.TestFunction(**spec)


def _direction(cfg):
    return h_unit_vector(cfg.param("direction"), cfg.model.space)


def _fit_constants(cfg, theta, n_pairs):
    return check_conditions(cfg.model, theta, n_pairs, master_seed=cfg.master_seed, substream_id=CONDITION_SUBSTREAM)


def _verdict(ok):
    return "PASS" if ok else "FAIL"


def run_simulate(cfg: ExperimentConfig, threads=1):
    m, n = cfg.model, cfg.model.space.n_modes
    x0 = _vec(cfg, "x0")
    T = cfg.param("T")
    term = simulate_ensemble(m, x0[None], T, cfg.stepper, cfg.samples, cfg.master_seed, threads=threads)[0]
    cols = ["path"] + [f"c_{j}" for j in range(1, n + 1)]
    rows = [[k, *term[k]] for k in range(cfg.samples)]
    tables = {}
    stride = cfg.param("trajectory_stride")
    if stride:
        _, times, states = simulate_path(m, x0, T, cfg.stepper, 0, cfg.master_seed, save_stride=stride)
        tables["trajectory.csv"] = (["t"] + cols[1:], [[t, *s] for t, s in zip(times, states)])
    hn = _hnorm(m, term)
    summary = {"n_paths": cfg.samples, "T": T, "mean_H_norm": float(hn.mean()),
               "mean_H_norm_se": float(hn.std(ddof=1) / math.sqrt(cfg.samples)) if cfg.samples > 1 else 0.0}
    return ExperimentOutput(cols, rows, summary, {}, tables)


def _pair_starts(cfg):
    x = _vec(cfg, "x")
    gap = cfg.param("gap")
    y = x + gap * _direction(cfg) if gap is not None else _vec(cfg, "y")
    return x, y


def run_couple(cfg: ExperimentConfig, threads=1):
    m, cc = cfg.model, cfg.coupling.resolve(cfg.model.r)
    x, y = _pair_starts(cfg)
    M = cfg.samples
    batch = run_couplings(m, x, y, cc, M, cfg.master_seed, threads=threads)
    w = np.exp(batch.logR_T)
    cols = ["pair", "tau", "logR_T", "I_theta", "quad_var", "cap_events", "steps"]
    rows = [[k, batch.tau[k], batch.logR_T[k], batch.I_theta[k], batch.quad_var[k], int(batch.cap_events[k]),
             int(batch.steps[k])] for k in range(M)]
    se = float(w.std(ddof=1) / math.sqrt(M)) if M > 1 else math.inf
    cap_frac = float(batch.cap_events.sum()) / max(int(batch.steps.sum()), 1)
    gap = float(_hnorm(m, (x - y)[None])[0])
    rlogr = w * batch.logR_T
    summary = {
        "gap": gap, "alpha": cc.alpha, "epsilon": cc.epsilon, "theta": cc.theta, "T": cc.T, "n_pairs": M,
        "mean_weight": float(w.mean()), "mean_weight_se": se,
        "p_tau_ge_T": float(np.mean(~np.isfinite(batch.tau))),
        "mean_R_log_R": float(rlogr.mean()),
        "mean_I_theta": float(batch.I_theta.mean()),
        "mean_I_theta_se": float(batch.I_theta.std(ddof=1) / math.sqrt(M)) if M > 1 else math.inf,
        "mean_quad_var": float(batch.quad_var.mean()), "cap_fraction": cap_frac,
    }
    verdicts = {"martingale": _verdict(abs(w.mean() - 1) <= 3 * se), "cap_events": _verdict(cap_frac < 0.01)}
    g = 0.5 * (m.r + 1 - cc.theta * (1 - cc.epsilon))
    if cc.mode == "lemma21" and g < 1 and gap > 0:
        rep = _fit_constants(cfg, cc.theta, cfg.param("condition_pairs"))
        if rep.fitted_delta1 > 0:
            bound = math.exp((1 - g) * rep.fitted_K1 * cc.T) / ((1 - g) * rep.fitted_delta1) * gap ** (2 - 2 * g)
            summary.update(I_theta_bound=bound, fitted_K1=rep.fitted_K1, fitted_delta1=rep.fitted_delta1)
            verdicts["I_theta_bound"] = _verdict(summary["mean_I_theta"] <= bound + 3 * summary["mean_I_theta_se"])
    return ExperimentOutput(cols, rows, summary, verdicts)


def run_holder(cfg: ExperimentConfig, threads=1):
    m = cfg.model
    x = _vec(cfg, "x")
    d0, k = cfg.param("d0"), cfg.param("n_gaps")
    dists = [d0 * 2.0**-i for i in range(k)]
    ys = np.array([x + d * _direction(cfg) for d in dists])
    gaps = est.mc_gaps(m, _f(cfg), x, ys, cfg.param("T"), cfg.samples, cfg.stepper, cfg.master_seed,
                       threads=threads)
    cols = ["distance", "gap", "std_error", "n_samples"]
    rows = [[d, g.mean, g.std_error, g.n_samples] for d, g in zip(dists, gaps)]
    fit = est.holder_fit(list(zip(dists, gaps)))
    theory = beta_theory("lemma21", m.r, cfg.coupling.theta)
    tol = cfg.param("tolerance")
    summary = {"beta_hat": fit.beta, "beta_ci": [fit.ci_low, fit.ci_high], "n_used": fit.n_used,
               "excluded": fit.excluded, "beta_theory_lemma21": theory, "threshold": theory - tol,
               "all_se_below_gap_over_3": all(g.std_error < g.mean / 3 for g in gaps)}
    return ExperimentOutput(cols, rows, summary, {"holder": _verdict(fit.beta >= theory - tol)})


def gronwall_tail(gap, alpha, epsilon, K1, T, factor=1.5):
    """``factor * gap^(eps - alpha) (exp(eps K1 T / 2) - 1 + T^2) / T^2``."""
    return factor * gap ** (epsilon - alpha) * (math.expm1(epsilon * K1 * T / 2) + T * T) / (T * T)


def run_audit(cfg: ExperimentConfig, threads=1):
    m, cc = cfg.model, cfg.coupling.resolve(cfg.model.r)
    x = _vec(cfg, "x")
    f = _f(cfg)
    rep = _fit_constants(cfg, cc.theta, cfg.param("condition_pairs"))
    cols = ["distance", "lhs", "lhs_se", "rhs", "rhs_se", "margin", "pooled_se", "p_tau_ge_T", "p_tau_se",
            "mean_abs_1_minus_R", "mean_weight", "mean_weight_se", "tail_bound", "cap_fraction"]
    rows, verdicts, tails = [], {}, []
    for d in cfg.param("gaps"):
        y = x + d * _direction(cfg)
        a = est.coupling_bound_audit(m, f, x, y, cc.T, cfg.samples, cc, cfg.master_seed, threads=threads)
        tb = gronwall_tail(d, cc.alpha, cc.epsilon, rep.fitted_K1, cc.T, cfg.param("tail_factor"))
        rows.append([d, a.lhs, a.lhs_se, a.rhs, a.rhs_se, a.margin, a.pooled_se, a.p_tau_ge_T, a.p_tau_se,
                     a.mean_abs_1_minus_R, a.mean_weight, a.mean_weight_se, tb, a.cap_fraction])
        verdicts[f"audit_gap_{d:g}"] = a.verdict
        verdicts[f"tail_bound_gap_{d:g}"] = _verdict(a.p_tau_ge_T <= tb)
        verdicts[f"cap_events_gap_{d:g}"] = _verdict(a.cap_fraction < 0.01)
        tails.append((d, a.p_tau_ge_T))
    tails.sort()
    verdicts["tail_monotone"] = _verdict(all(p1 <= p2 for (_, p1), (_, p2) in zip(tails, tails[1:])))
    summary = {"alpha": cc.alpha, "epsilon": cc.epsilon, "theta": cc.theta, "T": cc.T, "n_samples": cfg.samples,
               "fitted_K1": rep.fitted_K1, "fitted_delta1": rep.fitted_delta1,
               "test_function_sup_norm": f.sup_norm}
    return ExperimentOutput(cols, rows, summary, verdicts)


def run_irreducibility(cfg: ExperimentConfig, threads=1):
    m = cfg.model
    x, y = _vec(cfg, "x"), _vec(cfg, "y")
    radius, T = cfg.param("radius"), cfg.param("T")
    term = simulate_ensemble(m, x[None], T, cfg.stepper, cfg.samples, cfg.master_seed, threads=threads)[0]
    dist = _hnorm(m, term - y)
    res = est.irreducibility_probe(m, x, y, radius, T, cfg.samples, cfg.stepper, cfg.master_seed,
                                   threads=threads, ci_level=cfg.param("ci_level"))
    cols = ["path", "distance", "hit"]
    rows = [[k, dist[k], int(dist[k] <= radius)] for k in range(cfg.samples)]
    summary = {"hits": res.hits, "n_samples": cfg.samples, "frequency": res.estimate.mean,
               "ci": [res.ci_low, res.ci_high], "ci_level": cfg.param("ci_level"),
               "rho_lower_bound": models.rho_lower_bound(m)}
    return ExperimentOutput(cols, rows, summary, {"irreducibility": res.verdict})


def run_steer(cfg: ExperimentConfig, threads=1):
    m = cfg.model
    z0, y = _vec(cfg, "z0"), _vec(cfg, "y")
    K1 = cfg.param("K1")
    summary = {}
    if K1 is None:
        theta = cfg.param("theta") if cfg.param("theta") is not None else cfg.coupling.theta
        rep = _fit_constants(cfg, theta, cfg.param("condition_pairs"))
        K1 = rep.fitted_K1
        summary["K1_source"] = f"check_conditions(theta={theta})"
    res = steer_deterministic(m, z0, y, cfg.param("t1"), cfg.param("T"), K1, cfg.param("R"),
                              kappa=cfg.param("kappa"), dt=cfg.stepper.dt, tol=cfg.stepper.newton_tol)
    cols = ["t", "gap", "gap_sq_bound"]
    rows = [[t, g, res.bound] for t, g in zip(res.times, res.gaps)]
    summary.update(K1=K1, gain=res.gain, terminal_gap=res.terminal_gap, bound=res.bound,
                   first_violation_time=res.first_violation_time)
    verdicts = {"terminal_gap": _verdict(res.terminal_gap <= cfg.param("tolerance")),
                "decay_bound": _verdict(res.bound_ok)}
    return ExperimentOutput(cols, rows, summary, verdicts)


def run_ergodic(cfg: ExperimentConfig, threads=1):
    m = cfg.model
    starts = np.array([pad(s, m.space) for s in cfg.param("starts")])
    res = est.ergodic_average(m, _f(cfg), starts, cfg.param("T_long"), cfg.param("burn_in"), cfg.param("stride"),
                              cfg.stepper, cfg.master_seed, substreams=cfg.param("substreams"),
                              n_batches=cfg.param("n_batches"))
    cols = ["start", "mean", "std_error", "n_samples"]
    rows = [[i, a.mean, a.std_error, a.n_samples] for i, a in enumerate(res.averages)]
    summary = {"max_abs_pairwise_z": float(np.abs(res.pairwise_z).max()), "pairwise_z": res.pairwise_z.tolist()}
    return ExperimentOutput(cols, rows, summary, {"agreement": res.verdict})


def run_check_conditions(cfg: ExperimentConfig, threads=1):
    sampler = ConditionSampler(**cfg.param("sampler"))
    rep = check_conditions(cfg.model, cfg.param("theta"), cfg.samples, sampler, master_seed=cfg.master_seed)
    rows = [["violations", rep.violations], ["holdout_violations", rep.holdout_violations],
            ["fitted_K1", rep.fitted_K1], ["fitted_delta1", rep.fitted_delta1], ["worst_margin", rep.worst_margin]]
    for group in ("coercivity", "growth", "noise_growth"):
        for key, val in rep.extra[group].items():
            rows.append([f"{group}.{key}", val])
    cols = ["quantity", "value"]
    summary = {"n_pairs": rep.n_pairs, "theta": rep.theta, "violations": rep.violations,
               "holdout_violations": rep.holdout_violations, "fitted_K1": rep.fitted_K1,
               "fitted_delta1": rep.fitted_delta1, "worst_margin": rep.worst_margin, **rep.extra}
    verdicts = {"monotonicity": rep.verdict,
                "coercivity": _verdict(rep.extra["coercivity"]["violations"] == 0 and rep.extra["coercivity"]["c2"] > 0)}
    return ExperimentOutput(cols, rows, summary, verdicts)


def run_exponents(cfg: ExperimentConfig, threads=1):
    kind = cfg.param("kind")
    r = cfg.param("r") if cfg.param("r") is not None else cfg.model.r
    theta = cfg.param("theta")
    summary = {"kind": kind, "r": r, "theta": theta}
    if kind == "corollary31":
        beta, e_star, p_star = corollary31_grid(r, theta, cfg.param("resolution"))
        summary.update(epsilon_star=e_star, p_star=p_star)
    else:
        beta = beta_theory(kind, r, theta)
    summary["beta"] = beta
    return ExperimentOutput(["kind", "r", "theta", "beta"], [[kind, r, theta, beta]], summary, {})


def linear_step_error(dt=1e-3, x1=0.7):
    """Deviation of one implicit step of the linear heat mode from ``x / (1 + dt pi^2)``."""
    from ..integrator import StepperConfig
    from ..models import ModelSpec, NoiseSpec
    from ..spectral import SpaceConfig

    m = ModelSpec(kind="porous_medium", r=1.0, space=SpaceConfig(n_modes=1), noise=NoiseSpec(q=1.0))
    out = advance(m, np.array([[x1]]), np.zeros((1, 1)), dt, StepperConfig(dt=dt))
    return abs(float(out[0, 0]) - x1 / (1 + dt * math.pi**2))


def run_convergence(cfg: ExperimentConfig, threads=1):
    m = cfg.model
    res = convergence_probe(m, _vec(cfg, "x0"), cfg.param("T"), cfg.param("dt_list"), cfg.samples, cfg.stepper,
                            cfg.master_seed, threads=threads)
    lo, hi = cfg.param("slope_range")
    cols = ["dt", "error", "std_error"]
    rows = [[d, e, s] for d, e, s in zip(res.dts, res.errors, res.std_errors)]
    lin = linear_step_error(cfg.stepper.dt)
    summary = {"slope": res.slope, "slope_range": [lo, hi], "n_paths": res.n_paths, "linear_step_error": lin}
    verdicts = {"slope": _verdict(lo <= res.slope <= hi), "linear_step": _verdict(lin <= 1e-14)}
    return ExperimentOutput(cols, rows, summary, verdicts)


RUNNERS = {
    "simulate": run_simulate, "couple": run_couple, "holder": run_holder, "audit": run_audit,
    "irreducibility": run_irreducibility, "steer": run_steer, "ergodic": run_ergodic,
    "check_conditions": run_check_conditions, "exponents": run_exponents, "convergence": run_convergence,
}
