"""Experiment configuration: strict JSON parsing, validation and canonical serialization.

A configuration is a single JSON object::

    {
      "experiment": "couple",
      "model": {"kind": "porous_medium", "r": 2.0, "c": 0.0,
                "space": {"d": 1, "n_modes": 16, "gamma": 1.0, "oversample": 4},
                "noise": {"q": 0.6, "family": "weyl_example"},
                "trunc_radius": null},
      "stepper": {"dt": 0.001},
      "coupling": {"epsilon": 0.5, "theta": 3.0, "T": 0.5},
      "samples": 10000,
      "master_seed": 20240601,
      "output_dir": "runs/couple",
      "params": {"x": [], "y": [], "gap": 0.1, "direction": 1}
    }

Missing keys take their defaults; unknown keys anywhere are errors.
:func:`validate` reports every problem at once.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields

from ..coupling import CouplingConfig
from ..errors import ConfigError, ParameterError
from ..integrator import StepperConfig
from ..models import ModelSpec, NoiseSpec, model_violations
from ..spectral import SpaceConfig

EXPERIMENTS = ("simulate", "couple", "holder", "audit", "irreducibility", "steer", "ergodic",
               "check_conditions", "exponents", "convergence")

TEST_FUNCTION_KEYS = {"kind", "j", "k", "center", "radius"}
SAMPLER_KEYS = {"scale", "near_fraction", "near_min"}

# allowed parameter keys per experiment, with defaults
PARAM_DEFAULTS = {
    "simulate": {"x0": [], "T": 1.0, "trajectory_stride": None},
    "couple": {"x": [], "y": [], "gap": None, "direction": 1, "condition_pairs": 10000},
    "holder": {"x": [], "d0": 0.2, "n_gaps": 5, "direction": 1, "T": 0.5,
               "f": {"kind": "tanh_mode", "j": 1}, "tolerance": 0.1},
    "audit": {"x": [], "gaps": [0.2, 0.1, 0.05], "direction": 1, "f": {"kind": "tanh_mode", "j": 1},
              "condition_pairs": 10000, "tail_factor": 1.5},
    "irreducibility": {"x": [], "y": [], "radius": 0.2, "T": 2.0, "ci_level": 0.99},
    "steer": {"z0": [], "y": [], "t1": 0.0, "T": 1.0, "R": 1.0, "kappa": 1e-9, "K1": None,
              "theta": None, "condition_pairs": 10000, "tolerance": 1e-8},
    "ergodic": {"starts": [[]], "T_long": 200.0, "burn_in": 20.0, "stride": 10, "n_batches": 20,
                "substreams": None, "f": {"kind": "tanh_mode", "j": 1}},
    "check_conditions": {"theta": 3.0, "sampler": {}},
    "exponents": {"kind": "lemma21", "r": None, "theta": 3.0, "resolution": 1e-4},
    "convergence": {"x0": [], "T": 0.5, "dt_list": [0.02, 0.01, 0.005, 0.0025, 0.00125, 0.000625],
                    "slope_range": [0.4, 1.1]},
}

TOP_KEYS = {"experiment", "model", "stepper", "coupling", "samples", "master_seed", "output_dir", "params"}
MODEL_KEYS = {"kind", "r", "c", "space", "noise", "trunc_radius"}


def _dc_keys(cls):
    return {f.name for f in fields(cls)}


@dataclass
class ExperimentConfig:
    experiment: str
    model: ModelSpec = field(default_factory=ModelSpec)
    stepper: StepperConfig = field(default_factory=StepperConfig)
    coupling: CouplingConfig = field(default_factory=CouplingConfig)
    samples: int = 1000
    master_seed: int = 0
    output_dir: str = "spdelab_out"
    params: dict = field(default_factory=dict)

    def param(self, key):
        return self.params.get(key, PARAM_DEFAULTS[self.experiment][key])


def _unknown(section, data, allowed):
    if not isinstance(data, dict):
        return [f"{section} must be a JSON object"]
    return [f"unknown key {section}.{k}" if section else f"unknown key {k}" for k in sorted(set(data) - allowed)]


def _build(cls, section, data, out, **extra):
    """Construct ``cls`` from ``data`` collecting problems instead of raising."""
    if data is None:
        data = {}
    probs = _unknown(section, data, _dc_keys(cls) - set(extra))
    out.extend(probs)
    if probs:
        return None
    try:
        return cls(**data, **extra)
    except (ParameterError, TypeError) as exc:
        out.extend(f"{section}: {p}" for p in str(exc).split("; "))
        return None


def _check_params(experiment, params, out):
    if not isinstance(params, dict):
        out.append("params must be a JSON object")
        return
    allowed = PARAM_DEFAULTS[experiment]
    out.extend(_unknown("params", params, set(allowed)))
    for key in ("f",):
        if key in params and key in allowed:
            out.extend(_unknown(f"params.{key}", params[key], TEST_FUNCTION_KEYS))
    if experiment == "check_conditions" and "sampler" in params:
        out.extend(_unknown("params.sampler", params["sampler"], SAMPLER_KEYS))


def validate(raw) -> list:
    """Every violation in a raw config mapping; empty means valid."""
    out = []
    try:
        _parse(raw, out)
    except ConfigError as exc:
        return exc.violations
    return out


def _parse(raw, out):
    if not isinstance(raw, dict):
        raise ConfigError(["configuration must be a JSON object"])
    out.extend(_unknown("", raw, TOP_KEYS))
    exp = raw.get("experiment")
    if exp not in EXPERIMENTS:
        out.append(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    mraw = raw.get("model", {}) or {}
    model = None
    if isinstance(mraw, dict):
        out.extend(_unknown("model", mraw, MODEL_KEYS))
        space = _build(SpaceConfig, "model.space", mraw.get("space"), out)
        noise_raw = mraw.get("noise") or {}
        noise = None
        if isinstance(noise_raw, dict):
            nprobs = _unknown("model.noise", noise_raw, _dc_keys(NoiseSpec))
            out.extend(nprobs)
            if not nprobs:
                try:
                    noise = NoiseSpec(**noise_raw)
                except (ParameterError, TypeError) as exc:
                    out.extend(f"model.noise: {p}" for p in str(exc).split("; "))
        else:
            out.append("model.noise must be a JSON object")
        if space is not None and noise is not None and not set(mraw) - MODEL_KEYS:
            kw = {k: mraw[k] for k in ("kind", "r", "c", "trunc_radius") if k in mraw}
            base = ModelSpec.__dataclass_fields__
            probs = model_violations(kw.get("kind", base["kind"].default), kw.get("r", base["r"].default),
                                     kw.get("c", base["c"].default), space, noise, kw.get("trunc_radius"))
            if probs:
                out.extend(f"model: {p}" for p in probs)
            else:
                model = ModelSpec(space=space, noise=noise, **kw)
    else:
        out.append("model must be a JSON object")
    stepper = _build(StepperConfig, "stepper", raw.get("stepper"), out)
    craw = raw.get("coupling") or {}
    coupling = None
    if isinstance(craw, dict):
        cprobs = _unknown("coupling", craw, _dc_keys(CouplingConfig) - {"stepper"})
        out.extend(cprobs)
        if not cprobs and stepper is not None:
            try:
                coupling = CouplingConfig(**craw, stepper=stepper)
            except (ParameterError, TypeError) as exc:
                out.extend(f"coupling: {p}" for p in str(exc).split("; "))
            if coupling is not None and model is not None and exp in ("couple", "audit"):
                out.extend(f"coupling: {p}" for p in coupling.violations(model.r))
    else:
        out.append("coupling must be a JSON object")
    samples = raw.get("samples", 1000)
    if not isinstance(samples, int) or isinstance(samples, bool) or samples < 1:
        out.append(f"samples must be a positive integer, got {samples!r}")
    seed = raw.get("master_seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        out.append(f"master_seed must be a 64-bit unsigned integer, got {seed!r}")
    odir = raw.get("output_dir", "spdelab_out")
    if not isinstance(odir, str) or not odir:
        out.append("output_dir must be a non-empty string")
    params = raw.get("params", {}) or {}
    if exp in EXPERIMENTS:
        _check_params(exp, params, out)
        if model is not None and not out:
            out.extend(_semantic_checks(exp, model, coupling, params))
    if out:
        return None
    return ExperimentConfig(experiment=exp, model=model, stepper=stepper, coupling=coupling, samples=samples,
                            master_seed=seed, output_dir=odir, params=dict(params))


def _semantic_checks(exp, model, coupling, params):
    """Cross-field ranges that depend on the experiment."""
    from ..conditions import theta_range_violations

    out = []
    p = {**PARAM_DEFAULTS[exp], **params}
    n = model.space.n_modes
    for key in ("x0", "x", "y", "z0"):
        if key in p and isinstance(p[key], list) and len(p[key]) > n:
            out.append(f"params.{key} has {len(p[key])} coefficients for {n} modes")
    if "direction" in p and not (isinstance(p["direction"], int) and 1 <= p["direction"] <= n):
        out.append(f"params.direction must be a mode index in 1..{n}")
    theta = None
    if exp == "check_conditions":
        theta = p["theta"]
    elif exp in ("couple", "audit") and coupling is not None:
        theta = coupling.theta
    elif exp == "steer" and p["theta"] is not None:
        theta = p["theta"]
    if theta is not None:
        out.extend(theta_range_violations(model, theta))
    if exp == "irreducibility" and p["radius"] is not None and not p["radius"] > 0:
        out.append("params.radius must be > 0")
    if exp == "ergodic" and model.c > 0:
        out.append("ergodic needs model.c <= 0")
    return out


def parse(raw) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig`, raising :class:`ConfigError` listing every violation."""
    out = []
    cfg = _parse(raw, out)
    if out:
        raise ConfigError(out)
    return cfg


def load(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: not valid JSON ({exc})"]) from None
    return parse(raw)


def _dc_dict(obj, skip=()):
    out = {}
    for f in fields(obj):
        if f.name in skip:
            continue
        v = getattr(obj, f.name)
        out[f.name] = list(v) if isinstance(v, tuple) else v
    return out


def serialize(cfg: ExperimentConfig) -> dict:
    """Plain-JSON mapping with every field spelled out; ``parse(serialize(c)) == c``."""
    m = cfg.model
    return {
        "experiment": cfg.experiment,
        "model": {"kind": m.kind, "r": m.r, "c": m.c, "space": _dc_dict(m.space), "noise": _dc_dict(m.noise),
                  "trunc_radius": m.trunc_radius},
        "stepper": _dc_dict(cfg.stepper),
        "coupling": _dc_dict(cfg.coupling, skip=("stepper",)),
        "samples": cfg.samples,
        "master_seed": cfg.master_seed,
        "output_dir": cfg.output_dir,
        "params": cfg.params,
    }


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(serialize(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON; ``output_dir`` is excluded since it does not affect results."""
    data = serialize(cfg)
    data.pop("output_dir")
    return hashlib.sha256(json.dumps(data, sort_keys=True, separators=(",", ":")).encode()).hexdigest()
