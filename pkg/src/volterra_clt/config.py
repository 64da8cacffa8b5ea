"""Experiment configuration: INI-style text with sectioned keys.

Example::

    [experiment]
    kind = clt-rate
    T = 1.0
    steps = 512
    paths = 2000
    eps_ladder = 0.25, 0.125, 0.0625, 0.03125, 0.015625, 0.0078125, 0.00390625
    p_values = 2
    x0_set = 1.0
    master_seed = 12345
    out_dir = out

    [model]
    name = sin-drift
    params = 1.0

    [kernel_k1]
    kind = riemann-liouville
    H = 0.7

    [kernel_k2]
    kind = riemann-liouville
    H = 0.7

Validation collects every problem instead of stopping at the first; error
messages name the offending dotted field, e.g. ``kernel_k1.H``.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field

from .kernels import (CONSTANT, FBM_MOLCHAN_GOLOSOV, RIEMANN_LIOUVILLE,
                      KernelSpec, QuadratureConfig, constant_kernel,
                      fbm_kernel, riemann_liouville)
from .models import BUILTIN_MODELS, ModelSpec, builtin_model
from .solver import KERNEL_INTEGRATED, LEFT_POINT, SchemeConfig

EXPERIMENT_KINDS = ("clt-rate", "moments", "kernel-check", "model-check",
                    "fbm-cov", "holder")

_KERNEL_ALIASES = {
    "constant": CONSTANT,
    "riemann-liouville": RIEMANN_LIOUVILLE,
    "rl": RIEMANN_LIOUVILLE,
    "fbm": FBM_MOLCHAN_GOLOSOV,
    "fbm-molchan-golosov": FBM_MOLCHAN_GOLOSOV,
}

DEFAULT_EPS_LADDER = tuple(2.0 ** -k for k in range(2, 9))


@dataclass
class ExperimentConfig:
    experiment: str
    T: float = 1.0
    steps: int = 512
    paths: int = 1000
    eps_ladder: tuple = DEFAULT_EPS_LADDER
    p_values: tuple = (2.0,)
    x0_set: tuple = ((1.0,),)
    R: float = 1.0
    master_seed: int = 12345
    out_dir: str = "out"
    model_name: str = "sin-drift"
    model_params: tuple = (1.0,)
    model_d: int = 1
    model_m: int = 1
    kernel_k1: KernelSpec = field(default_factory=lambda: riemann_liouville(0.7))
    kernel_k2: KernelSpec = field(default_factory=lambda: riemann_liouville(0.7))
    scheme: SchemeConfig = field(default_factory=SchemeConfig)
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    beta_values: tuple = (1.5,)
    holder_lags: tuple = (32, 64, 128, 256)
    dump_paths: int = 4

    def model(self) -> ModelSpec:
        return builtin_model(self.model_name, self.model_params,
                             d=self.model_d, m=self.model_m)


def _parse_floats(text: str) -> tuple:
    items = [s for s in text.replace(";", ",").split(",") if s.strip()]
    return tuple(float(s) for s in items)


def _parse_vectors(text: str) -> tuple:
    # "0; 0.5; 1" -> ((0,), (0.5,), (1,)); components within a vector are
    # comma-separated, vectors are semicolon-separated.
    vectors = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        vectors.append(tuple(float(s) for s in chunk.split(",") if s.strip()))
    return tuple(vectors)


def _auto_x0_grid(radius: float, d: int) -> tuple:
    import itertools
    pts = [(-radius + 2.0 * radius * k / 4.0) for k in range(5)]
    if d == 1:
        return tuple((p,) for p in pts)
    if d == 2:
        return tuple(tuple(v) for v in itertools.product(pts, pts))
    raise ValueError("automatic initial-point grids support d <= 2")


def _parse_kernel(section, name: str, errors: list) -> KernelSpec | None:
    kind_raw = section.get("kind", "riemann-liouville").strip().lower()
    kind = _KERNEL_ALIASES.get(kind_raw)
    if kind is None:
        errors.append(f"{name}.kind: unknown kernel kind {kind_raw!r}")
        return None
    if kind == CONSTANT:
        try:
            value = float(section.get("value", "1.0"))
        except ValueError:
            errors.append(f"{name}.value: not a number")
            return None
        if value < 0:
            errors.append(f"{name}.value: must be >= 0, got {value}")
            return None
        return constant_kernel(value)
    try:
        H = float(section.get("H", ""))
    except ValueError:
        errors.append(f"{name}.H: missing or not a number")
        return None
    if not 0.0 < H < 1.0:
        errors.append(f"{name}.H: must lie in the open interval (0, 1), got {H}")
        return None
    if kind == RIEMANN_LIOUVILLE:
        return riemann_liouville(H)
    return fbm_kernel(H)


def validate(text: str) -> tuple[ExperimentConfig | None, list[str]]:
    """Parse and validate configuration text.

    Returns (config, []) on success or (None, errors) with every collected
    problem; nothing is raised for invalid input.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    errors: list[str] = []
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        return None, [f"config: unparsable text ({exc.__class__.__name__})"]

    exp = parser["experiment"] if parser.has_section("experiment") else {}
    cfg = ExperimentConfig(experiment="")

    kind = (exp.get("kind", "") or "").strip()
    if kind not in EXPERIMENT_KINDS:
        errors.append(
            f"experiment.kind: {kind!r} is not one of {', '.join(EXPERIMENT_KINDS)}")
    cfg.experiment = kind

    def read_number(key, default, cast, check, message, section=exp,
                    prefix="experiment"):
        raw = section.get(key, None) if hasattr(section, "get") else None
        if raw is None:
            return default
        try:
            val = cast(raw)
        except (TypeError, ValueError):
            errors.append(f"{prefix}.{key}: not a valid number ({raw!r})")
            return default
        if not check(val):
            errors.append(f"{prefix}.{key}: {message}, got {val}")
            return default
        return val

    cfg.T = read_number("T", cfg.T, float, lambda v: v > 0, "must be positive")
    cfg.steps = read_number("steps", cfg.steps, int,
                            lambda v: v >= 1 and (v & (v - 1)) == 0,
                            "must be a power of two")
    cfg.paths = read_number("paths", cfg.paths, int, lambda v: v >= 2,
                            "must be at least 2")
    cfg.R = read_number("R", cfg.R, float, lambda v: v > 0, "must be positive")
    cfg.master_seed = read_number("master_seed", cfg.master_seed, int,
                                  lambda v: v >= 0, "must be nonnegative")
    cfg.dump_paths = read_number("dump_paths", cfg.dump_paths, int,
                                 lambda v: v >= 0, "must be nonnegative")
    cfg.out_dir = exp.get("out_dir", cfg.out_dir) if hasattr(exp, "get") \
        else cfg.out_dir

    if hasattr(exp, "get") and exp.get("eps_ladder"):
        try:
            ladder = _parse_floats(exp["eps_ladder"])
        except ValueError:
            errors.append("experiment.eps_ladder: not a list of numbers")
            ladder = ()
        if ladder:
            if not all(0.0 < e < 1.0 for e in ladder):
                errors.append(
                    "experiment.eps_ladder: entries must lie in (0, 1)")
            elif any(b >= a for a, b in zip(ladder, ladder[1:])):
                errors.append(
                    "experiment.eps_ladder: must be strictly decreasing")
            else:
                cfg.eps_ladder = ladder

    if hasattr(exp, "get") and exp.get("p_values"):
        try:
            pv = _parse_floats(exp["p_values"])
            if any(p < 1 for p in pv):
                errors.append("experiment.p_values: entries must be >= 1")
            else:
                cfg.p_values = pv
        except ValueError:
            errors.append("experiment.p_values: not a list of numbers")

    if hasattr(exp, "get") and exp.get("holder_lags"):
        try:
            lags = tuple(int(float(s)) for s in exp["holder_lags"].split(","))
            if any(l < 1 for l in lags):
                errors.append("experiment.holder_lags: lags must be >= 1")
            else:
                cfg.holder_lags = lags
        except ValueError:
            errors.append("experiment.holder_lags: not a list of integers")

    # model section
    mod = parser["model"] if parser.has_section("model") else {}
    name = (mod.get("name", cfg.model_name) or "").strip() if hasattr(mod, "get") \
        else cfg.model_name
    if name not in BUILTIN_MODELS:
        errors.append(f"model.name: unknown model {name!r}; choose from "
                      f"{', '.join(BUILTIN_MODELS)}")
    cfg.model_name = name
    if hasattr(mod, "get"):
        cfg.model_d = read_number("d", cfg.model_d, int, lambda v: v >= 1,
                                  "must be >= 1", section=mod, prefix="model")
        cfg.model_m = read_number("m", cfg.model_m, int, lambda v: v >= 1,
                                  "must be >= 1", section=mod, prefix="model")
        if mod.get("params") is not None:
            try:
                cfg.model_params = _parse_floats(mod.get("params", ""))
            except ValueError:
                errors.append("model.params: not a list of numbers")
    if name == "zero":
        if hasattr(mod, "get") and mod.get("params"):
            errors.append("model.params: zero model takes no parameters")
        cfg.model_params = ()
    if name in BUILTIN_MODELS:
        try:
            builtin_model(name, cfg.model_params, d=cfg.model_d, m=cfg.model_m)
        except Exception as exc:
            errors.append(f"model.params: {exc}")

    # initial points
    if hasattr(exp, "get") and exp.get("x0_set"):
        raw = exp["x0_set"].strip()
        if raw.lower() == "auto":
            try:
                cfg.x0_set = _auto_x0_grid(cfg.R, cfg.model_d)
            except ValueError as exc:
                errors.append(f"experiment.x0_set: {exc}")
        else:
            try:
                cfg.x0_set = _parse_vectors(raw)
            except ValueError:
                errors.append("experiment.x0_set: not a list of vectors")
    if not cfg.x0_set:
        errors.append("experiment.x0_set: at least one initial point required")
    elif any(len(v) != cfg.model_d for v in cfg.x0_set):
        errors.append(
            f"experiment.x0_set: every vector needs dimension {cfg.model_d}")

    if parser.has_section("kernel_k1"):
        k1 = _parse_kernel(parser["kernel_k1"], "kernel_k1", errors)
        if k1 is not None:
            cfg.kernel_k1 = k1
    if parser.has_section("kernel_k2"):
        k2 = _parse_kernel(parser["kernel_k2"], "kernel_k2", errors)
        if k2 is not None:
            cfg.kernel_k2 = k2

    # scheme and quadrature sections
    sch = parser["scheme"] if parser.has_section("scheme") else {}
    drift_w = (sch.get("drift_weighting", KERNEL_INTEGRATED) or "").strip() \
        if hasattr(sch, "get") else KERNEL_INTEGRATED
    if drift_w not in (KERNEL_INTEGRATED, LEFT_POINT):
        errors.append(f"scheme.drift_weighting: unknown value {drift_w!r}")
        drift_w = KERNEL_INTEGRATED

    quad_sec = parser["quad"] if parser.has_section("quad") else {}
    qpanels = read_number("panels", 8, int, lambda v: v >= 1, "must be >= 1",
                          section=quad_sec, prefix="quad")
    qorder = read_number("gauss_order", 16, int, lambda v: v >= 1,
                         "must be >= 1", section=quad_sec, prefix="quad")
    qsplit = read_number("singularity_split", 0.25, float,
                         lambda v: 0 < v < 1, "must lie in (0, 1)",
                         section=quad_sec, prefix="quad")
    qtol = read_number("abs_tol", 1e-10, float, lambda v: v > 0,
                       "must be positive", section=quad_sec, prefix="quad")
    try:
        cfg.quad = QuadratureConfig(panels=qpanels, gauss_order=qorder,
                                    singularity_split=qsplit, abs_tol=qtol)
        cfg.scheme = SchemeConfig(drift_weighting=drift_w, quad=cfg.quad)
    except Exception as exc:  # defensive: bounds already validated above
        errors.append(f"quad: {exc}")

    hyp = parser["hypotheses"] if parser.has_section("hypotheses") else {}
    if hasattr(hyp, "get") and hyp.get("beta"):
        try:
            betas = _parse_floats(hyp["beta"])
            if any(b <= 1.0 for b in betas):
                errors.append("hypotheses.beta: every beta must exceed 1")
            else:
                cfg.beta_values = betas
        except ValueError:
            errors.append("hypotheses.beta: not a list of numbers")

    if errors:
        return None, errors
    return cfg, []


def config_to_text(cfg: ExperimentConfig) -> str:
    """Serialise a resolved configuration back to parsable text."""
    parser = configparser.ConfigParser()
    parser["experiment"] = {
        "kind": cfg.experiment,
        "T": repr(cfg.T),
        "steps": str(cfg.steps),
        "paths": str(cfg.paths),
        "eps_ladder": ", ".join(repr(e) for e in cfg.eps_ladder),
        "p_values": ", ".join(repr(p) for p in cfg.p_values),
        "x0_set": "; ".join(",".join(repr(c) for c in v) for v in cfg.x0_set),
        "R": repr(cfg.R),
        "master_seed": str(cfg.master_seed),
        "out_dir": cfg.out_dir,
        "holder_lags": ", ".join(str(l) for l in cfg.holder_lags),
        "dump_paths": str(cfg.dump_paths),
    }
    parser["model"] = {
        "name": cfg.model_name,
        "params": ", ".join(repr(p) for p in cfg.model_params),
        "d": str(cfg.model_d),
        "m": str(cfg.model_m),
    }
    for tag, k in (("kernel_k1", cfg.kernel_k1), ("kernel_k2", cfg.kernel_k2)):
        sec = {"kind": k.kind}
        if k.kind == CONSTANT:
            sec["value"] = repr(k.value)
        else:
            sec["H"] = repr(k.H)
        parser[tag] = sec
    parser["scheme"] = {"drift_weighting": cfg.scheme.drift_weighting,
                        "diffusion_weighting": cfg.scheme.diffusion_weighting}
    parser["quad"] = {
        "panels": str(cfg.quad.panels),
        "gauss_order": str(cfg.quad.gauss_order),
        "singularity_split": repr(cfg.quad.singularity_split),
        "abs_tol": repr(cfg.quad.abs_tol),
    }
    parser["hypotheses"] = {"beta": ", ".join(repr(b) for b in cfg.beta_values)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
