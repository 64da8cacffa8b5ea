"""Experiment drivers: simulation fan-out, CSV emission and the run manifest.

Monte Carlo work is split into fixed-size chunks of path indices that are
processed by a thread pool and reduced in index order, so outputs are
byte-identical for any pool size.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (HypothesisReport, check_hk1, check_hk2, check_model,
                       fit_rate, holder_exponent, increment_moments,
                       moment_curve, sup_moment_from_maxima, _ols_loglog)
from .config import ExperimentConfig, config_to_text
from .errors import ConfigError
from .kernels import FBM_MOLCHAN_GOLOSOV, fbm_kernel_gram
from .paths import TimeGrid, make_increment_stack
from .solver import (LABEL_DETERMINISTIC, LABEL_LIMIT, LABEL_NORMALIZED,
                     LABEL_PERTURBED, VolterraScheme)

CHUNK_SIZE = 500

RATE_CSV = "rate.csv"
MOMENTS_CSV = "moments.csv"
HYPCHECK_CSV = "hypcheck.csv"
COVARIANCE_CSV = "covariance.csv"
HOLDER_CSV = "holder.csv"
MANIFEST = "run_manifest.json"


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _chunk_indices(paths: int) -> list[np.ndarray]:
    idx = np.arange(paths)
    return [idx[lo:lo + CHUNK_SIZE] for lo in range(0, paths, CHUNK_SIZE)]


def _pool_map(fn, items, threads: int | None):
    workers = threads or os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _dump_trajectory(out_dir: Path, label: str, eps, path_index: int,
                     grid: TimeGrid, values: np.ndarray) -> list[Path]:
    eps_tag = "na" if eps is None else repr(float(eps))
    name = f"trajectory_{label}_eps{eps_tag}_path{path_index}.csv"
    d = values.shape[1]
    rows = [[t] + list(map(float, row))
            for t, row in zip(grid.nodes, values)]
    _write_csv(out_dir / name, ["t"] + [f"v_{k + 1}" for k in range(d)], rows)
    return [out_dir / name]


class RunResult:
    def __init__(self):
        self.outputs: list[Path] = []
        self.hypotheses_passed = True


def _run_clt_rate(cfg: ExperimentConfig, out_dir: Path, threads,
                  dump: bool) -> RunResult:
    res = RunResult()
    grid = TimeGrid(cfg.T, cfg.steps)
    model = cfg.model()
    scheme = VolterraScheme(cfg.kernel_k1, cfg.kernel_k2, grid, cfg.scheme)
    x0_list = [np.asarray(x, dtype=float) for x in cfg.x0_set]
    skeletons = [scheme.deterministic(model, x0) for x0 in x0_list]
    eps_ladder = list(cfg.eps_ladder)

    def work(indices):
        dB = make_increment_stack(cfg.master_seed, indices, grid, model.m)
        limits = [scheme.limit(model, x0, dB, x0_traj=skel)
                  for x0, skel in zip(x0_list, skeletons)]
        out = {}
        dumps = {}
        for eps in eps_ladder:
            sqrt_eps = math.sqrt(eps)
            per_x_max = np.empty((len(x0_list), len(indices)))
            for xi, (x0, skel) in enumerate(zip(x0_list, skeletons)):
                x_eps = scheme.perturbed(model, x0, eps, dB)
                z_eps = (x_eps - skel[None]) / sqrt_eps
                gap = np.sqrt(np.sum((z_eps - limits[xi]) ** 2, axis=2))
                per_x_max[xi] = gap.max(axis=1)
                if dump and xi == 0 and indices[0] == 0:
                    dumps[eps] = (x_eps, z_eps)
            out[eps] = per_x_max.max(axis=0)
        return out, limits[0] if dump and indices[0] == 0 else None, dumps

    chunks = _chunk_indices(cfg.paths)
    results = _pool_map(work, chunks, threads)

    if dump:
        first = results[0]
        n_dump = min(cfg.dump_paths, len(chunks[0]))
        for k in range(n_dump):
            res.outputs += _dump_trajectory(out_dir, LABEL_DETERMINISTIC,
                                            None, k, grid, skeletons[0])
            res.outputs += _dump_trajectory(out_dir, LABEL_LIMIT, None, k,
                                            grid, first[1][k])
            for eps, (x_eps, z_eps) in first[2].items():
                res.outputs += _dump_trajectory(out_dir, LABEL_PERTURBED,
                                                eps, k, grid, x_eps[k])
                res.outputs += _dump_trajectory(out_dir, LABEL_NORMALIZED,
                                                eps, k, grid, z_eps[k])

    rows = []
    for p in cfg.p_values:
        roots = []
        for eps in eps_ladder:
            maxima = np.concatenate([r[0][eps] for r in results])
            moment, root = sup_moment_from_maxima(maxima, p)
            roots.append((eps, moment, root))
        report = fit_rate([(eps, root.value) for eps, _, root in roots], p=p)
        for (eps, moment, root), is_exact in zip(roots, report.exact):
            rows.append([eps, p, moment.value, root.value, root.std_error,
                         cfg.paths, cfg.steps, is_exact,
                         "" if report.slope is None else report.slope,
                         "" if report.intercept is None else report.intercept,
                         "" if report.r_squared is None else report.r_squared])
    _write_csv(out_dir / RATE_CSV,
               ["eps", "p", "lp_error", "lp_error_pth_root", "std_error",
                "paths", "steps", "exact", "slope", "intercept", "r_squared"],
               rows)
    res.outputs.append(out_dir / RATE_CSV)
    return res


def _run_moments(cfg: ExperimentConfig, out_dir: Path, threads,
                 dump: bool) -> RunResult:
    res = RunResult()
    grid = TimeGrid(cfg.T, cfg.steps)
    model = cfg.model()
    scheme = VolterraScheme(cfg.kernel_k1, cfg.kernel_k2, grid, cfg.scheme)
    x0 = np.asarray(cfg.x0_set[0], dtype=float)
    skeleton = scheme.deterministic(model, x0)
    eps_ladder = list(cfg.eps_ladder)

    def work(indices):
        dB = make_increment_stack(cfg.master_seed, indices, grid, model.m)
        limit = scheme.limit(model, x0, dB, x0_traj=skeleton)
        blocks = {"limit": limit}
        for eps in eps_ladder:
            x_eps = scheme.perturbed(model, x0, eps, dB)
            blocks[eps] = (x_eps - skeleton[None]) / math.sqrt(eps)
        return blocks

    chunks = _chunk_indices(cfg.paths)
    results = _pool_map(work, chunks, threads)

    rows = []
    for p in cfg.p_values:
        for key, label, eps_val in \
                [(e, LABEL_NORMALIZED, e) for e in eps_ladder] \
                + [("limit", LABEL_LIMIT, 0.0)]:
            ensemble = np.concatenate([r[key] for r in results], axis=0)
            curve, _ = moment_curve(ensemble, grid, p)
            for est in curve:
                rows.append([est.at_time, p, est.value, est.std_error, label,
                             eps_val])
            if dump and key == eps_ladder[0] and p == cfg.p_values[0]:
                for k in range(min(cfg.dump_paths, ensemble.shape[0])):
                    res.outputs += _dump_trajectory(out_dir, label, eps_val,
                                                    k, grid, ensemble[k])
    _write_csv(out_dir / MOMENTS_CSV,
               ["t", "p", "estimate", "std_error", "label", "eps"], rows)
    res.outputs.append(out_dir / MOMENTS_CSV)
    return res


def _hyp_rows(report: HypothesisReport) -> list[list]:
    rows = []
    for key, val in report.parameters.items():
        rows.append([report.name, key, val, report.passed])
    return rows


def _run_kernel_check(cfg: ExperimentConfig, out_dir: Path, threads,
                      dump: bool) -> RunResult:
    res = RunResult()
    grid = TimeGrid(cfg.T, cfg.steps)
    rows = []
    for beta in cfg.beta_values:
        report = check_hk1(cfg.kernel_k1, cfg.kernel_k2, beta, grid, cfg.quad)
        rows += _hyp_rows(report)
        res.hypotheses_passed &= report.passed
    report2 = check_hk2(cfg.kernel_k1, cfg.kernel_k2, grid, cfg.quad)
    rows += _hyp_rows(report2)
    for gap, m1, m2 in report2.evidence:
        rows.append(["HK2", f"modulus_k1@gap={gap!r}", m1, report2.passed])
        rows.append(["HK2", f"modulus_k2@gap={gap!r}", m2, report2.passed])
    res.hypotheses_passed &= report2.passed
    _write_csv(out_dir / HYPCHECK_CSV, ["name", "parameter", "value", "passed"],
               rows)
    res.outputs.append(out_dir / HYPCHECK_CSV)
    return res


def _run_model_check(cfg: ExperimentConfig, out_dir: Path, threads,
                     dump: bool) -> RunResult:
    res = RunResult()
    model = cfg.model()
    report = check_model(model, samples=1000, box=cfg.R * 5.0,
                         seed=cfg.master_seed)
    rows = _hyp_rows(report)
    res.hypotheses_passed &= report.passed
    _write_csv(out_dir / HYPCHECK_CSV, ["name", "parameter", "value", "passed"],
               rows)
    res.outputs.append(out_dir / HYPCHECK_CSV)
    return res


def _run_fbm_cov(cfg: ExperimentConfig, out_dir: Path, threads,
                 dump: bool) -> RunResult:
    from .kernels import fbm_v_constant

    res = RunResult()
    kernel = cfg.kernel_k2
    if kernel.kind != FBM_MOLCHAN_GOLOSOV:
        raise ConfigError(["kernel_k2.kind: fbm-cov requires the fbm kernel"])
    H = kernel.H
    pts = np.linspace(0.2, 1.0, 5) * cfg.T
    rows = []
    ratios = []
    for s in pts:
        for t in pts:
            recon = fbm_kernel_gram(H, float(s), float(t), cfg.quad)
            structure = s ** (2 * H) + t ** (2 * H) - abs(t - s) ** (2 * H)
            ratio = recon / structure
            ratios.append(ratio)
            rows.append([float(s), float(t), recon, structure, ratio])
    _write_csv(out_dir / COVARIANCE_CSV,
               ["s", "t", "reconstructed", "target", "ratio"], rows)
    res.outputs.append(out_dir / COVARIANCE_CSV)
    ratios = np.asarray(ratios)
    spread = float(ratios.max() / ratios.min() - 1.0)
    fitted = float(ratios.mean())
    hyp_rows = [
        ["FBMCOV", "H", H, spread <= 0.02],
        ["FBMCOV", "fitted_constant", fitted, spread <= 0.02],
        ["FBMCOV", "half_v_constant", 0.5 * fbm_v_constant(H),
         spread <= 0.02],
        ["FBMCOV", "ratio_spread", spread, spread <= 0.02],
    ]
    res.hypotheses_passed &= spread <= 0.02
    _write_csv(out_dir / HYPCHECK_CSV, ["name", "parameter", "value", "passed"],
               hyp_rows)
    res.outputs.append(out_dir / HYPCHECK_CSV)
    return res


def _run_holder(cfg: ExperimentConfig, out_dir: Path, threads,
                dump: bool) -> RunResult:
    res = RunResult()
    grid = TimeGrid(cfg.T, cfg.steps)
    model = cfg.model()
    scheme = VolterraScheme(cfg.kernel_k1, cfg.kernel_k2, grid, cfg.scheme)
    x0 = np.asarray(cfg.x0_set[0], dtype=float)
    skeleton = scheme.deterministic(model, x0)

    def work(indices):
        dB = make_increment_stack(cfg.master_seed, indices, grid, model.m)
        return scheme.limit(model, x0, dB, x0_traj=skeleton)

    chunks = _chunk_indices(cfg.paths)
    ensemble = np.concatenate(_pool_map(work, chunks, threads), axis=0)
    if dump:
        for k in range(min(cfg.dump_paths, ensemble.shape[0])):
            res.outputs += _dump_trajectory(out_dir, LABEL_LIMIT, None, k,
                                            grid, ensemble[k])

    rows = []
    for p in cfg.p_values:
        if p < 2.0:
            continue
        moments = increment_moments(ensemble, grid, p, cfg.holder_lags)
        theta = holder_exponent(ensemble, grid, p, cfg.holder_lags)
        lags = np.asarray([m[1] for m in moments])
        vals = np.asarray([m[2] for m in moments])
        _, _, r2 = _ols_loglog(lags, vals)
        for lag, lag_time, moment in moments:
            rows.append([lag, lag_time, p, moment, theta, r2])
    if not rows:
        raise ConfigError(["experiment.p_values: holder needs some p >= 2"])
    _write_csv(out_dir / HOLDER_CSV,
               ["lag_steps", "lag_time", "p", "moment", "theta", "r_squared"],
               rows)
    res.outputs.append(out_dir / HOLDER_CSV)
    return res


_DISPATCH = {
    "clt-rate": _run_clt_rate,
    "moments": _run_moments,
    "kernel-check": _run_kernel_check,
    "model-check": _run_model_check,
    "fbm-cov": _run_fbm_cov,
    "holder": _run_holder,
}


def run(cfg: ExperimentConfig, *, threads: int | None = None,
        strict: bool = False, dump_trajectories: bool = False) -> int:
    """Execute one experiment; returns the process exit status.

    0 on success, 3 when a hypothesis check failed under strict mode.
    Configuration and divergence failures raise and are mapped to exit
    codes by the command-line wrapper.
    """
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.experiment not in _DISPATCH:
        raise ConfigError([f"experiment.kind: unknown experiment "
                           f"{cfg.experiment!r}"])
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    result = _DISPATCH[cfg.experiment](cfg, out_dir, threads,
                                       dump_trajectories)
    finished = datetime.datetime.now(datetime.timezone.utc).isoformat()
    manifest = {
        "experiment": cfg.experiment,
        "master_seed": cfg.master_seed,
        "version": __version__,
        "started_at": started,
        "finished_at": finished,
        "config_text": config_to_text(cfg),
        "outputs": {p.name: _sha256(p) for p in sorted(set(result.outputs))},
    }
    tmp = out_dir / (MANIFEST + ".tmp")
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, out_dir / MANIFEST)
    if strict and not result.hypotheses_passed:
        return 3
    return 0
