"""Command pipelines: pure functions from a config to (summary, files).

Each stage derives its seeds as (base seed -> stage id -> beta index ->
replicate index), so a stage produces identical numbers whether it runs
standalone or inside the full pipeline, and results never depend on
thread count or scheduling (parallel maps preserve task order).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

import numpy as np

from . import scaling as sc
from .config import ExperimentConfig
from .errors import InvariantViolation, NumericValidityError
from .model import (
    Environment,
    ModelParams,
    centered_window,
    expected_long_edges,
    mean_degree,
    sample_environment,
)
from .records import RecordStore, cache_root
from .resistance import assemble, point_to_set
from .rng import TAG_GENERIC, replicate_seed, stream
from .walk import evolve_heat_kernel, suggest_half_width

_STAGE_IDS = {
    "sample": 1,
    "resistance": 2,
    "heatkernel": 3,
    "exit": 4,
    "delta": 5,
    "spectral": 6,
    "tails": 7,
    "goodradius": 8,
    "chainck": 9,
    "spectral-quenched": 10,
}


def stage_seed(base_seed: int, stage: str, beta_index: int) -> int:
    return replicate_seed(replicate_seed(base_seed, _STAGE_IDS[stage]), beta_index)


def _key(beta: float) -> str:
    return f"{beta:g}"


def _fmt(x) -> str:
    return format(float(x), ".10g")


@contextmanager
def make_pmap(threads: int):
    """An order-preserving parallel map, or None for the sequential path."""
    if threads <= 1:
        yield None
        return
    with ProcessPoolExecutor(max_workers=threads) as pool:
        yield lambda fn, items: pool.map(fn, items, chunksize=1)


# --- stage helpers ----------------------------------------------------------


def _delta_stage(cfg: ExperimentConfig, beta: float, bi: int, pmap):
    seed = stage_seed(cfg.base_seed, "delta", bi)
    ests = sc.collect_lambda(beta, cfg.delta_n_grid, cfg.delta_replicates, seed, pmap)
    fit = sc.fit_power_law([(e.n, e.estimate, e.se) for e in ests])
    try:
        sf = sc.ScalingFunctions(fit.slope)
    except ValueError as exc:
        # a fitted exponent outside (0, 1) is a failed run, not a crash
        raise NumericValidityError(str(exc)) from exc
    return sf, fit, ests


def _lambda_rows(beta: float, ests) -> list:
    rows = []
    for e in ests:
        ai, aj = e.argmax_pair
        rows.append(
            f"{_key(beta)},{e.n},{_fmt(e.estimate)},{_fmt(e.se)},{e.replicates},"
            f"{e.mode},{ai},{aj},{_fmt(e.endpoint_estimate)},{_fmt(e.endpoint_se)}"
        )
    return rows


def _delta_summary(sf, fit, ests) -> dict:
    return {
        "delta_hat": sf.delta_hat,
        "slope_halfwidth": fit.slope_halfwidth,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "points": [[e.n, e.estimate, e.se] for e in ests],
    }


# --- command runners --------------------------------------------------------


def run_sample(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,replicate,long_edges,degree_mean"]
    betas = {}
    files = {}
    for bi, beta in enumerate(cfg.betas):
        seed = stage_seed(cfg.base_seed, "sample", bi)
        params = ModelParams(beta, 0, cfg.sample_window)
        counts = []
        for rep in range(cfg.sample_replicates):
            env = sample_environment(params, replicate_seed(seed, rep))
            counts.append(env.n_long_edges)
            rows.append(
                f"{_key(beta)},{rep},{env.n_long_edges},{_fmt(env.degrees.mean())}"
            )
            if rep == 0:
                files[f"env-{_key(beta)}.txt"] = env.dumps()
        counts = np.array(counts, dtype=float)
        betas[_key(beta)] = {
            "mean_long_edges": float(counts.mean()),
            "se_long_edges": float(counts.std(ddof=1) / np.sqrt(len(counts))),
            "expected_long_edges": expected_long_edges(beta, cfg.sample_window),
            "model_mean_degree": mean_degree(beta),
            "replicates": cfg.sample_replicates,
        }
    files["samples.csv"] = "\n".join(rows) + "\n"
    return {"command": "sample", "betas": betas}, files


def run_resistance(cfg: ExperimentConfig, pmap=None):
    lam_rows = [
        "beta,n,lambda_hat,se,replicates,mode,argmax_i,argmax_j,endpoint,endpoint_se"
    ]
    query_rows = ["beta,n,seed,kind,i,j,value,boundary_flag"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        seed = stage_seed(cfg.base_seed, "resistance", bi)
        ests = sc.collect_lambda(
            beta, cfg.delta_n_grid, cfg.delta_replicates, seed, pmap
        )
        lam_rows.extend(_lambda_rows(beta, ests))
        n = max(cfg.delta_n_grid)
        env_seed = replicate_seed(seed, 999_999)
        env = sample_environment(ModelParams(beta, 0, n), env_seed)
        sys = assemble(env, (0, n), semantics="restricted")
        for q in (
            sys.two_point(0, n - 1),
            sys.two_point(0, n // 2),
            point_to_set(env, n // 2, {0, n - 1}, semantics="restricted"),
        ):
            query_rows.append(q.csv_row(_key(beta), n, env_seed))
        top = ests[-1]
        betas[_key(beta)] = {
            "points": [[e.n, e.estimate, e.se] for e in ests],
            "argmax_pair": list(top.argmax_pair),
            "argmax_counts": top.argmax_counts,
            "tied_pairs": [list(p) for p in top.tied_pairs],
        }
    files = {
        "lambda.csv": "\n".join(lam_rows) + "\n",
        "queries.csv": "\n".join(query_rows) + "\n",
    }
    return {"command": "resistance", "betas": betas}, files


def run_delta(cfg: ExperimentConfig, pmap=None):
    lam_rows = [
        "beta,n,lambda_hat,se,replicates,mode,argmax_i,argmax_j,endpoint,endpoint_se"
    ]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        sf, fit, ests = _delta_stage(cfg, beta, bi, pmap)
        lam_rows.extend(_lambda_rows(beta, ests))
        betas[_key(beta)] = _delta_summary(sf, fit, ests)
    files = {"lambda.csv": "\n".join(lam_rows) + "\n"}
    return {"command": "delta", "betas": betas}, files


def run_heatkernel(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,seed,W,n,p_nn,leak"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        seed = stage_seed(cfg.base_seed, "heatkernel", bi)
        w = suggest_half_width(cfg.window_multiplier, cfg.heatkernel_n_max,
                               cfg.window_max)
        env = sample_environment(centered_window(beta, w), replicate_seed(seed, 0))
        trace = evolve_heat_kernel(env, 0, cfg.heatkernel_n_max)
        for n in range(trace.n_max + 1):
            leak = trace.leak[n] if n < trace.n_max else 0.0
            rows.append(
                f"{_key(beta)},{env.seed},{w},{n},{_fmt(trace.p_return[n])},{_fmt(leak)}"
            )
        betas[_key(beta)] = {
            "window_half_width": w,
            "n_max": trace.n_max,
            "total_leak": trace.total_leak,
            "valid": trace.valid,
            "odd_return_max": trace.odd_return_max,
            "mass_error": trace.mass_error,
        }
    return {"command": "heatkernel", "betas": betas}, {"trace.csv": "\n".join(rows) + "\n"}


def run_spectral(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,flavor,n,p,se"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        ann = sc.spectral_dimension_annealed(
            beta, cfg.spectral_time_grid, cfg.spectral_replicates,
            stage_seed(cfg.base_seed, "spectral", bi),
            window_multiplier=cfg.window_multiplier, window_max=cfg.window_max,
            max_discard=cfg.max_discard, pmap=pmap,
        )
        for n, p, se in zip(ann.times, ann.mean_p, ann.se_p):
            rows.append(f"{_key(beta)},annealed,{n},{_fmt(p)},{_fmt(se)}")
        qseed = stage_seed(cfg.base_seed, "spectral-quenched", bi)
        qgrid = cfg.quenched_time_grid or cfg.spectral_time_grid
        half_max = max(qgrid) // 2
        w = suggest_half_width(cfg.window_multiplier, half_max, cfg.window_max)
        quenched = []
        for q in range(cfg.quenched_envs):
            base = replicate_seed(qseed, q)
            for level in range(4):
                seed_l = base if level == 0 else replicate_seed(base, level)
                env = sample_environment(centered_window(beta, w << level), seed_l)
                try:
                    est = sc.spectral_dimension_quenched(env, qgrid)
                    break
                except NumericValidityError:
                    if level == 3:
                        raise
            quenched.append(est)
            for n, p in zip(est.times, est.mean_p):
                rows.append(f"{_key(beta)},quenched-{q},{n},{_fmt(p)},0")
        betas[_key(beta)] = {
            "annealed_slope": ann.fit.slope,
            "annealed_intercept": ann.fit.intercept,
            "annealed_halfwidth": ann.fit.slope_halfwidth,
            "annealed_spectral_dimension": ann.spectral_dimension,
            "discard_rate": ann.discard_rate,
            "environments_used": ann.environments_used,
            "window_escalations": ann.window_escalations,
            "quenched_slopes": [q.fit.slope for q in quenched],
            "quenched_spectral_dimensions": [q.spectral_dimension for q in quenched],
            "quenched_pooled_slope": sum(q.fit.slope for q in quenched)
            / len(quenched),
            "quenched_time_grid": [int(n) for n in qgrid],
        }
    return {"command": "spectral", "betas": betas}, {"spectral.csv": "\n".join(rows) + "\n"}


def run_exit(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,r,mean_exit,se,used"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        sf, dfit, _ = _delta_stage(cfg, beta, bi, pmap)
        res = sc.exit_time_exponent(
            beta, cfg.exit_r_grid, cfg.exit_replicates,
            stage_seed(cfg.base_seed, "exit", bi), sf,
            window_multiplier=cfg.ball_window_multiplier,
            window_min=cfg.ball_window_min, window_max=cfg.window_max,
            max_discard=cfg.max_discard, pmap=pmap,
        )
        for r, mu, se, used in zip(res.r_grid, res.mean_exit, res.se_exit, res.used):
            rows.append(f"{_key(beta)},{_fmt(r)},{_fmt(mu)},{_fmt(se)},{used}")
        betas[_key(beta)] = {
            "delta_hat": sf.delta_hat,
            "slope": res.fit.slope,
            "intercept": res.fit.intercept,
            "slope_halfwidth": res.fit.slope_halfwidth,
            "predicted_slope": res.predicted_slope,
            "deviation": abs(res.fit.slope - res.predicted_slope),
            "discard_rate": res.discard_rate,
        }
    return {"command": "exit", "betas": betas}, {"exit.csv": "\n".join(rows) + "\n"}


_TAIL_TAGS = ("volume-lower", "volume-upper", "resistance-lower")


def run_tails(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,tag,r,lambda,prob,ci_low,ci_high,used,discarded"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        sf, _, _ = _delta_stage(cfg, beta, bi, pmap)
        samples = sc.ball_samples(
            beta, cfg.tails_r, cfg.tails_replicates, sf.delta_hat,
            stage_seed(cfg.base_seed, "tails", bi),
            window_multiplier=cfg.ball_window_multiplier,
            window_min=cfg.ball_window_min, window_max=cfg.window_max,
            max_discard=cfg.max_discard, pmap=pmap,
        )
        per_tag = {}
        for tag in _TAIL_TAGS:
            curve = sc.tail_curve(
                tag, beta, cfg.tails_r, cfg.tails_lambda_grid,
                cfg.tails_replicates, sf.delta_hat, 0, samples=samples,
            )
            for lam, p, lo, hi in zip(curve.lambdas, curve.probabilities,
                                      curve.ci_low, curve.ci_high):
                rows.append(
                    f"{_key(beta)},{tag},{_fmt(cfg.tails_r)},{_fmt(lam)},"
                    f"{_fmt(p)},{_fmt(lo)},{_fmt(hi)},{curve.used},{curve.discarded}"
                )
            try:
                slope = sc.fit_tail_slope(curve).slope
            except ValueError:
                slope = None
            per_tag[tag] = {
                "probabilities": list(map(float, curve.probabilities)),
                "ci_low": list(map(float, curve.ci_low)),
                "ci_high": list(map(float, curve.ci_high)),
                "slope": slope,
            }
        betas[_key(beta)] = {
            "delta_hat": sf.delta_hat,
            "r": cfg.tails_r,
            "lambda_grid": [float(v) for v in cfg.tails_lambda_grid],
            "used": samples.used,
            "discard_rate": samples.discard_rate,
            "tags": per_tag,
        }
    return {"command": "tails", "betas": betas}, {"tails.csv": "\n".join(rows) + "\n"}


def run_goodradius(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,lambda,frequency,ci_low,ci_high"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        sf, _, _ = _delta_stage(cfg, beta, bi, pmap)
        samples = sc.ball_samples(
            beta, cfg.goodradius_r, cfg.goodradius_replicates, sf.delta_hat,
            stage_seed(cfg.base_seed, "goodradius", bi),
            window_multiplier=cfg.ball_window_multiplier,
            window_min=cfg.ball_window_min, window_max=cfg.window_max,
            max_discard=cfg.max_discard, pmap=pmap,
        )
        curve = sc.tail_curve(
            "good-radius", beta, cfg.goodradius_r, cfg.goodradius_lambda_grid,
            cfg.goodradius_replicates, sf.delta_hat, 0, samples=samples,
        )
        for lam, p, lo, hi in zip(curve.lambdas, curve.probabilities,
                                  curve.ci_low, curve.ci_high):
            rows.append(f"{_key(beta)},{_fmt(lam)},{_fmt(p)},{_fmt(lo)},{_fmt(hi)}")
        complement = 1.0 - curve.probabilities
        pts = [
            (lam, c, max((hi - lo) / 3.92, 1e-6))
            for lam, c, lo, hi in zip(curve.lambdas, complement,
                                      curve.ci_low, curve.ci_high)
            if c > 0
        ]
        decay_slope = sc.fit_power_law(pts).slope if len(pts) >= 3 else None
        betas[_key(beta)] = {
            "delta_hat": sf.delta_hat,
            "r": cfg.goodradius_r,
            "lambda_grid": [float(v) for v in cfg.goodradius_lambda_grid],
            "frequencies": list(map(float, curve.probabilities)),
            "complement_decay_slope": decay_slope,
            "used": samples.used,
            "discard_rate": samples.discard_rate,
        }
    files = {"goodradius.csv": "\n".join(rows) + "\n"}
    return {"command": "goodradius", "betas": betas}, files


def run_chainck(cfg: ExperimentConfig, pmap=None):
    rows = ["beta,draw,x,resistance,chain_sum,level_max_sum,chain_slack,level_slack"]
    betas = {}
    for bi, beta in enumerate(cfg.betas):
        seed = stage_seed(cfg.base_seed, "chainck", bi)
        n = cfg.chain_n
        worst_chain = np.inf
        worst_level = np.inf
        for d in range(cfg.chain_draws):
            env = sample_environment(ModelParams(beta, 0, n), replicate_seed(seed, d))
            x = int(stream(seed, TAG_GENERIC, d).integers(0, n))
            rep = sc.dyadic_chain_check(env, n, x)
            worst_chain = min(worst_chain, rep.chain_slack)
            worst_level = min(worst_level, rep.level_slack)
            rows.append(
                f"{_key(beta)},{d},{x},{_fmt(rep.resistance)},{_fmt(rep.chain_sum)},"
                f"{_fmt(rep.level_max_sum)},{_fmt(rep.chain_slack)},{_fmt(rep.level_slack)}"
            )
        betas[_key(beta)] = {
            "n": n,
            "draws": cfg.chain_draws,
            "min_chain_slack": float(worst_chain),
            "min_level_slack": float(worst_level),
        }
    return {"command": "chainck", "betas": betas}, {"chain.csv": "\n".join(rows) + "\n"}


_ANNEALED_DS_TOLERANCE = 0.2
# single environments wander; the gate reads their pooled mean, at the wider
# tolerance the quenched slope check carries (0.15 on the slope, 0.3 on d_s)
_QUENCHED_DS_TOLERANCE = 0.3


def run_full(cfg: ExperimentConfig, pmap=None):
    """delta -> spectral -> exit -> tails -> goodradius, with the headline
    exponent-consistency gate |d_s - 2/(1 + delta_hat)| bounded."""
    summary = {"command": "full-pipeline", "betas": {}, "invariant_violations": []}
    files = {}
    d_sum, d_files = run_delta(cfg, pmap)
    s_sum, s_files = run_spectral(cfg, pmap)
    e_sum, e_files = run_exit(cfg, pmap)
    t_sum, t_files = run_tails(cfg, pmap)
    g_sum, g_files = run_goodradius(cfg, pmap)
    for f in (d_files, s_files, e_files, t_files, g_files):
        files.update(f)
    for beta in cfg.betas:
        key = _key(beta)
        delta_hat = d_sum["betas"][key]["delta_hat"]
        target = 2.0 / (1.0 + delta_hat)
        ann_ds = s_sum["betas"][key]["annealed_spectral_dimension"]
        quenched_ds = s_sum["betas"][key]["quenched_spectral_dimensions"]
        pooled_ds = sum(quenched_ds) / len(quenched_ds)
        checks = {
            "annealed": abs(ann_ds - target),
            "quenched": [abs(q - target) for q in quenched_ds],
            "quenched_pooled": abs(pooled_ds - target),
        }
        ok = (
            checks["annealed"] <= _ANNEALED_DS_TOLERANCE
            and checks["quenched_pooled"] <= _QUENCHED_DS_TOLERANCE
        )
        if not ok:
            summary["invariant_violations"].append(
                f"beta={key}: spectral dimension off target 2/(1+delta) "
                f"by annealed {checks['annealed']:.3f}, "
                f"quenched pooled {checks['quenched_pooled']:.3f}"
            )
        summary["betas"][key] = {
            "delta": d_sum["betas"][key],
            "spectral": s_sum["betas"][key],
            "exit": e_sum["betas"][key],
            "tails": t_sum["betas"][key],
            "goodradius": g_sum["betas"][key],
            "consistency": {
                "target_spectral_dimension": target,
                "annealed_deviation": checks["annealed"],
                "quenched_deviations": checks["quenched"],
                "quenched_pooled_deviation": checks["quenched_pooled"],
                "annealed_tolerance": _ANNEALED_DS_TOLERANCE,
                "quenched_tolerance": _QUENCHED_DS_TOLERANCE,
                "ok": ok,
            },
        }
    return summary, files


RUNNERS = {
    "sample": run_sample,
    "resistance": run_resistance,
    "heatkernel": run_heatkernel,
    "exit": run_exit,
    "delta": run_delta,
    "spectral": run_spectral,
    "tails": run_tails,
    "goodradius": run_goodradius,
    "chainck": run_chainck,
    "full-pipeline": run_full,
}


def run_config(cfg: ExperimentConfig, force: bool = False, threads: int = 1,
               out_override=None) -> str:
    """Execute a config against the cache; returns the record directory.

    Raises ConfigurationError / NumericValidityError / InvariantViolation
    for the caller to map onto exit codes.
    """
    store = RecordStore(cache_root(cfg, out_override))
    hit = store.check_cache(cfg, force)
    if hit is not None:
        return hit
    with make_pmap(threads) as pmap:
        summary, files = RUNNERS[cfg.command](cfg, pmap)
    rng_accounting = {
        "generator": "philox4x64 keyed by (seed, tag, payload)",
        "base_seed": int(cfg.base_seed),
        "derivation": "base -> stage id -> beta index -> replicate index",
        "stage_ids": _STAGE_IDS,
    }
    rdir = store.write(cfg, summary, files, rng_accounting)
    violations = summary.get("invariant_violations") or []
    if violations:
        raise InvariantViolation(
            f"record written to {rdir}; " + "; ".join(violations)
        )
    return rdir
