"""Simulation experiments: replication, approximation diagnostics, sweeps, link prediction.

Every function takes explicit seeds and returns plain dicts of floats so the
results serialize to JSON deterministically.
"""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from .aposteriori import SearchConfig, fit_sequence
from .ekf import (
    StateSpaceConfig,
    logit_vec,
    plugin_obs_cov,
    run_filter,
    second_order_diagnostic,
)
from .exceptions import ConfigurationError
from .linkpred import auc_pooled, blend, block_predict, ewma_series, tune_blend
from .metrics import MetricReport, adjusted_rand, tracking_mse
from .netcore import block_counts, vec
from .pforacle import pf_filter
from .simgen import SimParams, generate
from .ssbm import spectral_init

__all__ = [
    "REPLICATION",
    "APPROXIMATION",
    "run_seeds",
    "replication_run",
    "replicate",
    "diagnose_run",
    "diagnose",
    "hyperparameter_sweep",
    "link_prediction_run",
    "log_grid",
]

# 128 nodes, 4 classes, 10 steps, 10% churn; directed snapshots
REPLICATION = SimParams(directed=True)
# same generator, fixed classes and undirected snapshots
APPROXIMATION = SimParams(directed=False, churn_fraction=0.0)


def run_seeds(seed, runs):
    """Per-run seeds derived deterministically from a base seed."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(runs)]


def _config(params, s_diag=None, s_nb=None):
    return StateSpaceConfig.from_hyperparams(
        params.k,
        params.s_diag if s_diag is None else s_diag,
        params.s_nb if s_nb is None else s_nb,
    )


def _min_cov_eig_ratio(states):
    # smallest eigenvalue relative to the trace, over all steps
    return min(float(np.linalg.eigvalsh(s.cov)[0] / np.trace(s.cov)) for s in states)


def _static_estimates(snapshots, assignments):
    return [logit_vec(vec(block_counts(s, c).clamped())) for s, c in zip(snapshots, assignments)]


def replication_run(seed, params=REPLICATION, s_diag=None, s_nb=None, search=SearchConfig(), apriori=True):
    """One simulated run comparing the EKF with per-step static fits.

    Returns a dict with mean-over-time ARI of the a posteriori EKF and of
    per-step spectral clustering, tracking MSEs of the a priori and a
    posteriori fits, a covariance health check and the a posteriori fit time.
    """
    params = replace(params, seed=seed)
    snapshots, truth = generate(params)
    k = params.k
    cfg = _config(params, s_diag, s_nb)

    start = time.perf_counter()
    states, assignments, _ = fit_sequence(snapshots, k, cfg, search, seed=seed)
    seconds = time.perf_counter() - start

    ssbm = [spectral_init(s, k, seed=seed, min_size=search.min_class_size) for s in snapshots]
    out = {
        "seed": seed,
        "ari_ekf": float(np.mean([adjusted_rand(a, c) for a, c in zip(assignments, truth.assignments)])),
        "ari_ssbm": float(np.mean([adjusted_rand(a, c) for a, c in zip(ssbm, truth.assignments)])),
        "mse_aposteriori_ekf": tracking_mse(states, truth, assignments),
        "mse_aposteriori_ssbm": tracking_mse(_static_estimates(snapshots, ssbm), truth, ssbm),
        "cov_min_eig_ratio": _min_cov_eig_ratio(states),
        "fit_seconds": seconds,
    }
    if apriori:
        stats = [block_counts(s, c) for s, c in zip(snapshots, truth.assignments)]
        prior_states = run_filter(stats, cfg)
        out["mse_apriori_ekf"] = tracking_mse(prior_states, truth)
        out["mse_apriori_ssbm"] = tracking_mse(_static_estimates(snapshots, truth.assignments), truth)
        out["cov_min_eig_ratio"] = min(out["cov_min_eig_ratio"], _min_cov_eig_ratio(prior_states))
    return out


def replicate(runs=50, seed=0, params=REPLICATION, s_diag=None, s_nb=None, search=SearchConfig()):
    """Replication experiment over ``runs`` seeded runs.

    Returns ``(summary, timing)``. ``summary`` depends only on the inputs;
    wall-clock times are kept apart in ``timing``.
    """
    report = MetricReport()
    timing = []
    for s in run_seeds(seed, runs):
        r = replication_run(s, params, s_diag, s_nb, search)
        timing.append(r.pop("fit_seconds"))
        r.pop("seed")
        report.add(**r)
    agg = report.aggregate()
    ekf, ssbm = report.values("mse_apriori_ekf"), report.values("mse_apriori_ssbm")
    summary = {
        "params": params.to_dict() | {"seed": seed},
        "runs": runs,
        "median_ari_ekf": agg["ari_ekf"]["median"],
        "median_ari_ssbm": agg["ari_ssbm"]["median"],
        "ari_gap": agg["ari_ekf"]["median"] - agg["ari_ssbm"]["median"],
        "apriori_ekf_beats_ssbm_fraction": float(np.mean(ekf <= ssbm)),
        "aggregate": agg,
        "per_run": report.runs,
    }
    return summary, {"fit_seconds": timing, "total_fit_seconds": float(np.sum(timing))}


def diagnose_run(seed, params=APPROXIMATION, n_particles=10_000, particles=True):
    """Approximation checks for one simulated run (a priori, true classes).

    Returns second-order eigenvalue summaries per step ``t >= 2`` and the
    tracking MSE of the static fit, the EKF and both particle filters.
    """
    params = replace(params, seed=seed)
    snapshots, truth = generate(params)
    stats = [block_counts(s, c) for s, c in zip(snapshots, truth.assignments)]
    cfg = _config(params)
    states, predicted = run_filter(stats, cfg, return_predicted=True)

    curves = []
    for st, pred in zip(stats[1:], predicted[1:]):
        rep = second_order_diagnostic(pred, plugin_obs_cov(pred.mean, st.n))
        curves.append(rep.summary())

    out = {
        "seed": seed,
        "second_order": curves,
        "mse_ssbm": tracking_mse(_static_estimates(snapshots, truth.assignments), truth),
        "mse_ekf": tracking_mse(states, truth),
    }
    if particles:
        proper = StateSpaceConfig(cfg.process_cov, init_mean=params.init_mean, init_cov=params.init_cov, diffuse=False)
        for name, lik in (("mse_pf_gaussian", "gaussian"), ("mse_pf_binomial", "binomial")):
            est = pf_filter(stats, proper, n_particles, lik, seed=seed)
            out[name] = tracking_mse([m for m, _ in est], truth)
    return out


def diagnose(runs=50, seed=0, params=APPROXIMATION, n_particles=10_000, particles=True):
    """Aggregate :func:`diagnose_run` over seeded runs.

    Second-order curves are the per-step mean over runs of the min, median and
    max eigenvalue, as in a plot with error bars.
    """
    results = [diagnose_run(s, params, n_particles, particles) for s in run_seeds(seed, runs)]
    steps = len(results[0]["second_order"])
    curves = {}
    for part in ("second_order", "noise"):
        curves[part] = {
            q: [float(np.mean([r["second_order"][t][part][q] for r in results])) for t in range(steps)]
            for q in ("min", "median", "max")
        }
    all_second = [r["second_order"][t]["second_order"]["median"] for r in results for t in range(steps)]
    all_noise = [r["second_order"][t]["noise"]["median"] for r in results for t in range(steps)]
    report = MetricReport()
    for r in results:
        report.add(**{k: v for k, v in r.items() if k.startswith("mse_")})
    agg = report.aggregate()
    summary = {
        "runs": runs,
        "n_particles": n_particles if particles else 0,
        "curves": curves,
        "median_second_order": float(np.median(all_second)),
        "median_noise": float(np.median(all_noise)),
        "mse": agg,
    }
    if particles:
        ekf = agg["mse_ekf"]["median"]
        summary["ratio_ekf_pf_gaussian"] = ekf / agg["mse_pf_gaussian"]["median"]
        summary["ratio_ekf_pf_binomial"] = ekf / agg["mse_pf_binomial"]["median"]
        summary["ratio_pf_gaussian_binomial"] = agg["mse_pf_gaussian"]["median"] / agg["mse_pf_binomial"]["median"]
    return summary


def log_grid(center, decades=2.0, points=5):
    """``points`` log-spaced values spanning ``decades`` around ``center``."""
    return [float(center * 10**e) for e in np.linspace(-decades / 2, decades / 2, points)]


def hyperparameter_sweep(s_diag_grid, s_nb_grid, runs=50, seed=0, params=REPLICATION, search=SearchConfig()):
    """Median a posteriori ARI for every ``(s_diag, s_nb)`` on the grid.

    The same simulated runs are reused at every grid point. Points whose
    process covariance is not PSD are reported with ``"valid": False``.
    """
    seeds = run_seeds(seed, runs)
    data = [generate(replace(params, seed=s)) for s in seeds]
    cells = []
    for sd in s_diag_grid:
        for sn in s_nb_grid:
            try:
                cfg = StateSpaceConfig.from_hyperparams(params.k, sd, sn)
            except ConfigurationError:
                cells.append({"s_diag": sd, "s_nb": sn, "valid": False})
                continue
            aris = []
            for s, (snapshots, truth) in zip(seeds, data):
                _, assignments, _ = fit_sequence(snapshots, params.k, cfg, search, seed=s)
                aris.append(np.mean([adjusted_rand(a, c) for a, c in zip(assignments, truth.assignments)]))
            cells.append({"s_diag": sd, "s_nb": sn, "valid": True, "median_ari": float(np.median(aris))})
    valid = [c["median_ari"] for c in cells if c["valid"]]
    return {
        "cells": cells,
        "best": float(max(valid)),
        "worst": float(min(valid)),
        "spread": float(max(valid) - min(valid)),
    }


LAMBDA_GRID = [0.0, 0.25, 0.5, 0.75, 0.9]
W_GRID = [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]


def link_prediction_run(seed, params=REPLICATION, train_fraction=0.7, lam_grid=LAMBDA_GRID, w_grid=W_GRID):
    """EWMA vs EKF + EWMA blend on one simulated run (a priori, true classes).

    Both predictors are tuned on the first ``train_fraction`` of the
    one-step-ahead predictions and scored on the rest.
    """
    params = replace(params, seed=seed)
    snapshots, truth = generate(params)
    stats = [block_counts(s, c) for s, c in zip(snapshots, truth.assignments)]
    states = run_filter(stats, _config(params))
    return link_prediction_eval(snapshots, states, truth.assignments, train_fraction, lam_grid, w_grid)


def link_prediction_eval(snapshots, states, assignments, train_fraction=0.7, lam_grid=LAMBDA_GRID, w_grid=W_GRID):
    """Tune on a prefix of one-step-ahead predictions and score the remainder."""
    steps = list(range(len(snapshots) - 1))
    if len(steps) < 2:
        raise ConfigurationError("link prediction needs at least 3 snapshots")
    n_train = min(max(1, int(round(train_fraction * len(steps)))), len(steps) - 1)
    train, test = steps[:n_train], steps[n_train:]
    block = [block_predict(s, c) for s, c in zip(states, assignments)]
    zeros = [np.zeros_like(b) for b in block]

    lam_e, _, train_ewma = tune_blend(snapshots, zeros, train, lam_grid, [0.0])
    lam_b, w_b, train_blend = tune_blend(snapshots, block, train, lam_grid, w_grid)

    n = max(s.n_nodes for s in snapshots)
    targets = [snapshots[t + 1] for t in test]
    ewma_e = list(ewma_series(snapshots, lam_e, n))
    ewma_b = list(ewma_series(snapshots, lam_b, n))
    return {
        "lambda_ewma": lam_e,
        "lambda_blend": lam_b,
        "w_block": w_b,
        "train_auc_ewma": train_ewma,
        "train_auc_blend": train_blend,
        "auc_ewma": auc_pooled([ewma_e[t] for t in test], targets),
        "auc_blend": auc_pooled([blend(block[t], ewma_b[t], w_b) for t in test], targets),
    }
