"""Command-line interface: ``dynsbm <command> [options]``.

Commands
--------
simulate   draw a synthetic sequence with its ground truth
fit        a priori (with --memberships) or a posteriori EKF fit
tune       grid search of the process noise hyperparameters
predict    next-step link scores and a held-out AUC report
eval       score estimates against simulated ground truth
diagnose   second-order and particle filter checks on simulated data
replicate  EKF vs static SSBM over seeded simulated runs

Every command writes ``manifest.json`` (config, seed, version) next to its
outputs. The default output directory comes from ``DYNSBM_OUT``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from . import io
from .aposteriori import SearchConfig, fit_sequence
from .ekf import StateSpaceConfig, fit_hyperparams, logit_vec, run_filter
from .exceptions import ConfigurationError, DynSBMError
from .linkpred import blend, block_predict, ewma_predict
from .metrics import adjusted_rand, tracking_mse
from .netcore import block_counts
from .simgen import SimParams, generate

log = logging.getLogger("dynsbm")

DEFAULT_OUT = "dynsbm_out"


def _grid(text):
    """Parse ``"sd:nb,sd:nb,..."``."""
    out = []
    for item in text.split(","):
        try:
            sd, nb = item.split(":")
            out.append((float(sd), float(nb)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid entries must look like s_diag:s_nb, got {item!r}") from None
    return out


def _floats(text):
    return [float(v) for v in text.split(",")]


def build_parser():
    p = argparse.ArgumentParser(prog="dynsbm", description="Dynamic stochastic blockmodels tracked by an EKF.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", default=os.environ.get("DYNSBM_OUT", DEFAULT_OUT), help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("-v", "--verbose", action="store_true")

    def data(sp):
        sp.add_argument("--input", required=True, help="snapshots TSV: t<TAB>src<TAB>dst")
        sp.add_argument("--memberships", help="TSV node<TAB>class or t<TAB>node<TAB>class")
        sp.add_argument("--undirected", action="store_true", help="treat edges as undirected")
        sp.add_argument("--k", type=int, help="number of classes (a posteriori mode)")

    def hyper(sp):
        sp.add_argument("--s-diag", type=float, default=0.01)
        sp.add_argument("--s-nb", type=float, default=0.0025)

    s = sub.add_parser("simulate", help="draw a synthetic sequence")
    common(s)
    s.add_argument("--k", type=int, default=4)
    s.add_argument("--nodes", type=int, default=128)
    s.add_argument("--steps", type=int, default=10)
    s.add_argument("--churn", type=float, default=0.10)
    s.add_argument("--undirected", action="store_true")
    hyper(s)

    s = sub.add_parser("fit", help="fit the EKF to a snapshot sequence")
    common(s)
    data(s)
    hyper(s)
    s.add_argument("--mode", choices=["apriori", "aposteriori"], default="apriori")
    s.add_argument("--max-iter", type=int, default=20)

    s = sub.add_parser("tune", help="select s_diag and s_nb by one-step prediction error")
    common(s)
    data(s)
    s.add_argument("--grid", type=_grid, help="candidates s_diag:s_nb,... (default: 5x5 log grid)")

    s = sub.add_parser("predict", help="link prediction for the step after the input")
    common(s)
    data(s)
    hyper(s)
    s.add_argument("--lambda", dest="lam", type=_floats, help="EWMA memory or comma-separated grid")
    s.add_argument("--w-block", type=_floats, help="block weight or comma-separated grid")
    s.add_argument("--train-fraction", type=float, default=0.7)

    s = sub.add_parser("eval", help="score estimates against simulated truth")
    common(s, seed=False)
    s.add_argument("--input", required=True, help="estimates CSV written by fit")
    s.add_argument("--truth", required=True, help="truth.json written by simulate")
    s.add_argument("--memberships", help="true memberships TSV (needed with --assignments)")
    s.add_argument("--assignments", help="estimated assignments CSV written by fit")

    s = sub.add_parser("diagnose", help="second-order and particle filter checks")
    common(s)
    s.add_argument("--runs", type=int, default=50)
    s.add_argument("--particles", type=int, default=10_000)
    s.add_argument("--nodes", type=int, default=128)

    s = sub.add_parser("replicate", help="EKF vs static SSBM over seeded runs")
    common(s)
    s.add_argument("--runs", type=int, default=50)
    s.add_argument("--undirected", action="store_true")
    s.add_argument("--s-diag", type=float, help="filter s_diag (default: the simulation value)")
    s.add_argument("--s-nb", type=float, help="filter s_nb (default: the simulation value)")
    return p


def _manifest(out, args, **extra):
    config = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    io.write_json(
        out / "manifest.json",
        {"command": args.command, "config": config, "seed": getattr(args, "seed", None), "version": __version__}
        | extra,
    )


def _load(args):
    snapshots, nodes = io.read_snapshots(args.input, directed=not args.undirected)
    memberships = None
    if args.memberships:
        memberships = io.read_memberships(args.memberships, nodes, T=len(snapshots))
    return snapshots, nodes, memberships


def _apriori_only(args, memberships):
    if args.mode == "apriori" and memberships is None:
        raise ConfigurationError("a priori mode needs --memberships")
    if args.mode == "aposteriori" and memberships is not None:
        raise ConfigurationError("a posteriori mode estimates memberships; do not pass --memberships")
    if args.mode == "aposteriori" and not args.k:
        raise ConfigurationError("a posteriori mode needs --k")


def _fit(args, snapshots, memberships):
    """Return (states, assignments) for either mode."""
    if memberships is not None:
        k = memberships[0].k
        cfg = StateSpaceConfig.from_hyperparams(k, args.s_diag, args.s_nb)
        return run_filter([block_counts(s, a) for s, a in zip(snapshots, memberships)], cfg), memberships
    k = args.k
    if not k:
        raise ConfigurationError("--k is required when memberships are estimated")
    cfg = StateSpaceConfig.from_hyperparams(k, args.s_diag, args.s_nb)
    search = SearchConfig(max_iter=getattr(args, "max_iter", 20))
    states, assignments, _ = fit_sequence(snapshots, k, cfg, search, seed=args.seed)
    return states, assignments


def cmd_simulate(args, out):
    params = SimParams(
        n_nodes=args.nodes,
        k=args.k,
        T=args.steps,
        churn_fraction=args.churn,
        s_diag=args.s_diag,
        s_nb=args.s_nb,
        directed=not args.undirected,
        seed=args.seed,
    )
    snapshots, truth = generate(params)
    io.write_snapshots(out / "snapshots.tsv", snapshots)
    io.write_memberships(out / "memberships.tsv", truth.assignments)
    io.write_json(out / "truth.json", {"params": params.to_dict(), "psi": truth.psi, "theta": truth.theta})
    return {"files": ["snapshots.tsv", "memberships.tsv", "truth.json"]}


def cmd_fit(args, out):
    snapshots, nodes, memberships = _load(args)
    _apriori_only(args, memberships)
    states, assignments = _fit(args, snapshots, memberships)
    nodes.write(out / "nodes.tsv")
    io.write_estimates(out / "estimates.csv", states)
    files = ["nodes.tsv", "estimates.csv"]
    if memberships is None:
        io.write_assignments(out / "assignments.csv", assignments, nodes)
        files.append("assignments.csv")
    return {"files": files}


def cmd_tune(args, out):
    snapshots, nodes, memberships = _load(args)
    grid = args.grid or [(sd, nb) for sd in ex.log_grid(0.01) for nb in ex.log_grid(0.0025)]
    source = "memberships"
    if memberships is None:
        # classes estimated once at the default hyperparameters, then held fixed
        args.s_diag, args.s_nb = 0.01, 0.0025
        _, memberships = _fit(args, snapshots, None)
        source = "aposteriori"
    s_diag, s_nb = fit_hyperparams(snapshots, memberships, grid)
    io.write_json(out / "tune.json", {"s_diag": s_diag, "s_nb": s_nb, "grid": grid, "classes_from": source})
    print(f"s_diag={s_diag:g} s_nb={s_nb:g}")
    return {"files": ["tune.json"]}


def cmd_predict(args, out):
    snapshots, nodes, memberships = _load(args)
    states, assignments = _fit(args, snapshots, memberships)
    lam_grid = args.lam or ex.LAMBDA_GRID
    w_grid = args.w_block or ex.W_GRID
    report = ex.link_prediction_eval(snapshots, states, assignments, args.train_fraction, lam_grid, w_grid)
    lam, w = report["lambda_blend"], report["w_block"]
    n = len(nodes)
    scores = blend(block_predict(states[-1], assignments[-1]), ewma_predict(snapshots, lam, n), w)
    labels = nodes.labels
    with open(out / "scores.csv", "w") as fh:
        fh.write("src,dst,score\n")
        for i in range(n):
            for j in range(n):
                if i != j:
                    fh.write(f"{labels[i]},{labels[j]},{scores[i, j]:.10g}\n")
    io.write_json(out / "auc.json", report)
    print(f"test AUC blend={report['auc_blend']:.4f} ewma={report['auc_ewma']:.4f}")
    return {"files": ["scores.csv", "auc.json"]}


def cmd_eval(args, out):
    truth = io.read_json(args.truth)
    psi_true = np.asarray(truth["psi"], dtype=float)
    est = io.read_estimates(args.input)
    T, d = psi_true.shape
    k = int(round(np.sqrt(d)))
    psi_hat = np.zeros((T, d))
    # cells are written column-major: row index b*k + a
    idx = (est["b"] - 1) * k + (est["a"] - 1)
    psi_hat[est["t"] - 1, idx] = logit_vec(est["theta_hat"])

    class _Truth:
        psi = psi_true
        assignments = None

    report = {"mse_logit": tracking_mse(list(psi_hat), _Truth)}
    if args.assignments:
        if not args.memberships:
            raise ConfigurationError("--assignments needs --memberships with the true classes")
        nodes = io.NodeIndex()
        with open(args.memberships) as fh:
            for line in fh:
                if line.strip() and not line.startswith("#"):
                    nodes.add(line.rstrip("\n").split("\t")[-2])
        true_a = io.read_memberships(args.memberships, nodes, T=T)
        est_a = io.read_assignments(args.assignments, nodes, k=k)
        _Truth.assignments = true_a
        ari = [adjusted_rand(a, b) for a, b in zip(est_a, true_a)]
        report |= {
            "ari": ari,
            "mean_ari": float(np.mean(ari)),
            "mse_logit_aligned": tracking_mse(list(psi_hat), _Truth, est_a),
        }
    io.write_json(out / "eval.json", report)
    print(f"MSE={report['mse_logit']:.6g}" + (f" mean ARI={report['mean_ari']:.4f}" if "ari" in report else ""))
    return {"files": ["eval.json"]}


def cmd_diagnose(args, out):
    params = replace(ex.APPROXIMATION, n_nodes=args.nodes)
    summary = ex.diagnose(args.runs, args.seed, params, n_particles=args.particles, particles=args.particles > 0)
    io.write_json(out / "diagnose.json", summary)
    print(f"median second-order eigenvalue {summary['median_second_order']:.3g} vs noise {summary['median_noise']:.3g}")
    return {"files": ["diagnose.json"]}


def cmd_replicate(args, out):
    params = replace(ex.REPLICATION, directed=not args.undirected)
    summary, timing = ex.replicate(args.runs, args.seed, params, args.s_diag, args.s_nb)
    io.write_json(out / "replicate.json", summary)
    io.write_json(out / "timing.json", timing)
    print(f"median ARI EKF={summary['median_ari_ekf']:.4f} SSBM={summary['median_ari_ssbm']:.4f}")
    return {"files": ["replicate.json", "timing.json"]}


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "diagnose": cmd_diagnose,
    "replicate": cmd_replicate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, out)
        _manifest(out, args, **extra)
    except (DynSBMError, ValueError, OSError, ArithmeticError) as err:
        print(f"dynsbm {args.command}: error: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
