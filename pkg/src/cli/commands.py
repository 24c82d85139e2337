# -*- coding: utf-8 -*-
"""
Command-line dispatch for the pipeline subcommands

Every subcommand reads its prerequisites from the output directory and
writes its artifacts back there, next to the resolved configuration.
"""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from ..artifacts import ArtifactStore
from ..bnn.model import BnnModel, init_ann
from ..bnn.priors import MixturePrior
from ..bnn.training import pretrain_ann, train_bnn
from ..checkpoints import load_bnn, load_lpv, load_meta, read_json, save_ann, save_bnn, save_lpv, save_meta, write_json
from ..closedloop.harness import ClosedLoopConfig, run_closed_loop
from ..closedloop.log_io import read_run_csv, write_run_csv, write_summary_json
from ..closedloop.report import compare_runs, safety_report
from ..config import RunConfig, apply_env_overrides, apply_full_scale, load_config, save_config
from ..errors import AcceptanceFailure, ContractViolation, DivergenceError, PipelineError, UndefinedScoreError
from ..meta.adaptation import MetaKnowledge, MetaOptions, adaptation_gain, meta_train
from ..nominal.lpv import LpvModel, bfr, fit_lpv, free_run, one_step_bfr
from ..plant.dataset import TransitionDataset, build_mismatch_dataset, collect_dataset, split_dataset
from ..plant.dataset_io import format_float, read_dataset_csv, write_dataset_csv, write_split_json
from ..plant.dynamics import Box
from ..version import get_full_version
from . import plots

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ACCEPTANCE = 2

SUBCOMMANDS = ("collect", "fit-nominal", "train-bnn", "meta-train", "run", "compare", "eval", "export-plots")


class UsageError(ContractViolation):
    pass


class PipelineArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting with status 2"""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="JSON configuration file")
    common.add_argument("--out", type=Path, default=Path("out"), help="Output directory for all artifacts")
    common.add_argument("--full-scale", action="store_true", help="Use the full-scale training lengths")
    common.add_argument("--threads", type=int, default=1, help="Upper bound on worker threads")
    common.add_argument("--verbose", action="store_true", help="Log per-iteration detail")

    parser = PipelineArgumentParser(prog="asmpc", description="Adaptive scenario-based MPC with meta-learned BNNs")
    parser.add_argument("--version", action="version", version=get_full_version())
    subparsers = parser.add_subparsers(dest="command", required=True, parser_class=PipelineArgumentParser)
    subparsers.add_parser("collect", parents=[common], help="Record the identification and held-out trajectories")
    subparsers.add_parser("fit-nominal", parents=[common], help="Fit the LPV nominal model and mismatch targets")
    subparsers.add_parser("train-bnn", parents=[common], help="Pretrain the ANN and train the global BNN")
    subparsers.add_parser("meta-train", parents=[common], help="Learn the global posterior and update law")
    run = subparsers.add_parser("run", parents=[common], help="Run the closed loop")
    run.add_argument("--model", choices=("maml", "global"), default="maml")
    subparsers.add_parser("compare", parents=[common], help="Run both models and compare them")
    subparsers.add_parser("eval", parents=[common], help="Check acceptance thresholds")
    subparsers.add_parser("export-plots", parents=[common], help="Write per-figure CSV files")
    return parser


def _closed_loop_config(cfg: RunConfig, threads: int) -> ClosedLoopConfig:
    return ClosedLoopConfig(
        steps=cfg.closed_loop["steps"],
        x0=tuple(cfg.closed_loop["x0"]),
        n_mc=cfg.closed_loop["n_mc"],
        multipliers=tuple(cfg.scenario["multipliers"]),
        bounds=tuple(cfg.scenario["bounds"]),
        horizon=cfg.mpc["horizon"],
        q_scale=cfg.mpc["q_scale"],
        r_scale=cfg.mpc["r_scale"],
        p_scale=cfg.mpc["p_scale"],
        penalty_weights=tuple(cfg.mpc["penalty_weights"]),
        max_iterations=cfg.mpc["max_iterations"],
        window=cfg.meta["window"],
        seed=cfg.seeds["closed_loop"],
        dt=cfg.plant["dt"],
        substeps=cfg.plant["substeps"],
        workers=max(1, threads),
    )


def _meta_options(cfg: RunConfig) -> MetaOptions:
    meta = cfg.meta
    return MetaOptions(
        readapt_each_step=meta["readapt_each_step"],
        rollout_mode=meta["rollout_mode"],
        sample_predictions=meta["sample_predictions"],
        kl_mode=meta["kl_mode"],
        kl_weight=meta["kl_weight"],
        n_samples=meta["n_samples"],
    )


def _first_piece(d: TransitionDataset) -> TransitionDataset:
    """Records up to the first collection restart"""
    breaks = np.flatnonzero(~d.continues_previous()[1:]) + 1
    end = int(breaks[0]) if len(breaks) else len(d)
    return d.subset(range(end))


def _free_run_bfr(m: LpvModel, heldout: TransitionDataset):
    piece = _first_piece(heldout)
    try:
        states = free_run(m, piece.x[0], piece.u)
        return bfr(states[1:], piece.x_next)
    except (UndefinedScoreError, DivergenceError, ContractViolation) as e:
        logger.warning(f"Free-run BFR unavailable: {e}")
        return None


def _write_losses(file_path: Path, losses: List[float]) -> None:
    with open(file_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(losses, 1):
            writer.writerow([epoch, format_float(loss)])


def cmd_collect(cfg: RunConfig, store: ArtifactStore, args) -> int:
    plant = cfg.plant
    common = dict(dt=plant["dt"], input_low=plant["input_low"], input_high=plant["input_high"],
                  x0=plant["x0"], substeps=plant["substeps"],
                  collection_box=Box(tuple(plant["collection_low"]), tuple(plant["collection_high"])))
    d = collect_dataset(plant["n_samples"], seed=cfg.seeds["collect"], **common)
    d = split_dataset(d, plant["train_fraction"], seed=cfg.seeds["split"])
    write_dataset_csv(d, store.path("dataset"))
    write_split_json(d, store.path("split"))
    heldout = collect_dataset(plant["heldout_samples"], seed=cfg.seeds["heldout"], **common)
    write_dataset_csv(heldout, store.path("heldout"))
    return EXIT_OK


def cmd_fit_nominal(cfg: RunConfig, store: ArtifactStore, args) -> int:
    d = read_dataset_csv(store.require("dataset"), store.require("split"))
    heldout = read_dataset_csv(store.require("heldout"))
    m = fit_lpv(d.train(), ridge=cfg.nominal["ridge"])
    save_lpv(m, store.path("nominal"))
    score = one_step_bfr(m, d.test())
    print(f"One-step BFR on test records: x1 {score[0]:.2f}%, x2 {score[1]:.2f}%")
    free = _free_run_bfr(m, heldout)
    if free is not None:
        print(f"Free-run BFR on held-out trajectory: x1 {free[0]:.2f}%, x2 {free[1]:.2f}%")
    mismatch = build_mismatch_dataset(d, m)
    write_dataset_csv(mismatch, store.path("mismatch"))
    write_dataset_csv(build_mismatch_dataset(heldout, m), store.path("heldout_mismatch"))
    return EXIT_OK


def cmd_train_bnn(cfg: RunConfig, store: ArtifactStore, args) -> int:
    bnn_cfg = cfg.bnn
    d = read_dataset_csv(store.require("mismatch"), store.require("split"))
    train, test = d.train(), d.test()
    ann = pretrain_ann(init_ann(cfg.seeds["ann"]), train, epochs=bnn_cfg["ann_epochs"],
                       batch_size=bnn_cfg["batch_size"], lr=bnn_cfg["ann_lr"], seed=cfg.seeds["ann"]).model
    save_ann(ann, store.path("ann"))
    prior = MixturePrior(pi=bnn_cfg["prior_pi"], sigma1=bnn_cfg["prior_sigma1"], sigma2=bnn_cfg["prior_sigma2"])
    initial = BnnModel.from_ann(ann, rho_init=bnn_cfg["rho_init"], prior=prior)
    result = train_bnn(initial, train, epochs=bnn_cfg["epochs"], batch_size=bnn_cfg["batch_size"],
                       lr=bnn_cfg["lr"], seed=cfg.seeds["bnn"], validation=test,
                       n_samples=bnn_cfg["n_samples"], sigma_obs=bnn_cfg["sigma_obs"],
                       eval_every=bnn_cfg["eval_every"])
    save_bnn(result.model, store.path("bnn"))
    _write_losses(store.path("bnn_losses"), result.losses)
    return EXIT_OK


def cmd_meta_train(cfg: RunConfig, store: ArtifactStore, args) -> int:
    meta = cfg.meta
    bnn = load_bnn(store.require("bnn"))
    d = read_dataset_csv(store.require("mismatch"))
    nominal = load_lpv(store.require("nominal"))
    mk0 = MetaKnowledge.from_bnn(bnn, window_length=meta["window"])
    result = meta_train(mk0, d, n_tasks_per_iter=meta["n_tasks_per_iter"], K=meta["horizon"],
                        epochs=meta["epochs"], lr_psi=meta["lr_psi"], lr_w=meta["lr_w"],
                        seed=cfg.seeds["meta"], options=_meta_options(cfg), nominal=nominal)
    save_meta(result.knowledge, store.path("meta"))
    _write_losses(store.path("meta_losses"), result.losses)
    if store.exists("heldout_mismatch"):
        adapted, global_mse = adaptation_gain(result.knowledge, read_dataset_csv(store.path("heldout_mismatch")))
        print(f"Held-out one-step MSE: adapted {adapted:.6g}, global {global_mse:.6g}")
    return EXIT_OK


def _run_model(cfg: RunConfig, store: ArtifactStore, model_name: str, threads: int):
    nominal = load_lpv(store.require("nominal"))
    config = _closed_loop_config(cfg, threads)
    if model_name == "maml":
        log = run_closed_loop(load_meta(store.require("meta")), nominal, config, adapt=True, label="maml")
    else:
        log = run_closed_loop(load_bnn(store.require("bnn")), nominal, config, label="global")
    write_run_csv(log, store.path(f"run_{model_name}"))
    if len(log) > 0:
        report = safety_report(log)
        write_summary_json(report.to_dict(), store.path(f"summary_{model_name}"))
        write_dataset_csv(log.online_dataset(), store.path(f"online_{model_name}"))
        print(f"{model_name}: safe fraction {report.constraint_fraction:.3f}, "
              f"containment {report.containment_rate:.3f}, cost {report.cost:.6g}")
    return log


def cmd_run(cfg: RunConfig, store: ArtifactStore, args) -> int:
    _run_model(cfg, store, args.model, args.threads)
    return EXIT_OK


def cmd_compare(cfg: RunConfig, store: ArtifactStore, args) -> int:
    log_maml = _run_model(cfg, store, "maml", args.threads)
    log_global = _run_model(cfg, store, "global", args.threads)
    comparison = compare_runs(log_maml, log_global, cfg.acceptance["settle_threshold"])
    write_json(comparison.to_dict(), store.path("comparison"))
    print(f"Closed-loop cost: maml {comparison.maml.cost:.6g}, global {comparison.global_.cost:.6g}")
    if not comparison.global_x1_settled:
        print("Global model run did not settle x1")
    return EXIT_OK


def evaluate(cfg: RunConfig, store: ArtifactStore) -> List[str]:
    """Run every acceptance check whose artifacts exist; return the failures"""
    acc = cfg.acceptance
    failures: List[str] = []

    d = read_dataset_csv(store.require("dataset"), store.require("split"))
    nominal = load_lpv(store.require("nominal"))
    score = one_step_bfr(nominal, d.test())
    print(f"One-step BFR: x1 {score[0]:.2f}%, x2 {score[1]:.2f}%")
    for j in range(2):
        if score[j] < acc["bfr_min"]:
            failures.append(f"one-step BFR of x{j + 1} {score[j]:.2f}% < {acc['bfr_min']}%")
    if store.exists("heldout"):
        free = _free_run_bfr(nominal, read_dataset_csv(store.path("heldout")))
        if free is not None:
            print(f"Free-run BFR (informative): x1 {free[0]:.2f}%, x2 {free[1]:.2f}%")

    if store.exists("meta") and store.exists("heldout_mismatch"):
        adapted, global_mse = adaptation_gain(load_meta(store.path("meta")),
                                              read_dataset_csv(store.path("heldout_mismatch")))
        print(f"Adaptation: adapted MSE {adapted:.6g}, global MSE {global_mse:.6g}")
        if adapted > global_mse * acc["adaptation_slack"]:
            failures.append(f"adapted MSE {adapted:.6g} exceeds global MSE x {acc['adaptation_slack']}")

    if store.exists("run_maml"):
        rows = read_run_csv(store.path("run_maml"))
        if rows:
            violations = sum(1 for r in rows if r["viol_x"] > 0 or r["viol_u"] > 0)
            tail = [max(abs(r["x1"]), abs(r["x2"])) for r in rows if r["k"] >= acc["tail_start"]]
            containment = float(np.mean([r["contained"] for r in rows]))
            print(f"Closed loop: {violations} violating steps, containment {containment:.3f}")
            if violations:
                failures.append(f"{violations} closed-loop steps violate constraints")
            if tail and max(tail) > acc["tail_norm_max"]:
                failures.append(f"|x|_inf reaches {max(tail):.4g} after step {acc['tail_start']}")
            if containment < acc["containment_min"]:
                failures.append(f"containment rate {containment:.3f} < {acc['containment_min']}")

    if store.exists("comparison"):
        comparison = read_json(store.path("comparison"))
        if not comparison["maml_cheaper"]:
            failures.append("adapted model closed-loop cost is not below the global model's")
    return failures


def cmd_eval(cfg: RunConfig, store: ArtifactStore, args) -> int:
    failures = evaluate(cfg, store)
    if failures:
        raise AcceptanceFailure(failures)
    print("All acceptance checks passed")
    return EXIT_OK


def cmd_export_plots(cfg: RunConfig, store: ArtifactStore, args) -> int:
    out = store.plots_dir
    d = read_dataset_csv(store.require("dataset"), store.require("split"))
    plots.export_nominal_fit(load_lpv(store.require("nominal")), d.test(), out / "nominal_fit.csv")
    plots.export_mismatch_bands(load_meta(store.require("meta")), load_bnn(store.require("bnn")),
                                read_dataset_csv(store.require("heldout_mismatch")), out / "mismatch_bands.csv",
                                n_mc=cfg.bnn["n_mc"], c=cfg.bnn["interval_c"], seed=cfg.seeds["bnn"])
    plots.export_trajectory(store.require("run_maml"), out / "maml_trajectory.csv")
    plots.export_trajectory(store.require("run_global"), out / "global_trajectory.csv")
    return EXIT_OK


COMMANDS: Dict[str, Callable] = {
    "collect": cmd_collect,
    "fit-nominal": cmd_fit_nominal,
    "train-bnn": cmd_train_bnn,
    "meta-train": cmd_meta_train,
    "run": cmd_run,
    "compare": cmd_compare,
    "eval": cmd_eval,
    "export-plots": cmd_export_plots,
}


def main(argv: Optional[List[str]] = None, log_setup: Optional[Callable[[Path, bool], str]] = None) -> int:
    """
    Parse arguments and run one subcommand

    Args:
        argv: Arguments without the program name
        log_setup: Called with (out_dir, verbose) before the subcommand runs

    Returns:
        0 on success, 1 on any pipeline error, 2 when acceptance checks fail
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_ERROR

    if log_setup is not None:
        log_file = log_setup(args.out, args.verbose)
        logger.info(f"Log file: {log_file}")
    logger.info(f"=== asmpc {args.command} ({get_full_version()}) ===")

    try:
        cfg = load_config(args.config)
        if args.full_scale:
            cfg = apply_full_scale(cfg)
        cfg = apply_env_overrides(cfg)
        store = ArtifactStore(args.out)
        save_config(cfg, store.root)
        return COMMANDS[args.command](cfg, store, args)
    except AcceptanceFailure as e:
        logger.error(str(e))
        for failure in e.failures:
            print(f"FAIL: {failure}", file=sys.stderr)
        return EXIT_ACCEPTANCE
    except PipelineError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
