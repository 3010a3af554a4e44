"""
Command line front end.

Usage::

    efshap [--threads N] [--log FILE] [--verbose] <subcommand> [options]

Subcommands ``synth``, ``etl``, ``train``, ``tune``, ``eval``, ``explain``,
``embed`` and ``plot`` run one stage; ``run`` executes a pipeline file and writes
its manifest. Any pipeline error prints ``error: <message>`` on stderr and exits
with code 1.
"""

import argparse
import logging
import sys
from typing import List, Optional

from src.cli import stages
from src.cli.pipeline import run_pipeline_file
from src.embed.tsne import TsneConfig
from src.etl.cases import EtlConfig
from src.etl.pipeline import SPLITS
from src.gbt.params import Hyperparams
from src.synth.cohort import CohortConfig
from src.utils.config import load_json_config
from src.utils.errors import ConfigError, EfshapError
from src.utils.general_func import resolve_threads
from src.utils.run_log import RunLog
from src.viz.plots import INPUT_KEYS, KINDS, MEASURES, PlotSpec

run_log = RunLog()


def _config(path: Optional[str]) -> dict:
    return load_json_config(path) if path else {}


def _plot_spec(args: argparse.Namespace) -> PlotSpec:
    if args.config:
        return PlotSpec.from_dict(_config(args.config))
    if not args.kind:
        raise ConfigError("plot: either --config or --kind is required")
    inputs = {k: getattr(args, k) for k in INPUT_KEYS if getattr(args, k) is not None}
    data = {'kind': args.kind, 'inputs': inputs}
    for key in ("feature", "color_by", "measure", "top_k", "seed", "title", "width", "height"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    return PlotSpec.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="efshap", description="EF prediction, TreeSHAP explanation and t-SNE.")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (0 = all CPUs); falls back to EFSHAP_THREADS")
    parser.add_argument("--log", default=None, help="append the run log to this file")
    parser.add_argument("--verbose", action="store_true", help="echo the run log to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", help="cohort config JSON")
    p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    p.add_argument("--out", required=True, help="raw table directory")

    p = sub.add_parser("etl", help="clean raw tables into split case matrices")
    p.add_argument("--config", help="ETL config JSON")
    p.add_argument("--raw", required=True, help="raw table directory")
    p.add_argument("--maps", help="directory with ndc_to_atc.tsv and icd9_to_icd10.tsv")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train a boosted tree model")
    p.add_argument("--config", "--params", dest="config", help="hyperparameter JSON")
    p.add_argument("--cases", required=True, help="ETL output or case directory")
    p.add_argument("--out", required=True, help="model JSON path")

    p = sub.add_parser("tune", help="coordinate-descent hyperparameter search")
    p.add_argument("--config", "--grid", dest="config", required=True, help="tuning grid JSON")
    p.add_argument("--cases", required=True, help="ETL output or case directory")
    p.add_argument("--out", required=True, help="best hyperparameter JSON path")

    p = sub.add_parser("eval", help="evaluate a model on one split")
    p.add_argument("--model", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--seed-runs", type=int, default=0, help="repeat training with this many seeds")

    p = sub.add_parser("explain", help="TreeSHAP values of one split")
    p.add_argument("--model", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", required=True, help="SHAP directory")
    p.add_argument("--top-k", type=int, default=None)

    p = sub.add_parser("embed", help="t-SNE of SHAP or raw-feature rows")
    p.add_argument("--config", help="t-SNE config JSON")
    p.add_argument("--space", choices=sorted(stages.SPACES), default="shap")
    p.add_argument("--input", help="SHAP directory or case directory, depending on --space")
    p.add_argument("--shap", help="SHAP directory (shap space)")
    p.add_argument("--cases", help="ETL output or case directory (raw space)")
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--out", required=True, help="embedding CSV path")

    p = sub.add_parser("plot", help="render one SVG figure")
    p.add_argument("--config", help="plot spec JSON; otherwise the flags below build one")
    p.add_argument("--kind", choices=KINDS)
    for key in INPUT_KEYS:
        p.add_argument(f"--{key}", default=None)
    p.add_argument("--feature")
    p.add_argument("--color-by", dest="color_by")
    p.add_argument("--measure", choices=MEASURES)
    p.add_argument("--top", dest="top_k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--title")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--out", required=True, help="SVG path")

    p = sub.add_parser("run", help="run a pipeline file")
    p.add_argument("pipeline", help="pipeline JSON")
    return parser


def dispatch(args: argparse.Namespace) -> None:
    threads = resolve_threads(args.threads)
    command = args.command
    if command == "synth":
        cohort = _config(args.config)
        if args.seed is not None:
            cohort = {**cohort, 'seed': args.seed}
        stages.synth_stage(CohortConfig.from_dict(cohort), args.out, threads)
    elif command == "etl":
        stages.etl_stage(EtlConfig.from_dict(_config(args.config)), args.raw, args.out, args.maps, threads)
    elif command == "train":
        stages.train_stage(Hyperparams.from_dict(_config(args.config)), args.cases, args.out)
    elif command == "tune":
        stages.tune_stage(stages.read_grid_config(_config(args.config)), args.cases, args.out)
    elif command == "eval":
        stages.eval_stage(args.model, args.cases, args.out, args.seed_runs, args.split)
    elif command == "explain":
        stages.explain_stage(args.model, args.cases, args.out, args.top_k, threads, args.split)
    elif command == "embed":
        shap, cases = args.shap, args.cases
        if args.input is not None:
            if args.space == "shap":
                shap = args.input
            else:
                cases = args.input
        stages.embed_stage(TsneConfig.from_dict(_config(args.config)), args.space, args.out, shap, cases,
                           args.split)
    elif command == "plot":
        stages.plot_stage(_plot_spec(args), args.out)
    else:
        run_pipeline_file(args.pipeline, args.threads)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the ``efshap`` command.

    Returns
    -------
    int
        0 when every stage succeeded, 1 on a pipeline error.
    """
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    run_log.clear()
    run_log.add(f"efshap {args.command} started")
    code = 0
    try:
        dispatch(args)
        run_log.add(f"efshap {args.command} finished")
    except EfshapError as e:
        run_log.add(str(e), level="ERROR")
        print(f"error: {e}", file=sys.stderr)
        code = 1
    if args.log:
        try:
            run_log.save_to_file(args.log)
        except OSError as e:
            print(f"error: {args.log}: cannot write run log ({e.strerror or e})", file=sys.stderr)
            code = 1
    return code


if __name__ == "__main__":
    sys.exit(main())
