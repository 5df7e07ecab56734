"""Command-line subcommands"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Any

from egoact.config import PipelineConfig, load_pipeline_config, settings
from egoact.core.codecs import load_model, model_to_json
from egoact.core.exceptions import ConfigurationError, UsageError
from egoact.core.synth import StreamSpec
from egoact.services.ensemble_service import EnsembleService
from egoact.services.evaluation_service import EvaluationService
from egoact.services.generate_service import generate_dataset
from egoact.services.split_service import SplitService
from egoact.services.stats_service import StatsService
from egoact.services.sweep_service import SweepService
from egoact.services.temporal_service import MODES, TemporalService

logger = logging.getLogger(__name__)


class CommandParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting, so main() owns exit codes"""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _global_options() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("global options")
    group.add_argument("--seed", type=int, help="RNG seed for every seeded stage")
    group.add_argument("--config", type=Path, help="INI run configuration")
    group.add_argument("--out-dir", type=Path, help=f"Artifact directory (default {settings.OUT_DIR})")
    group.add_argument("--aggregate", choices=("mean", "last"), help="Per-frame aggregation of window outputs")
    group.add_argument("--timestep", type=int, help="Window length T")
    group.add_argument("--stride", type=int, help="Training window stride")
    group.add_argument("--active-only", action="store_true", default=None,
                       help="Macro-average only over categories present in the ground truth")
    group.add_argument("--debug", action="store_true", help="Debug logging")

    data = parent.add_argument_group("data sources (override the config file)")
    data.add_argument("--manifest", type=Path, help="Manifest TSV")
    data.add_argument("--features", nargs="+", metavar="ROLE:PATH[:DIM]",
                      help="Feature sources in fusion order; 'datetime' for computed date/time features")
    data.add_argument("--scores", type=Path, help="Phase-1 ensemble scores (role score)")
    data.add_argument("--day-plan", type=Path, help="Day split plan")
    data.add_argument("--fold-plan", type=Path, help="Fold plan")
    data.add_argument("--fold", type=int, help="Fold index within the fold plan")
    data.add_argument("--train-ids", type=Path, help="File of training frame ids")
    data.add_argument("--test-ids", type=Path, help="File of test frame ids")
    return parent


def build_parser() -> CommandParser:
    parent = _global_options()
    parser = CommandParser(
        prog="egoact",
        description="Activity recognition on egocentric photo-streams",
    )
    commands = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    generate = commands.add_parser("generate", parents=[parent], help="Write a synthetic photo-stream")
    generate.add_argument("--users", type=int, default=3)
    generate.add_argument("--days", type=int, default=5, help="Days per user")
    generate.add_argument("--frames-per-day", type=int, default=300)
    generate.add_argument("--persistence", type=float, default=0.95, help="Self-transition probability")
    generate.add_argument("--embedding-dim", type=int, default=21)
    generate.add_argument("--noise", type=float, default=0.5, help="Emission noise scale")
    generate.add_argument("--separation", type=float, default=1.0, help="Distance of category means")
    generate.add_argument("--temperature", type=float, default=1.0, help="Score softmax temperature")
    generate.add_argument("--label-bias", type=str, help="21 comma-separated stationary weights")
    generate.add_argument("--with-color", action="store_true", help="Also write color histograms")
    generate.set_defaults(handler=cmd_generate)

    split = commands.add_parser("split", parents=[parent], help="Build a day split or stratified folds")
    split.add_argument("--mode", choices=("day", "folds"), required=True)
    split.add_argument("--test-fraction", type=float, default=0.3)
    split.add_argument("--search", choices=("exhaustive", "beam"), default="exhaustive")
    split.add_argument("--beam-width", type=int, default=8)
    split.add_argument("--fraction-tolerance", type=float, help=f"Default {settings.FRACTION_TOLERANCE}")
    split.add_argument("--k", type=int, default=10)
    split.add_argument("--validation-fraction", type=float, default=0.1)
    split.set_defaults(handler=cmd_split)

    ensemble = commands.add_parser("train-ensemble", parents=[parent], help="Per-frame random forest")
    ensemble.set_defaults(handler=cmd_train_ensemble)

    temporal = commands.add_parser("train-temporal", parents=[parent], help="Windowed forest or recurrent model")
    temporal.add_argument("--mode", choices=MODES, required=True)
    temporal.set_defaults(handler=cmd_train_temporal)

    sweep = commands.add_parser("sweep-trees", parents=[parent], help="Validation accuracy per tree count")
    sweep.add_argument("--tree-counts", type=int, nargs="+", default=[10, 50, 100, 200, 400])
    sweep.add_argument("--plateau-tolerance", type=float, default=0.005)
    sweep.set_defaults(handler=cmd_sweep_trees)

    evaluate = commands.add_parser("evaluate", parents=[parent], help="Re-evaluate a saved model")
    evaluate.add_argument("--model", type=Path, required=True)
    evaluate.set_defaults(handler=cmd_evaluate)

    dump = commands.add_parser("dump-model", parents=[parent], help="Print a model as JSON")
    dump.add_argument("model", type=Path)
    dump.add_argument("--output", type=Path, help="Write to a file instead of stdout")
    dump.set_defaults(handler=cmd_dump_model)

    describe = commands.add_parser("describe", parents=[parent], help="Label counts per category and user")
    describe.set_defaults(handler=cmd_describe)
    return parser


def _out_dir(args: argparse.Namespace) -> Path:
    return args.out_dir if args.out_dir is not None else Path(settings.OUT_DIR)


def _require_manifest(args: argparse.Namespace) -> Path:
    if args.manifest is None:
        raise UsageError("--manifest is required")
    if not args.manifest.is_file():
        raise UsageError(f"Manifest not found: {args.manifest}")
    return args.manifest


def pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (if any) overlaid with command-line flags"""
    overrides: dict[str, Any] = {
        "manifest": args.manifest,
        "features": args.features,
        "scores": args.scores,
        "day_plan": args.day_plan,
        "fold_plan": args.fold_plan,
        "fold": args.fold,
        "train_ids": args.train_ids,
        "test_ids": args.test_ids,
        "seed": args.seed,
        "out_dir": args.out_dir,
        "timestep": args.timestep,
        "stride": args.stride,
        "aggregate": args.aggregate,
        "active_only": args.active_only,
    }
    try:
        return load_pipeline_config(args.config, overrides)
    except FileNotFoundError as e:
        raise UsageError(str(e)) from None
    except ValueError as e:
        raise ConfigurationError(f"Invalid configuration: {e}") from None


def cmd_generate(args: argparse.Namespace) -> int:
    bias = None
    if args.label_bias:
        try:
            bias = tuple(float(v) for v in args.label_bias.split(","))
        except ValueError:
            raise UsageError(f"--label-bias must be comma-separated numbers, got {args.label_bias!r}") from None
    spec = StreamSpec(
        n_users=args.users,
        days_per_user=args.days,
        frames_per_day=args.frames_per_day,
        persistence=args.persistence,
        embedding_dim=args.embedding_dim,
        noise=args.noise,
        separation=args.separation,
        score_temperature=args.temperature,
        label_bias=bias,
        rng_seed=args.seed if args.seed is not None else 0,
    )
    files = generate_dataset(spec, _out_dir(args), with_color=args.with_color)
    for path in (files.manifest, files.embedding, files.score, files.color):
        if path is not None:
            print(path)
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    service = SplitService(_require_manifest(args), _out_dir(args))
    if args.mode == "day":
        outcome = service.day_split(
            args.test_fraction,
            search=args.search,
            beam_width=args.beam_width,
            tolerance=args.fraction_tolerance,
        )
    else:
        outcome = service.folds(args.k, args.validation_fraction, args.seed if args.seed is not None else 0)
    print(outcome.path)
    for line in outcome.diagnostics:
        print(line)
    return 0


def cmd_train_ensemble(args: argparse.Namespace) -> int:
    config = pipeline_config(args)
    result = EnsembleService(config).run()
    for run in result.runs:
        print(f"{run.split.name}\taccuracy={run.report.accuracy:.6f}\tmacro_f1={run.report.macro_f1:.6f}")
    return 0


def cmd_train_temporal(args: argparse.Namespace) -> int:
    config = pipeline_config(args)
    result = TemporalService(config).run(args.mode)
    print(f"{result.mode}\tT={config.temporal.timestep}\taccuracy={result.report.accuracy:.6f}"
          f"\tmacro_f1={result.report.macro_f1:.6f}")
    return 0


def cmd_sweep_trees(args: argparse.Namespace) -> int:
    rows = SweepService(pipeline_config(args)).run(args.tree_counts, args.plateau_tolerance)
    for row in rows:
        print(f"{row.n_estimators}\t{row.mean_accuracy:.6f}{'  *' if row.plateau else ''}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    report = EvaluationService(pipeline_config(args)).run(args.model)
    print(f"accuracy={report.accuracy:.6f}\tmacro_f1={report.macro_f1:.6f}")
    return 0


def cmd_dump_model(args: argparse.Namespace) -> int:
    text = model_to_json(load_model(args.model))
    if args.output is not None:
        args.output.write_text(text + "\n", encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    manifest_path = _require_manifest(args)
    sys.stdout.write(StatsService.from_path(manifest_path).describe(str(manifest_path)))
    return 0

