"""Command-line entry point.

One declarative YAML config drives every subcommand; flags override the
few knobs that vary between runs.  Exit codes: 0 success, 1 validation or
configuration errors, 2 backend or I/O errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import pipeline
from .config import ConfigError, load_config
from .core import FiscalError, ModuleKind
from .gateway import GatewayError

logger = logging.getLogger(__name__)

STAGES = {
    "extract": "extract and screen numerical claims from the corpus",
    "synthesize": "run perturbation modules over screened claims",
    "judge": "dual-judge review and unanimity filtering",
    "assemble": "deduplicate and assign leakage-free splits",
    "ablate": "build leave-one-module-out training variants",
    "emit-train": "emit single-token training files",
    "evaluate": "score a triplet file with the verifier backend",
    "sweep": "compute a threshold curve from existing predictions",
    "report-ablation": "render the ablation comparison table",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiscal",
        description="Synthetic financial claim-document dataset pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in STAGES.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the YAML run config")
        p.add_argument("--out", help="override the output directory")
        p.add_argument("--seed", type=int, help="override the run seed")
        p.add_argument(
            "--backend-override",
            action="append",
            default=[],
            metavar="ROLE.KEY=VALUE",
            help="override one backend field, e.g. verifier.base_url=http://host",
        )
        p.add_argument(
            "--exclude-module",
            choices=[k.value for k in ModuleKind if k is not ModuleKind.ORIGINAL],
            help="disable one synthesis module for this run",
        )
        if name in ("evaluate", "sweep"):
            p.add_argument("--tau", type=float, help="decision threshold")
        if name == "evaluate":
            p.add_argument("--triplets", help="triplet file to score (default: test split)")
            p.add_argument("--dataset-id", default="", help="label for the report")
        if name == "sweep":
            p.add_argument(
                "--grid",
                help="comma-separated taus, or an integer N for a uniform N-point grid",
            )
            p.add_argument("--predictions", help="predictions file to sweep")
        if name == "report-ablation":
            p.add_argument("--reports-dir", help="directory of report_*.json files")
    return parser


def _collect_overrides(args: argparse.Namespace) -> dict:
    overrides: dict = {}
    if args.out:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["split.seed"] = args.seed
    if getattr(args, "tau", None) is not None:
        overrides["tau"] = args.tau
    if args.exclude_module:
        overrides[f"modules.{args.exclude_module}.enabled"] = False
    for item in args.backend_override:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(
                f"--backend-override expects ROLE.KEY=VALUE, got {item!r}"
            )
        key, value = item.split("=", 1)
        overrides[f"backends.{key}"] = value
    return overrides


def _parse_grid(raw: Optional[str]) -> Optional[list[float]]:
    if raw is None:
        return None
    if "," in raw:
        return [float(x) for x in raw.split(",") if x.strip()]
    n = int(raw)
    if n < 1:
        raise ConfigError("grid size must be >= 1")
    if n == 1:
        return [0.5]
    return [i / (n - 1) for i in range(n)]


def run(argv: Sequence[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    try:
        config = load_config(args.config, overrides=_collect_overrides(args))
        if args.command == "extract":
            path = pipeline.run_extract(config)
        elif args.command == "synthesize":
            path = pipeline.run_synthesize(config)
        elif args.command == "judge":
            path = pipeline.run_judge(config)
        elif args.command == "assemble":
            path = pipeline.run_assemble(config)
        elif args.command == "ablate":
            path = pipeline.run_ablate(config)
        elif args.command == "emit-train":
            path = pipeline.run_emit_train(config)
        elif args.command == "evaluate":
            report = pipeline.run_evaluate(
                config,
                triplet_file=Path(args.triplets) if args.triplets else None,
                tau=args.tau,
                dataset_id=args.dataset_id,
            )
            print(
                f"P={report.precision:.4f} R={report.recall:.4f} "
                f"F1={report.f1:.4f} Acc={report.accuracy:.4f} tau={report.tau}"
            )
            path = config.out_dir / pipeline.EVAL_DIR / "report.json"
        elif args.command == "sweep":
            path = pipeline.run_sweep(
                config,
                predictions_file=Path(args.predictions) if args.predictions else None,
                grid=_parse_grid(args.grid),
            )
        elif args.command == "report-ablation":
            path = pipeline.run_report_ablation(
                config,
                reports_dir=Path(args.reports_dir) if args.reports_dir else None,
            )
            print(path.read_text(encoding="utf-8"))
        else:  # pragma: no cover - argparse enforces choices
            parser.error(f"unknown command {args.command}")
        print(f"{args.command}: wrote {path}")
        return 0
    except (GatewayError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    except FiscalError as exc:
        logger.error("%s", exc)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
