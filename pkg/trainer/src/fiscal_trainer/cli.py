"""Command-line entry: train an adapter, then evaluate it."""

from __future__ import annotations

import argparse
import logging
import sys

from .evaluate import evaluate_adapter
from .train import TrainConfig, train


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiscal-trainer",
        description="Low-rank adapter fine-tuning for single-token verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="fine-tune an adapter on a training file")
    t.add_argument("--training-file", required=True)
    t.add_argument("--output-dir", required=True)
    t.add_argument("--base-model", default="tiny-2x64")
    t.add_argument("--rank", type=int, default=8)
    t.add_argument("--alpha", type=float, default=16.0)
    t.add_argument("--learning-rate", type=float, default=1e-2)
    t.add_argument("--max-steps", type=int, default=50)
    t.add_argument("--batch-size", type=int, default=8)
    t.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("eval", help="score an eval file with a saved adapter")
    e.add_argument("--adapter", required=True)
    e.add_argument("--eval-file", required=True)
    e.add_argument("--out", required=True, help="predictions JSONL path")
    e.add_argument("--tau", type=float, default=0.5)
    return parser


def run(argv) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "train":
        config = TrainConfig(
            base_model=args.base_model,
            rank=args.rank,
            alpha=args.alpha,
            learning_rate=args.learning_rate,
            max_steps=args.max_steps,
            batch_size=args.batch_size,
            training_file=args.training_file,
            seed=args.seed,
            output_dir=args.output_dir,
        )
        result = train(config)
        print(
            f"trained {result.steps} steps: loss {result.initial_loss:.4f} -> "
            f"{result.final_loss:.4f}, adapter at {result.adapter_dir}"
        )
        return 0
    result = evaluate_adapter(args.adapter, args.eval_file, args.out, tau=args.tau)
    print(f"accuracy {result.accuracy:.4f} on {result.n} examples -> {result.predictions_path}")
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
