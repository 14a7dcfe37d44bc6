"""
Evaluation Command
eval: filtered ranking metrics of a checkpoint on a dataset split
"""
import argparse

from ..config import get_settings
from ..models.schemas import TieMode
from ..services import CheckpointService, EvaluationService
from .common import add_common_flags, add_data_flags, load_kg, write_json
from pathlib import Path


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="filtered MRR / Hits@k / MR of a checkpoint")
    add_common_flags(parser)
    add_data_flags(parser)
    parser.add_argument("--checkpoint", required=True, help="checkpoint directory written by train")
    parser.add_argument("--split", choices=["valid", "test"], default="test")
    parser.add_argument("--tie-mode", choices=[m.value for m in TieMode], default=TieMode.PESSIMISTIC.value)
    parser.add_argument("--per-relation", action="store_true", help="add a per-relation breakdown")
    parser.add_argument("--out", help="report JSON path (default <checkpoint>/<split>_report.json)")
    parser.set_defaults(handler=cmd_eval)


def cmd_eval(args: argparse.Namespace) -> int:
    settings = get_settings()
    kg = load_kg(args)
    checkpoints = CheckpointService(args.checkpoint)
    meta = checkpoints.read_meta()
    checkpoints.check_compatible(meta, kg)
    model, meta = checkpoints.load(settings.torch_dtype)

    evaluator = EvaluationService(kg, TieMode(args.tie_mode), settings.eval_chunk_size)
    report = evaluator.evaluate(kg.split(args.split), model, per_relation=args.per_relation)

    out = Path(args.out) if args.out else Path(args.checkpoint) / f"{args.split}_report.json"
    write_json(out, report.model_dump_json(indent=2))
    print(report.as_table(meta.model.value))
    if report.per_relation:
        for relation, metrics in report.per_relation.items():
            print(f"  {relation:<24} MRR {100 * metrics.mrr:6.2f}  Hit@10 {100 * metrics.hits.get(10, 0.0):6.2f}")
    return 0
