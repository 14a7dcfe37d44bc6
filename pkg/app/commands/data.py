"""
Data Commands
prepare: split a dataset into train/valid/test files; stats: dataset counts as JSON
"""
import argparse
import logging
import sys

from ..models.graph import KGBuilder, TemporalKG
from ..services import DatasetService
from ..services.dataset_service import synthetic_raws
from .common import UsageError, add_common_flags, add_data_flags, filter_splits, load_kg, output_dir, write_json


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    prepare = subparsers.add_parser("prepare", help="split a quadruple file into train/valid/test TSVs")
    add_common_flags(prepare)
    add_data_flags(prepare, required=False)
    prepare.add_argument("--synthetic", action="store_true",
                         help="generate the 50-entity temporal-pattern graph instead of reading --data")
    prepare.add_argument("--out", help="output directory")
    prepare.set_defaults(handler=cmd_prepare)

    stats = subparsers.add_parser("stats", help="print dataset statistics as JSON")
    add_common_flags(stats)
    add_data_flags(stats)
    stats.add_argument("--out", help="write the JSON to this file instead of stdout")
    stats.set_defaults(handler=cmd_stats)


def cmd_prepare(args: argparse.Namespace) -> int:
    service = DatasetService()
    if args.synthetic:
        ratios = tuple(args.ratios) if args.ratios else (0.9, 0.05, 0.05)
        builder = KGBuilder()
        quads = builder.intern_all(synthetic_raws())
        result = service.split(quads, ratios, args.split_seed or 0)
        kg = TemporalKG(builder.entities, builder.relations, result.train, result.valid, result.test,
                        filter_splits=filter_splits(args))
        moved = result.moved_to_train
    elif args.data:
        overrides = {}
        if args.ratios:
            overrides["ratios"] = tuple(args.ratios)
        if args.split_seed is not None:
            overrides["seed"] = args.split_seed
        if args.split_by_time is not None:
            overrides["split_by_time"] = args.split_by_time
        manifest = service.manifest_for(args.data, **overrides)
        kg, moved = service.load(manifest, filter_splits=filter_splits(args))
    else:
        raise UsageError("prepare needs --data or --synthetic")

    out = output_dir(args, "prepared")
    service.save_split(out, kg)
    stats = service.stats(kg)
    write_json(out / "stats.json", stats.model_dump_json(indent=2))
    print(f"wrote {stats.n_train}/{stats.n_valid}/{stats.n_test} quadruples to {out} "
          f"({moved} moved to train by the closure rule)")
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    kg = load_kg(args)
    payload = DatasetService().stats(kg).model_dump_json(indent=2)
    if args.out:
        write_json(output_dir(args, "stats.json"), payload)
    else:
        sys.stdout.write(payload + "\n")
    return 0
