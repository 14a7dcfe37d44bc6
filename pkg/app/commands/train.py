"""
Training Commands
train: fit one model and write its checkpoint; grid: hyperparameter search
"""
import argparse
import json
import logging

from ..errors import DivergenceError
from ..models.schemas import GridSpec
from ..services import CheckpointService, TrainingService
from ..services.training_service import grid_marginals, write_grid_csv
from .common import (
    add_common_flags,
    add_data_flags,
    add_train_flags,
    build_train_config,
    load_kg,
    merged_flags,
    output_dir,
    write_json,
)


logger = logging.getLogger(__name__)

GRID_FLAGS = ("learning_rates", "n_negs", "margins", "dims", "gammas", "batch_sizes")


def register(subparsers) -> None:
    train = subparsers.add_parser("train", help="train one model and save a checkpoint")
    add_common_flags(train)
    add_data_flags(train)
    add_train_flags(train)
    train.add_argument("--out", help="checkpoint directory (default $TKGE_OUTPUT_DIR/<model>)")
    train.set_defaults(handler=cmd_train)

    grid = subparsers.add_parser("grid", help="grid search ranked by validation MRR")
    add_common_flags(grid)
    add_data_flags(grid)
    add_train_flags(grid)
    axes = grid.add_argument_group("grid axes (omitted axes use the default search values)")
    axes.add_argument("--learning-rates", dest="learning_rates", type=float, nargs="+")
    axes.add_argument("--n-negs", dest="n_negs", type=int, nargs="+")
    axes.add_argument("--margins", type=float, nargs="+")
    axes.add_argument("--dims", type=int, nargs="+")
    axes.add_argument("--gammas", type=float, nargs="+")
    axes.add_argument("--batch-sizes", dest="batch_sizes", type=int, nargs="+")
    grid.add_argument("--test-mrr", dest="test_mrr", action="store_true",
                      help="also score each point on the test split and write grid_marginals_test.json")
    grid.add_argument("--out", help="results directory (default $TKGE_OUTPUT_DIR/grid-<model>)")
    grid.set_defaults(handler=cmd_grid)


def cmd_train(args: argparse.Namespace) -> int:
    config = build_train_config(args)
    kg = load_kg(args)
    out = output_dir(args, config.model.value)
    service = TrainingService(kg)
    checkpoints = CheckpointService(out)

    try:
        result = service.train(config)
    except DivergenceError as e:
        model = service.new_model(config)
        model.load_state_dict(e.last_state)
        checkpoints.save(model, kg, epoch=e.epoch - 1, config=config)
        raise

    epoch = result.log.best_epoch or result.log.epochs_run
    checkpoints.save(result.model, kg, epoch=epoch, config=config)
    (out / "train_log.jsonl").write_text(result.log.to_jsonl(), encoding="utf-8")
    if result.valid_report is not None:
        write_json(out / "valid_report.json", result.valid_report.model_dump_json(indent=2))
        print(result.valid_report.as_table(config.model.value))
    else:
        print(f"trained {config.model.value} for {result.log.epochs_run} epoch(s); no validation split")
    print(f"checkpoint written to {out}")
    return 0


def cmd_grid(args: argparse.Namespace) -> int:
    base = build_train_config(args)
    axes = merged_flags(args, GRID_FLAGS)
    grid = GridSpec(base=base, **axes)
    kg = load_kg(args)
    out = output_dir(args, f"grid-{base.model.value}")

    results = TrainingService(kg).grid_search(base.model, grid, record_test=args.test_mrr)
    write_grid_csv(out / "grid.csv", results)
    write_json(out / "grid_marginals.json", json.dumps(grid_marginals(results), indent=2))
    if args.test_mrr:
        write_json(out / "grid_marginals_test.json", json.dumps(grid_marginals(results, "test_mrr"), indent=2))

    for rank, r in enumerate(results[:10], start=1):
        c = r.config
        mrr = "failed" if r.valid_mrr is None else f"{100 * r.valid_mrr:.2f}"
        print(f"{rank:>3}  lr={c.learning_rate:<8g} dim={c.dim:<4} margin={c.margin:<5g} "
              f"n_neg={c.n_neg:<3} gamma={c.gamma:<4g} batch={c.batch_size:<5} MRR={mrr}")
    print(f"{len(results)} configuration(s); results in {out}")
    return 0
