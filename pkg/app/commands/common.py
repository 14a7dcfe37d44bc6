"""
Shared command helpers
Flag groups, config-file merging, dataset loading and name resolution
"""
import argparse
import json
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Sequence

from rapidfuzz import process
from rapidfuzz.distance import Levenshtein

from ..config import get_settings
from ..errors import DateParseError, VocabularyError
from ..models.graph import SPLITS, TemporalKG, Vocabulary, parse_date
from ..models.schemas import LossReduction, ModelName, TeroNorm, TrainConfig
from ..services import DatasetService


class UsageError(Exception):
    """Bad or missing flags (exit code 2)."""


MODEL_NAMES = [m.value for m in ModelName]

# flag dest -> TrainConfig field
TRAIN_FLAGS = {
    "model": "model",
    "learning_rate": "learning_rate",
    "dim": "dim",
    "margin": "margin",
    "n_neg": "n_neg",
    "batch_size": "batch_size",
    "n_epochs": "n_epochs",
    "gamma": "gamma",
    "seed": "seed",
    "patience": "patience",
    "eval_every": "eval_every",
    "loss_reduction": "loss_reduction",
    "tero_norm": "tero_norm",
}


def model_name(value: str) -> str:
    if value not in MODEL_NAMES:
        raise argparse.ArgumentTypeError(f"unknown model {value!r}; valid names: {', '.join(MODEL_NAMES)}")
    return value


def iso_date(value: str) -> date:
    try:
        return parse_date(value, "date")
    except DateParseError as e:
        raise argparse.ArgumentTypeError(str(e))


def add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON file supplying any flag; command-line values win")
    parser.add_argument("--threads", type=int, help="worker thread cap (default: all cores)")
    parser.add_argument("--log-level", help="logging level (default from TKGE_LOG_LEVEL)")


def add_data_flags(parser: argparse.ArgumentParser, required: bool = True) -> None:
    parser.add_argument("--data", required=required,
                        help="directory with train/valid/test.tsv, or a single TSV file to split")
    parser.add_argument("--ratios", type=float, nargs=3, metavar=("TRAIN", "VALID", "TEST"),
                        help="single-file split ratios (default 0.9 0.05 0.05)")
    parser.add_argument("--split-seed", type=int, help="single-file split seed (default 0)")
    parser.add_argument("--split-by-time", type=iso_date, metavar="CUT_DATE",
                        help="chronological split: train = facts before CUT_DATE")
    parser.add_argument("--filter-splits", default="train,valid",
                        help="splits whose facts are filtered when ranking (default train,valid)")


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--model", type=model_name,
                       help=f"one of: {', '.join(MODEL_NAMES)}")
    group.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    group.add_argument("--dim", type=int)
    group.add_argument("--margin", type=float)
    group.add_argument("--n-neg", dest="n_neg", type=int)
    group.add_argument("--batch-size", dest="batch_size", type=int)
    group.add_argument("--n-epochs", "--epochs", dest="n_epochs", type=int)
    group.add_argument("--gamma", type=float, help="DE temporal feature ratio")
    group.add_argument("--seed", type=int)
    group.add_argument("--patience", type=int)
    group.add_argument("--eval-every", dest="eval_every", type=int)
    group.add_argument("--loss-reduction", choices=[r.value for r in LossReduction])
    group.add_argument("--tero-norm", choices=[n.value for n in TeroNorm])


def read_config_file(args: argparse.Namespace) -> Dict[str, Any]:
    if not getattr(args, "config", None):
        return {}
    path = Path(args.config)
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {path} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in data.items()}


def merged_flags(args: argparse.Namespace, keys: Sequence[str]) -> Dict[str, Any]:
    """Config-file values overridden by explicitly given command-line flags."""
    values = {k: v for k, v in read_config_file(args).items() if k in keys}
    for key in keys:
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return values


def build_train_config(args: argparse.Namespace) -> TrainConfig:
    values = merged_flags(args, list(TRAIN_FLAGS))
    if "model" not in values:
        raise UsageError(f"--model is required; valid names: {', '.join(MODEL_NAMES)}")
    return TrainConfig(**{TRAIN_FLAGS[k]: v for k, v in values.items()})


def filter_splits(args: argparse.Namespace) -> List[str]:
    splits = [s.strip() for s in args.filter_splits.split(",") if s.strip()]
    if any(s not in SPLITS for s in splits) or not {"train", "valid"} <= set(splits):
        raise UsageError(f"--filter-splits must include train and valid, drawn from {', '.join(SPLITS)}")
    return splits


def load_kg(args: argparse.Namespace) -> TemporalKG:
    overrides: Dict[str, Any] = {}
    if getattr(args, "ratios", None):
        overrides["ratios"] = tuple(args.ratios)
    if getattr(args, "split_seed", None) is not None:
        overrides["seed"] = args.split_seed
    if getattr(args, "split_by_time", None) is not None:
        overrides["split_by_time"] = args.split_by_time
    service = DatasetService()
    kg, _ = service.load(service.manifest_for(args.data, **overrides), filter_splits=filter_splits(args))
    return kg


def resolve_name(vocab: Vocabulary, name: str) -> int:
    """Exact-match lookup; on failure suggest strings within edit distance 2."""
    if name in vocab:
        return vocab.id_of(name)
    matches = process.extract(name, vocab.strings(), scorer=Levenshtein.distance,
                              score_cutoff=2, limit=5)
    raise VocabularyError(f"unknown {vocab.kind} {name!r}", [m[0] for m in matches])


def output_dir(args: argparse.Namespace, default_leaf: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(get_settings().output_dir) / default_leaf


def write_json(path: Path, payload: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload + "\n", encoding="utf-8")
