"""
Inference Command
infer: plausibility trajectories and heatmaps of job-skill facts over a time grid
"""
import argparse
import logging
from pathlib import Path
from typing import List, Optional

from ..config import get_settings
from ..errors import ForecastError
from ..models.graph import TemporalKG, Vocabulary
from ..models.schemas import TimeGrid, TimeStep
from ..services import CheckpointService, ForecastingService
from ..services.forecasting_service import (
    candidate_facts,
    typed_candidates,
    write_heatmap_csv,
    write_series_csv,
)
from .common import UsageError, add_common_flags, iso_date, load_kg, resolve_name


logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("infer", help="score job-skill facts over a time grid")
    add_common_flags(parser)
    parser.add_argument("--checkpoint", required=True, help="checkpoint directory written by train")
    parser.add_argument("--job", required=True, help="head entity name (exact match)")
    parser.add_argument("--relation", required=True, help="relation name (exact match)")
    skills = parser.add_mutually_exclusive_group()
    skills.add_argument("--skills-file", help="one skill name per line")
    skills.add_argument("--skills", nargs="+", help="skill names")
    parser.add_argument("--data", help="dataset; enables typed candidates and --exclude-seen")
    parser.add_argument("--filter-splits", default="train,valid", help=argparse.SUPPRESS)
    parser.add_argument("--exclude-seen", action="store_true",
                        help="drop skills already paired with the job in train (needs --data)")
    parser.add_argument("--from", dest="start", type=iso_date, required=True, metavar="DATE")
    parser.add_argument("--to", dest="end", type=iso_date, required=True, metavar="DATE")
    parser.add_argument("--step", choices=[s.value for s in TimeStep], default=TimeStep.QUARTERLY.value)
    parser.add_argument("--dates", type=iso_date, nargs="+", help="explicit grid dates (with --step explicit)")
    parser.add_argument("--heatmap", action="store_true", help="write the top-k heatmap instead of series")
    parser.add_argument("--top-k", dest="top_k", type=int, default=10)
    parser.add_argument("--aggregate", action="store_true", help="add the mean-over-skills series")
    parser.add_argument("--out", help="output CSV path (default <checkpoint>/forecast.csv or heatmap.csv)")
    parser.set_defaults(handler=cmd_infer)


def read_skill_names(args: argparse.Namespace) -> Optional[List[str]]:
    if args.skills:
        return list(args.skills)
    if not args.skills_file:
        return None
    path = Path(args.skills_file)
    if not path.exists():
        raise UsageError(f"skills file {path} does not exist")
    names = [line.strip() for line in path.read_text(encoding="utf-8").splitlines()]
    return [n for n in names if n and not n.startswith("#")]


def build_grid(args: argparse.Namespace) -> TimeGrid:
    step = TimeStep(args.step)
    if step == TimeStep.EXPLICIT and not args.dates:
        raise UsageError("--step explicit needs --dates")
    if args.end < args.start:
        raise UsageError(f"--to {args.end} precedes --from {args.start}")
    return TimeGrid(start=args.start, end=args.end, step=step, dates=args.dates or [])


def resolve_skills(args: argparse.Namespace, entities: Vocabulary, relation: int,
                   kg: Optional[TemporalKG]) -> List[int]:
    names = read_skill_names(args)
    if names is not None:
        if not names:
            raise ForecastError("skill list is empty")
        return [resolve_name(entities, name) for name in names]
    if kg is None:
        raise UsageError("give --skills, --skills-file or --data for typed candidates")
    skills = typed_candidates(relation, kg)
    logger.info("using %d typed candidate skill(s) for relation %s", len(skills), args.relation)
    return skills


def cmd_infer(args: argparse.Namespace) -> int:
    settings = get_settings()
    if args.exclude_seen and not args.data:
        raise UsageError("--exclude-seen needs --data")
    grid = build_grid(args)

    checkpoints = CheckpointService(args.checkpoint)
    model, meta = checkpoints.load(settings.torch_dtype)
    entities, relations = checkpoints.vocabularies()
    kg = None
    if args.data:
        kg = load_kg(args)
        checkpoints.check_compatible(meta, kg)

    job = resolve_name(entities, args.job)
    relation = resolve_name(relations, args.relation)
    skills = resolve_skills(args, entities, relation, kg)
    if kg is not None and args.exclude_seen:
        skills = [tail for _, _, tail in candidate_facts(job, relation, skills, kg, exclude_seen=True)]
        if not skills:
            raise ForecastError(f"every candidate skill is already paired with {args.job!r} in train")

    service = ForecastingService(model)
    default_name = "heatmap.csv" if args.heatmap else "forecast.csv"
    out = Path(args.out) if args.out else Path(args.checkpoint) / default_name
    if args.heatmap:
        heatmap = service.heatmap_matrix(job, relation, skills, args.top_k, grid)
        write_heatmap_csv(out, heatmap, entities)
        print(f"heatmap of {len(heatmap.tails)} skill(s) x {len(heatmap.dates)} date(s) written to {out}")
    else:
        series = service.forecast(job, relation, skills, grid, aggregate=args.aggregate)
        write_series_csv(out, series, entities)
        print(f"{len(series)} series over {len(grid.points())} date(s) written to {out}")
    return 0
