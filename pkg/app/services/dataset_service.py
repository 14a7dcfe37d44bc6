"""
Dataset Service
Loads quadruple TSV files, produces deterministic splits and reports dataset statistics
"""
import logging
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from ..errors import DateParseError, FormatError, SplitError
from ..models.graph import (
    DEFAULT_FILTER_SPLITS,
    KGBuilder,
    Quadruple,
    RawQuadruple,
    TemporalKG,
)
from ..models.schemas import DatasetManifest, DatasetStats


logger = logging.getLogger(__name__)

SPLIT_FILES = {"train": "train.tsv", "valid": "valid.tsv", "test": "test.tsv"}


@dataclass
class SplitResult:
    """Three disjoint splits plus how many facts the closure rule moved into train."""
    train: List[Quadruple]
    valid: List[Quadruple]
    test: List[Quadruple]
    moved_to_train: int = 0


class DatasetService:
    """Service for quadruple dataset I/O and splitting."""

    def __init__(self, delimiter: str = "\t", date_format: str = "%Y-%m-%d"):
        self.delimiter = delimiter
        self.date_format = date_format

    # ==========================================================================
    # FILE I/O
    # ==========================================================================

    def load_tsv(self, path: Union[str, Path], manifest: Optional[DatasetManifest] = None) -> List[RawQuadruple]:
        """Read `head<TAB>relation<TAB>tail<TAB>date` lines; '#' lines and blank lines are skipped."""
        delimiter = manifest.delimiter if manifest else self.delimiter
        date_format = manifest.date_format if manifest else self.date_format
        raws: List[RawQuadruple] = []
        with open(path, encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                line = line.rstrip("\r\n")
                if not line.strip() or line.startswith("#"):
                    continue
                fields = line.split(delimiter)
                if len(fields) != 4:
                    raise FormatError(line_no, f"expected 4 fields, got {len(fields)}")
                head, relation, tail, when = fields
                try:
                    day = datetime.strptime(when.strip(), date_format).date()
                except ValueError:
                    raise FormatError(line_no, str(DateParseError("date", when))) from None
                raws.append((head, relation, tail, day))
        logger.debug("loaded %d quadruple(s) from %s", len(raws), path)
        return raws

    def save_tsv(self, path: Union[str, Path], raws: Sequence[RawQuadruple]) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for head, relation, tail, day in raws:
                when = day.strftime(self.date_format) if isinstance(day, date) else day
                handle.write(self.delimiter.join((head, relation, tail, when)) + "\n")

    def save_split(self, directory: Union[str, Path], kg: TemporalKG) -> None:
        """Write train/valid/test TSV files for a built graph."""
        directory = Path(directory)
        for name, filename in SPLIT_FILES.items():
            self.save_tsv(directory / filename, [to_raw(kg, q) for q in kg.split(name)])

    # ==========================================================================
    # LOADING
    # ==========================================================================

    def manifest_for(self, path: Union[str, Path], **overrides) -> DatasetManifest:
        """Directory with train/valid/test.tsv -> split-file manifest; a single file -> single-file manifest."""
        path = Path(path)
        if path.is_dir():
            files = {name: path / filename for name, filename in SPLIT_FILES.items()}
            if not files["train"].exists():
                raise SplitError(f"{path} has no {SPLIT_FILES['train']}")
            return DatasetManifest(
                train_path=str(files["train"]),
                valid_path=str(files["valid"]) if files["valid"].exists() else None,
                test_path=str(files["test"]) if files["test"].exists() else None,
                **overrides,
            )
        if not path.exists():
            raise SplitError(f"dataset path {path} does not exist")
        return DatasetManifest(single_path=str(path), **overrides)

    def load(self, manifest: DatasetManifest,
             filter_splits: Sequence[str] = DEFAULT_FILTER_SPLITS) -> Tuple[TemporalKG, int]:
        """Build a TemporalKG; returns it with the number of closure moves (0 for split files)."""
        builder = KGBuilder()
        if not manifest.single_file:
            splits = {}
            for name in ("train", "valid", "test"):
                path = getattr(manifest, f"{name}_path")
                splits[name] = builder.intern_all(self.load_tsv(path, manifest)) if path else []
            kg = TemporalKG(builder.entities, builder.relations,
                            splits["train"], splits["valid"], splits["test"],
                            filter_splits=filter_splits)
            return kg, 0

        quads = builder.intern_all(self.load_tsv(manifest.single_path, manifest))
        if manifest.split_by_time is not None:
            result = self.split_by_time(quads, manifest.split_by_time, manifest.ratios)
        else:
            result = self.split(quads, manifest.ratios, manifest.seed)
        kg = TemporalKG(builder.entities, builder.relations,
                        result.train, result.valid, result.test,
                        filter_splits=filter_splits)
        return kg, result.moved_to_train

    # ==========================================================================
    # SPLITTING
    # ==========================================================================

    def partition(self, n: int, ratios: Sequence[float], seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Seeded index permutation cut into train/valid/test sizes (before closure)."""
        n_valid = int(round(n * ratios[1]))
        n_test = int(round(n * ratios[2]))
        order = np.random.default_rng(seed).permutation(n)
        n_train = n - n_valid - n_test
        return order[:n_train], order[n_train:n_train + n_valid], order[n_train + n_valid:]

    def split(self, quads: Sequence[Quadruple], ratios: Sequence[float] = (0.9, 0.05, 0.05),
              seed: int = 0) -> SplitResult:
        """Deterministic random split with the closure rule applied."""
        if any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
            raise SplitError(f"ratios must be positive and sum to 1, got {tuple(ratios)}")
        quads = _distinct(quads)
        if len(quads) < 3:
            raise SplitError(f"need at least 3 distinct quadruples to split, got {len(quads)}")
        train_idx, valid_idx, test_idx = self.partition(len(quads), ratios, seed)
        return self._close(
            [quads[i] for i in sorted(train_idx)],
            [quads[i] for i in sorted(valid_idx)],
            [quads[i] for i in sorted(test_idx)],
        )

    def split_by_time(self, quads: Sequence[Quadruple], cut: date,
                      ratios: Sequence[float] = (0.9, 0.05, 0.05)) -> SplitResult:
        """Train = facts before `cut`; later facts go to valid then test in date order."""
        quads = _distinct(quads)
        train = [q for q in quads if q.timestamp.date < cut]
        later = sorted((q for q in quads if q.timestamp.date >= cut), key=lambda q: q.timestamp)
        if not train or len(later) < 2:
            raise SplitError(f"cut date {cut} leaves too few facts on one side")
        share = ratios[1] / (ratios[1] + ratios[2])
        n_valid = min(max(1, int(round(len(later) * share))), len(later) - 1)
        return self._close(train, later[:n_valid], later[n_valid:])

    def _close(self, train: List[Quadruple], valid: List[Quadruple], test: List[Quadruple]) -> SplitResult:
        entities: Set[int] = set()
        relations: Set[int] = set()
        for q in train:
            entities.update((q.head, q.tail))
            relations.add(q.relation)

        moved = 0
        kept = {"valid": [], "test": []}
        for name, split in (("valid", valid), ("test", test)):
            for q in split:
                if q.head in entities and q.tail in entities and q.relation in relations:
                    kept[name].append(q)
                else:
                    train.append(q)
                    entities.update((q.head, q.tail))
                    relations.add(q.relation)
                    moved += 1
        if moved:
            logger.warning("moved %d quadruple(s) to train so every valid/test id is seen in training", moved)
        if not kept["valid"] and not kept["test"]:
            raise SplitError("dataset too small: closure left no validation or test facts")
        return SplitResult(train, kept["valid"], kept["test"], moved)

    # ==========================================================================
    # STATISTICS
    # ==========================================================================

    def stats(self, kg: TemporalKG) -> DatasetStats:
        counts = {name: 0 for name in kg.relations}
        for q in kg.all_quadruples():
            counts[kg.relations.string_of(q.relation)] += 1
        first = kg.timestamps[0].date if kg.timestamps else None
        last = kg.timestamps[-1].date if kg.timestamps else None
        return DatasetStats(
            n_entities=kg.n_entities,
            n_relations=kg.n_relations,
            n_train=len(kg.train),
            n_valid=len(kg.valid),
            n_test=len(kg.test),
            n_quadruples=len(kg.train) + len(kg.valid) + len(kg.test),
            n_timestamps=len(kg.timestamps),
            first_date=first,
            last_date=last,
            span_days=(last - first).days if first else 0,
            relation_counts=counts,
        )


def to_raw(kg: TemporalKG, q: Quadruple) -> RawQuadruple:
    return (
        kg.entities.string_of(q.head),
        kg.relations.string_of(q.relation),
        kg.entities.string_of(q.tail),
        q.timestamp.date,
    )


def _distinct(quads: Sequence[Quadruple]) -> List[Quadruple]:
    seen = set()
    out = []
    for q in quads:
        if q.key() not in seen:
            seen.add(q.key())
            out.append(q)
    return out


# ==============================================================================
# SYNTHETIC DATA
# ==============================================================================

SYNTHETIC_WINDOW = 4


def synthetic_partner(h: int, day_index: int, n_entities: int) -> int:
    """Even dates pair (0,1)(2,3)...; odd dates pair (1,2)(3,4)...(n-1,0)."""
    if day_index % 2 == 0:
        return h ^ 1
    return (h + 1) % n_entities if h % 2 else (h - 1) % n_entities


def synthetic_raws(n_entities: int = 50, n_relations: int = 4, n_timestamps: int = 8,
                   start: date = date(2015, 1, 1)) -> List[RawQuadruple]:
    """Each relation holds only inside its own window of dates; a head's partner flips with date parity."""
    if n_entities < 4 or n_entities % 2:
        raise ValueError("synthetic graphs need an even number of entities >= 4")
    days = [start + timedelta(days=91 * k) for k in range(n_timestamps)]
    window = min(SYNTHETIC_WINDOW, n_timestamps)
    span = n_timestamps - window
    raws = []
    for r in range(n_relations):
        first = round(r * span / (n_relations - 1)) if n_relations > 1 else 0
        for k in range(first, first + window):
            for h in range(n_entities):
                raws.append((f"e{h}", f"r{r}", f"e{synthetic_partner(h, k, n_entities)}", days[k]))
    return raws


def synthetic_kg(n_entities: int = 50, n_relations: int = 4, n_timestamps: int = 8,
                 holdout: float = 0.1, seed: int = 0) -> TemporalKG:
    """Deterministic temporal-pattern graph; `holdout` of the facts split evenly into valid and test."""
    builder = KGBuilder()
    quads = builder.intern_all(synthetic_raws(n_entities, n_relations, n_timestamps))
    ratios = (1.0 - holdout, holdout / 2, holdout / 2)
    result = DatasetService().split(quads, ratios, seed)
    return TemporalKG(builder.entities, builder.relations, result.train, result.valid, result.test)
