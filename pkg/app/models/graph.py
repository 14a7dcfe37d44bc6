"""
Temporal Knowledge Graph
Quadruples, vocabularies, timestamp encodings and the ranking filter
"""
import bisect
import logging
from dataclasses import dataclass
from datetime import date
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple, Union

from ..errors import DateParseError, SplitOverlapError, VocabularyError


logger = logging.getLogger(__name__)

DAYS_PER_YEAR = 365.25

# Temporal digit tokens: id = suffix * 10 + digit, suffix 0=y, 1=m, 2=d
TEMPORAL_SUFFIXES = ("y", "m", "d")
N_TEMPORAL_TOKENS = 10 * len(TEMPORAL_SUFFIXES)
N_TIME_TOKENS_PER_DATE = 8

SPLITS = ("train", "valid", "test")
DEFAULT_FILTER_SPLITS = ("train", "valid")

RawQuadruple = Tuple[str, str, str, Union[date, str]]


def parse_date(value: Union[date, str], field: str = "timestamp") -> date:
    """Parse an ISO-8601 calendar date (YYYY-MM-DD)."""
    if isinstance(value, date):
        return value
    text = str(value).strip()
    parts = text.split("-")
    if len(parts) != 3 or len(parts[0]) != 4 or not all(p.isdigit() for p in parts):
        raise DateParseError(field, text)
    try:
        return date(int(parts[0]), int(parts[1]), int(parts[2]))
    except ValueError:
        raise DateParseError(field, text) from None


# ==============================================================================
# TIMESTAMPS
# ==============================================================================

@dataclass(frozen=True, order=True)
class Timestamp:
    """A calendar day; numeric value and digit tokens are derived from it."""
    date: date

    @property
    def tokens(self) -> List[int]:
        return timestamp_tokens(self)

    @classmethod
    def from_tokens(cls, tokens: Sequence[int]) -> "Timestamp":
        """Inverse of `timestamp_tokens`."""
        if len(tokens) != N_TIME_TOKENS_PER_DATE:
            raise ValueError(f"expected {N_TIME_TOKENS_PER_DATE} tokens, got {len(tokens)}")
        digits = [t % 10 for t in tokens]
        suffixes = [t // 10 for t in tokens]
        if suffixes != [0, 0, 0, 0, 1, 1, 2, 2]:
            raise ValueError(f"tokens out of y/m/d order: {[token_label(t) for t in tokens]}")
        year = int("".join(str(d) for d in digits[:4]))
        month = 10 * digits[4] + digits[5]
        day = 10 * digits[6] + digits[7]
        return cls(date(year, month, day))

    def __str__(self) -> str:
        return self.date.isoformat()


def timestamp_numeric(ts: Timestamp, epoch: date) -> float:
    """Fractional years between `epoch` and `ts` (days / 365.25)."""
    days = (ts.date - epoch).days
    if days < 0:
        logger.warning("timestamp %s precedes time origin %s", ts, epoch)
    return days / DAYS_PER_YEAR


def timestamp_tokens(ts: Timestamp) -> List[int]:
    """Eight temporal token ids: 4 year digits, 2 month digits, 2 day digits, MSD first."""
    d = ts.date
    year = f"{d.year:04d}"
    month = f"{d.month:02d}"
    day = f"{d.day:02d}"
    return (
        [int(c) for c in year]
        + [10 + int(c) for c in month]
        + [20 + int(c) for c in day]
    )


def token_label(token_id: int) -> str:
    """Human-readable form of a temporal token, e.g. 12 -> '2m'."""
    return f"{token_id % 10}{TEMPORAL_SUFFIXES[token_id // 10]}"


class TimeAxis:
    """Time origin plus the sorted training dates; encodes dates for every model family."""

    def __init__(self, origin: date, train_dates: Sequence[date]):
        self.origin = origin
        self.train_dates: List[date] = sorted(set(train_dates))

    def __len__(self) -> int:
        return len(self.train_dates)

    def value(self, day: date) -> float:
        return timestamp_numeric(Timestamp(day), self.origin)

    def index(self, day: date) -> Tuple[int, bool]:
        """Row of the nearest training date (ties go to the earlier one) and whether it is exact."""
        if not self.train_dates:
            raise VocabularyError("time axis has no training dates")
        pos = bisect.bisect_left(self.train_dates, day)
        if pos < len(self.train_dates) and self.train_dates[pos] == day:
            return pos, True
        if pos == 0:
            return 0, False
        if pos == len(self.train_dates):
            return pos - 1, False
        before = (day - self.train_dates[pos - 1]).days
        after = (self.train_dates[pos] - day).days
        return (pos - 1 if before <= after else pos), False


# ==============================================================================
# QUADRUPLES AND VOCABULARIES
# ==============================================================================

class Quadruple(NamedTuple):
    """One fact (head, relation, tail, timestamp) in id form."""
    head: int
    relation: int
    tail: int
    timestamp: Timestamp

    def key(self) -> Tuple[int, int, int, date]:
        return (self.head, self.relation, self.tail, self.timestamp.date)


class Vocabulary:
    """Dense id <-> surface string mapping."""

    def __init__(self, items: Iterable[str] = (), kind: str = "entity"):
        self.kind = kind
        self._strings: List[str] = []
        self._ids: Dict[str, int] = {}
        for item in items:
            self.add(item)

    def add(self, item: str) -> int:
        idx = self._ids.get(item)
        if idx is None:
            idx = len(self._strings)
            self._ids[item] = idx
            self._strings.append(item)
        return idx

    def id_of(self, item: str) -> int:
        try:
            return self._ids[item]
        except KeyError:
            raise VocabularyError(f"unknown {self.kind} {item!r}") from None

    def string_of(self, idx: int) -> str:
        if not 0 <= idx < len(self._strings):
            raise VocabularyError(f"{self.kind} id {idx} out of range (size {len(self._strings)})")
        return self._strings[idx]

    def __contains__(self, item: str) -> bool:
        return item in self._ids

    def __len__(self) -> int:
        return len(self._strings)

    def __iter__(self):
        return iter(self._strings)

    def strings(self) -> List[str]:
        return list(self._strings)


# ==============================================================================
# FILTER INDEX
# ==============================================================================

class FilterIndex:
    """Exact (h, r, t, date) membership plus per-query lookups for bulk ranking."""

    def __init__(self, quadruples: Iterable[Quadruple] = ()):
        self._keys: Set[Tuple[int, int, int, date]] = set()
        self._tails: Dict[Tuple[int, int, date], Set[int]] = {}
        self._heads: Dict[Tuple[int, int, date], Set[int]] = {}
        for q in quadruples:
            self.add(q)

    def add(self, q: Quadruple) -> None:
        h, r, t, day = q.key()
        self._keys.add((h, r, t, day))
        self._tails.setdefault((h, r, day), set()).add(t)
        self._heads.setdefault((r, t, day), set()).add(h)

    def __contains__(self, q: Quadruple) -> bool:
        return q.key() in self._keys

    def __len__(self) -> int:
        return len(self._keys)

    def known_tails(self, head: int, relation: int, ts: Timestamp) -> Set[int]:
        return self._tails.get((head, relation, ts.date), set())

    def known_heads(self, relation: int, tail: int, ts: Timestamp) -> Set[int]:
        return self._heads.get((relation, tail, ts.date), set())


def build_filter_index(train: Sequence[Quadruple], valid: Sequence[Quadruple],
                       *extra: Sequence[Quadruple]) -> FilterIndex:
    """Filter set over train ∪ valid (and any extra splits); splits must be disjoint."""
    splits = [train, valid, *extra]
    seen: Dict[Tuple[int, int, int, date], int] = {}
    duplicates = []
    for i, split in enumerate(splits):
        for q in {q.key() for q in split}:
            if q in seen and seen[q] != i:
                duplicates.append(q)
            seen.setdefault(q, i)
    if duplicates:
        raise SplitOverlapError(sorted(duplicates))
    index = FilterIndex()
    for split in splits:
        for q in split:
            index.add(q)
    return index


# ==============================================================================
# TEMPORAL KG
# ==============================================================================

class TemporalKG:
    """Immutable store of the three splits with their vocabularies and indexes."""

    def __init__(
        self,
        entities: Vocabulary,
        relations: Vocabulary,
        train: Sequence[Quadruple],
        valid: Sequence[Quadruple] = (),
        test: Sequence[Quadruple] = (),
        filter_splits: Sequence[str] = DEFAULT_FILTER_SPLITS,
        origin: Optional[date] = None,
    ):
        self.entities = entities
        self.relations = relations
        self.train: Tuple[Quadruple, ...] = tuple(_dedupe(train, "train"))
        self.valid: Tuple[Quadruple, ...] = tuple(_dedupe(valid, "valid"))
        self.test: Tuple[Quadruple, ...] = tuple(_dedupe(test, "test"))

        for q in self.all_quadruples():
            if not (0 <= q.head < len(entities) and 0 <= q.tail < len(entities)):
                raise VocabularyError(f"entity id out of range in {q}")
            if not 0 <= q.relation < len(relations):
                raise VocabularyError(f"relation id out of range in {q}")

        unknown = set(filter_splits) - set(SPLITS)
        if unknown or "train" not in filter_splits or "valid" not in filter_splits:
            raise ValueError(f"filter splits must include train and valid, got {list(filter_splits)}")
        self.filter_splits = tuple(s for s in SPLITS if s in filter_splits)
        extra = [self.split(s) for s in self.filter_splits if s == "test"]
        self.filter_index = build_filter_index(self.train, self.valid, *extra)

        self.timestamps: Tuple[Timestamp, ...] = tuple(sorted({q.timestamp for q in self.all_quadruples()}))
        if origin is None:
            origin = self.timestamps[0].date if self.timestamps else date(1970, 1, 1)
        self.time_axis = TimeAxis(origin, [q.timestamp.date for q in self.train])

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    @property
    def origin(self) -> date:
        return self.time_axis.origin

    def split(self, name: str) -> Tuple[Quadruple, ...]:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_quadruples(self) -> Iterable[Quadruple]:
        yield from self.train
        yield from self.valid
        yield from self.test

    def train_pairs(self, relation: Optional[int] = None) -> Set[Tuple[int, int, int]]:
        """(head, relation, tail) triples seen in train at any timestamp."""
        return {
            (q.head, q.relation, q.tail)
            for q in self.train
            if relation is None or q.relation == relation
        }


def _dedupe(quads: Iterable[Quadruple], name: str) -> List[Quadruple]:
    quads = list(quads)
    seen = set()
    out = []
    for q in quads:
        key = q.key()
        if key in seen:
            continue
        seen.add(key)
        out.append(q)
    dropped = len(quads) - len(out)
    if dropped:
        logger.info("dropped %d duplicate quadruple(s) from %s", dropped, name)
    return out


# ==============================================================================
# BUILDER
# ==============================================================================

class KGBuilder:
    """Interns raw string facts into id-form quadruples over shared vocabularies."""

    def __init__(self, entities: Optional[Vocabulary] = None, relations: Optional[Vocabulary] = None):
        self.entities = entities if entities is not None else Vocabulary(kind="entity")
        self.relations = relations if relations is not None else Vocabulary(kind="relation")

    def intern_quadruple(self, raw: RawQuadruple) -> Quadruple:
        head, relation, tail, when = raw
        ts = Timestamp(parse_date(when, "timestamp"))
        return Quadruple(
            self.entities.add(head),
            self.relations.add(relation),
            self.entities.add(tail),
            ts,
        )

    def intern_all(self, raws: Iterable[RawQuadruple]) -> List[Quadruple]:
        return [self.intern_quadruple(raw) for raw in raws]

    def build(
        self,
        train: Iterable[RawQuadruple],
        valid: Iterable[RawQuadruple] = (),
        test: Iterable[RawQuadruple] = (),
        filter_splits: Sequence[str] = DEFAULT_FILTER_SPLITS,
    ) -> TemporalKG:
        return TemporalKG(
            self.entities,
            self.relations,
            self.intern_all(train),
            self.intern_all(valid),
            self.intern_all(test),
            filter_splits=filter_splits,
        )
