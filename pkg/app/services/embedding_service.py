"""
Embedding Service
Parameter storage and scoring kernels for the static, diachronic (DE), time-aware (TA)
and complex-rotation (TeRo) model families. Plausibility convention: higher is better.
"""
import logging
import math
from dataclasses import dataclass
from datetime import date
from typing import Dict, List, Optional, Sequence, Type, Union

import torch
import torch.nn as nn

from ..errors import ConfigurationError, VocabularyError
from ..models.graph import N_TEMPORAL_TOKENS, Quadruple, TimeAxis, Timestamp, timestamp_tokens
from ..models.schemas import ModelName, TeroNorm


logger = logging.getLogger(__name__)

HEAD = "head"
TAIL = "tail"


@dataclass
class TimeFeatures:
    """Per-row time encodings; each model family reads the one it needs."""
    values: torch.Tensor      # fractional years since the origin (DE)
    tokens: torch.Tensor      # (B, 8) temporal digit tokens (TA)
    index: torch.Tensor       # rows of the time embedding table (TeRo)
    remapped: List[bool]      # date not in training dates, mapped to the nearest one

    def __len__(self) -> int:
        return self.values.shape[0]

    def select(self, rows: torch.Tensor) -> "TimeFeatures":
        return TimeFeatures(
            self.values[rows],
            self.tokens[rows],
            self.index[rows],
            [self.remapped[i] for i in rows.tolist()],
        )

    def repeat(self, n: int) -> "TimeFeatures":
        """Repeat every row n times consecutively."""
        return TimeFeatures(
            self.values.repeat_interleave(n),
            self.tokens.repeat_interleave(n, dim=0),
            self.index.repeat_interleave(n),
            [flag for flag in self.remapped for _ in range(n)],
        )


def xavier_uniform_(tensor: torch.Tensor, generator: torch.Generator) -> torch.Tensor:
    """Xavier-uniform fill with bound sqrt(6 / (rows + cols)) drawn from `generator`."""
    if tensor.numel() == 0:
        return tensor
    fan_out, fan_in = tensor.shape[0], tensor.shape[1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        return tensor.uniform_(-bound, bound, generator=generator)


def tero_time_rotate(x: torch.Tensor, tau: torch.Tensor) -> torch.Tensor:
    """Coordinatewise complex product x ∘ tau on [real | imag] halves (or native complex tensors)."""
    if torch.is_complex(x):
        return x * tau
    x_re, x_im = torch.chunk(x, 2, dim=-1)
    t_re, t_im = torch.chunk(tau, 2, dim=-1)
    return torch.cat((x_re * t_re - x_im * t_im, x_re * t_im + x_im * t_re), dim=-1)


def unit_modulus_(table: torch.Tensor) -> torch.Tensor:
    """Rescale every complex coordinate of a [real | imag] table to modulus 1 in place."""
    with torch.no_grad():
        re, im = torch.chunk(table, 2, dim=-1)
        modulus = torch.sqrt(re * re + im * im)
        degenerate = modulus == 0
        modulus = torch.where(degenerate, torch.ones_like(modulus), modulus)
        re_new = torch.where(degenerate, torch.ones_like(re), re / modulus)
        im_new = torch.where(degenerate, torch.zeros_like(im), im / modulus)
        table.copy_(torch.cat((re_new, im_new), dim=-1))
    return table


# ==============================================================================
# BASE MODEL
# ==============================================================================

class TemporalEmbeddingModel(nn.Module):
    """Common lookup, time encoding and bulk-scoring logic."""

    name: ModelName

    def __init__(self, n_entities: int, n_relations: int, dim: int, time_axis: TimeAxis,
                 dtype: torch.dtype = torch.float64):
        super().__init__()
        if dim < 1:
            raise ConfigurationError(f"embedding dimension must be >= 1, got {dim}")
        self.n_entities = n_entities
        self.n_relations = n_relations
        self.dim = dim
        self.time_axis = time_axis
        self.dtype = dtype

    def _param(self, *shape: int) -> nn.Parameter:
        return nn.Parameter(torch.zeros(*shape, dtype=self.dtype))

    # --------------------------------------------------------------------------
    # parameters
    # --------------------------------------------------------------------------

    def reset_parameters(self, generator: torch.Generator) -> None:
        for _, tensor in self.named_parameters():
            xavier_uniform_(tensor, generator)
        self.project()

    def project(self) -> None:
        """Re-impose parameter constraints after an update (no-op unless a family needs one)."""

    def hyperparameters(self) -> Dict[str, object]:
        return {}

    # --------------------------------------------------------------------------
    # time encoding
    # --------------------------------------------------------------------------

    def encode_times(self, dates: Sequence[Union[date, Timestamp]]) -> TimeFeatures:
        days = [d.date if isinstance(d, Timestamp) else d for d in dates]
        values = [self.time_axis.value(d) for d in days]
        tokens = [timestamp_tokens(Timestamp(d)) for d in days]
        if len(self.time_axis):
            located = [self.time_axis.index(d) for d in days]
        else:
            located = [(0, False) for _ in days]
        return TimeFeatures(
            torch.tensor(values, dtype=self.dtype),
            torch.tensor(tokens, dtype=torch.long).reshape(len(days), 8),
            torch.tensor([i for i, _ in located], dtype=torch.long),
            [not exact for _, exact in located],
        )

    # --------------------------------------------------------------------------
    # scoring
    # --------------------------------------------------------------------------

    def score(self, heads: torch.Tensor, relations: torch.Tensor, tails: torch.Tensor,
              times: TimeFeatures) -> torch.Tensor:
        """Elementwise plausibility of aligned (head, relation, tail, time) rows."""
        raise NotImplementedError

    def forward(self, heads: torch.Tensor, relations: torch.Tensor, tails: torch.Tensor,
                times: TimeFeatures) -> torch.Tensor:
        return self.score(heads, relations, tails, times)

    def check_ids(self, heads: torch.Tensor, relations: torch.Tensor, tails: torch.Tensor) -> None:
        for ids, bound, kind in ((heads, self.n_entities, "entity"), (tails, self.n_entities, "entity"),
                                 (relations, self.n_relations, "relation")):
            if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= bound):
                raise VocabularyError(f"{kind} id out of range [0, {bound})")

    def score_quadruples(self, quads: Sequence[Quadruple]) -> torch.Tensor:
        heads = torch.tensor([q.head for q in quads], dtype=torch.long)
        relations = torch.tensor([q.relation for q in quads], dtype=torch.long)
        tails = torch.tensor([q.tail for q in quads], dtype=torch.long)
        self.check_ids(heads, relations, tails)
        return self.score(heads, relations, tails, self.encode_times([q.timestamp for q in quads]))

    def score_quadruple(self, q: Quadruple) -> float:
        with torch.no_grad():
            return float(self.score_quadruples([q])[0])

    def score_batch(self, heads: Sequence[int], relation: int, tails: Sequence[int],
                    ts: Union[date, Timestamp]) -> torch.Tensor:
        """Scores for one relation and time over aligned head/tail lists (a length-1 side broadcasts)."""
        heads_t = torch.as_tensor(list(heads), dtype=torch.long)
        tails_t = torch.as_tensor(list(tails), dtype=torch.long)
        n = max(len(heads_t), len(tails_t))
        if len(heads_t) == 1:
            heads_t = heads_t.expand(n)
        if len(tails_t) == 1:
            tails_t = tails_t.expand(n)
        if len(heads_t) != len(tails_t):
            raise ValueError(f"head/tail batch lengths differ: {len(heads_t)} vs {len(tails_t)}")
        relations_t = torch.full((n,), relation, dtype=torch.long)
        self.check_ids(heads_t, relations_t, tails_t)
        with torch.no_grad():
            return self.score(heads_t, relations_t, tails_t, self.encode_times([ts]).repeat(n))

    def score_candidates(self, queries: Sequence[Quadruple], slot: str,
                         chunk_size: int = 65536) -> torch.Tensor:
        """(Q, n_entities) scores with every entity substituted into `slot` of each query."""
        n = self.n_entities
        out = torch.empty(len(queries), n, dtype=self.dtype)
        rows_per_chunk = max(1, chunk_size // max(1, n))
        candidates = torch.arange(n, dtype=torch.long)
        with torch.no_grad():
            for start in range(0, len(queries), rows_per_chunk):
                block = queries[start:start + rows_per_chunk]
                q = len(block)
                fixed_h = torch.tensor([x.head for x in block], dtype=torch.long).repeat_interleave(n)
                fixed_t = torch.tensor([x.tail for x in block], dtype=torch.long).repeat_interleave(n)
                relations = torch.tensor([x.relation for x in block], dtype=torch.long).repeat_interleave(n)
                swept = candidates.repeat(q)
                heads, tails = (swept, fixed_t) if slot == HEAD else (fixed_h, swept)
                times = self.encode_times([x.timestamp for x in block]).repeat(n)
                out[start:start + q] = self.score(heads, relations, tails, times).reshape(q, n)
        return out


# ==============================================================================
# STATIC MODELS
# ==============================================================================

class TransE(TemporalEmbeddingModel):
    """-||h + r - t||² ; ignores time."""

    name = ModelName.TRANSE

    def __init__(self, n_entities: int, n_relations: int, dim: int, time_axis: TimeAxis,
                 dtype: torch.dtype = torch.float64):
        super().__init__(n_entities, n_relations, dim, time_axis, dtype)
        self.entity_emb = self._param(n_entities, dim)
        self.relation_emb = self._param(n_relations, dim)

    def score(self, heads, relations, tails, times):
        h, r, t = self.entity_emb[heads], self.relation_emb[relations], self.entity_emb[tails]
        return -((h + r - t) ** 2).sum(dim=-1)


class DistMult(TransE):
    """hᵀ(r ⊙ t) ; ignores time."""

    name = ModelName.DISTMULT

    def score(self, heads, relations, tails, times):
        h, r, t = self.entity_emb[heads], self.relation_emb[relations], self.entity_emb[tails]
        return (h * r * t).sum(dim=-1)


# ==============================================================================
# DIACHRONIC MODELS
# ==============================================================================

class DETransE(TemporalEmbeddingModel):
    """Diachronic entities: the first floor(γd) coordinates are a·sin(w·τ + b), the rest static."""

    name = ModelName.DE_TRANSE

    def __init__(self, n_entities: int, n_relations: int, dim: int, time_axis: TimeAxis,
                 gamma: float = 0.1, dtype: torch.dtype = torch.float64):
        super().__init__(n_entities, n_relations, dim, time_axis, dtype)
        if not 0.0 <= gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {gamma}")
        self.gamma = gamma
        self.temporal_dim = int(math.floor(gamma * dim))
        if gamma > 0 and self.temporal_dim == 0:
            raise ConfigurationError(f"gamma={gamma} with dim={dim} leaves no temporal coordinates")
        self.a_e = self._param(n_entities, dim)
        self.w_e = self._param(n_entities, self.temporal_dim)
        self.b_e = self._param(n_entities, self.temporal_dim)
        self.relation_emb = self._param(n_relations, dim)

    def hyperparameters(self):
        return {"gamma": self.gamma, "temporal_dim": self.temporal_dim}

    def entity_embed(self, entities: torch.Tensor, values: torch.Tensor) -> torch.Tensor:
        a = self.a_e[entities]
        k = self.temporal_dim
        if k == 0:
            return a
        phase = self.w_e[entities] * values.unsqueeze(-1) + self.b_e[entities]
        return torch.cat((a[:, :k] * torch.sin(phase), a[:, k:]), dim=-1)

    def score(self, heads, relations, tails, times):
        h = self.entity_embed(heads, times.values)
        t = self.entity_embed(tails, times.values)
        r = self.relation_emb[relations]
        return -((h + r - t) ** 2).sum(dim=-1)


class DEDistMult(DETransE):
    name = ModelName.DE_DISTMULT

    def score(self, heads, relations, tails, times):
        h = self.entity_embed(heads, times.values)
        t = self.entity_embed(tails, times.values)
        r = self.relation_emb[relations]
        return (h * r * t).sum(dim=-1)


def de_entity_embed(model: DETransE, entity: int, value: float) -> torch.Tensor:
    """Time-dependent embedding of one entity at fractional-year time `value`."""
    with torch.no_grad():
        return model.entity_embed(torch.tensor([entity]), torch.tensor([value], dtype=model.dtype))[0]


# ==============================================================================
# TIME-AWARE (LSTM) MODELS
# ==============================================================================

class TATransE(TemporalEmbeddingModel):
    """Relation vector = last hidden state of an LSTM over (r, 8 date-digit tokens)."""

    name = ModelName.TA_TRANSE

    def __init__(self, n_entities: int, n_relations: int, dim: int, time_axis: TimeAxis,
                 dtype: torch.dtype = torch.float64):
        super().__init__(n_entities, n_relations, dim, time_axis, dtype)
        self.entity_emb = self._param(n_entities, dim)
        self.token_emb = self._param(n_relations + N_TEMPORAL_TOKENS, dim)
        self.w_ih = self._param(4 * dim, dim)
        self.w_hh = self._param(4 * dim, dim)
        self.b_ih = self._param(4 * dim)
        self.b_hh = self._param(4 * dim)

    def reset_parameters(self, generator):
        for tensor in (self.entity_emb, self.token_emb, self.w_ih, self.w_hh):
            xavier_uniform_(tensor, generator)
        with torch.no_grad():
            self.b_ih.zero_()
            self.b_hh.zero_()
            # gate order i, f, g, o
            self.b_ih[self.dim:2 * self.dim] = 1.0

    def lstm_step(self, x: torch.Tensor, h: torch.Tensor, c: torch.Tensor):
        gates = x @ self.w_ih.T + self.b_ih + h @ self.w_hh.T + self.b_hh
        i, f, g, o = gates.chunk(4, dim=-1)
        c = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
        h = torch.sigmoid(o) * torch.tanh(c)
        return h, c

    def relation_embed(self, relations: torch.Tensor, tokens: torch.Tensor) -> torch.Tensor:
        seq = torch.cat((relations.unsqueeze(-1), tokens + self.n_relations), dim=-1)
        x = self.token_emb[seq]
        h = torch.zeros(seq.shape[0], self.dim, dtype=self.dtype)
        c = torch.zeros_like(h)
        for step in range(seq.shape[1]):
            h, c = self.lstm_step(x[:, step], h, c)
        return h

    def combine(self, h: torch.Tensor, r: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        return -((h + r - t) ** 2).sum(dim=-1)

    def score(self, heads, relations, tails, times):
        r = self.relation_embed(relations, times.tokens)
        return self.combine(self.entity_emb[heads], r, self.entity_emb[tails])

    def score_candidates(self, queries, slot, chunk_size=65536):
        """The LSTM runs once per query; candidates are swept by broadcasting."""
        n = self.n_entities
        out = torch.empty(len(queries), n, dtype=self.dtype)
        rows_per_chunk = max(1, chunk_size // max(1, n))
        entities = self.entity_emb.unsqueeze(0)
        with torch.no_grad():
            for start in range(0, len(queries), rows_per_chunk):
                block = queries[start:start + rows_per_chunk]
                relations = torch.tensor([x.relation for x in block], dtype=torch.long)
                r = self.relation_embed(relations, self.encode_times([x.timestamp for x in block]).tokens)
                r = r.unsqueeze(1)
                if slot == HEAD:
                    t = self.entity_emb[torch.tensor([x.tail for x in block])].unsqueeze(1)
                    out[start:start + len(block)] = self.combine(entities, r, t)
                else:
                    h = self.entity_emb[torch.tensor([x.head for x in block])].unsqueeze(1)
                    out[start:start + len(block)] = self.combine(h, r, entities)
        return out


class TADistMult(TATransE):
    name = ModelName.TA_DISTMULT

    def combine(self, h, r, t):
        return (h * r * t).sum(dim=-1)


def ta_relation_embed(model: TATransE, relation: int, ts: Union[date, Timestamp]) -> torch.Tensor:
    """Time-aware relation vector for one (relation, date)."""
    with torch.no_grad():
        tokens = model.encode_times([ts]).tokens
        return model.relation_embed(torch.tensor([relation]), tokens)[0]


# ==============================================================================
# COMPLEX ROTATION MODEL
# ==============================================================================

class TeRo(TemporalEmbeddingModel):
    """Complex embeddings stored as [real | imag]; time rotates head and tail, the tail is conjugated."""

    name = ModelName.TERO

    def __init__(self, n_entities: int, n_relations: int, dim: int, time_axis: TimeAxis,
                 norm: TeroNorm = TeroNorm.L1, dtype: torch.dtype = torch.float64):
        super().__init__(n_entities, n_relations, dim, time_axis, dtype)
        if not len(time_axis):
            raise ConfigurationError("TeRo needs at least one training timestamp")
        self.norm = TeroNorm(norm)
        self.entity_emb = self._param(n_entities, 2 * dim)
        self.relation_emb = self._param(n_relations, 2 * dim)
        self.time_emb = self._param(len(time_axis), 2 * dim)

    def hyperparameters(self):
        return {"tero_norm": self.norm.value}

    def project(self):
        unit_modulus_(self.time_emb)

    def score(self, heads, relations, tails, times):
        tau = self.time_emb[times.index]
        zh = tero_time_rotate(self.entity_emb[heads], tau)
        zt = tero_time_rotate(self.entity_emb[tails], tau)
        zt_re, zt_im = torch.chunk(zt, 2, dim=-1)
        r_re, r_im = torch.chunk(self.relation_emb[relations], 2, dim=-1)
        zh_re, zh_im = torch.chunk(zh, 2, dim=-1)
        diff = torch.cat((zh_re + r_re - zt_re, zh_im + r_im + zt_im), dim=-1)
        if self.norm == TeroNorm.L1:
            return -diff.abs().sum(dim=-1)
        return -torch.sqrt((diff ** 2).sum(dim=-1))


# ==============================================================================
# FACTORY
# ==============================================================================

MODEL_CLASSES: Dict[ModelName, Type[TemporalEmbeddingModel]] = {
    ModelName.TRANSE: TransE,
    ModelName.DISTMULT: DistMult,
    ModelName.DE_TRANSE: DETransE,
    ModelName.DE_DISTMULT: DEDistMult,
    ModelName.TA_TRANSE: TATransE,
    ModelName.TA_DISTMULT: TADistMult,
    ModelName.TERO: TeRo,
}


def create_model(model: Union[ModelName, str], n_entities: int, n_relations: int, dim: int,
                 time_axis: TimeAxis, gamma: float = 0.1, tero_norm: TeroNorm = TeroNorm.L1,
                 dtype: torch.dtype = torch.float64) -> TemporalEmbeddingModel:
    """Allocate a model with zeroed parameters."""
    name = ModelName(model)
    cls = MODEL_CLASSES[name]
    if name.is_diachronic:
        return cls(n_entities, n_relations, dim, time_axis, gamma=gamma, dtype=dtype)
    if name == ModelName.TERO:
        return cls(n_entities, n_relations, dim, time_axis, norm=tero_norm, dtype=dtype)
    return cls(n_entities, n_relations, dim, time_axis, dtype=dtype)


def init_parameters(model: Union[ModelName, str], n_entities: int, n_relations: int, dim: int,
                    time_axis: TimeAxis, seed: int = 0, gamma: float = 0.1,
                    tero_norm: TeroNorm = TeroNorm.L1,
                    dtype: torch.dtype = torch.float64) -> TemporalEmbeddingModel:
    """Xavier-uniform initialised model, deterministic given `seed`."""
    instance = create_model(model, n_entities, n_relations, dim, time_axis, gamma, tero_norm, dtype)
    generator = torch.Generator().manual_seed(seed)
    instance.reset_parameters(generator)
    logger.debug("initialised %s (dim=%d, seed=%d)", instance.name.value, dim, seed)
    return instance
