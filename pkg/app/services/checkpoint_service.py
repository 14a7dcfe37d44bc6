"""
Checkpoint Service
Saves and restores trained models: meta.json plus one little-endian float64 file per tensor
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import torch

from ..errors import CheckpointError
from ..models.graph import TemporalKG, TimeAxis, Vocabulary
from ..models.schemas import CheckpointMeta, TrainConfig
from .embedding_service import TemporalEmbeddingModel, create_model


logger = logging.getLogger(__name__)

META_FILE = "meta.json"
ENTITIES_FILE = "entities.txt"
RELATIONS_FILE = "relations.txt"
TENSOR_DTYPE = np.dtype("<f8")


class CheckpointService:
    """Service for checkpoint directories."""

    def __init__(self, directory: Union[str, Path]):
        self.directory = Path(directory)

    def save(self, model: TemporalEmbeddingModel, kg: TemporalKG, epoch: int = 0,
             config: Optional[TrainConfig] = None) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        tensors = {}
        for name, param in model.named_parameters():
            array = param.detach().cpu().to(torch.float64).numpy()
            array.astype(TENSOR_DTYPE, copy=False).tofile(self.directory / f"{name}.bin")
            tensors[name] = list(array.shape)

        extra = model.hyperparameters()
        meta = CheckpointMeta(
            model=model.name,
            dim=model.dim,
            gamma=extra.get("gamma", 0.0),
            temporal_dim=extra.get("temporal_dim", 0),
            n_entities=model.n_entities,
            n_relations=model.n_relations,
            n_times=len(model.time_axis),
            epoch=epoch,
            seed=config.seed if config else 0,
            tero_norm=extra.get("tero_norm", "l1"),
            time_origin=model.time_axis.origin,
            train_dates=model.time_axis.train_dates,
            tensors=tensors,
            config=config,
        )
        (self.directory / META_FILE).write_text(meta.model_dump_json(indent=2), encoding="utf-8")
        _write_lines(self.directory / ENTITIES_FILE, kg.entities.strings())
        _write_lines(self.directory / RELATIONS_FILE, kg.relations.strings())
        logger.info("saved %s checkpoint to %s", model.name.value, self.directory)
        return self.directory

    def read_meta(self) -> CheckpointMeta:
        path = self.directory / META_FILE
        if not path.exists():
            raise CheckpointError(f"no {META_FILE} in {self.directory}")
        try:
            return CheckpointMeta.model_validate(json.loads(path.read_text(encoding="utf-8")))
        except ValueError as e:
            raise CheckpointError(f"unreadable {META_FILE}: {e}") from None

    def vocabularies(self) -> Tuple[Vocabulary, Vocabulary]:
        return (
            Vocabulary(_read_lines(self.directory / ENTITIES_FILE), kind="entity"),
            Vocabulary(_read_lines(self.directory / RELATIONS_FILE), kind="relation"),
        )

    def load(self, dtype: torch.dtype = torch.float64) -> Tuple[TemporalEmbeddingModel, CheckpointMeta]:
        meta = self.read_meta()
        axis = TimeAxis(meta.time_origin, meta.train_dates)
        model = create_model(meta.model, meta.n_entities, meta.n_relations, meta.dim, axis,
                             gamma=meta.gamma, tero_norm=meta.tero_norm, dtype=dtype)
        params = dict(model.named_parameters())
        if set(params) != set(meta.tensors):
            raise CheckpointError(f"tensor names {sorted(meta.tensors)} do not match {meta.model.value}")
        for name, param in params.items():
            shape = meta.tensors[name]
            if list(param.shape) != shape:
                raise CheckpointError(f"tensor '{name}' has shape {shape}, model expects {list(param.shape)}")
            path = self.directory / f"{name}.bin"
            if not path.exists():
                raise CheckpointError(f"missing tensor file {path.name}")
            data = np.fromfile(path, dtype=TENSOR_DTYPE)
            if data.size != int(np.prod(shape)):
                raise CheckpointError(
                    f"tensor size mismatch for '{name}': file holds {data.size} values, expected {int(np.prod(shape))}"
                )
            with torch.no_grad():
                param.copy_(torch.from_numpy(data.reshape(shape).astype(np.float64)).to(dtype))
        return model, meta

    def check_compatible(self, meta: CheckpointMeta, kg: TemporalKG) -> None:
        """Checkpoint and dataset must agree on vocabulary sizes."""
        problems = []
        if meta.n_entities != kg.n_entities:
            problems.append(f"entities: checkpoint {meta.n_entities}, dataset {kg.n_entities}")
        if meta.n_relations != kg.n_relations:
            problems.append(f"relations: checkpoint {meta.n_relations}, dataset {kg.n_relations}")
        if not problems and (self.directory / ENTITIES_FILE).exists():
            entities, relations = self.vocabularies()
            for saved, current, kind in ((entities, kg.entities, "entity"), (relations, kg.relations, "relation")):
                for idx, (a, b) in enumerate(zip(saved, current)):
                    if a != b:
                        problems.append(f"{kind} id {idx} is {a!r} in checkpoint, {b!r} in dataset")
                        break
        if problems:
            raise CheckpointError("vocabulary mismatch (" + "; ".join(problems) + ")")


def _write_lines(path: Path, items: List[str]) -> None:
    path.write_text("".join(f"{item}\n" for item in items), encoding="utf-8")


def _read_lines(path: Path) -> List[str]:
    if not path.exists():
        raise CheckpointError(f"missing vocabulary file {path.name}")
    return path.read_text(encoding="utf-8").splitlines()
