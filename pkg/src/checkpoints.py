# -*- coding: utf-8 -*-
"""
JSON checkpoints for the nominal model, the BNN and the meta-knowledge

Arrays are stored as nested row-major lists. json writes floats with repr,
which round-trips float64 exactly.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict

import numpy as np

from .bnn.model import AnnModel, BnnModel, VariationalPosterior
from .bnn.priors import FrozenPosterior, prior_from_dict
from .errors import ContractViolation
from .meta.adaptation import MetaKnowledge, UpdateLaw
from .nominal.lpv import LpvModel

logger = logging.getLogger(__name__)


def write_json(data: Dict[str, Any], file_path: Path) -> Path:
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.debug(f"Wrote checkpoint {file_path}")
    return file_path


def read_json(file_path: Path) -> Dict[str, Any]:
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ContractViolation(f"Checkpoint {file_path} is not valid JSON: {e}") from e


def _body_to_list(body):
    return [{"w": np.asarray(w).tolist(), "b": np.asarray(b).tolist()} for w, b in body]


def _body_from_list(data):
    return [(np.asarray(layer["w"], dtype=np.float64), np.asarray(layer["b"], dtype=np.float64)) for layer in data]


def save_lpv(m: LpvModel, file_path: Path) -> Path:
    return write_json(m.to_dict(), file_path)


def load_lpv(file_path: Path) -> LpvModel:
    return LpvModel.from_dict(read_json(file_path))


def save_ann(m: AnnModel, file_path: Path) -> Path:
    return write_json({"body": _body_to_list(m.body), "head": {"w": m.head_w.tolist(), "b": m.head_b.tolist()}},
                      file_path)


def load_ann(file_path: Path) -> AnnModel:
    data = read_json(file_path)
    return AnnModel(body=_body_from_list(data["body"]), head_w=np.asarray(data["head"]["w"]),
                    head_b=np.asarray(data["head"]["b"]))


def bnn_to_dict(m: BnnModel) -> Dict[str, Any]:
    return {"body": _body_to_list(m.body), "head": m.head.to_dict(), "prior": m.prior.to_dict()}


def bnn_from_dict(data: Dict[str, Any]) -> BnnModel:
    try:
        return BnnModel(body=_body_from_list(data["body"]), head=VariationalPosterior.from_dict(data["head"]),
                        prior=prior_from_dict(data["prior"]))
    except KeyError as e:
        raise ContractViolation(f"BNN checkpoint lacks field {e}") from None


def save_bnn(m: BnnModel, file_path: Path) -> Path:
    return write_json(bnn_to_dict(m), file_path)


def load_bnn(file_path: Path) -> BnnModel:
    return bnn_from_dict(read_json(file_path))


def save_meta(mk: MetaKnowledge, file_path: Path) -> Path:
    """BNN layout of the global model plus the update law and the frozen prior"""
    data = bnn_to_dict(mk.global_model())
    data["psi"] = {"w": mk.psi.weights.tolist(), "b": mk.psi.bias.tolist()}
    data["prior_frozen"] = mk.prior.to_dict()
    return write_json(data, file_path)


def load_meta(file_path: Path) -> MetaKnowledge:
    data = read_json(file_path)
    try:
        model = bnn_from_dict(data)
        prior = prior_from_dict(data["prior_frozen"])
        psi = UpdateLaw(np.asarray(data["psi"]["w"]), np.asarray(data["psi"]["b"]))
    except KeyError as e:
        raise ContractViolation(f"Meta checkpoint lacks field {e}") from None
    if not isinstance(prior, FrozenPosterior):
        raise ContractViolation("Meta checkpoint prior must be a frozen posterior")
    return MetaKnowledge(w=model.head, psi=psi, body=model.body, prior=prior)
