"""JSON model files for every fitted model type."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

from .boost import AdaBoostModel, BoostModel, adaboost_from_dict, adaboost_to_dict, boost_from_dict, boost_to_dict
from .cart import RegressionTree, tree_from_dict, tree_to_dict
from .core import ContractError
from .forest import ForestModel, forest_from_dict, forest_to_dict

Model = Union[RegressionTree, ForestModel, BoostModel, AdaBoostModel]


def model_to_dict(model: Model) -> dict:
    if isinstance(model, RegressionTree):
        return {"model": "tree", "tree": tree_to_dict(model)}
    if isinstance(model, ForestModel):
        return forest_to_dict(model)
    if isinstance(model, BoostModel):
        return boost_to_dict(model)
    if isinstance(model, AdaBoostModel):
        return adaboost_to_dict(model)
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_from_dict(d: dict) -> Model:
    kind = d.get("model")
    if kind == "tree":
        return tree_from_dict(d["tree"])
    loaders = {"forest": forest_from_dict, "boost": boost_from_dict, "adaboost": adaboost_from_dict}
    if kind not in loaders:
        raise ContractError(f"unknown model kind {kind!r}")
    return loaders[kind](d)


def save_model(model: Model, path: str | Path, **extra) -> None:
    """Write ``model`` as JSON; ``extra`` keys (learner name, column count) ride along."""
    Path(path).write_text(json.dumps({**model_to_dict(model), **extra}))


def load_model(path: str | Path) -> tuple[Model, dict]:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ContractError(f"{path}: not a model file ({exc})") from None
    try:
        return model_from_dict(d), d
    except (KeyError, TypeError) as exc:
        raise ContractError(f"{path}: malformed model ({exc!r})") from None
