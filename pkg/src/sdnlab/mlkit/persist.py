"""Versioned JSON model files."""

from __future__ import annotations

import json

from .data import Scaler
from .models import KINDS, TrainedModel, make_estimator

FORMAT = "sdnlab-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "hyperparams": model.hyperparams,
        "seed": model.seed,
        "threshold": model.threshold,
        "feature_names": list(model.feature_names),
        "scaler": model.scaler.to_dict(),
        "parameters": model.estimator.params(),
    }


def model_from_dict(doc) -> TrainedModel:
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ModelFormatError("not a model file")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}, expected {VERSION}")
    try:
        kind = doc["kind"]
        if kind not in KINDS:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        est, hp = make_estimator(kind, doc["hyperparams"])
        est.load(doc["parameters"])
        scaler = Scaler.from_dict(doc["scaler"])
        names = doc["feature_names"]
        if len(scaler.mean) != len(names) or len(scaler.std) != len(names):
            raise ModelFormatError("scaler width does not match the feature names")
        return TrainedModel(kind, est, scaler, names, hp, doc["threshold"], doc.get("seed", 0))
    except ModelFormatError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ModelFormatError(f"malformed model file: {exc!r}") from None


def save_model(model: TrainedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path) -> TrainedModel:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFormatError(f"{path}: {exc}") from None
    return model_from_dict(doc)
