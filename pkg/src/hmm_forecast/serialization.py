"""Versioned JSON documents for fitted models.

Floats are written with ``repr`` precision (shortest string that round-trips
to the same IEEE-754 double), so ``load(dump(m))`` is bit-exact.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import ArgumentError, ModelFormatError, NumericError
from .hmm import FitConfig, GaussianHmm

FORMAT_NAME = "hmm-forecast/gaussian-hmm"
FORMAT_VERSION = 1


def to_document(model: GaussianHmm, config: FitConfig | None = None, extra: dict | None = None) -> dict:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "n_states": model.n_states,
        "dim": model.dim,
        "start_prob": model.start_prob.tolist(),
        "transition": model.transition.tolist(),
        "means": model.means.tolist(),
        "covariances": model.covariances.tolist(),
        "fit_config": None if config is None else dataclasses.asdict(config),
    }
    if extra:
        doc["metadata"] = extra
    return doc


def serialize(model: GaussianHmm, config: FitConfig | None = None, extra: dict | None = None) -> str:
    return json.dumps(to_document(model, config, extra), indent=2) + "\n"


def _require(doc: dict, key: str):
    if key not in doc:
        raise ModelFormatError(f"model document is missing field {key!r}")
    return doc[key]


def from_document(doc) -> GaussianHmm:
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    if doc.get("format") != FORMAT_NAME:
        raise ModelFormatError(f"unrecognised model format {doc.get('format')!r}")
    if doc.get("version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model version {doc.get('version')!r} (expected {FORMAT_VERSION})"
        )
    try:
        arrays = {
            key: np.array(_require(doc, key), dtype=float)
            for key in ("start_prob", "transition", "means", "covariances")
        }
    except (TypeError, ValueError) as exc:
        raise ModelFormatError(f"model parameters are not numeric arrays: {exc}") from exc
    n, d = _require(doc, "n_states"), _require(doc, "dim")
    if arrays["means"].ndim != 2 or arrays["means"].shape != (n, d):
        raise ModelFormatError(f"means shape {arrays['means'].shape} disagrees with n_states={n}, dim={d}")
    try:
        return GaussianHmm(**arrays)
    except (ArgumentError, NumericError) as exc:
        raise ModelFormatError(f"invalid model parameters: {exc}") from exc


def deserialize(text: str) -> GaussianHmm:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model document is not valid JSON: {exc}") from exc
    return from_document(doc)


def fit_config_from_document(doc: dict) -> FitConfig | None:
    raw = doc.get("fit_config")
    return None if raw is None else FitConfig(**raw)


def save_model(path, model: GaussianHmm, config: FitConfig | None = None, extra: dict | None = None) -> None:
    Path(path).write_text(serialize(model, config, extra), encoding="utf-8")


def load_model(path) -> GaussianHmm:
    return deserialize(Path(path).read_text(encoding="utf-8"))
