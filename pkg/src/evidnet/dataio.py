"""Dataset CSV ingestion, model serialization, and prediction export.

Feature files are plain CSV with header ``f0,f1,...,f{d-1},label``; the
label cell holds a class name or ``?`` for unlabeled rows. Models are
stored as JSON documents whose floats round-trip bit-exactly (Python's
shortest-repr float rendering). No timestamps or environment data are
written, so identical models produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CorruptFieldError,
    DimensionMismatchError,
    EmptyFileError,
    LengthMismatchError,
    MissingHeaderError,
    NonFiniteInputError,
    NonNumericFeatureError,
    RaggedRowError,
    UnknownLabelError,
    UnsupportedVersionError,
    WriteFailureError,
)
from .model import EvidentialModel, ModelConfig, forward_batch

FORMAT_VERSION = 1

UNLABELED = "?"

PREDICTIONS_HEADER = "row,m_pos,m_neg,m_omega,pl_pos,pl_neg,decision"


@dataclass
class FeatureDataset:
    """Feature matrix plus per-row optional class labels.

    labels holds indices into class_names; None marks an unlabeled row.
    """

    features: np.ndarray
    labels: list[Optional[int]]
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2:
            raise DimensionMismatchError(
                f"features must be a matrix, got shape {self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise NonFiniteInputError("non-finite feature values")
        self.labels = list(self.labels)
        if len(self.labels) != self.features.shape[0]:
            raise LengthMismatchError(
                f"{len(self.labels)} labels for {self.features.shape[0]} rows"
            )
        self.class_names = tuple(self.class_names)
        k = len(self.class_names)
        for lab in self.labels:
            if lab is not None and not 0 <= lab < k:
                raise ValueError(f"label index {lab} outside class_names of size {k}")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d_in(self) -> int:
        return self.features.shape[1]

    @property
    def n_labeled(self) -> int:
        return sum(1 for lab in self.labels if lab is not None)

    def fully_labeled(self) -> bool:
        return all(lab is not None for lab in self.labels)


def _expected_header(d: int) -> list[str]:
    return [f"f{j}" for j in range(d)] + ["label"]


def load_csv(path, class_names: Sequence[str] | None = None) -> FeatureDataset:
    """Parse a feature CSV; row numbers in errors are 1-based data rows.

    With class_names given, labels must come from that list (order
    defines the index mapping); otherwise names are collected in order
    of first appearance.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh)]
    if not rows:
        raise EmptyFileError(f"{path}: no content")
    header = rows[0]
    if len(header) < 2 or header != _expected_header(len(header) - 1):
        raise MissingHeaderError(
            f"{path}: header must be f0,...,f{{d-1}},label, got {','.join(header)}"
        )
    d = len(header) - 1
    fixed_names = tuple(class_names) if class_names is not None else None
    seen: list[str] = list(fixed_names) if fixed_names is not None else []
    features = np.empty((len(rows) - 1, d))
    labels: list[Optional[int]] = []
    for rownum, row in enumerate(rows[1:], start=1):
        if len(row) != d + 1:
            raise RaggedRowError(f"{path}: row {rownum} has {len(row)} cells, expected {d + 1}")
        for j, cell in enumerate(row[:d]):
            try:
                value = float(cell)
            except ValueError:
                raise NonNumericFeatureError(
                    f"{path}: row {rownum}, column f{j}: {cell!r}"
                ) from None
            if not np.isfinite(value):
                raise NonNumericFeatureError(
                    f"{path}: row {rownum}, column f{j}: non-finite value {cell!r}"
                )
            features[rownum - 1, j] = value
        cell = row[d]
        if cell == UNLABELED:
            labels.append(None)
        elif cell in seen:
            labels.append(seen.index(cell))
        elif fixed_names is None:
            seen.append(cell)
            labels.append(len(seen) - 1)
        else:
            raise UnknownLabelError(
                f"{path}: row {rownum}: label {cell!r} not among {fixed_names}"
            )
    return FeatureDataset(features=features, labels=labels, class_names=tuple(seen))


def write_csv(dataset: FeatureDataset, path) -> None:
    """Inverse of load_csv; floats are written with round-trip precision."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(_expected_header(dataset.d_in))
            for i in range(dataset.n):
                lab = dataset.labels[i]
                name = UNLABELED if lab is None else dataset.class_names[lab]
                writer.writerow(
                    [repr(float(v)) for v in dataset.features[i]] + [name]
                )
    except OSError as exc:
        raise WriteFailureError(f"{path}: {exc}") from exc


def _model_document(model: EvidentialModel, training_meta: dict | None) -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": {
            "d_in": model.config.d_in,
            "r": model.config.r,
            "h": model.config.h,
            "k": model.config.k,
        },
        "class_names": list(model.class_names),
        "w": model.w.tolist(),
        "b": model.b.tolist(),
        "prototypes": [
            {
                "center": model.centers[i].tolist(),
                "beta": model.beta[i].tolist(),
                "xi": float(model.xi[i]),
                "eta": float(model.eta[i]),
            }
            for i in range(model.config.r)
        ],
    }
    if training_meta is not None:
        doc["training_meta"] = training_meta
    return doc


def save_model(model: EvidentialModel, path, training_meta: dict | None = None) -> None:
    """Write the model as a deterministic JSON document.

    Floats go through Python's shortest round-trip repr, so save →
    load reproduces every parameter bit-exactly and identical models
    yield byte-identical files.
    """
    path = Path(path)
    doc = _model_document(model, training_meta)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise WriteFailureError(f"{path}: {exc}") from exc


def _require(doc: dict, key: str):
    if key not in doc:
        raise CorruptFieldError(f"missing field {key!r}")
    return doc[key]


def load_model(path) -> EvidentialModel:
    """Load a model document written by save_model."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CorruptFieldError(f"{path}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CorruptFieldError(f"{path}: expected a JSON object")
    version = _require(doc, "format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(
            f"{path}: format_version {version!r}, supported: {FORMAT_VERSION}"
        )
    raw_cfg = _require(doc, "config")
    try:
        config = ModelConfig(
            d_in=int(_require(raw_cfg, "d_in")),
            r=int(_require(raw_cfg, "r")),
            h=int(_require(raw_cfg, "h")),
            k=int(_require(raw_cfg, "k")),
        )
    except (TypeError, ValueError) as exc:
        raise CorruptFieldError(f"{path}: bad config: {exc}") from exc
    protos = _require(doc, "prototypes")
    if not isinstance(protos, list) or len(protos) != config.r:
        raise DimensionMismatchError(
            f"{path}: expected {config.r} prototypes, found {len(protos)}"
        )
    def block(values, name):
        try:
            arr = np.asarray(values, dtype=float)
        except (TypeError, ValueError) as exc:
            raise CorruptFieldError(f"{path}: bad field {name!r}: {exc}") from exc
        return arr
    w = block(_require(doc, "w"), "w")
    b = block(_require(doc, "b"), "b")
    centers = block([_require(p, "center") for p in protos], "center")
    beta = block([_require(p, "beta") for p in protos], "beta")
    xi = block([_require(p, "xi") for p in protos], "xi")
    eta = block([_require(p, "eta") for p in protos], "eta")
    if centers.ndim != 2 or centers.shape[1] != config.h:
        raise DimensionMismatchError(
            f"{path}: prototype centers have shape {centers.shape}, expected (r, {config.h})"
        )
    try:
        return EvidentialModel(
            config=config,
            class_names=tuple(str(nm) for nm in _require(doc, "class_names")),
            w=w,
            b=b,
            centers=centers,
            beta=beta,
            xi=xi,
            eta=eta,
        )
    except NonFiniteInputError as exc:
        raise CorruptFieldError(f"{path}: {exc}") from exc


def export_predictions(model: EvidentialModel, dataset: FeatureDataset, path) -> int:
    """Write per-row masses, plausibilities and decisions; returns row count.

    Output header: ``row,m_pos,m_neg,m_omega,pl_pos,pl_neg,decision``
    with 0-based row indices in input order.
    """
    if model.config.k != 2:
        raise ValueError("prediction export is defined for binary models")
    if dataset.d_in != model.config.d_in:
        raise DimensionMismatchError(
            f"dataset has {dataset.d_in} features, model expects {model.config.d_in}"
        )
    lines = [PREDICTIONS_HEADER]
    if dataset.n:
        m, m_omega, pl = forward_batch(model, dataset.features)
        winners = pl.argmax(axis=1)
        for i in range(dataset.n):
            cells = [
                str(i),
                repr(float(m[i, 0])),
                repr(float(m[i, 1])),
                repr(float(m_omega[i])),
                repr(float(pl[i, 0])),
                repr(float(pl[i, 1])),
                model.class_names[int(winners[i])],
            ]
            lines.append(",".join(cells))
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise WriteFailureError(f"{path}: {exc}") from exc
    return dataset.n
