"""Signature databases: label encoding, staging, and 0-1 rescaling.

A database moves through three stages: preliminary (raw statistics),
scaled (every feature linearly mapped to [0, 1] using training extrema),
and optimum (column subset chosen by feature selection).  The fitted
scaler travels with every trained model so diagnosis-time vectors are
mapped with the training extrema and clamped into [0, 1].

On disk a database is a CSV (`f_<name>,...,label`) plus a JSON sidecar
carrying stage, catalog version, scaler, selected feature indices and
the fault registry.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    IoFailure,
    StageError,
    TooFewRows,
    UnknownLabel,
)

LINK_FAULTY = +1
LINK_HEALTHY = -1
HEALTHY_CLIENT = 0  # client-label index reserved for the no-fault class

DEFAULT_FAULT_REGISTRY = {
    "sack_disabled": 1,
    "dsack_disabled": 2,
    "read_buf": 3,
    "write_buf": 4,
}


class Stage(enum.Enum):
    PRELIMINARY = "preliminary"
    SCALED = "scaled"
    OPTIMUM = "optimum"


class LabelKind(enum.Enum):
    LINK = "link"
    CLIENT = "client"


@dataclass(frozen=True)
class ScalerParams:
    """Per-feature training extrema."""

    min: np.ndarray
    max: np.ndarray
    fitted_on: int

    def __post_init__(self):
        if self.min.shape != self.max.shape:
            raise DimensionMismatch("scaler min/max length mismatch")
        if np.any(self.min > self.max):
            raise ValueError("scaler with min > max")

    @property
    def m(self) -> int:
        return int(self.min.shape[0])


@dataclass(frozen=True, eq=False)
class SignatureDatabase:
    stage: Stage
    feature_names: tuple[str, ...]
    X: np.ndarray  # n x m, float64
    y: np.ndarray  # n, int
    label_kind: LabelKind
    catalog_version: str
    scaler: ScalerParams | None = None
    selected_features: tuple[int, ...] | None = None
    fault_registry: dict[str, int] | None = None

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[0] != self.y.shape[0]:
            raise DimensionMismatch("X/y shape mismatch")
        if self.X.shape[1] != len(self.feature_names):
            raise DimensionMismatch("feature_names length != columns")
        if self.stage is Stage.OPTIMUM and self.selected_features is None:
            raise StageError("optimum database requires selected_features")

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def m(self) -> int:
        return int(self.X.shape[1])


def encode_labels(
    rows,
    feature_names,
    kind: LabelKind,
    catalog_version: str,
    fault_registry: dict[str, int] | None = None,
) -> SignatureDatabase:
    """Build the preliminary database from (vector, tag) rows.

    Link tags: FAULTY -> +1, HEALTHY -> -1.  Client tags: HEALTHY -> 0,
    fault names resolve through the registry.
    """
    registry = dict(fault_registry) if fault_registry else (
        dict(DEFAULT_FAULT_REGISTRY) if kind is LabelKind.CLIENT else {}
    )
    X = []
    y = []
    for values, tag in rows:
        X.append(np.asarray(values, dtype=np.float64))
        if kind is LabelKind.LINK:
            if tag == "FAULTY":
                y.append(LINK_FAULTY)
            elif tag == "HEALTHY":
                y.append(LINK_HEALTHY)
            else:
                raise UnknownLabel(tag)
        else:
            if tag == "HEALTHY":
                y.append(HEALTHY_CLIENT)
            elif tag in registry:
                y.append(registry[tag])
            else:
                raise UnknownLabel(tag)
    return SignatureDatabase(
        stage=Stage.PRELIMINARY,
        feature_names=tuple(feature_names),
        X=np.vstack(X) if X else np.empty((0, len(feature_names))),
        y=np.asarray(y, dtype=np.int64),
        label_kind=kind,
        catalog_version=catalog_version,
        fault_registry=registry if kind is LabelKind.CLIENT else None,
    )


def fit_scaler(db: SignatureDatabase) -> ScalerParams:
    """Column-wise extrema of the training rows."""
    if db.stage is not Stage.PRELIMINARY:
        raise StageError(f"scaler must be fitted on a preliminary database, got {db.stage.value}")
    if db.n < 2:
        raise TooFewRows(f"need at least 2 rows to fit a scaler, got {db.n}")
    return ScalerParams(min=db.X.min(axis=0), max=db.X.max(axis=0), fitted_on=db.n)


def apply_scaler(x: np.ndarray, s: ScalerParams) -> np.ndarray:
    """Map to [0, 1] per feature; constant features -> 0; clamp outside."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != s.m:
        raise DimensionMismatch(f"vector has {x.shape[-1]} features, scaler has {s.m}")
    span = s.max - s.min
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (x - s.min) / span
    out = np.where(span > 0, out, 0.0)
    return np.clip(out, 0.0, 1.0)


def scale_database(db: SignatureDatabase, scaler: ScalerParams | None = None) -> SignatureDatabase:
    """Preliminary -> scaled.  Re-scaling a scaled database is rejected."""
    if db.stage is not Stage.PRELIMINARY:
        raise StageError(f"cannot scale a {db.stage.value} database")
    if scaler is None:
        scaler = fit_scaler(db)
    return replace(db, stage=Stage.SCALED, X=apply_scaler(db.X, scaler), scaler=scaler)


def save_database(db: SignatureDatabase, path) -> None:
    path = Path(path)
    lines = [",".join([f"f_{n}" for n in db.feature_names] + ["label"])]
    for i in range(db.n):
        lines.append(",".join([repr(float(v)) for v in db.X[i]] + [str(int(db.y[i]))]))
    sidecar = {
        "stage": db.stage.value,
        "catalog_version": db.catalog_version,
        "scaler": {
            "min": [] if db.scaler is None else db.scaler.min.tolist(),
            "max": [] if db.scaler is None else db.scaler.max.tolist(),
        },
        "selected_features": list(db.selected_features) if db.selected_features else [],
        "fault_registry": dict(db.fault_registry) if db.fault_registry else {},
    }
    try:
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def load_database(path) -> SignatureDatabase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
        meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    if header[-1] != "label" or not all(h.startswith("f_") for h in header[:-1]):
        raise IoFailure(f"{path}: not a signature database CSV")
    names = tuple(h[2:] for h in header[:-1])
    X = np.empty((len(lines) - 1, len(names)), dtype=np.float64)
    y = np.empty(len(lines) - 1, dtype=np.int64)
    for i, ln in enumerate(lines[1:]):
        parts = ln.split(",")
        X[i] = [float(p) for p in parts[:-1]]
        y[i] = int(parts[-1])
    smin = np.asarray(meta["scaler"]["min"], dtype=np.float64)
    smax = np.asarray(meta["scaler"]["max"], dtype=np.float64)
    scaler = ScalerParams(min=smin, max=smax, fitted_on=0) if smin.size else None
    registry = {str(k): int(v) for k, v in meta["fault_registry"].items()}
    return SignatureDatabase(
        stage=Stage(meta["stage"]),
        feature_names=names,
        X=X,
        y=y,
        label_kind=LabelKind.CLIENT if registry else LabelKind.LINK,
        catalog_version=meta["catalog_version"],
        scaler=scaler,
        selected_features=tuple(meta["selected_features"]) or None,
        fault_registry=registry or None,
    )
