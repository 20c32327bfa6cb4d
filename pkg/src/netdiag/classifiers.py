"""Two-stage diagnostic cascade.

Stage one is a binary link classifier: +1 means the access link itself
is degraded and client diagnosis is pointless until it is fixed.  Stage
two is a parallel bank of per-fault binary modules, each trained on the
healthy-client class versus one fault class, each with its own scaler
and feature subset.  The collective client verdict is simply the set of
modules voting +1; an empty set means a healthy client.

On disk a trained bundle is a directory:

    lpd/<profile>.model.json        + <profile>.selection.json
    cfd/<fault_name>.model.json     + <fault_name>.selection.json
    registry.json
"""

from __future__ import annotations

import enum
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import CatalogMismatch, ConfigError, IoFailure, MissingClass
from .features import FeatureCatalog, extract_signature
from .preprocess import (
    HEALTHY_CLIENT,
    LabelKind,
    SignatureDatabase,
    apply_scaler,
    scale_database,
)
from .rng import derive_seed
from .selection import SelectionReport, project, rank_features, wrapper_select
from .svm import (
    KernelSpec,
    SvmConfig,
    SvmModel,
    decision_value,
    default_sigma,
    load_model,
    save_model,
    train,
)
from .trace import TracePair


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to turn a preliminary database into a model."""

    svm: SvmConfig
    candidate_sizes: tuple[int, ...] | None = None  # None -> all features
    cv_folds: int = 5
    seed: int = 0
    fp_penalty: float = 0.0

    def resolved_sizes(self, m: int) -> tuple[int, ...]:
        if self.candidate_sizes is None:
            return (m,)
        sizes = sorted({q for q in self.candidate_sizes if 1 <= q <= m} | set())
        return tuple(sizes) if sizes else (m,)


def default_lpd_config(seed: int = 0) -> PipelineConfig:
    return PipelineConfig(
        svm=SvmConfig(kernel=KernelSpec("quadratic"), C=10.0, max_iter=1000, tol=1e-3),
        candidate_sizes=DEFAULT_WRAPPER_SIZES,
        cv_folds=5,
        seed=seed,
    )


DEFAULT_WRAPPER_SIZES = (5, 10, 15, 20, 25, 50, 75, 100)

# Per-fault module defaults: kernel shape and subset size tuned per fault.
DEFAULT_CF_SETTINGS = {
    "sack_disabled": ("linear", 12),
    "dsack_disabled": ("rbf", 32),
    "read_buf": ("cubic", 24),
    "write_buf": ("rbf", 16),
}


def default_cf_config(fault_name: str, seed: int = 0) -> PipelineConfig:
    variant, q = DEFAULT_CF_SETTINGS.get(fault_name, ("rbf", 16))
    sigma = default_sigma(q) if variant == "rbf" else None
    return PipelineConfig(
        svm=SvmConfig(kernel=KernelSpec(variant, sigma), C=10.0, max_iter=2000, tol=1e-3),
        candidate_sizes=(q,),
        cv_folds=5,
        seed=seed,
        fp_penalty=1.0,
    )


def fit_pipeline(db: SignatureDatabase, config: PipelineConfig):
    """scale -> rank -> choose subset size -> project -> train.

    The input must be a preliminary two-class database with labels
    +1/-1.  Returns (SvmModel, SelectionReport); the model carries the
    fitted scaler and the chosen feature indices, so it is a pure
    function of the training rows.
    """
    scaled = scale_database(db)
    ranking = rank_features(scaled, positive_label=1, negative_label=-1)
    report = wrapper_select(
        scaled,
        ranking,
        config.resolved_sizes(db.m),
        folds=config.cv_folds,
        svm_config=config.svm,
        seed=config.seed,
        fp_penalty=config.fp_penalty,
    )
    optimum = project(scaled, report.chosen_indices)
    model = train(optimum, config.svm)
    return model, report


def model_predict(model: SvmModel, raw_vector: np.ndarray) -> tuple[float, int]:
    """Decision value and class for a raw full-length signature vector."""
    x = np.asarray(raw_vector, dtype=np.float64)
    if model.scaler is not None:
        x = apply_scaler(x, model.scaler)
    x = x[np.asarray(model.feature_subset, dtype=np.int64)]
    d = decision_value(model, x)
    return d, (1 if d >= 0 else -1)


@dataclass(frozen=True)
class LpdClassifier:
    """Stage-one link classifier for one link profile."""

    model: SvmModel
    selection: SelectionReport
    link_profile: str


@dataclass(frozen=True)
class CfModule:
    """One per-fault binary module of the stage-two bank."""

    fault_index: int
    fault_name: str
    model: SvmModel
    selection: SelectionReport


@dataclass(frozen=True)
class CfdNetwork:
    modules: tuple[CfModule, ...]
    fault_registry: dict[str, int]

    def __post_init__(self):
        indices = [m.fault_index for m in self.modules]
        if len(set(indices)) != len(indices):
            raise ConfigError("duplicate fault indices in module bank")
        for m in self.modules:
            if self.fault_registry.get(m.fault_name) != m.fault_index:
                raise ConfigError(f"module {m.fault_name} missing from fault registry")


class LinkState(enum.Enum):
    FAULTY = "faulty"
    HEALTHY = "healthy"


class PipelineNote(enum.Enum):
    LINK_FAULT_STOP = "link_fault_stop"
    FULL_DIAGNOSIS = "full_diagnosis"


@dataclass(frozen=True)
class Verdict:
    link: LinkState
    client_faults: frozenset[str]
    per_module_decisions: tuple[tuple[str, float, int], ...]
    pipeline_note: PipelineNote

    def __post_init__(self):
        if self.link is LinkState.FAULTY and (
            self.client_faults or self.pipeline_note is not PipelineNote.LINK_FAULT_STOP
        ):
            raise ValueError("faulty-link verdicts must stop before client diagnosis")

    def to_dict(self) -> dict:
        return {
            "link": self.link.value,
            "client_faults": sorted(self.client_faults),
            "decisions": [
                {"stage": s, "D": d, "class": c} for s, d, c in self.per_module_decisions
            ],
            "pipeline_note": self.pipeline_note.value,
        }

    def summary(self) -> str:
        if self.link is LinkState.FAULTY:
            return "link: FAULTY - resolve link before client diagnosis"
        if not self.client_faults:
            return "link: healthy, client: healthy"
        return "link: healthy, client faults: " + ", ".join(sorted(self.client_faults))


def train_lpd(
    db: SignatureDatabase,
    config: PipelineConfig,
    link_profile: str = "default",
    client_tags=None,
) -> LpdClassifier:
    """Full stage-one pipeline on a link-labeled preliminary database.

    client_tags, when provided, is a per-row iterable of client-condition
    names used only to warn when a link class lacks behavioral variety.
    """
    if db.label_kind is not LabelKind.LINK:
        raise ConfigError("link classifier needs a link-labeled database")
    if client_tags is not None:
        tags = list(client_tags)
        for cls in (+1, -1):
            seen = {tags[i] for i in np.flatnonzero(db.y == cls)}
            if len(seen) < 2:
                warnings.warn(
                    f"link class {cls:+d} was trained with a single client condition {seen or '{}'}"
                )
    model, report = fit_pipeline(db, config)
    return LpdClassifier(model=model, selection=report, link_profile=link_profile)


def build_cf_subset(db: SignatureDatabase, fault_index: int) -> SignatureDatabase:
    """Rows of one fault class (+1) against the healthy class (-1)."""
    if db.label_kind is not LabelKind.CLIENT:
        raise ConfigError("fault modules need a client-labeled database")
    mask = (db.y == HEALTHY_CLIENT) | (db.y == fault_index)
    y = np.where(db.y[mask] == fault_index, 1, -1).astype(np.int64)
    if not (y == 1).any() or not (y == -1).any():
        raise MissingClass(f"fault class {fault_index} or healthy class missing")
    return replace(db, X=db.X[mask].copy(), y=y, label_kind=LabelKind.LINK, fault_registry=None)


def train_cf_module(db: SignatureDatabase, fault_index: int, config: PipelineConfig) -> CfModule:
    registry = db.fault_registry or {}
    names = {v: k for k, v in registry.items()}
    if fault_index not in names:
        raise MissingClass(f"fault index {fault_index} not in registry {registry}")
    subset = build_cf_subset(db, fault_index)
    model, report = fit_pipeline(subset, config)
    return CfModule(
        fault_index=fault_index, fault_name=names[fault_index], model=model, selection=report
    )


def train_cfd(db: SignatureDatabase, configs: dict[str, PipelineConfig] | None = None, seed: int = 0) -> CfdNetwork:
    """Train every module in the registry, each independently seeded."""
    registry = db.fault_registry or {}
    if not registry:
        raise ConfigError("fault registry is empty; nothing to train")
    modules = []
    for name, index in sorted(registry.items(), key=lambda kv: kv[1]):
        config = (configs or {}).get(name) or default_cf_config(name, seed=derive_seed(seed, name))
        try:
            modules.append(train_cf_module(db, index, config))
        except Exception as exc:
            exc.args = (f"module {name!r}: {exc}",)
            raise
    return CfdNetwork(modules=tuple(modules), fault_registry=dict(registry))


def cfd_collective(decisions) -> set[str]:
    """Fault names of modules voting +1; empty means healthy client."""
    return {name for name, vote in decisions if vote == 1}


def diagnose(lpd: LpdClassifier, cfd: CfdNetwork, pair: TracePair, catalog: FeatureCatalog) -> Verdict:
    """Extract one signature, gate on the link model, then run the bank."""
    for model in [lpd.model] + [m.model for m in cfd.modules]:
        if model.catalog_version != catalog.version:
            raise CatalogMismatch(
                f"model built for catalog {model.catalog_version!r}, extractor is {catalog.version!r}"
            )
    sig = extract_signature(pair, catalog)
    d, cls = model_predict(lpd.model, sig.values)
    decisions = [("lpd", d, cls)]
    if cls == 1:
        return Verdict(
            link=LinkState.FAULTY,
            client_faults=frozenset(),
            per_module_decisions=tuple(decisions),
            pipeline_note=PipelineNote.LINK_FAULT_STOP,
        )
    votes = []
    for module in sorted(cfd.modules, key=lambda m: m.fault_index):
        md, mcls = model_predict(module.model, sig.values)
        decisions.append((module.fault_name, md, mcls))
        votes.append((module.fault_name, mcls))
    return Verdict(
        link=LinkState.HEALTHY,
        client_faults=frozenset(cfd_collective(votes)),
        per_module_decisions=tuple(decisions),
        pipeline_note=PipelineNote.FULL_DIAGNOSIS,
    )


def _replace_dir(tmp: Path, final: Path) -> None:
    import os
    import shutil

    if final.exists():
        shutil.rmtree(final)
    os.rename(tmp, final)


def _stage_dir(bundle: Path, name: str):
    import tempfile

    bundle.mkdir(parents=True, exist_ok=True)
    return Path(tempfile.mkdtemp(dir=bundle, prefix=f".{name}-"))


def _update_registry(bundle: Path, catalog_version: str, **fields) -> None:
    registry_path = bundle / "registry.json"
    meta = {}
    if registry_path.exists():
        meta = json.loads(registry_path.read_text(encoding="utf-8"))
        if meta.get("catalog_version") not in (None, catalog_version):
            raise CatalogMismatch(
                f"bundle already built for catalog {meta['catalog_version']!r}, not {catalog_version!r}"
            )
    meta["catalog_version"] = catalog_version
    meta.update(fields)
    _write_json(registry_path, meta)


def save_lpd_part(bundle, lpd: LpdClassifier, catalog_version: str) -> None:
    """Write the link-classifier half of a bundle (atomic stage swap)."""
    import shutil

    bundle = Path(bundle)
    tmp = _stage_dir(bundle, "lpd")
    try:
        save_model(lpd.model, tmp / f"{lpd.link_profile}.model.json")
        _write_json(tmp / f"{lpd.link_profile}.selection.json", lpd.selection.to_dict())
        _replace_dir(tmp, bundle / "lpd")
        _update_registry(bundle, catalog_version, lpd_profile=lpd.link_profile)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoFailure(str(exc)) from exc


def save_cfd_part(bundle, cfd: CfdNetwork, catalog_version: str) -> None:
    """Write the fault-module half of a bundle (atomic stage swap)."""
    import shutil

    bundle = Path(bundle)
    tmp = _stage_dir(bundle, "cfd")
    try:
        for module in cfd.modules:
            save_model(module.model, tmp / f"{module.fault_name}.model.json")
            _write_json(tmp / f"{module.fault_name}.selection.json", module.selection.to_dict())
        _replace_dir(tmp, bundle / "cfd")
        _update_registry(bundle, catalog_version, fault_registry=dict(cfd.fault_registry))
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise IoFailure(str(exc)) from exc


def save_bundle(path, lpd: LpdClassifier, cfd: CfdNetwork, catalog_version: str) -> None:
    """Write a complete bundle directory."""
    save_lpd_part(path, lpd, catalog_version)
    save_cfd_part(path, cfd, catalog_version)


def load_bundle(path) -> tuple[LpdClassifier, CfdNetwork, str]:
    path = Path(path)
    try:
        registry_meta = json.loads((path / "registry.json").read_text(encoding="utf-8"))
        if "lpd_profile" not in registry_meta or "fault_registry" not in registry_meta:
            raise IoFailure(f"bundle {path} is incomplete (needs both lpd and cfd stages)")
        profile = registry_meta["lpd_profile"]
        lpd_model = load_model(path / "lpd" / f"{profile}.model.json")
        lpd_report = _read_selection(path / "lpd" / f"{profile}.selection.json")
        modules = []
        for name, index in sorted(registry_meta["fault_registry"].items(), key=lambda kv: kv[1]):
            modules.append(
                CfModule(
                    fault_index=int(index),
                    fault_name=name,
                    model=load_model(path / "cfd" / f"{name}.model.json"),
                    selection=_read_selection(path / "cfd" / f"{name}.selection.json"),
                )
            )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    lpd = LpdClassifier(model=lpd_model, selection=lpd_report, link_profile=profile)
    cfd = CfdNetwork(
        modules=tuple(modules),
        fault_registry={str(k): int(v) for k, v in registry_meta["fault_registry"].items()},
    )
    return lpd, cfd, registry_meta["catalog_version"]


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_selection(path) -> SelectionReport:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return SelectionReport(
        candidate_sizes=tuple(d["candidate_sizes"]),
        cv_accuracy=tuple(d["cv_accuracy"]),
        cv_objective=tuple(d["cv_objective"]),
        chosen_q=int(d["chosen_q"]),
        chosen_indices=tuple(d["chosen_indices"]),
    )
