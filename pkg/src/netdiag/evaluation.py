"""Cross-validation, accuracy/confusion reporting, and grid selection.

k_fold_cv re-fits the whole pipeline (scaler, ranking, subset, SVM)
inside every training fold, so no statistic of a test row ever reaches
the model that scores it.  Grid selection sweeps kernel shape, margin
trade-off and rbf width, breaking ties toward the simpler kernel, then
the smaller C, then the smaller sigma.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .classifiers import CfdNetwork, LinkState, LpdClassifier, PipelineConfig, diagnose, fit_pipeline
from .errors import ConfigError, InsufficientRows
from .features import FeatureCatalog
from .preprocess import SignatureDatabase, Stage
from .selection import stratified_folds
from .svm import KERNEL_VARIANTS, KernelSpec, SvmConfig
from .trace import TracePair

_KERNEL_RANK = {v: i for i, v in enumerate(KERNEL_VARIANTS)}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n if self.n else 0.0

    @property
    def false_positive_rate(self) -> float:
        denom = self.fp + self.tn
        return self.fp / denom if denom else 0.0

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "accuracy": self.accuracy,
            "false_positive_rate": self.false_positive_rate,
        }


def confusion_from_predictions(y_true: np.ndarray, y_pred: np.ndarray) -> ConfusionMatrix:
    return ConfusionMatrix(
        tp=int(np.sum((y_true == 1) & (y_pred == 1))),
        fp=int(np.sum((y_true == -1) & (y_pred == 1))),
        tn=int(np.sum((y_true == -1) & (y_pred == -1))),
        fn=int(np.sum((y_true == 1) & (y_pred == -1))),
    )


@dataclass(frozen=True)
class CvResult:
    mean_accuracy: float
    mean_fp_rate: float
    folds: tuple[ConfusionMatrix, ...]


def k_fold_cv(db: SignatureDatabase, config: PipelineConfig, k: int, seed: int) -> CvResult:
    """Stratified k-fold CV with per-fold pipeline re-fit."""
    from .classifiers import model_predict  # deferred: avoids import noise at module load

    if db.stage is not Stage.PRELIMINARY:
        raise ConfigError("cross-validation expects a preliminary database")
    for cls in (+1, -1):
        if int(np.sum(db.y == cls)) < 1:
            raise InsufficientRows(f"class {cls:+d} has no rows")
    folds = stratified_folds(db.y, k, seed)
    matrices = []
    all_rows = np.arange(db.n)
    for fold in folds:
        test_mask = np.zeros(db.n, dtype=bool)
        test_mask[fold] = True
        train_idx = all_rows[~test_mask]
        if len(set(db.y[train_idx].tolist())) < 2:
            raise InsufficientRows("a training fold lost one of the classes")
        train_db = replace(db, X=db.X[train_idx].copy(), y=db.y[train_idx].copy())
        model, _ = fit_pipeline(train_db, config)
        preds = np.asarray([model_predict(model, db.X[i])[1] for i in fold])
        matrices.append(confusion_from_predictions(db.y[fold], preds))
    accs = [m.accuracy for m in matrices]
    fprs = [m.false_positive_rate for m in matrices]
    return CvResult(
        mean_accuracy=float(np.mean(accs)),
        mean_fp_rate=float(np.mean(fprs)),
        folds=tuple(matrices),
    )


@dataclass(frozen=True)
class GridCell:
    kernel: KernelSpec
    C: float
    mean_accuracy: float
    mean_objective: float


@dataclass(frozen=True)
class GridResult:
    cells: tuple[GridCell, ...]
    best: GridCell

    def to_dict(self) -> dict:
        def cell(c):
            return {
                "kernel": c.kernel.variant,
                "sigma": c.kernel.sigma,
                "C": c.C,
                "mean_accuracy": c.mean_accuracy,
                "mean_objective": c.mean_objective,
            }

        return {"cells": [cell(c) for c in self.cells], "best": cell(self.best)}


def select_model(
    db: SignatureDatabase,
    kernels,
    Cs,
    sigmas,
    k: int,
    seed: int,
    base: PipelineConfig,
) -> GridResult:
    """Exhaustive CV over the grid; deterministic tie-break."""
    cells = []
    for variant in kernels:
        if variant not in _KERNEL_RANK:
            raise ConfigError(f"unknown kernel {variant!r} in grid")
        widths = sorted(sigmas) if variant == "rbf" else [None]
        for C in sorted(Cs):
            for sigma in widths:
                spec = KernelSpec(variant, sigma)
                config = replace(base, svm=replace(base.svm, kernel=spec, C=C))
                result = k_fold_cv(db, config, k, seed)
                objective = result.mean_accuracy - base.fp_penalty * result.mean_fp_rate
                cells.append(GridCell(spec, C, result.mean_accuracy, objective))
    if not cells:
        raise ConfigError("empty model grid")
    best = min(
        cells,
        key=lambda c: (
            -c.mean_objective,
            _KERNEL_RANK[c.kernel.variant],
            c.C,
            c.kernel.sigma if c.kernel.sigma is not None else 0.0,
        ),
    )
    return GridResult(cells=tuple(cells), best=best)


@dataclass(frozen=True)
class GroundTruth:
    link_faulty: bool
    client_faults: frozenset[str]

    def condition(self) -> str:
        if self.link_faulty:
            return "faulty_link"
        if not self.client_faults:
            return "default_client"
        return "+".join(sorted(self.client_faults))


def evaluate_verdicts(
    labeled_pairs: list[tuple[TracePair, GroundTruth]],
    lpd: LpdClassifier,
    cfd: CfdNetwork,
    catalog: FeatureCatalog,
) -> dict:
    """Per-condition exact-verdict accuracy and per-fault confusion."""
    by_condition: dict[str, list[bool]] = {}
    fault_names = sorted(cfd.fault_registry, key=lambda n: cfd.fault_registry[n])
    fault_counts = {name: {"tp": 0, "fp": 0, "tn": 0, "fn": 0} for name in fault_names}
    for pair, truth in labeled_pairs:
        verdict = diagnose(lpd, cfd, pair, catalog)
        if truth.link_faulty:
            correct = verdict.link is LinkState.FAULTY
        else:
            correct = verdict.link is LinkState.HEALTHY and verdict.client_faults == truth.client_faults
        by_condition.setdefault(truth.condition(), []).append(correct)
        if not truth.link_faulty and verdict.link is LinkState.HEALTHY:
            for name in fault_names:
                expected = name in truth.client_faults
                detected = name in verdict.client_faults
                key = "tp" if expected and detected else "fn" if expected else "fp" if detected else "tn"
                fault_counts[name][key] += 1
    conditions = {
        cond: {"n": len(flags), "accuracy": float(np.mean(flags))}
        for cond, flags in sorted(by_condition.items())
    }
    per_fault = {
        name: ConfusionMatrix(**counts).to_dict() for name, counts in fault_counts.items()
    }
    return {"conditions": conditions, "per_fault": per_fault}


def render_report(report: dict) -> str:
    """Aligned-column text table of an evaluate_verdicts report."""
    lines = []
    width = max([len("condition")] + [len(c) for c in report["conditions"]])
    lines.append(f"{'condition':<{width}}  {'n':>5}  accuracy")
    for cond, row in report["conditions"].items():
        lines.append(f"{cond:<{width}}  {row['n']:>5}  {row['accuracy'] * 100:7.2f}%")
    lines.append("")
    fwidth = max([len("fault")] + [len(f) for f in report["per_fault"]])
    lines.append(f"{'fault':<{fwidth}}  {'tp':>4} {'fp':>4} {'tn':>4} {'fn':>4}  accuracy  fp_rate")
    for name, cm in report["per_fault"].items():
        lines.append(
            f"{name:<{fwidth}}  {cm['tp']:>4} {cm['fp']:>4} {cm['tn']:>4} {cm['fn']:>4}"
            f"  {cm['accuracy'] * 100:7.2f}%  {cm['false_positive_rate'] * 100:6.2f}%"
        )
    return "\n".join(lines) + "\n"
