"""Soft-margin kernel SVM with squared-slack penalty.

The squared-slack (L2) primal reduces to a hard-margin dual on the
ridge-shifted kernel K~ = K + I/C with nonnegative multipliers and the
usual balance constraint sum(alpha_i * y_i) = 0.  The solver is pairwise
coordinate ascent: each update picks the maximal-violating pair, one
index from the set that may move up and one from the set that may move
down, and takes the exact 1-D Newton step clipped to the feasible box.
One "iteration" is a sweep of up to n pair updates.

The per-point quantity b_i = y_i - sum_j alpha_j y_j K(x_j, x_i)
- alpha_i y_i / C doubles as the optimality certificate (the spread
max-min over the movable sets is the KKT violation) and, averaged over
support vectors, as the bias term of the decision function.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    IoFailure,
    NonFiniteInput,
    SingleClassInput,
)
from .preprocess import ScalerParams

KERNEL_VARIANTS = ("linear", "quadratic", "cubic", "rbf")


@dataclass(frozen=True)
class KernelSpec:
    variant: str
    sigma: float | None = None

    def __post_init__(self):
        if self.variant not in KERNEL_VARIANTS:
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "rbf":
            if self.sigma is None or self.sigma <= 0:
                raise ValueError("rbf kernel requires sigma > 0")
        elif self.sigma is not None:
            raise ValueError(f"{self.variant} kernel takes no sigma")


def default_sigma(q: int) -> float:
    """Dimension-scaled default width for the rbf kernel."""
    return float(np.sqrt(max(q, 1) / 2.0))


@dataclass(frozen=True)
class SvmConfig:
    kernel: KernelSpec
    C: float = 10.0
    max_iter: int = 1000
    tol: float = 1e-3

    def __post_init__(self):
        if self.C <= 0 or self.max_iter <= 0 or self.tol <= 0:
            raise ValueError("C, max_iter and tol must be positive")


@dataclass(frozen=True)
class TrainingMeta:
    n: int
    iterations_used: int
    final_kkt_residual: float
    converged: bool


@dataclass(frozen=True, eq=False)
class SvmModel:
    kernel: KernelSpec
    C: float
    bias: float
    dual_coef: np.ndarray  # alpha_i * y_i for retained vectors
    support_vectors: np.ndarray  # one row per retained vector
    feature_subset: tuple[int, ...]
    scaler: ScalerParams | None
    catalog_version: str
    training_meta: TrainingMeta


@dataclass
class TrainingState:
    """Full solver state; kept for diagnostics and property tests."""

    alpha: np.ndarray
    objective_trace: list[float] = field(default_factory=list)
    bias_estimates: np.ndarray | None = None
    dual_objective: float = 0.0
    iterations_used: int = 0
    updates: int = 0
    converged: bool = False
    final_kkt_residual: float = 0.0


def kernel_eval(spec: KernelSpec, x, x2) -> float:
    x = np.asarray(x, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x.shape != x2.shape:
        raise DimensionMismatch(f"kernel arguments of shape {x.shape} vs {x2.shape}")
    d = float(np.dot(x, x2))
    if spec.variant == "linear":
        return d
    if spec.variant == "quadratic":
        return (d + 1.0) ** 2
    if spec.variant == "cubic":
        return (d + 1.0) ** 3
    diff = x - x2
    return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.sigma**2)))


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch("kernel operands with different feature counts")
    G = A @ B.T
    if spec.variant == "linear":
        return G
    if spec.variant == "quadratic":
        return (G + 1.0) ** 2
    if spec.variant == "cubic":
        return (G + 1.0) ** 3
    sq = np.maximum(
        (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * G, 0.0
    )
    return np.exp(-sq / (2.0 * spec.sigma**2))


def gram_matrix(spec: KernelSpec, X: np.ndarray, C: float) -> np.ndarray:
    """Ridge-shifted training kernel K + I/C."""
    X = np.asarray(X, dtype=np.float64)
    return kernel_matrix(spec, X, X) + np.eye(X.shape[0]) / C


def solve_dual(Kt: np.ndarray, y: np.ndarray, tol: float, max_iter: int) -> TrainingState:
    """Maximize sum(a) - 0.5 a' (yy' * Kt) a  s.t.  a >= 0, y'a = 0."""
    n = y.shape[0]
    alpha = np.zeros(n)
    # b_vec[i] = y_i * dObjective/dAlpha_i; starts at y since grad = 1.
    b_vec = y.astype(np.float64).copy()
    state = TrainingState(alpha=alpha)
    objective = 0.0
    neg_inf = -np.inf

    pos = y > 0
    converged = False
    sweeps = 0
    while sweeps < max_iter and not converged:
        sweeps += 1
        for _ in range(n):
            movable = alpha > 0
            up = np.where(pos | movable, b_vec, neg_inf)
            low = np.where(~pos | movable, b_vec, -neg_inf)
            i = int(np.argmax(up))
            j = int(np.argmin(low))
            violation = up[i] - low[j]
            if violation <= tol:
                converged = True
                break
            eta = Kt[i, i] + Kt[j, j] - 2.0 * Kt[i, j]
            t = violation / eta
            if y[i] < 0:
                t = min(t, alpha[i])
            if y[j] > 0:
                t = min(t, alpha[j])
            alpha[i] += y[i] * t
            alpha[j] -= y[j] * t
            if alpha[i] < 0:
                alpha[i] = 0.0
            if alpha[j] < 0:
                alpha[j] = 0.0
            b_vec -= t * (Kt[:, i] - Kt[:, j])
            objective += violation * t - 0.5 * eta * t * t
            state.objective_trace.append(objective)
            state.updates += 1

    # Exact recompute of the certificate quantities at the final point.
    ay = alpha * y
    grad = 1.0 - y * (Kt @ ay)
    b_vec_exact = y * grad
    movable = alpha > 0
    m_up = np.max(np.where(pos | movable, b_vec_exact, neg_inf))
    m_low = np.min(np.where(~pos | movable, b_vec_exact, -neg_inf))
    state.alpha = alpha
    state.bias_estimates = b_vec_exact
    state.dual_objective = float(np.sum(alpha) - 0.5 * ay @ (Kt @ ay))
    state.iterations_used = sweeps
    state.converged = converged
    state.final_kkt_residual = float(m_up - m_low)
    return state


def train_arrays(
    X: np.ndarray,
    y: np.ndarray,
    config: SvmConfig,
    scaler: ScalerParams | None = None,
    feature_subset: tuple[int, ...] | None = None,
    catalog_version: str = "none",
    return_state: bool = False,
):
    """Train on a prepared matrix with labels in {+1, -1}."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("training data contains NaN or Inf")
    classes = set(np.unique(y).tolist())
    if classes != {-1.0, 1.0}:
        raise SingleClassInput(f"need both classes +1/-1, got labels {sorted(classes)}")

    Kt = kernel_matrix(config.kernel, X, X) + np.eye(X.shape[0]) / config.C
    state = solve_dual(Kt, y, config.tol, config.max_iter)

    sv = state.alpha > config.tol
    if not np.any(sv):
        sv = state.alpha > 0  # degenerate, extremely well-separated data
    bias = float(np.mean(state.bias_estimates[sv]))
    model = SvmModel(
        kernel=config.kernel,
        C=config.C,
        bias=bias,
        dual_coef=(state.alpha * y)[sv],
        support_vectors=X[sv].copy(),
        feature_subset=tuple(feature_subset) if feature_subset is not None else tuple(range(X.shape[1])),
        scaler=scaler,
        catalog_version=catalog_version,
        training_meta=TrainingMeta(
            n=int(X.shape[0]),
            iterations_used=state.iterations_used,
            final_kkt_residual=state.final_kkt_residual,
            converged=state.converged,
        ),
    )
    return (model, state) if return_state else model


def train(db, config: SvmConfig, return_state: bool = False):
    """Train from a scaled or optimum two-class database (labels +1/-1)."""
    from .preprocess import Stage  # local import to keep module load light

    if db.stage is Stage.PRELIMINARY:
        raise ValueError("train expects a scaled or optimum database")
    subset = db.selected_features if db.selected_features is not None else tuple(range(db.m))
    return train_arrays(
        db.X,
        db.y,
        config,
        scaler=db.scaler,
        feature_subset=subset,
        catalog_version=db.catalog_version,
        return_state=return_state,
    )


def decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != model.support_vectors.shape[1]:
        raise DimensionMismatch(
            f"input has {X.shape[1]} features, model expects {model.support_vectors.shape[1]}"
        )
    K = kernel_matrix(model.kernel, model.support_vectors, X)
    return model.dual_coef @ K + model.bias


def decision_value(model: SvmModel, x) -> float:
    return float(decision_values(model, np.asarray(x))[0])


def classify(model: SvmModel, x) -> int:
    """+1 iff the decision value is >= 0 (boundary goes to +1)."""
    return 1 if decision_value(model, x) >= 0 else -1


def model_to_dict(model: SvmModel) -> dict:
    kernel = {"variant": model.kernel.variant}
    if model.kernel.sigma is not None:
        kernel["sigma"] = model.kernel.sigma
    return {
        "kernel": kernel,
        "C": model.C,
        "bias": model.bias,
        "dual_coef": model.dual_coef.tolist(),
        "support_vectors": model.support_vectors.tolist(),
        "feature_subset": list(model.feature_subset),
        "scaler": {
            "min": [] if model.scaler is None else model.scaler.min.tolist(),
            "max": [] if model.scaler is None else model.scaler.max.tolist(),
        },
        "catalog_version": model.catalog_version,
        "training_meta": {
            "n": model.training_meta.n,
            "iterations_used": model.training_meta.iterations_used,
            "final_kkt_residual": model.training_meta.final_kkt_residual,
            "converged": model.training_meta.converged,
        },
    }


def model_from_dict(d: dict) -> SvmModel:
    smin = np.asarray(d["scaler"]["min"], dtype=np.float64)
    smax = np.asarray(d["scaler"]["max"], dtype=np.float64)
    meta = d["training_meta"]
    return SvmModel(
        kernel=KernelSpec(d["kernel"]["variant"], d["kernel"].get("sigma")),
        C=float(d["C"]),
        bias=float(d["bias"]),
        dual_coef=np.asarray(d["dual_coef"], dtype=np.float64),
        support_vectors=np.asarray(d["support_vectors"], dtype=np.float64),
        feature_subset=tuple(d["feature_subset"]),
        scaler=ScalerParams(min=smin, max=smax, fitted_on=0) if smin.size else None,
        catalog_version=d["catalog_version"],
        training_meta=TrainingMeta(
            n=int(meta["n"]),
            iterations_used=int(meta["iterations_used"]),
            final_kkt_residual=float(meta["final_kkt_residual"]),
            converged=bool(meta["converged"]),
        ),
    )


def save_model(model: SvmModel, path) -> None:
    try:
        Path(path).write_text(
            json.dumps(model_to_dict(model), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def load_model(path) -> SvmModel:
    try:
        return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
