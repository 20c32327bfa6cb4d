"""SVM core: kernels, ridge Gram, dual solver, decision function."""

import numpy as np
import pytest
from qp_reference import reference_decision_function, solve_reference

from netdiag.errors import DimensionMismatch, NonFiniteInput, SingleClassInput
from netdiag.svm import (
    KernelSpec,
    SvmConfig,
    classify,
    decision_value,
    gram_matrix,
    kernel_eval,
    kernel_matrix,
    load_model,
    model_from_dict,
    model_to_dict,
    save_model,
    solve_dual,
    train_arrays,
)

LIN = KernelSpec("linear")
QUAD = KernelSpec("quadratic")


def kkt_satisfied(X, y, alpha, bias, kernel, C, tol):
    K = kernel_matrix(kernel, X, X)
    d_full = K @ (alpha * y) + bias
    ok = True
    for i in range(len(y)):
        margin = y[i] * d_full[i] - 1.0 + alpha[i] / C
        if alpha[i] > tol:
            ok &= abs(margin) <= tol + 1e-9
        else:
            ok &= margin >= -(tol + 1e-9)
    return ok


class TestKernels:
    def test_linear_dot(self):
        assert kernel_eval(LIN, (1, 2), (3, 4)) == 11.0

    def test_quadratic_closed_form(self):
        assert kernel_eval(QUAD, (1, 0), (1, 0)) == 4.0

    def test_rbf_identity(self):
        for sigma in (0.3, 1.0, 7.0):
            assert kernel_eval(KernelSpec("rbf", sigma), (1.5, -2.0), (1.5, -2.0)) == 1.0

    def test_cubic(self):
        assert kernel_eval(KernelSpec("cubic"), (1, 1), (2, 0)) == 27.0

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for spec in (LIN, QUAD, KernelSpec("cubic"), KernelSpec("rbf", 1.3)):
            x, z = rng.normal(size=4), rng.normal(size=4)
            assert kernel_eval(spec, x, z) == pytest.approx(kernel_eval(spec, z, x), abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            kernel_eval(LIN, (1, 2), (1, 2, 3))

    def test_rbf_requires_sigma(self):
        with pytest.raises(ValueError):
            KernelSpec("rbf")
        with pytest.raises(ValueError):
            KernelSpec("rbf", -1.0)


class TestGram:
    def test_single_point(self):
        G = gram_matrix(LIN, np.array([[0.0]]), C=1.0)
        assert G.shape == (1, 1) and G[0, 0] == 1.0

    def test_symmetry_exact(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(7, 3))
        G = gram_matrix(QUAD, X, C=10.0)
        assert np.array_equal(G, G.T)

    def test_ridge_shifts_spectrum(self):
        # rbf kernel matrices are PSD, so eigenvalues sit above the ridge
        rng = np.random.default_rng(2)
        X = rng.normal(size=(12, 4))
        C = 10.0
        G = gram_matrix(KernelSpec("rbf", 1.0), X, C)
        assert np.linalg.eigvalsh(G).min() >= 1.0 / C - 1e-9

    def test_diagonal_positive(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(5, 2))
        for spec in (LIN, QUAD, KernelSpec("cubic"), KernelSpec("rbf", 2.0)):
            assert np.all(np.diag(gram_matrix(spec, X, 5.0)) > 0)


class TestTrain:
    def test_analytic_margin_1d(self):
        # points 0 -> -1 and 2 -> +1 with a huge C: separator D(x) = x - 1
        X = np.array([[0.0], [2.0]])
        y = np.array([-1, 1])
        model = train_arrays(X, y, SvmConfig(LIN, C=1e6, max_iter=1000, tol=1e-9))
        assert abs(decision_value(model, [1.0])) <= 1e-3
        assert decision_value(model, [1.01]) > 0 > decision_value(model, [0.99])
        for x, want in ((0.0, -1.0), (2.0, 1.0)):
            assert decision_value(model, [x]) == pytest.approx(want, abs=1e-3)

    def test_margin_value_at_support_vector(self):
        X = np.array([[0.0], [2.0]])
        y = np.array([-1, 1])
        model, state = train_arrays(
            X, y, SvmConfig(LIN, C=1e6, max_iter=1000, tol=1e-9), return_state=True
        )
        alpha = state.alpha
        d2 = decision_value(model, [2.0])
        assert d2 > 0
        assert d2 == pytest.approx(1.0 - alpha[1] / 1e6, abs=1e-3)

    def test_xor_quadratic(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
        y = np.array([-1, -1, 1, 1])
        model = train_arrays(X, y, SvmConfig(QUAD, C=10.0, max_iter=2000, tol=1e-6))
        preds = [classify(model, x) for x in X]
        assert preds == [-1, -1, 1, 1]

    def test_single_class_rejected(self):
        X = np.ones((3, 2))
        with pytest.raises(SingleClassInput):
            train_arrays(X, np.array([1, 1, 1]), SvmConfig(LIN))

    def test_nonfinite_rejected(self):
        X = np.array([[0.0], [np.nan]])
        with pytest.raises(NonFiniteInput):
            train_arrays(X, np.array([-1, 1]), SvmConfig(LIN))

    def test_training_consistency_on_separable(self):
        rng = np.random.default_rng(4)
        X = np.vstack([rng.normal(-2, 0.3, size=(10, 2)), rng.normal(2, 0.3, size=(10, 2))])
        y = np.array([-1] * 10 + [1] * 10)
        model = train_arrays(X, y, SvmConfig(LIN, C=10.0, tol=1e-6, max_iter=1000))
        assert all(classify(model, x) == yy for x, yy in zip(X, y))

    def test_classify_tie_goes_positive(self):
        X = np.array([[0.0], [2.0]])
        y = np.array([-1, 1])
        model = train_arrays(X, y, SvmConfig(LIN, C=1e6, tol=1e-9))
        # exactly at the boundary the sign rule must give +1
        assert classify(model, [1.0]) in (-1, 1)
        d = decision_value(model, [1.0])
        assert classify(model, [1.0]) == (1 if d >= 0 else -1)

    def test_objective_trace_nondecreasing(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(12, 3))
        y = np.where(rng.uniform(size=12) < 0.5, -1, 1)
        y[0], y[1] = -1, 1
        Kt = kernel_matrix(QUAD, X, X) + np.eye(12) / 10.0
        state = solve_dual(Kt, y.astype(float), tol=1e-6, max_iter=1000)
        trace = np.asarray(state.objective_trace)
        assert np.all(np.diff(trace) >= -1e-12)

    def test_kkt_residuals_at_convergence(self):
        rng = np.random.default_rng(6)
        for trial in range(10):
            X = rng.normal(size=(10, 2))
            y = np.where(rng.uniform(size=10) < 0.5, -1, 1)
            y[0], y[1] = -1, 1
            for spec in (LIN, QUAD, KernelSpec("rbf", 1.0)):
                config = SvmConfig(spec, C=10.0, tol=1e-3, max_iter=5000)
                model, state = train_arrays(X, y, config, return_state=True)
                assert state.converged
                assert state.final_kkt_residual <= config.tol
                assert kkt_satisfied(X, y, state.alpha, model.bias, spec, config.C, config.tol)

    def test_label_swap_negates_decisions(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(14, 3))
        y = np.where(rng.uniform(size=14) < 0.5, -1, 1)
        y[0], y[1] = -1, 1
        cfg = SvmConfig(QUAD, C=10.0, tol=1e-8, max_iter=5000)
        m1 = train_arrays(X, y, cfg)
        m2 = train_arrays(X, -y, cfg)
        for x in rng.normal(size=(25, 3)):
            assert decision_value(m1, x) == pytest.approx(-decision_value(m2, x), abs=1e-9)

    def test_deterministic_serialization(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(10, 2))
        y = np.array([-1, 1] * 5)
        cfg = SvmConfig(KernelSpec("rbf", 0.9), C=1.0)
        import json

        d1 = json.dumps(model_to_dict(train_arrays(X, y, cfg)), sort_keys=True)
        d2 = json.dumps(model_to_dict(train_arrays(X, y, cfg)), sort_keys=True)
        assert d1 == d2

    def test_support_vector_invariants(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(16, 3))
        y = np.where(rng.uniform(size=16) < 0.5, -1, 1)
        y[0], y[1] = -1, 1
        cfg = SvmConfig(LIN, C=10.0, tol=1e-4, max_iter=5000)
        model, state = train_arrays(X, y, cfg, return_state=True)
        assert len(model.dual_coef) == len(model.support_vectors) >= 1
        kept = state.alpha[state.alpha > cfg.tol]
        assert np.all(kept > cfg.tol)
        sv_labels = np.sign(model.dual_coef)
        assert set(sv_labels.tolist()) <= {-1.0, 1.0}


class TestOracle:
    @pytest.mark.parametrize("kernel", [LIN, QUAD, KernelSpec("cubic"), KernelSpec("rbf", 1.0)])
    @pytest.mark.parametrize("C", [1.0, 10.0])
    def test_matches_projected_gradient(self, kernel, C):
        rng = np.random.default_rng(hash((kernel.variant, C)) % 2**32)
        n, q = 7, 3
        X = rng.normal(size=(n, q))
        y = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        y[0], y[1] = -1.0, 1.0
        Kt = kernel_matrix(kernel, X, X) + np.eye(n) / C
        state = solve_dual(Kt, y, tol=1e-8, max_iter=100_000)
        _, ref_obj = solve_reference(Kt, y, tol=1e-8)
        assert state.dual_objective == pytest.approx(ref_obj, abs=1e-4)

    def test_classifications_agree(self):
        rng = np.random.default_rng(123)
        kernel, C = QUAD, 10.0
        X = rng.normal(size=(8, 2))
        y = np.where(rng.uniform(size=8) < 0.5, -1.0, 1.0)
        y[0], y[1] = -1.0, 1.0
        cfg = SvmConfig(kernel, C=C, tol=1e-8, max_iter=100_000)
        model = train_arrays(X, y, cfg)
        Kt = kernel_matrix(kernel, X, X) + np.eye(8) / C
        alpha_ref, _ = solve_reference(Kt, y, tol=1e-8)
        D_ref, _ = reference_decision_function(
            X, y, alpha_ref, lambda a, b: kernel_eval(kernel, a, b), C
        )
        for x in rng.normal(size=(50, 2)):
            assert (decision_value(model, x) >= 0) == (D_ref(x) >= 0)


class TestPersistence:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(9, 3))
        y = np.array([-1, 1, -1, 1, -1, 1, -1, 1, -1])
        model = train_arrays(X, y, SvmConfig(KernelSpec("rbf", 1.7), C=3.0))
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.bias == model.bias
        assert np.array_equal(loaded.dual_coef, model.dual_coef)
        assert np.array_equal(loaded.support_vectors, model.support_vectors)
        assert loaded.kernel == model.kernel
        assert loaded.training_meta == model.training_meta
        assert model_to_dict(loaded) == model_to_dict(model)

    def test_dict_round_trip(self):
        X = np.array([[0.0], [2.0]])
        model = train_arrays(X, np.array([-1, 1]), SvmConfig(LIN, C=2.0))
        again = model_from_dict(model_to_dict(model))
        assert decision_value(again, [0.7]) == decision_value(model, [0.7])
