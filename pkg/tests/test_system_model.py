import numpy as np
import pytest

from qbmor.dae_transform import output_realization
from qbmor.problems import gen_synthetic_dae
from qbmor.system_model import (
    QbOdeSystem,
    ReducedQbSystem,
    project_dae_outputs,
    project_ode,
    validate_ode,
)
from qbmor.tensor_kron import HessianTensor, apply_hessian, matricize

from helpers import random_stable_ode


def scalar_system(a=-1.0):
    return QbOdeSystem(E=np.eye(1), A=np.array([[a]]), H=HessianTensor.zero(1),
                       N=(np.zeros((1, 1)),), B=np.ones((1, 1)), C=np.ones((1, 1)))


def test_validate_ode_stable():
    rep = validate_ode(scalar_system(-1.0))
    assert rep.stable and rep.hessian_symmetric and not rep.warnings
    assert rep.spectral_abscissa == pytest.approx(-1.0)


def test_singular_mass_matrix_rejected_at_construction():
    with pytest.raises(ValueError, match="singular"):
        QbOdeSystem(E=np.zeros((1, 1)), A=-np.eye(1), H=HessianTensor.zero(1),
                    N=(np.zeros((1, 1)),), B=np.ones((1, 1)), C=np.ones((1, 1)))


def test_validate_ode_unstable_is_warning_not_error():
    rep = validate_ode(scalar_system(+1.0))
    assert not rep.stable
    assert any("unstable" in w for w in rep.warnings)


def test_validate_does_not_mutate():
    sys = random_stable_ode(0, 6)
    a_before = sys.A.copy()
    validate_ode(sys)
    assert np.array_equal(sys.A, a_before)


def test_project_identity_reproduces_system():
    sys = random_stable_ode(1, 5, m=2, p=2)
    red = project_ode(sys, np.eye(5), np.eye(5))
    assert np.allclose(red.Ehat, sys.E, atol=1e-14)
    assert np.allclose(red.Ahat, sys.A, atol=1e-14)
    assert np.allclose(red.Bhat, sys.B, atol=1e-14)
    assert np.allclose(red.Chat, sys.C, atol=1e-14)
    assert np.allclose(red.Hhat, matricize(sys.H, 1).toarray(), atol=1e-14)
    for Nk, Nr in zip(sys.N, red.Nhat):
        assert np.allclose(Nr, Nk, atol=1e-14)


def test_project_first_coordinate():
    sys = random_stable_ode(2, 4)
    e1 = np.eye(4)[:, :1]
    red = project_ode(sys, e1, e1)
    assert red.Ehat[0, 0] == pytest.approx(sys.E[0, 0])
    assert red.Ahat[0, 0] == pytest.approx(sys.A[0, 0])
    assert red.Hhat[0, 0] == pytest.approx(matricize(sys.H, 1).toarray()[0, 0])


def test_project_hessian_column_oracle():
    rng = np.random.default_rng(3)
    sys = random_stable_ode(3, 7, m=2)
    V, _ = np.linalg.qr(rng.standard_normal((7, 3)))
    W, _ = np.linalg.qr(rng.standard_normal((7, 3)))
    red = project_ode(sys, V, W)
    r = 3
    for a in range(r):
        for b in range(r):
            col = W.T @ apply_hessian(sys.H, V[:, a], V[:, b])
            # the stored reduced Hessian is symmetrized over its two state legs
            col_sym = W.T @ apply_hessian(sys.H, V[:, b], V[:, a])
            expect = 0.5 * (col + col_sym)
            assert np.linalg.norm(red.Hhat[:, a * r + b] - expect) <= 1e-12


def test_projection_composition():
    rng = np.random.default_rng(4)
    sys = random_stable_ode(5, 8, m=2, p=2)
    V1, _ = np.linalg.qr(rng.standard_normal((8, 5)))
    W1, _ = np.linalg.qr(rng.standard_normal((8, 5)))
    V2, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    W2, _ = np.linalg.qr(rng.standard_normal((5, 2)))
    red_two_step_outer = project_ode(sys, V1 @ V2, W1 @ W2)
    inner = project_ode(sys, V1, W1)
    inner_sys = QbOdeSystem(E=inner.Ehat, A=inner.Ahat, H=inner.Hhat,
                            N=inner.Nhat, B=inner.Bhat, C=inner.Chat)
    red_nested = project_ode(inner_sys, V2, W2)
    for got, expect in [(red_nested.Ehat, red_two_step_outer.Ehat),
                        (red_nested.Ahat, red_two_step_outer.Ahat),
                        (red_nested.Hhat, red_two_step_outer.Hhat),
                        (red_nested.Bhat, red_two_step_outer.Bhat),
                        (red_nested.Chat, red_two_step_outer.Chat)]:
        assert np.allclose(got, expect, rtol=1e-12, atol=1e-12)


def test_project_linearity_in_system_matrices():
    rng = np.random.default_rng(5)
    s1 = random_stable_ode(6, 6, m=1, p=1)
    V, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    W, _ = np.linalg.qr(rng.standard_normal((6, 2)))
    scaled = QbOdeSystem(E=s1.E, A=3.0 * s1.A, H=s1.H, N=s1.N, B=s1.B, C=s1.C)
    assert np.allclose(project_ode(scaled, V, W).Ahat,
                       3.0 * project_ode(s1, V, W).Ahat)


def test_project_rank_deficient_basis_rejected():
    sys = random_stable_ode(7, 5)
    V = np.zeros((5, 2))
    V[:, 0] = V[:, 1] = np.eye(5)[:, 0]
    with pytest.raises(ValueError, match="rank"):
        project_ode(sys, V, V)


def test_reduced_system_requires_orthonormal_bases():
    sys = random_stable_ode(8, 5)
    red = project_ode(sys, np.eye(5), np.eye(5))
    with pytest.raises(ValueError, match="orthonormal"):
        ReducedQbSystem(Ehat=red.Ehat, Ahat=red.Ahat, Hhat=red.Hhat,
                        Nhat=red.Nhat, Bhat=red.Bhat, Chat=red.Chat,
                        V=2.0 * red.V, W=red.W)


def test_reduced_system_recompute_from_bases():
    rng = np.random.default_rng(9)
    sys = random_stable_ode(9, 8, m=2, p=2)
    V, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    W, _ = np.linalg.qr(rng.standard_normal((8, 3)))
    red = project_ode(sys, V, W)
    again = W.T @ sys.E @ V
    assert np.linalg.norm(red.Ehat - again) <= 1e-12 * np.linalg.norm(again)


# -- output-correction projection --------------------------------------------


def test_project_dae_outputs_zero_when_c2_zero():
    sys = gen_synthetic_dae(12, 3, m=2, p=2, seed=1, quad_scale=0.1)
    corr = output_realization(sys)
    CH, CN, D = project_dae_outputs(corr, np.linalg.qr(
        np.random.default_rng(0).standard_normal((12, 3)))[0])
    assert not CH.any() and not D.any()
    assert all(not M.any() for M in CN)
    assert np.array_equal(corr.C, sys.C1)


def test_project_dae_outputs_identity_basis():
    sys = gen_synthetic_dae(10, 2, m=2, p=2, seed=2, quad_scale=0.1,
                            with_c2=True)
    corr = output_realization(sys)
    CH, CN, D = project_dae_outputs(corr, np.eye(10))
    assert np.allclose(CH, corr.CH.toarray(), atol=1e-14)
    for got, M in zip(CN, corr.CN):
        assert np.allclose(got, M, atol=1e-14)
    assert np.array_equal(D, corr.D)


def test_project_dae_outputs_dense_kron_oracle():
    rng = np.random.default_rng(6)
    sys = gen_synthetic_dae(10, 2, m=2, p=2, seed=3, quad_scale=0.2,
                            with_c2=True)
    corr = output_realization(sys)
    V, _ = np.linalg.qr(rng.standard_normal((10, 3)))
    CH, _, _ = project_dae_outputs(corr, V)
    dense = corr.CH.toarray() @ np.kron(V, V)
    assert np.linalg.norm(CH - dense) <= 1e-12 * max(np.linalg.norm(dense), 1.0)


def test_project_dae_outputs_dimension_mismatch():
    sys = gen_synthetic_dae(10, 2, seed=4)
    corr = output_realization(sys)
    with pytest.raises(ValueError):
        project_dae_outputs(corr, np.eye(9))
