"""Index-2 machinery: oblique projectors, pressure elimination, and input homogenization.

For a descriptor system with invertible ``E11`` and Schur complement
``S = A21 E11^{-1} A12``, the multiplier can be eliminated explicitly.  The
resulting dynamics live in the kernel of ``A21`` and are governed by the
oblique projectors

    ``Pi_l = I - A12 S^{-1} A21 E11^{-1}``,
    ``Pi_r = I - E11^{-1} A12 S^{-1} A21``,

which satisfy ``Pi_l E11 = E11 Pi_r`` and ``A21 z = 0  iff  Pi_r z = z``.
Rank factorizations ``Pi_l = theta_l phi_l^T`` and ``Pi_r = theta_r phi_r^T``
turn the constrained system into an equivalent unconstrained ODE; this module
provides both the explicit factor path (small-scale oracle) and the algebraic
ingredients the projector-free iteration needs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .system_model import QbDaeSystem, QbOdeSystem
from .tensor_kron import (
    HessianTensor,
    apply_hessian,
    hessian_congruence,
    quadratic_jacobian,
    symmetrize,
)

__all__ = [
    "ProjectorRealization",
    "OutputRealization",
    "HomogenizedDae",
    "build_projectors",
    "output_realization",
    "recover_pressure",
    "explicit_ode",
    "homogenize_b2",
]

EXPLICIT_SIZE_CAP = 400
_RANK_TOL = 1e-8


@dataclass(frozen=True)
class ProjectorRealization:
    """Dense projectors and their rank factors (small-scale oracle path).

    ``Pi_l = theta_l @ phi_l.T`` and ``Pi_r = theta_r @ phi_r.T`` with
    ``theta_l.T @ phi_l = I`` and ``theta_r.T @ phi_r = I``.
    """

    theta_l: np.ndarray
    phi_l: np.ndarray
    theta_r: np.ndarray
    phi_r: np.ndarray
    Pi_l: np.ndarray
    Pi_r: np.ndarray


@dataclass(frozen=True)
class OutputRealization:
    """Output map of the multiplier-eliminated system.

    ``y = C v + CH (v kron v) + sum_k CN_k v u_k + D u`` where ``C`` acts on
    the velocity and the remaining terms absorb the pressure contribution.
    All corrections vanish when the original output is velocity-only
    (``C2 = 0``).
    """

    C: np.ndarray
    CH: sp.csr_matrix
    CN: tuple
    D: np.ndarray


@dataclass(frozen=True)
class HomogenizedDae:
    """Constraint-homogenized system with formally augmented inputs.

    ``dae`` has ``B2 = 0`` and input channels ``(u, u kron u, u')`` of widths
    ``(m, m^2, m)``.  ``Omega`` maps inputs to the eliminated velocity
    component: the original velocity is ``v = v_m + Omega u`` where ``v_m``
    is the state of ``dae``.  ``du_feedthrough`` is the coefficient of ``u'``
    in the original output once the multiplier is eliminated.
    """

    dae: QbDaeSystem
    Omega: np.ndarray
    Ncal: tuple
    Bcal1: np.ndarray
    Bu: np.ndarray
    du_feedthrough: np.ndarray
    m_original: int


def _rank_factor(Pi, rank):
    U, s, Vt = la.svd(Pi)
    tol = _RANK_TOL * max(s[0], 1.0)
    gap_ok = rank >= Pi.shape[0] or s[rank] <= tol
    if s[rank - 1] <= tol or not gap_ok:
        raise ValueError(
            f"projector rank defect: expected rank {rank}, "
            f"singular values around the cut: {s[max(rank - 2, 0):rank + 1]}"
        )
    theta = U[:, :rank] * s[:rank]
    phi = Vt[:rank].T
    return theta, phi


def build_projectors(sys, size_cap=EXPLICIT_SIZE_CAP):
    """Form the dense projectors and their thin rank factorizations.

    The factors come from a singular value decomposition truncated to the
    structurally known rank ``n_v - n_p``; for any full-rank factorization of
    an idempotent matrix the biorthogonality ``theta^T phi = I`` follows
    automatically.
    """
    n_v, n_p = sys.n_v, sys.n_p
    if n_v > size_cap:
        raise ValueError(
            f"explicit projector path capped at n_v={size_cap}, got {n_v}"
        )
    Ei_A12 = la.solve(sys.E11, sys.A12)             # E11^-1 A12
    S = sys.A21 @ Ei_A12
    rc = la.svdvals(S)
    if rc[-1] <= 1e-12 * max(rc[0], 1.0):
        raise ValueError("Schur complement numerically singular")
    A21_Ei = la.solve(sys.E11.T, sys.A21.T).T       # A21 E11^-1
    Si_A21Ei = la.solve(S, A21_Ei)                  # S^-1 A21 E11^-1
    eye = np.eye(n_v)
    Pi_l = eye - sys.A12 @ Si_A21Ei
    Pi_r = eye - Ei_A12 @ la.solve(S, sys.A21)
    rank = n_v - n_p
    theta_l, phi_l = _rank_factor(Pi_l, rank)
    theta_r, phi_r = _rank_factor(Pi_r, rank)
    return ProjectorRealization(
        theta_l=theta_l, phi_l=phi_l,
        theta_r=theta_r, phi_r=phi_r,
        Pi_l=Pi_l, Pi_r=Pi_r,
    )


def output_realization(sys):
    """Output map after eliminating the multiplier from ``y = C1 v + C2 p``.

    Uses linear solves against ``E11`` and ``S`` (never explicit inverses):
    with ``G = S^{-1} A21 E11^{-1}``,

        ``C = C1 - C2 G A11``, ``CH = -C2 G H``,
        ``CN_k = -C2 G N_k``,  ``D = -C2 G B1``.
    """
    A21_Ei = la.solve(sys.E11.T, sys.A21.T).T
    S = sys.A21 @ la.solve(sys.E11, sys.A12)
    G = la.solve(S, A21_Ei)
    T_row = sys.C2 @ G                              # p x n_v
    C = sys.C1 - T_row @ sys.A11
    CH = (sp.csr_matrix(-T_row) @ sys.H.mode1).tocsr()
    CH.eliminate_zeros()
    CN = tuple(-T_row @ Nk for Nk in sys.N)
    D = -T_row @ sys.B1
    return OutputRealization(C=C, CH=CH, CN=CN, D=D)


def recover_pressure(sys, v, u, udot=None):
    """Explicit multiplier from the differentiated constraint.

    For ``B2 = 0``:
    ``p = -S^{-1} A21 E11^{-1} (A11 v + H (v kron v) + sum_k N_k v u_k + B1 u)``.
    With ``B2 != 0`` the constraint contributes ``-S^{-1} B2 u'``, so ``udot``
    must be supplied.
    """
    v = np.asarray(v, dtype=float).ravel()
    u = np.atleast_1d(np.asarray(u, dtype=float))
    rhs = sys.A11 @ v + apply_hessian(sys.H, v, v) + sys.B1 @ u
    for k, Nk in enumerate(sys.N):
        rhs = rhs + (Nk @ v) * u[k]
    S = sys.A21 @ la.solve(sys.E11, sys.A12)
    top = sys.A21 @ la.solve(sys.E11, rhs)
    if sys.B2.any():
        if udot is None:
            raise ValueError("pressure recovery with B2 != 0 needs the input derivative")
        top = top + sys.B2 @ np.atleast_1d(np.asarray(udot, dtype=float))
    return -la.solve(S, top)


def explicit_ode(sys, proj):
    """Equivalent unconstrained ODE built from the projector factors.

    Returns ``(ode, lift)`` where the ODE realization is
    ``(phi_l^T E11 theta_r, phi_l^T A11 theta_r, phi_l^T H (theta_r kron
    theta_r), phi_l^T N_k theta_r, phi_l^T B1, C theta_r)`` with ``C`` from
    :func:`output_realization`, and ``lift = theta_r`` maps the ODE state
    back to velocity space (``v ~= lift @ vtilde``).  Requires ``B2 = 0``.
    """
    if sys.B2.any():
        raise ValueError("explicit ODE form requires B2 = 0; homogenize first")
    th_r, ph_l = proj.theta_r, proj.phi_l
    out = output_realization(sys)
    Hbar = ph_l.T @ hessian_congruence(sys.H, 1, th_r, th_r)
    ode = QbOdeSystem(
        E=ph_l.T @ sys.E11 @ th_r,
        A=ph_l.T @ sys.A11 @ th_r,
        H=symmetrize(HessianTensor.from_mode1(Hbar)),
        N=tuple(ph_l.T @ Nk @ th_r for Nk in sys.N),
        B=ph_l.T @ sys.B1,
        C=out.C @ th_r,
    )
    return ode, th_r


def homogenize_b2(sys):
    """Convert ``B2 != 0`` into a constraint-homogeneous system.

    With ``Omega = -E11^{-1} A12 S^{-1} B2`` the split ``v = v_m + Omega u``
    satisfies ``A21 v_m = 0``.  Substituting it into the dynamics yields
    modified bilinear matrices ``Ncal_k = N_k + H(I kron Omega_k + Omega_k
    kron I)``, an input matrix ``Bcal1 = B1 + A11 Omega``, a quadratic-input
    matrix ``Bu = H(Omega kron Omega) + [N_1 Omega, ..., N_m Omega]`` and an
    input-derivative column block ``-E11 Omega``; the three channels
    ``(u, u kron u, u')`` are appended as formally independent inputs.  The
    eliminated multiplier feeds the output through ``-C2 S^{-1} B2 u'``.

    The initial state carries over unchanged, which assumes ``u(0) = 0``
    (otherwise ``v_m(0) = v0 - Omega u(0)`` would violate the homogeneous
    constraint and construction rejects it).
    """
    if not sys.B2.any():
        raise ValueError("already homogeneous (B2 = 0)")
    m = sys.m
    Ei_A12 = la.solve(sys.E11, sys.A12)
    S = sys.A21 @ Ei_A12
    Omega = -Ei_A12 @ la.solve(S, sys.B2)           # n_v x m
    Ncal = tuple(
        sys.N[k] + quadratic_jacobian(sys.H, Omega[:, k]) for k in range(m)
    )
    Bcal1 = sys.B1 + sys.A11 @ Omega
    Bu = hessian_congruence(sys.H, 1, Omega, Omega)
    Bu = Bu + np.hstack([Nk @ Omega for Nk in sys.N])
    Bdot = -sys.E11 @ Omega
    B1_aug = np.hstack([Bcal1, Bu, Bdot])
    N_aug = Ncal + tuple(np.zeros((sys.n_v, sys.n_v)) for _ in range(m * m + m))
    dae = QbDaeSystem(
        E11=sys.E11, A11=sys.A11, A12=sys.A12, A21=sys.A21,
        H=sys.H, N=N_aug, B1=B1_aug, B2=np.zeros((sys.n_p, B1_aug.shape[1])),
        C1=sys.C1, C2=sys.C2, v0=sys.v0,
    )
    du_feedthrough = -sys.C2 @ la.solve(S, sys.B2)
    return HomogenizedDae(
        dae=dae, Omega=Omega, Ncal=Ncal, Bcal1=Bcal1, Bu=Bu,
        du_feedthrough=du_feedthrough, m_original=m,
    )


def homogenized_output_realization(hom):
    """Output realization of a homogenized system mapping to the *original* output.

    Adds the ``C1 Omega`` feedthrough of the eliminated velocity component to
    the plain-``u`` block, so that reduced models built from it reproduce
    ``y = C1 v + C2 p`` of the source system.
    """
    base = output_realization(hom.dae)
    D = base.D.copy()
    m = hom.m_original
    D[:, :m] += hom.dae.C1 @ hom.Omega
    return OutputRealization(C=base.C, CH=base.CH, CN=base.CN, D=D)
