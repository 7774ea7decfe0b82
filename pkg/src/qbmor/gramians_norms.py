"""Quadratic-bilinear Gramians and the truncated H2 norm.

The truncated Gramians solve linear Lyapunov equations whose right-hand
sides add quadratic and bilinear corrections evaluated at the linear
Gramians:

    ``A P_T E^T + E P_T A^T = -B B^T - H (P1 kron P1) H^T - sum N_k P1 N_k^T``
    ``A^T Q_T E + E^T Q_T A = -C^T C - H2 (P1 kron Q1) H2^T - sum N_k^T Q1 N_k``

with ``H2`` the mode-2 unfolding.  The truncated H2 norm is
``sqrt(trace(C P_T C^T))`` and must agree with ``sqrt(trace(B^T Q_T B))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dense_solvers import SolverError, solve_lyapunov
from .system_model import QbOdeSystem
from .tensor_kron import HessianTensor, hessian_congruence, symmetrize

__all__ = [
    "GramianPair",
    "linear_gramians",
    "truncated_gramians",
    "full_gramians_fixed_point",
    "truncated_h2_norm",
    "error_system_norm",
]

TRACE_TOL = 1e-8


@dataclass(frozen=True)
class GramianPair:
    """Controllability/observability Gramian pair with provenance."""

    P: np.ndarray
    Q: np.ndarray
    kind: str
    residual: float
    iterations: int = 0
    converged: bool = True

    def __post_init__(self):
        for name, M in (("P", self.P), ("Q", self.Q)):
            dev = np.linalg.norm(M - M.T)
            if dev > 1e-12 * max(np.linalg.norm(M), 1.0):
                raise SolverError(f"gramian {name} not symmetric (|M - M^T| = {dev:.3e})")
            lo = float(np.linalg.eigvalsh(M).min())
            if lo < -1e-10 * max(np.linalg.norm(M), 1.0):
                raise SolverError(f"gramian {name} indefinite (min eig = {lo:.3e})")


def _lyap_residual(A, E, P, RHS):
    num = np.linalg.norm(A @ P @ E.T + E @ P @ A.T + RHS)
    return float(num / max(np.linalg.norm(RHS), np.finfo(float).tiny))


def linear_gramians(sys):
    """Gramians of the linear part: ``A P E^T + E P A^T + B B^T = 0`` and dual."""
    P = solve_lyapunov(sys.A, sys.E, sys.B @ sys.B.T)
    Q = solve_lyapunov(sys.A.T, sys.E.T, sys.C.T @ sys.C)
    res = max(
        _lyap_residual(sys.A, sys.E, P, sys.B @ sys.B.T),
        _lyap_residual(sys.A.T, sys.E.T, Q, sys.C.T @ sys.C),
    )
    return GramianPair(P=P, Q=Q, kind="linear", residual=res)


def _truncated_rhs(sys, P1, Q1):
    HP = hessian_congruence(sys.H, 1, P1, P1) @ sys.H.mode1.T
    rhs_p = sys.B @ sys.B.T + HP
    H2 = sys.H.mode(2)
    HQ = hessian_congruence(sys.H, 2, P1, Q1) @ H2.T
    rhs_q = sys.C.T @ sys.C + HQ
    for Nk in sys.N:
        rhs_p = rhs_p + Nk @ P1 @ Nk.T
        rhs_q = rhs_q + Nk.T @ Q1 @ Nk
    # the quadratic additions are Gramian-like sums, symmetric up to roundoff
    return 0.5 * (rhs_p + rhs_p.T), 0.5 * (rhs_q + rhs_q.T)


def truncated_gramians(sys):
    """Truncated Gramians via one cascade of linear Lyapunov solves."""
    lin = linear_gramians(sys)
    rhs_p, rhs_q = _truncated_rhs(sys, lin.P, lin.Q)
    P = solve_lyapunov(sys.A, sys.E, rhs_p)
    Q = solve_lyapunov(sys.A.T, sys.E.T, rhs_q)
    res = max(
        _lyap_residual(sys.A, sys.E, P, rhs_p),
        _lyap_residual(sys.A.T, sys.E.T, Q, rhs_q),
    )
    return GramianPair(P=P, Q=Q, kind="truncated", residual=res)


def full_gramians_fixed_point(sys, max_iters=100, tol=1e-10):
    """Fixed-point iteration for the full quadratic Lyapunov equations.

    Each sweep refreezes the quadratic and bilinear terms at the previous
    iterate and solves the resulting linear equation.  Convergence requires
    the quadratic terms to be contractive; the iterate norm growing by more
    than 1e6 over its start is treated as divergence.
    """
    P = solve_lyapunov(sys.A, sys.E, sys.B @ sys.B.T)
    guard = 1e6 * max(np.linalg.norm(P), 1.0)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        HP = hessian_congruence(sys.H, 1, P, P) @ sys.H.mode1.T
        rhs = sys.B @ sys.B.T + HP
        for Nk in sys.N:
            rhs = rhs + Nk @ P @ Nk.T
        rhs = 0.5 * (rhs + rhs.T)
        try:
            P_new = solve_lyapunov(sys.A, sys.E, rhs)
        except SolverError as exc:
            raise SolverError(f"fixed point diverged: {exc}") from exc
        if np.linalg.norm(P_new) > guard:
            raise SolverError(
                f"fixed point diverged: iterate norm {np.linalg.norm(P_new):.3e}"
            )
        delta = np.linalg.norm(P_new - P) / max(np.linalg.norm(P), 1e-300)
        P = P_new
        if delta <= tol:
            converged = True
            break
    res_p = _lyap_residual(
        sys.A, sys.E, P,
        sys.B @ sys.B.T
        + hessian_congruence(sys.H, 1, P, P) @ sys.H.mode1.T
        + sum((Nk @ P @ Nk.T for Nk in sys.N), np.zeros_like(P)),
    )
    # observability side with the converged P frozen in the cross term
    H2 = sys.H.mode(2)
    Q = solve_lyapunov(sys.A.T, sys.E.T, sys.C.T @ sys.C)
    q_conv = False
    for _ in range(max_iters):
        rhs_q = sys.C.T @ sys.C + hessian_congruence(sys.H, 2, P, Q) @ H2.T
        for Nk in sys.N:
            rhs_q = rhs_q + Nk.T @ Q @ Nk
        rhs_q = 0.5 * (rhs_q + rhs_q.T)
        Q_new = solve_lyapunov(sys.A.T, sys.E.T, rhs_q)
        if np.linalg.norm(Q_new) > guard * 1e6:
            raise SolverError("fixed point diverged on the observability side")
        dq = np.linalg.norm(Q_new - Q) / max(np.linalg.norm(Q), 1e-300)
        Q = Q_new
        if dq <= tol:
            q_conv = True
            break
    return GramianPair(
        P=P, Q=Q, kind="full-fixed-point", residual=res_p,
        iterations=iterations, converged=converged and q_conv,
    )


def truncated_h2_norm(sys):
    """Truncated H2 norm ``sqrt(trace(C P_T C^T))``.

    The dual value ``sqrt(trace(B^T Q_T B))`` is computed alongside and the
    two must agree to ``TRACE_TOL`` relative, otherwise the Gramian pair is
    inconsistent and an error is raised.
    """
    tg = truncated_gramians(sys)
    tc = float(np.trace(sys.C @ tg.P @ sys.C.T))
    tb = float(np.trace(sys.B.T @ tg.Q @ sys.B))
    # roundoff floor: when both traces cancel below the noise of their own
    # evaluation (e.g. exact-copy error systems), they count as equal
    noise = 100.0 * np.finfo(float).eps * (
        np.linalg.norm(sys.C) ** 2 * np.linalg.norm(tg.P)
        + np.linalg.norm(sys.B) ** 2 * np.linalg.norm(tg.Q)
    )
    scale = max(abs(tc), abs(tb), np.finfo(float).tiny)
    if abs(tc - tb) > TRACE_TOL * scale + noise:
        raise SolverError(
            f"Gramian inconsistency: trace(C P C^T) = {tc:.12e} but "
            f"trace(B^T Q B) = {tb:.12e}"
        )
    return float(np.sqrt(max(tc, 0.0)))


def _augmented_error_system(full, red):
    n, r = full.n, red.r
    nr = n + r
    E = np.zeros((nr, nr))
    E[:n, :n] = full.E
    E[n:, n:] = red.Ehat
    A = np.zeros((nr, nr))
    A[:n, :n] = full.A
    A[n:, n:] = red.Ahat
    i = list(full.H._i)
    j = list(full.H._j)
    k = list(full.H._k)
    v = list(full.H._v)
    Tr = red.Hhat.reshape(r, r, r)
    ri, rj, rk = np.nonzero(Tr)
    i += list(ri + n)
    j += list(rj + n)
    k += list(rk + n)
    v += list(Tr[ri, rj, rk])
    H = HessianTensor(nr, i, j, k, v)
    N = tuple(
        np.block([
            [full.N[q], np.zeros((n, r))],
            [np.zeros((r, n)), red.Nhat[q]],
        ])
        for q in range(full.m)
    )
    B = np.vstack([full.B, red.Bhat])
    C = np.hstack([full.C, -red.Chat])
    return QbOdeSystem(E=E, A=A, H=symmetrize(H), N=N, B=B, C=C)


def error_system_norm(full, red):
    """Truncated H2 norm of the block-diagonal error system.

    The augmented system pairs the full and reduced realizations with output
    ``[C, -Chat]``; nonlinear output corrections of the reduced model are not
    part of the (linear-output) norm.
    """
    if red.m != full.m:
        raise ValueError(
            f"input dimensions differ: full has {full.m}, reduced has {red.m}"
        )
    if red.p != full.p:
        raise ValueError(
            f"output dimensions differ: full has {full.p}, reduced has {red.p}"
        )
    return truncated_h2_norm(_augmented_error_system(full, red))
