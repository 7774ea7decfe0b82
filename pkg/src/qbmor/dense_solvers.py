"""Dense linear-algebra backends.

Generalized pencil eigendecomposition, shifted solves, diagonal-shift
Sylvester solves, generalized Lyapunov solves, and saddle-point solves.
Every solver computes the residual of its own output, raises
:class:`ResidualError` when the stated bound is exceeded, and reports the
value to any active :func:`record_residuals` context.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

__all__ = [
    "SolverError",
    "ResidualError",
    "SpectralFactorization",
    "record_residuals",
    "pencil_eig",
    "solve_shifted",
    "solve_sylvester",
    "solve_lyapunov",
    "solve_saddle",
    "solve_saddle_adjoint",
    "conjugate_pairs",
    "realify_paired_columns",
]

# residual bounds (relative, Frobenius)
SHIFTED_TOL = 1e-10
SYLVESTER_TOL = 1e-9
LYAPUNOV_TOL = 1e-9
SADDLE_TOL = 1e-10
PENCIL_TOL = 1e-10

_KRON_LYAP_MAX = 60  # direct Kronecker solve up to this order
_TINY = np.finfo(float).tiny


class SolverError(RuntimeError):
    """A dense solve failed (singularity, instability, defectiveness)."""


class ResidualError(SolverError):
    """A computed solution violated its stated residual bound."""


_SINKS: list[list] = []


@contextmanager
def record_residuals():
    """Collect ``(tag, relative_residual)`` pairs from all solver calls.

    Contexts nest; each active recorder receives every solver's residual.
    """
    log = []
    _SINKS.append(log)
    try:
        yield log
    finally:
        for i, sink in enumerate(_SINKS):
            if sink is log:
                del _SINKS[i]
                break


def _note(tag, value):
    if _SINKS:
        for sink in _SINKS:
            sink.append((tag, float(value)))


def _fro(M):
    return float(np.linalg.norm(np.asarray(M)))


@contextmanager
def _quiet_singular():
    """Silence LU warnings on deliberately probed near-singular systems."""
    with warnings.catch_warnings(), np.errstate(invalid="ignore", over="ignore"):
        warnings.simplefilter("ignore", la.LinAlgWarning)
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@dataclass(frozen=True)
class SpectralFactorization:
    """Factors with ``X @ Ahat @ Y = diag(eigenvalues)`` and ``X @ Ehat @ Y = I``.

    Eigenvalues are sorted ascending by (real, imag); for real input pencils
    complex eigenvalues occur in exactly conjugate pairs and the paired
    eigenvector columns are exact conjugates.
    """

    X: np.ndarray
    Y: np.ndarray
    eigenvalues: np.ndarray


def conjugate_pairs(lam, tol=1e-8):
    """Partition shifts into real indices and conjugate pairs.

    Returns ``(real_indices, pairs)`` where each pair is ``(neg, pos)`` with
    ``Im(lam[neg]) < 0 < Im(lam[pos])``, or ``None`` if some complex shift
    has no conjugate partner within tolerance.
    """
    lam = np.asarray(lam, dtype=complex)
    used = np.zeros(lam.size, dtype=bool)
    real_idx, pairs = [], []
    for idx in range(lam.size):
        if used[idx]:
            continue
        li = lam[idx]
        scale = 1.0 + abs(li)
        if abs(li.imag) <= tol * scale:
            real_idx.append(idx)
            used[idx] = True
            continue
        best, bestd = -1, np.inf
        for jdx in range(lam.size):
            if used[jdx] or jdx == idx:
                continue
            d = abs(lam[jdx] - li.conjugate())
            if d < bestd:
                best, bestd = jdx, d
        if best < 0 or bestd > tol * scale:
            return None
        used[idx] = used[best] = True
        neg, pos = (idx, best) if li.imag < 0 else (best, idx)
        pairs.append((neg, pos))
    return real_idx, pairs


def realify_paired_columns(lam, M):
    """Replace conjugate column pairs of ``M`` by (real part, imaginary part).

    ``lam`` must be conjugate-closed; the column of the negative-imaginary
    member supplies both parts, so the real span of the result equals the
    complex span of the original pair.  Real-shift columns keep their real
    part.
    """
    split = conjugate_pairs(lam)
    if split is None:
        raise ValueError("shift set is not closed under conjugation")
    real_idx, pairs = split
    M = np.asarray(M)
    out = np.empty(M.shape, dtype=float)
    for idx in real_idx:
        out[:, idx] = M[:, idx].real
    for neg, pos in pairs:
        out[:, neg] = M[:, neg].real
        out[:, pos] = M[:, neg].imag
    return out


def _canonical_eigenbasis(w, Y):
    """Sort by (real, imag), enforce exact conjugate pairing, fix phases."""
    order = np.lexsort((w.imag, w.real))
    w, Y = w[order].copy(), Y[:, order].copy()
    split = conjugate_pairs(w)
    if split is None:
        raise SolverError("real pencil produced a non-conjugate spectrum")
    real_idx, pairs = split

    def normalized(y):
        pivot = y[np.argmax(np.abs(y))]
        y = y / pivot
        return y / np.linalg.norm(y)

    Y = Y.astype(complex)
    for idx in real_idx:
        w[idx] = w[idx].real
        Y[:, idx] = normalized(Y[:, idx].real).astype(complex)
    for neg, pos in pairs:
        w[neg] = complex(w[neg].real, -abs(w[neg].imag))
        w[pos] = w[neg].conjugate()
        Y[:, neg] = normalized(Y[:, neg])
        Y[:, pos] = Y[:, neg].conjugate()
    return w, Y


def _left_inverse(EY):
    r = EY.shape[0]
    lu = la.lu_factor(EY)
    X = la.lu_solve(lu, np.eye(r, dtype=EY.dtype))
    for _ in range(3):
        R = np.eye(r) - EY @ X
        if _fro(R) <= 0.1 * PENCIL_TOL:
            break
        X = X + la.lu_solve(lu, R)
    return X


def pencil_eig(Ehat, Ahat):
    """Diagonalize the pencil ``(Ahat, Ehat)``.

    Returns a :class:`SpectralFactorization`.  When the first factorization
    misses the strict residual bound, one rediagonalization pass in the
    computed eigenbasis is applied.  The accepted residual is the strict
    bound or, for ill-conditioned eigenbases, the level that floating-point
    evaluation of the residual itself can resolve (eps times the basis
    condition); anything beyond that is reported as a defective pencil.
    """
    Ehat = np.asarray(Ehat, dtype=float)
    Ahat = np.asarray(Ahat, dtype=float)
    r = Ehat.shape[0]
    if Ehat.shape != (r, r) or Ahat.shape != (r, r):
        raise ValueError(
            f"pencil matrices must be square and matching, got "
            f"{Ehat.shape} and {Ahat.shape}"
        )
    sing = la.svdvals(Ehat)
    if sing[-1] <= 1e-12 * max(sing[0], 1.0):
        raise SolverError("reduced mass matrix singular")
    w, Y = la.eig(Ahat, Ehat)
    if not np.all(np.isfinite(w)):
        raise SolverError("pencil has non-finite eigenvalues")

    def factor(w, Y):
        w, Y = _canonical_eigenbasis(w, Y)
        try:
            X = _left_inverse(Ehat @ Y)
        except (la.LinAlgError, ValueError) as exc:
            raise SolverError(f"pencil eigenvector matrix singular: {exc}") from exc
        res_a = _fro(X @ Ahat @ Y - np.diag(w)) / max(_fro(Ahat), _TINY)
        res_e = _fro(X @ Ehat @ Y - np.eye(r))
        return w, Y, X, max(res_a, res_e)

    w, Y, X, res = factor(w, Y)
    if res > PENCIL_TOL:
        # refine: the computed basis nearly diagonalizes the pencil, so one
        # more (well-conditioned) eigensolve of X A Y cleans up the residual
        w2, Z = la.eig(X @ Ahat @ Y)
        if np.all(np.isfinite(w2)):
            w_r, Y_r, X_r, res_r = factor(w2, Y @ Z)
            if res_r < res:
                w, Y, X, res = w_r, Y_r, X_r, res_r
    kappa = _fro(X) * _fro(Ehat @ Y)
    tol_eff = max(PENCIL_TOL, 50.0 * np.finfo(float).eps * kappa)
    if not np.isfinite(res) or res > tol_eff:
        raise SolverError(
            f"defective pencil beyond residual tolerance: residual {res:.3e} "
            f"exceeds {tol_eff:.3e} (basis condition ~{kappa:.3e})"
        )
    _note("pencil", res)
    return SpectralFactorization(X=X, Y=Y, eigenvalues=w)


def solve_shifted(E, A, sigma, rhs):
    """Solve ``(-sigma E - A) Z = rhs`` with one step of iterative refinement."""
    E = np.asarray(E)
    A = np.asarray(A)
    rhs = np.asarray(rhs)
    M = -sigma * E - A
    try:
        with _quiet_singular():
            lu = la.lu_factor(M)
            Z = la.lu_solve(lu, rhs)
            Z = Z + la.lu_solve(lu, rhs - M @ Z)
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(
            f"shift collides with spectrum (sigma={sigma}): {exc}"
        ) from exc
    if not np.all(np.isfinite(Z)):
        raise SolverError(f"shift collides with spectrum (sigma={sigma})")
    res = _fro(rhs - M @ Z) / max(_fro(rhs), _TINY)
    if res > SHIFTED_TOL:
        raise ResidualError(
            f"shift collides with spectrum (sigma={sigma}): "
            f"relative residual {res:.3e} exceeds {SHIFTED_TOL:.0e}"
        )
    _note("shifted", res)
    return Z


def solve_sylvester(E, A, lam, RHS, realify=True):
    """Solve ``-E V diag(lam) - A V = RHS`` column-wise.

    Each column decouples into a shifted solve at ``lam[i]``.  For a
    conjugate-closed shift set with conjugate-paired right-hand-side columns,
    only one member of each pair is solved and the partner is mirrored; with
    ``realify`` the paired columns are then replaced by (real, imaginary)
    parts, so real problem data yields a real ``V`` with unchanged span.
    """
    lam = np.atleast_1d(np.asarray(lam))
    RHS = np.asarray(RHS)
    if RHS.ndim != 2 or RHS.shape[1] != lam.size:
        raise ValueError(
            f"RHS must have one column per shift, got {RHS.shape} for "
            f"{lam.size} shifts"
        )
    n = RHS.shape[0]
    split = conjugate_pairs(lam)
    paired_rhs = False
    if split is not None and split[1]:
        paired_rhs = all(
            _fro(RHS[:, pos] - RHS[:, neg].conjugate())
            <= 1e-10 * (_fro(RHS[:, neg]) + _TINY)
            for neg, pos in split[1]
        )
    complex_data = np.iscomplexobj(RHS) or np.iscomplexobj(lam)
    V = np.zeros((n, lam.size), dtype=complex if complex_data else float)
    done = np.zeros(lam.size, dtype=bool)

    def column(idx):
        try:
            return solve_shifted(E, A, lam[idx], RHS[:, idx])
        except SolverError as exc:
            raise SolverError(f"column {idx}: {exc}") from exc

    if split is not None and paired_rhs:
        real_idx, pairs = split
        for idx in real_idx:
            V[:, idx] = column(idx)
            done[idx] = True
        for neg, pos in pairs:
            V[:, neg] = column(neg)
            V[:, pos] = V[:, neg].conjugate()
            done[neg] = done[pos] = True
    for idx in np.flatnonzero(~done):
        V[:, idx] = column(idx)
    res = _fro(-(E @ (V * lam[None, :])) - A @ V - RHS) / max(_fro(RHS), _TINY)
    if res > SYLVESTER_TOL:
        raise ResidualError(
            f"sylvester solve residual {res:.3e} exceeds {SYLVESTER_TOL:.0e}"
        )
    _note("sylvester", res)
    if realify and complex_data and split is not None and paired_rhs:
        return realify_paired_columns(lam, V)
    return V


def _stability_abscissa(A, E):
    w = la.eigvals(A, E)
    if not np.all(np.isfinite(w)):
        return np.inf
    return float(w.real.max())


def solve_lyapunov(A, E, RHS):
    """Solve ``A P E^T + E P A^T + RHS = 0`` for symmetric ``RHS``.

    A direct Kronecker-vectorized solve is used up to order 60; larger
    problems go through diagonalization of the pencil ``(A, E)``.  The pencil
    must be stable.
    """
    A = np.asarray(A, dtype=float)
    E = np.asarray(E, dtype=float)
    RHS = np.asarray(RHS, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or E.shape != (n, n) or RHS.shape != (n, n):
        raise ValueError("lyapunov operands must be square and matching")
    asym = _fro(RHS - RHS.T)
    if asym > 1e-10 * max(_fro(RHS), 1.0):
        raise ValueError(f"right-hand side not symmetric (|R - R^T| = {asym:.3e})")
    abscissa = _stability_abscissa(A, E)
    if abscissa >= 0.0:
        raise SolverError(
            f"unstable pencil: spectral abscissa {abscissa:.3e} >= 0"
        )
    if n <= _KRON_LYAP_MAX:
        K = np.kron(E, A) + np.kron(A, E)
        p = la.solve(K, -RHS.ravel(order="F"))
        P = p.reshape((n, n), order="F")
    else:
        w, Yv = la.eig(A, E)
        EY = E @ Yv
        M1 = la.solve(EY, RHS.astype(complex))
        M2 = la.solve(EY, M1.T).T
        G = -M2 / (w[:, None] + w[None, :])
        P = (Yv @ G @ Yv.T).real
    P = 0.5 * (P + P.T)
    res = _fro(A @ P @ E.T + E @ P @ A.T + RHS) / max(_fro(RHS), _TINY)
    if res > LYAPUNOV_TOL:
        raise ResidualError(
            f"lyapunov solve residual {res:.3e} exceeds {LYAPUNOV_TOL:.0e}"
        )
    _note("lyapunov", res)
    return P


def _saddle_solve(K, rhs, n_v, sigma, constraint):
    try:
        with _quiet_singular():
            lu = la.lu_factor(K)
            z = la.lu_solve(lu, rhs)
            z = z + la.lu_solve(lu, rhs - K @ z)
    except (la.LinAlgError, ValueError) as exc:
        raise SolverError(f"singular saddle matrix at sigma={sigma}: {exc}") from exc
    if not np.all(np.isfinite(z)):
        raise SolverError(f"singular saddle matrix at sigma={sigma}")
    res = _fro(rhs - K @ z) / max(_fro(rhs), _TINY)
    if res > SADDLE_TOL:
        raise ResidualError(
            f"saddle solve residual {res:.3e} exceeds {SADDLE_TOL:.0e} "
            f"at sigma={sigma}"
        )
    top, bottom = z[:n_v], z[n_v:]
    cres = _fro(constraint @ top) / max(_fro(top), _TINY)
    if cres > SADDLE_TOL:
        raise ResidualError(
            f"saddle constraint residual {cres:.3e} exceeds {SADDLE_TOL:.0e}"
        )
    _note("saddle", max(res, cres))
    return top, bottom


def solve_saddle(E11, A11, A12, A21, sigma, f):
    """Solve ``[[-sigma E11 - A11, A12], [A21, 0]] [v; xi] = [f; 0]``.

    The solution block ``v`` lies in the kernel of ``A21`` and equals the
    obliquely projected shifted solve used by the projector-free reduction
    iteration.
    """
    E11 = np.asarray(E11)
    A11 = np.asarray(A11)
    A12 = np.asarray(A12)
    A21 = np.asarray(A21)
    f = np.asarray(f)
    n_v, n_p = A12.shape
    one_d = f.ndim == 1
    F = f.reshape(n_v, -1)
    dtype = complex if (np.iscomplexobj(F) or np.iscomplexobj(sigma)) else float
    K = np.zeros((n_v + n_p, n_v + n_p), dtype=dtype)
    K[:n_v, :n_v] = -sigma * E11 - A11
    K[:n_v, n_v:] = A12
    K[n_v:, :n_v] = A21
    rhs = np.vstack([F, np.zeros((n_p, F.shape[1]), dtype=dtype)])
    top, bottom = _saddle_solve(K, rhs, n_v, sigma, A21)
    if one_d:
        return top[:, 0], bottom[:, 0]
    return top, bottom


def solve_saddle_adjoint(E11, A11, A12, A21, sigma, g):
    """Solve ``[[(-sigma E11 - A11)^T, A21^T], [A12^T, 0]] [w; xi] = [g; 0]``.

    The blocks are plain transposes (not conjugated), matching the transposed
    Sylvester operator; the solution block ``w`` lies in the kernel of
    ``A12^T``.
    """
    E11 = np.asarray(E11)
    A11 = np.asarray(A11)
    A12 = np.asarray(A12)
    A21 = np.asarray(A21)
    g = np.asarray(g)
    n_v, n_p = A12.shape
    one_d = g.ndim == 1
    G = g.reshape(n_v, -1)
    dtype = complex if (np.iscomplexobj(G) or np.iscomplexobj(sigma)) else float
    K = np.zeros((n_v + n_p, n_v + n_p), dtype=dtype)
    K[:n_v, :n_v] = (-sigma * E11 - A11).T
    K[:n_v, n_v:] = A21.T
    K[n_v:, :n_v] = A12.T
    rhs = np.vstack([G, np.zeros((n_p, G.shape[1]), dtype=dtype)])
    top, bottom = _saddle_solve(K, rhs, n_v, sigma, A12.T)
    if one_d:
        return top[:, 0], bottom[:, 0]
    return top, bottom
