"""
Stabilizing solutions of continuous algebraic Riccati equations.

All problems are stated in the regulator convention

    X A + A^T X - X G X + Q = 0,        A - G X Hurwitz,

with ``G`` and ``Q`` symmetric positive semidefinite. The filter equation
``S A^T + A S - S C^T C S + F F^T = 0`` is the same problem for ``A^T``
(see :func:`solve_filter_care`).

The solver takes the stable invariant subspace of the Hamiltonian from an
ordered real Schur form, after a diagonal symplectic balancing and a scalar
rescaling that equalises ``||G||`` and ``||Q||``. When the residual is not
already small the result is refined by Newton-Kleinman steps, whose
correction residual is accumulated in extended precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

RESIDUAL_TOL = 1e-8
REFINE_TOL = 1e-10
AXIS_TOL = 1e-9


class CareError(RuntimeError):
    """The Riccati equation has no acceptable stabilizing solution."""


@dataclass(frozen=True)
class CareProblem:
    A: np.ndarray
    G: np.ndarray
    Q: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.array(self.A, dtype=float))
        G = np.atleast_2d(np.array(self.G, dtype=float))
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        n = A.shape[0]
        for name, M in (("A", A), ("G", G), ("Q", Q)):
            if M.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {M.shape}")
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
        for name, M in (("G", G), ("Q", Q)):
            asym = np.linalg.norm(M - M.T)
            if asym > 1e-12 * max(1.0, np.linalg.norm(M)):
                raise ValueError(f"{name} is not symmetric (asymmetry {asym:.3e})")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "G", 0.5 * (G + G.T))
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))

    @property
    def n(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class CareSolution:
    X: np.ndarray
    residual_norm: float
    closed_loop_spectrum: np.ndarray
    refinement_steps: int = 0


def _raw_residual(A, G, Q, X):
    return X @ A + A.T @ X - X @ G @ X + Q


def care_residual(problem: CareProblem, X) -> float:
    """``||X A + A^T X - X G X + Q||_F / max(1, ||X||_F ||A||_F)``."""
    X = np.asarray(X, dtype=float)
    R = _raw_residual(problem.A, problem.G, problem.Q, X)
    scale = max(1.0, np.linalg.norm(X) * np.linalg.norm(problem.A))
    return float(np.linalg.norm(R) / scale)


def _symplectic_scaling(A, G, Q):
    """Diagonal ``d`` such that ``diag(d, 1/d)`` roughly balances the Hamiltonian."""
    n = A.shape[0]
    H = np.block([[A, -G], [-Q, -A.T]])
    _, (s, _) = sla.matrix_balance(np.abs(H), permute=False, separate=True)
    d = np.sqrt(s[:n] / s[n:])
    # powers of two keep the similarity exact
    return 2.0 ** np.round(np.log2(d))


def _schur_solve(A, G, Q):
    n = A.shape[0]
    H = np.block([[A, -G], [-Q, -A.T]])
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    ev = sla.eigvals(T)
    axis = AXIS_TOL * max(1.0, np.linalg.norm(A))
    close = np.abs(ev.real) < axis
    if np.any(close):
        raise CareError(
            f"Hamiltonian has {int(close.sum())} eigenvalue(s) within {axis:.2e} of the "
            f"imaginary axis (closest: {ev[close][0]:.6g}); no stabilizing solution"
        )
    if sdim != n:
        raise CareError(f"stable invariant subspace has dimension {sdim}, expected {n}")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(U1) > 1e14:
        raise CareError("stable subspace basis is singular; stabilizing solution does not exist")
    X = np.linalg.solve(U1.T, U2.T).T
    return 0.5 * (X + X.T)


def _ext_residual(A, G, Q, X):
    """Residual accumulated in ``np.longdouble``, rounded back to double."""
    ld = np.longdouble
    A, G, Q, X = (np.asarray(M, dtype=ld) for M in (A, G, Q, X))
    return (X @ A + A.T @ X - X @ G @ X + Q).astype(float)


def _kleinman_step(A, G, Q, X):
    R = _ext_residual(A, G, Q, X)
    Ac = A - G @ X
    dX = sla.solve_continuous_lyapunov(Ac.T, -R)
    X = X + dX
    return 0.5 * (X + X.T)


def solve_care(problem: CareProblem, tol: float = RESIDUAL_TOL,
               max_refine: int = 2) -> CareSolution:
    """Stabilizing solution of ``X A + A^T X - X G X + Q = 0``.

    Raises
    ------
    CareError
        If the Hamiltonian has eigenvalues on the imaginary axis, if the
        stable subspace is not a graph subspace, if the final relative
        residual exceeds ``tol``, or if ``A - G X`` is not Hurwitz.
    """
    A, G, Q = problem.A, problem.G, problem.Q
    d = _symplectic_scaling(A, G, Q)
    Ab = A * d[None, :] / d[:, None]
    Gb = G / d[:, None] / d[None, :]
    Qb = Q * d[:, None] * d[None, :]
    ng, nq = np.linalg.norm(Gb), np.linalg.norm(Qb)
    gamma = np.sqrt(nq / ng) if ng > 0 and nq > 0 else 1.0
    Gs, Qs = gamma * Gb, Qb / gamma

    def unscale(Y):
        Y = gamma * Y / d[:, None] / d[None, :]
        return 0.5 * (Y + Y.T)

    # Newton-Kleinman steps run in the balanced coordinates (correction residual
    # in extended precision) but are accepted only if they reduce the residual
    # of the problem as posed
    Xs = _schur_solve(Ab, Gs, Qs)
    X = unscale(Xs)
    residual = care_residual(problem, X)
    steps = 0
    while residual > REFINE_TOL and steps < max_refine:
        steps += 1
        try:
            Xn = _kleinman_step(Ab, Gs, Qs, Xs)
        except (np.linalg.LinAlgError, ValueError):
            break
        rn = care_residual(problem, unscale(Xn))
        if not rn < residual:
            break
        Xs, X, residual = Xn, unscale(Xn), rn

    if not residual <= tol:
        raise CareError(f"relative residual {residual:.3e} exceeds tolerance {tol:.1e}")
    spectrum = np.linalg.eigvals(A - G @ X)
    if not np.all(spectrum.real < 0):
        raise CareError(f"closed loop is not Hurwitz: max Re = {spectrum.real.max():.3e}")
    return CareSolution(X, residual, spectrum, steps)


def solve_regulator_care(A, B, C, rho: float = 1.0, scale_threshold: float = 1e6) -> tuple[CareSolution, CareProblem]:
    """``A^T P + P A - rho P B B^T P + C^T C = 0``.

    For ``rho >= scale_threshold`` the equation is solved for ``sqrt(rho) P``,
    which has the balanced coefficients ``sqrt(rho) B B^T`` and
    ``sqrt(rho) C^T C``; the returned solution is unscaled back to ``P`` and
    its residual re-measured on the original problem.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    original = CareProblem(A, rho * (B @ B.T), C.T @ C)
    if rho < scale_threshold:
        return solve_care(original), original
    r = np.sqrt(rho)
    scaled = solve_care(CareProblem(A, r * (B @ B.T), r * (C.T @ C)))
    P = scaled.X / r
    res = care_residual(original, P)
    if not res <= RESIDUAL_TOL:
        raise CareError(f"unscaled regulator residual {res:.3e} exceeds tolerance")
    spectrum = np.linalg.eigvals(A - original.G @ P)
    return CareSolution(P, res, spectrum, scaled.refinement_steps), original


def solve_filter_care(A, C, F) -> tuple[CareSolution, CareProblem]:
    """``S A^T + A S - S C^T C S + F F^T = 0`` solved as the dual regulator problem.

    The returned problem is the transposed one (``A^T``, ``C^T C``,
    ``F F^T``), so ``care_residual(problem, S)`` measures the filter residual.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1, A.shape[0])
    F = np.asarray(F, dtype=float).reshape(A.shape[0], -1)
    problem = CareProblem(A.T, C.T @ C, F @ F.T)
    return solve_care(problem), problem
