"""
SISO rational transfer functions and their state-space realizations.

Polynomials are dense coefficient arrays in descending powers of ``s``
(the ``numpy.polyval`` convention). Transfer functions and state-space
models are immutable value objects; every operation here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
import scipy.linalg as sla

MAX_DEGREE = 32


class SingularEvaluation(ArithmeticError):
    """Raised when a transfer function is evaluated at (or numerically on) a pole."""


class RootFindingError(RuntimeError):
    """Raised when polynomial roots cannot be computed to a finite value."""


class ImproperError(ValueError):
    """Raised when a strictly/bi-proper object is required but an improper one is given."""


def _trim(coeffs, atol=0.0):
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if c.ndim != 1:
        raise ValueError("polynomial coefficients must be one-dimensional")
    if not np.all(np.isfinite(c)):
        raise ValueError("polynomial coefficients must be finite")
    nz = np.flatnonzero(np.abs(c) > atol)
    if nz.size == 0:
        return np.zeros(1)
    return c[nz[0]:].copy()


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial in ``s`` with descending coefficients.

    Leading zeros are stripped at construction, so ``degree`` is exact.
    The zero polynomial is represented as ``[0.0]`` with degree 0.
    """

    coeffs: np.ndarray

    def __post_init__(self):
        c = _trim(self.coeffs)
        if c.size - 1 > MAX_DEGREE:
            raise ValueError(f"polynomial degree {c.size - 1} exceeds cap {MAX_DEGREE}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def is_zero(self) -> bool:
        return self.coeffs.size == 1 and self.coeffs[0] == 0.0

    def __call__(self, s):
        return np.polyval(self.coeffs, s)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.convolve(self.coeffs, other.coeffs))

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.polyadd(self.coeffs, other.coeffs))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return Polynomial(np.polysub(self.coeffs, other.coeffs))

    def scale(self, k: float) -> "Polynomial":
        return Polynomial(k * self.coeffs)

    def roots(self) -> np.ndarray:
        """Roots via eigenvalues of the balanced companion matrix."""
        return polynomial_roots(self.coeffs)


def polynomial_roots(coeffs) -> np.ndarray:
    c = _trim(coeffs)
    if c.size == 1:
        if c[0] == 0.0:
            raise RootFindingError("the zero polynomial has no finite root set")
        return np.zeros(0, dtype=complex)
    n = c.size - 1
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:] / c[0]
    comp[1:, :-1] = np.eye(n - 1)
    bal, _ = sla.matrix_balance(comp, permute=False)
    r = sla.eigvals(bal)
    if not np.all(np.isfinite(r)):
        raise RootFindingError(f"non-finite roots for coefficients {c!r}")
    return r


def binomial_power(root: float, order: int) -> np.ndarray:
    """Coefficients of ``(s + root)**order``, expanded with binomial weights."""
    return np.array([comb(order, k) * root**k for k in range(order + 1)], dtype=float)


def _as_poly(p) -> Polynomial:
    return p if isinstance(p, Polynomial) else Polynomial(p)


@dataclass(frozen=True)
class RationalTransferFunction:
    """Ratio ``num(s)/den(s)`` of two real polynomials."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        num, den = _as_poly(self.num), _as_poly(self.den)
        if den.is_zero():
            raise ValueError("denominator polynomial is identically zero")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def from_coeffs(cls, num, den) -> "RationalTransferFunction":
        return cls(Polynomial(num), Polynomial(den))

    @classmethod
    def constant(cls, k: float) -> "RationalTransferFunction":
        return cls(Polynomial([k]), Polynomial([1.0]))

    @property
    def relative_degree(self) -> int:
        if self.num.is_zero():
            return self.den.degree
        return self.den.degree - self.num.degree

    @property
    def is_proper(self) -> bool:
        return self.num.is_zero() or self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.is_zero() or self.num.degree < self.den.degree

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def __mul__(self, other):
        return series(self, other)

    def normalized(self) -> "RationalTransferFunction":
        """Scale so the denominator is monic."""
        lead = self.den.coeffs[0]
        return RationalTransferFunction(self.num.scale(1.0 / lead), self.den.scale(1.0 / lead))

    def zeros(self) -> np.ndarray:
        if self.num.is_zero():
            return np.zeros(0, dtype=complex)
        return self.num.roots()

    def poles(self) -> np.ndarray:
        return self.den.roots()


@dataclass(frozen=True)
class StateSpaceModel:
    """Continuous-time (A, B, C, D) realization."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))

    def __post_init__(self):
        # copies, so freezing never touches caller-owned arrays
        A = np.atleast_2d(np.array(self.A, dtype=float))
        B = np.array(self.B, dtype=float)
        C = np.array(self.C, dtype=float)
        D = np.atleast_2d(np.array(self.D, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = B.reshape(n, -1) if n else B.reshape(0, D.shape[1])
        C = C.reshape(-1, n) if n else C.reshape(D.shape[0], 0)
        if D.shape != (C.shape[0], B.shape[1]):
            raise ValueError(f"D has shape {D.shape}, expected {(C.shape[0], B.shape[1])}")
        for name, M in zip("ABCD", (A, B, C, D)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f"{name} has non-finite entries")
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def is_hurwitz(self) -> bool:
        return self.order == 0 or bool(np.all(np.linalg.eigvals(self.A).real < 0))

    def evaluate(self, omega: float) -> complex:
        """SISO frequency response ``C (i omega I - A)^-1 B + D``."""
        return ss_evaluate(self, omega)


def realize(tf: RationalTransferFunction) -> StateSpaceModel:
    """Controllable canonical realization of a proper SISO transfer function.

    The direct feedthrough is split off by polynomial long division, so the
    strictly proper remainder determines ``C``.
    """
    if not tf.is_proper:
        raise ImproperError(
            f"cannot realize improper transfer function (num degree {tf.num.degree} "
            f"> den degree {tf.den.degree})"
        )
    a = tf.den.coeffs / tf.den.coeffs[0]
    b = tf.num.coeffs / tf.den.coeffs[0]
    n = a.size - 1
    b = np.concatenate([np.zeros(n + 1 - b.size), b])
    d = b[0]
    r = b[1:] - d * a[1:]
    if n == 0:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[d]])
    A = np.zeros((n, n))
    A[0, :] = -a[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    C = r.reshape(1, n)
    return StateSpaceModel(A, B, C, [[d]])


def balance(model: StateSpaceModel) -> StateSpaceModel:
    """Diagonal state scaling that balances the system matrix ``[[A, B], [C, D]]``.

    The transfer function is unchanged; only the coordinates move. Scale
    factors are powers of two, so the similarity itself adds no roundoff.
    """
    n = model.order
    if n == 0:
        return model
    M = np.block([[model.A, model.B], [model.C, np.zeros_like(model.D)]])
    _, (s, _) = sla.matrix_balance(np.abs(M), permute=False, separate=True)
    t = s[:n] / s[n]
    A = model.A * t[None, :] / t[:, None]
    return StateSpaceModel(A, model.B / t[:, None], model.C * t[None, :], model.D)


def evaluate(tf: RationalTransferFunction, omega: float, rtol: float = 1e-14) -> complex:
    """Value of ``tf`` at ``s = i*omega``.

    Raises :class:`SingularEvaluation` when the denominator vanishes relative
    to the size of its terms.
    """
    s = 1j * omega
    den = tf.den(s)
    scale = np.polyval(np.abs(tf.den.coeffs), abs(s))
    if abs(den) <= rtol * scale:
        raise SingularEvaluation(f"transfer function has a pole at s = {s}")
    return complex(tf.num(s) / den)


def ss_evaluate(model: StateSpaceModel, omega: float) -> complex:
    n = model.order
    if n == 0:
        return complex(model.D[0, 0])
    M = 1j * omega * np.eye(n) - model.A
    try:
        x = np.linalg.solve(M, model.B[:, :1])
    except np.linalg.LinAlgError as exc:
        raise SingularEvaluation(f"state matrix has an eigenvalue at i*{omega}") from exc
    return complex((model.C[:1] @ x)[0, 0] + model.D[0, 0])


def frequency_response(model: StateSpaceModel, omegas) -> np.ndarray:
    """SISO response sampled on a frequency grid."""
    return np.array([ss_evaluate(model, w) for w in np.asarray(omegas, dtype=float)])


def to_transfer_function(model: StateSpaceModel) -> RationalTransferFunction:
    """Rational coefficients of a SISO state-space model.

    Uses ``C adj(sI - A) B = det(sI - A + BC) - det(sI - A)``, which avoids
    forming the adjugate. Intended for export; the state-space form stays the
    numerically preferred representation.
    """
    if model.order == 0:
        return RationalTransferFunction.constant(float(model.D[0, 0]))
    b, c = model.B[:, :1], model.C[:1]
    den = np.poly(model.A).real
    num = np.poly(model.A - b @ c).real - den
    num = num + model.D[0, 0] * den
    return RationalTransferFunction(Polynomial(num), Polynomial(den))


def series(a: RationalTransferFunction, b: RationalTransferFunction, reduce: bool = False,
           rtol: float = 1e-8) -> RationalTransferFunction:
    """Product ``a(s) b(s)``; optional cancellation of coincident pole/zero pairs."""
    with np.errstate(over="ignore", invalid="ignore"):
        num = np.convolve(a.num.coeffs, b.num.coeffs)
        den = np.convolve(a.den.coeffs, b.den.coeffs)
    if not (np.all(np.isfinite(num)) and np.all(np.isfinite(den))):
        raise OverflowError("coefficient overflow in series product")
    out = RationalTransferFunction(Polynomial(num), Polynomial(den))
    return cancel(out, rtol) if reduce else out


def cancel(tf: RationalTransferFunction, rtol: float = 1e-8) -> RationalTransferFunction:
    """Remove pole/zero pairs that agree to ``rtol`` relative.

    Matching is greedy, one zero per pole. The gain is recovered from the
    leading coefficients so the high-frequency behaviour is unchanged.
    """
    if tf.num.is_zero():
        return RationalTransferFunction(Polynomial([0.0]), Polynomial([1.0]))
    zeros = list(tf.zeros())
    poles = list(tf.poles())
    kept_poles = []
    for p in poles:
        hit = None
        for i, z in enumerate(zeros):
            if abs(z - p) <= rtol * max(1.0, abs(p)):
                hit = i
                break
        if hit is None:
            kept_poles.append(p)
        else:
            zeros.pop(hit)
    if len(kept_poles) == len(poles):
        return tf
    gain = tf.num.coeffs[0] / tf.den.coeffs[0]
    num = gain * np.real_if_close(np.poly(zeros), tol=1e6) if zeros else np.array([gain])
    den = np.real_if_close(np.poly(kept_poles), tol=1e6) if kept_poles else np.array([1.0])
    return RationalTransferFunction(Polynomial(np.real(num)), Polynomial(np.real(den)))


def classify(tf: RationalTransferFunction) -> dict:
    """Stability, minimum-phase and relative-degree classification.

    Returns
    -------
    dict with keys ``stable``, ``minimum_phase`` and ``relative_degree``.
    """
    if tf.num.is_zero():
        raise ValueError("cannot classify the zero transfer function")
    poles = tf.poles()
    zeros = tf.zeros()
    return {
        "stable": bool(np.all(poles.real < 0)),
        "minimum_phase": bool(np.all(zeros.real < 0)),
        "relative_degree": tf.relative_degree,
    }
