"""
Lead (input-side, LQR) and lag (noise-side, KBF) weightings.

Both weightings are biproper powers of a first-order section::

    W1(s) = (t12/t11)**m * ((s + t11) / (s + t12))**m     lead, t11 <= t12
    W2(s) = t22**p       * ((s + t21) / (s + t22))**p     lag,  t22 <= t21

so that ``|W1(0)| = 1``, ``|W1(inf)| = (t12/t11)**m``, ``|W2(0)| = t21**p`` and
``|W2(inf)| = t22**p``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .sysmodels import (
    Polynomial,
    RationalTransferFunction,
    StateSpaceModel,
    binomial_power,
)

Kind = Literal["lead", "lag"]


class WeightingOrderError(ValueError):
    """Coefficient pair violates the ordering required for its kind."""


@dataclass(frozen=True)
class WeightingPair:
    """Coefficients of one weighting.

    For ``kind='lead'`` ``tau1``/``tau2`` are the zero/pole corner (rad/s) of
    W1; for ``kind='lag'`` they are the zero/pole corner of W2. ``order`` is
    the power applied to the first-order section.
    """

    tau1: float
    tau2: float
    order: int
    kind: Kind

    def __post_init__(self):
        if self.kind not in ("lead", "lag"):
            raise ValueError(f"kind must be 'lead' or 'lag', got {self.kind!r}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order!r}")
        object.__setattr__(self, "order", int(self.order))
        t1, t2 = float(self.tau1), float(self.tau2)
        if not (np.isfinite(t1) and np.isfinite(t2)) or t1 <= 0 or t2 <= 0:
            raise WeightingOrderError(f"coefficients must be finite and positive: ({t1}, {t2})")
        if self.kind == "lead" and t1 > t2:
            raise WeightingOrderError(f"lead weighting needs tau11 <= tau12, got ({t1}, {t2})")
        if self.kind == "lag" and t2 > t1:
            raise WeightingOrderError(f"lag weighting needs tau22 <= tau21, got ({t1}, {t2})")
        object.__setattr__(self, "tau1", t1)
        object.__setattr__(self, "tau2", t2)

    @classmethod
    def lead(cls, tau11, tau12, m=1) -> "WeightingPair":
        return cls(tau11, tau12, m, "lead")

    @classmethod
    def lag(cls, tau21, tau22, p=1) -> "WeightingPair":
        return cls(tau21, tau22, p, "lag")

    @property
    def is_unity(self) -> bool:
        return self.tau1 == self.tau2 == 1.0

    @property
    def gain(self) -> float:
        """Constant factor in front of the ``((s+tau1)/(s+tau2))**order`` section."""
        if self.kind == "lead":
            return (self.tau2 / self.tau1) ** self.order
        return self.tau2 ** self.order

    def transfer_function(self) -> RationalTransferFunction:
        return build_w1(self) if self.kind == "lead" else build_w2(self)


def _check(pair: WeightingPair, kind: str):
    if pair.kind != kind:
        raise ValueError(f"expected a {kind} pair, got {pair.kind}")


def _build(pair: WeightingPair) -> RationalTransferFunction:
    num = pair.gain * binomial_power(pair.tau1, pair.order)
    den = binomial_power(pair.tau2, pair.order)
    return RationalTransferFunction(Polynomial(num), Polynomial(den))


def build_w1(pair: WeightingPair) -> RationalTransferFunction:
    """Lead weighting W1 as expanded polynomials."""
    _check(pair, "lead")
    return _build(pair)


def build_w2(pair: WeightingPair) -> RationalTransferFunction:
    """Lag weighting W2 as expanded polynomials."""
    _check(pair, "lag")
    return _build(pair)


def weighting_gain(pair: WeightingPair, omega) -> np.ndarray | float:
    """Closed-form magnitude ``|W(i omega)|``; vectorised over ``omega``."""
    w2 = np.square(np.asarray(omega, dtype=float))
    n = pair.order
    ratio = (w2 + pair.tau1**2) / (w2 + pair.tau2**2)
    out = pair.gain * ratio ** (n / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def weighting_log_gain(pair: WeightingPair, omega: float) -> float:
    """``log |W(i omega)|`` computed without forming the power."""
    w2 = omega * omega
    n = pair.order
    return float(
        np.log(pair.gain)
        + 0.5 * n * (np.log(w2 + pair.tau1**2) - np.log(w2 + pair.tau2**2))
    )


def cascade_realization(pair: WeightingPair) -> StateSpaceModel:
    """Realization as ``order`` identical first-order sections in series.

    Each section ``(s+a)/(s+b) = 1 + (a-b)/(s+b)`` contributes one state, so
    the state matrix is lower triangular with ``-tau2`` on the diagonal. Entries
    scale like ``tau``, not ``tau**order`` as in the companion form.

    Evaluating ``D + C (sI - A)^-1 B`` cancels down from ``|W(i inf)|`` to
    ``|W(i 0)|`` (or back), so its relative accuracy is about machine epsilon
    times the dynamic range ``(tau_max/tau_min)**order``. That is inherent to
    any state-space form of these weightings.
    """
    a, b, n = pair.tau1, pair.tau2, pair.order
    A = -b * np.eye(n)
    # section k is driven by (a-b)(x_1 + ... + x_{k-1}) + u
    for k in range(1, n):
        A[k, :k] = (a - b)
    B = np.ones((n, 1))
    C = np.full((1, n), a - b)
    g = pair.gain
    return StateSpaceModel(A, g * B, C, [[g]])
