"""
Frequency curves, stability margins, step responses and the return-difference
identity of the filter loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .frequency import bisect_log, db, log_grid
from .lqg import LqgDesign, loop_eval
from .sysmodels import SingularEvaluation, StateSpaceModel, ss_evaluate

Evaluator = Callable[[float], complex]

CURVE_BAND = (1e-1, 1e5)
CURVE_PPD = 200
MARGIN_BAND = (1e-2, 1e6)
MARGIN_PPD = 400


class UnstableClosedLoopError(ValueError):
    """The closed loop has a pole in the closed right half-plane."""


@dataclass(frozen=True)
class FrequencyCurve:
    """Samples of a frequency response on an ascending grid.

    Points where the evaluator signalled a singularity hold ``nan`` and are
    marked in ``singular``.
    """

    omegas: np.ndarray
    values: np.ndarray
    kind: str = ""
    singular: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.omegas, dtype=float)
        if w.ndim != 1 or w.size < 2 or np.any(np.diff(w) <= 0):
            raise ValueError("omegas must be a strictly ascending 1-D grid")
        v = np.asarray(self.values, dtype=complex)
        if v.shape != w.shape:
            raise ValueError("values and omegas differ in length")
        sing = np.zeros(w.shape, bool) if self.singular is None else np.asarray(self.singular, bool)
        object.__setattr__(self, "omegas", w)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "singular", sing)

    @property
    def magnitude_db(self) -> np.ndarray:
        return db(self.values)

    @property
    def phase_deg(self) -> np.ndarray:
        """Continuous phase, unwrapped along the grid from its low-frequency end."""
        return np.degrees(np.unwrap(np.angle(self.values)))


def sample_curve(evaluator: Evaluator, band=CURVE_BAND, points_per_decade: int = CURVE_PPD,
                 kind: str = "") -> FrequencyCurve:
    grid = log_grid(band[0], band[1], points_per_decade=points_per_decade)
    vals = np.empty(grid.size, complex)
    sing = np.zeros(grid.size, bool)
    for i, w in enumerate(grid):
        try:
            vals[i] = evaluator(w)
        except SingularEvaluation:
            vals[i] = np.nan
            sing[i] = True
    return FrequencyCurve(grid, vals, kind, sing)


def design_curve(design: LqgDesign, kind: str, band=CURVE_BAND,
                 points_per_decade: int = CURVE_PPD) -> FrequencyCurve:
    return sample_curve(lambda w: loop_eval(design, kind, w), band, points_per_decade, kind)


@dataclass(frozen=True)
class MarginReport:
    """Gain margin (linear) and phase margin (degrees) with their frequencies.

    A margin whose crossover does not exist in the search band is ``inf``
    with its frequency ``nan`` and the matching ``*_found`` flag false.
    """

    gain_margin: float
    phase_margin: float
    gm_frequency: float
    pm_frequency: float
    gm_found: bool = True
    pm_found: bool = True


def _wrap_deg(x: float) -> float:
    """Map into ``(-180, 180]``."""
    y = (x + 180.0) % 360.0 - 180.0
    return 180.0 if y == -180.0 else y


def margins(loop: Evaluator, band=MARGIN_BAND, points_per_decade: int = MARGIN_PPD,
            rtol: float = 1e-8) -> MarginReport:
    """Gain and phase margins of a stable open loop.

    Phase crossovers are the points where the locus crosses the negative real
    axis, bracketed by sign changes of ``Im L`` with ``Re L < 0`` and refined
    by bisection; the gain margin is the smallest ``1/|L|`` among them. The
    phase margin is ``180 + arg L`` at the gain crossover with the smallest
    margin.
    """
    grid = log_grid(*band, points_per_decade=points_per_decade)
    vals = np.array([loop(w) for w in grid])

    gm, w_gm = np.inf, np.nan
    im = vals.imag
    for i in np.flatnonzero(np.sign(im[:-1]) != np.sign(im[1:])):
        if vals[i].real >= 0 and vals[i + 1].real >= 0:
            continue
        w = bisect_log(lambda x: loop(x).imag, grid[i], grid[i + 1], rtol)
        L = loop(w)
        if L.real < 0 and 1.0 / abs(L) < gm:
            gm, w_gm = 1.0 / abs(L), w

    pm, w_pm = np.inf, np.nan
    logmag = np.log(np.abs(vals))
    for i in np.flatnonzero(np.sign(logmag[:-1]) != np.sign(logmag[1:])):
        w = bisect_log(lambda x: np.log(abs(loop(x))), grid[i], grid[i + 1], rtol)
        m = _wrap_deg(180.0 + np.degrees(np.angle(loop(w))))
        if abs(m) < abs(pm):
            pm, w_pm = m, w

    return MarginReport(float(gm), float(pm), float(w_gm), float(w_pm),
                        bool(np.isfinite(gm)), bool(np.isfinite(pm)))


def design_margins(design: LqgDesign, kind: str = "G0K", **kw) -> MarginReport:
    """Margins of the loop ``kind`` (by default ``G0 K``, the loop that is closed)."""
    return margins(lambda w: loop_eval(design, kind, w), **kw)


@dataclass(frozen=True)
class StepResponse:
    t: np.ndarray
    y: np.ndarray

    @property
    def final(self) -> float:
        return float(self.y[-1])

    def overshoot(self, reference: float | None = None) -> float:
        """Peak excursion past ``reference`` (default: last sample), relative to it."""
        ref = self.final if reference is None else reference
        if ref == 0:
            return float(np.max(np.abs(self.y)))
        return float(max(0.0, (np.max(self.y * np.sign(ref)) - abs(ref)) / abs(ref)))


def zoh(A, B, dt: float):
    """Exact zero-order-hold discretization via the block matrix exponential."""
    n, q = B.shape
    blk = np.zeros((n + q, n + q))
    blk[:n, :n] = A
    blk[:n, n:] = B
    E = sla.expm(blk * dt)
    return E[:n, :n], E[:n, n:]


def step_response(model: StateSpaceModel, horizon: float = 1.0, dt: float = 1e-4) -> StepResponse:
    """Unit-step response from rest, exact at the sample instants.

    Raises
    ------
    UnstableClosedLoopError
        If the state matrix has an eigenvalue with nonnegative real part.
    """
    if not (horizon > 0 and dt > 0):
        raise ValueError("horizon and dt must be positive")
    if np.any(model.D != 0):
        raise ValueError("step_response expects a strictly proper model")
    steps = int(round(horizon / dt))
    t = dt * np.arange(steps + 1)
    if model.order == 0:
        return StepResponse(t, np.zeros_like(t))
    if not model.is_hurwitz():
        ev = np.linalg.eigvals(model.A)
        raise UnstableClosedLoopError(f"closed loop has pole(s) with Re >= 0: max Re = {ev.real.max():.4g}")
    Ad, Bd = zoh(model.A, model.B[:, :1], dt)
    x = np.zeros(model.order)
    bd = Bd[:, 0]
    c = model.C[0]
    y = np.empty(steps + 1)
    y[0] = 0.0
    for k in range(steps):
        x = Ad @ x + bd
        y[k + 1] = c @ x
    return StepResponse(t, y)


def _kbf_terms(design: LqgDesign, w: float):
    M = design.kbf(w)
    w2g0 = ss_evaluate(design.plant.w2, w) * ss_evaluate(design.plant.plant, w)
    return M, w2g0


def kalman_check(design: LqgDesign, band=CURVE_BAND, points: int = 200) -> float:
    """Largest ``| |1+M|^2 - 1 - |W2 G0|^2 | / (1 + |W2 G0|^2)`` on a log grid."""
    worst = 0.0
    for w in log_grid(band[0], band[1], points=points):
        M, h = _kbf_terms(design, w)
        lhs = abs(1.0 + M) ** 2
        rhs = 1.0 + abs(h) ** 2
        worst = max(worst, abs(lhs - rhs) / rhs)
    return worst


def min_return_difference(design: LqgDesign, band=CURVE_BAND, points: int = 200) -> float:
    """``min |1 + M(i w)|`` on a log grid; at least 1 for an exact filter solution."""
    return float(min(abs(1.0 + design.kbf(w)) for w in log_grid(band[0], band[1], points=points)))
