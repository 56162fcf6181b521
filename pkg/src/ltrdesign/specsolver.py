"""
Weighting coefficients from sensitivity and controller-noise bounds.

On the boundaries of the open-loop requirements the two weightings satisfy

    |W2(i w1k)| = 1 / (m1k |G0(i w1k)|)                 k = 1, 2  (lag pair)
    |W1(i w2k)| = |M(i w2k)| / (m2k |G0(i w2k)|)         k = 1, 2  (lead pair)

where ``M`` is the filter loop of the lag-augmented plant. The filter solution
does not depend on the lead weighting, so the lag pair is solved first and
``M`` is fixed before the lead pair is sought.

Each pair is found by damped Newton iteration in ``log(tau)``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .augment import build_augmented
from .frequency import NoCrossoverError, crossover_frequency, from_db
from .lqg import KbfLoop, UNITY, plant_realization, solve_kbf, weighting_realization
from .riccati import CareError
from .sysmodels import RationalTransferFunction, StateSpaceModel, ss_evaluate
from .weightings import WeightingPair

__all__ = [
    "DesignSpecs",
    "BoundGrid",
    "PairResult",
    "SolutionRecord",
    "crossover_frequency",
    "boundary_residuals",
    "solve_lag_pair",
    "solve_lead_pair",
    "solve_design",
    "sweep",
]

NEWTON_TOL = 1e-9
MAX_NEWTON_ITER = 60
RESTARTS = 5
# steps that take |log(tau)| past this are rejected by the line search
LOG_TAU_LIMIT = 40.0


@dataclass(frozen=True)
class DesignSpecs:
    """Spec frequencies (rad/s), bounds (dB) and weighting orders.

    ``m11``, ``m12`` bound the sensitivity at ``omega11 < omega12``; ``m21``,
    ``m22`` bound the controller noise sensitivity at ``omega21 < omega22``.
    """

    omega11: float
    omega12: float
    omega21: float
    omega22: float
    m11: float
    m12: float
    m21: float
    m22: float
    lead_order: int = 1
    lag_order: int = 1

    def __post_init__(self):
        w = self.omegas
        if not all(np.isfinite(w)) or not (0 < w[0] < w[1] < w[2] < w[3]):
            raise ValueError(f"need 0 < omega11 < omega12 < omega21 < omega22, got {w}")
        if not all(np.isfinite(self.bounds)):
            raise ValueError(f"bounds must be finite, got {self.bounds}")
        for name in ("lead_order", "lag_order"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
            object.__setattr__(self, name, int(v))

    @property
    def omegas(self) -> tuple[float, float, float, float]:
        return (self.omega11, self.omega12, self.omega21, self.omega22)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.m11, self.m12, self.m21, self.m22)

    def with_bounds(self, m11, m12, m21, m22) -> "DesignSpecs":
        return replace(self, m11=float(m11), m12=float(m12), m21=float(m21), m22=float(m22))


def _plant_gain(plant, omega: float) -> float:
    if isinstance(plant, StateSpaceModel):
        return abs(ss_evaluate(plant, omega))
    return abs(plant(1j * omega))


def _as_model(plant) -> StateSpaceModel:
    return plant if isinstance(plant, StateSpaceModel) else plant_realization(plant)


# ---------------------------------------------------------------------------
# boundary equations

def _lag_terms(tau, omega, p, target):
    t21, t22 = tau
    lhs = t22**p * (omega**2 + t21**2) ** (p / 2)
    rhs = target * (omega**2 + t22**2) ** (p / 2)
    return lhs, rhs


def _lead_terms(tau, omega, m, target):
    t11, t12 = tau
    lhs = t12**m * (omega**2 + t11**2) ** (m / 2)
    rhs = target * t11**m * (omega**2 + t12**2) ** (m / 2)
    return lhs, rhs


def _targets(stage, specs, plant, m_gains=None):
    if stage == "lowfreq":
        return [1.0 / (from_db(mk) * _plant_gain(plant, w))
                for mk, w in ((specs.m11, specs.omega11), (specs.m12, specs.omega12))]
    if stage == "highfreq":
        if m_gains is None:
            raise ValueError("highfreq residuals need |M| at omega21 and omega22")
        return [mg / (from_db(mk) * _plant_gain(plant, w))
                for mg, mk, w in zip(m_gains, (specs.m21, specs.m22), (specs.omega21, specs.omega22))]
    raise ValueError(f"stage must be 'lowfreq' or 'highfreq', got {stage!r}")


def boundary_residuals(stage: str, tau_pair, specs: DesignSpecs, plant,
                       m_gains=None, relative: bool = True) -> np.ndarray:
    """Residuals of the two boundary equations of one stage.

    ``stage='lowfreq'`` takes ``(tau21, tau22)`` and ``stage='highfreq'``
    takes ``(tau11, tau12)`` together with ``m_gains = (|M(i w21)|,
    |M(i w22)|)``. Each equation is written in polynomial form
    ``lhs - rhs = 0``. With ``relative=True`` the difference is divided by
    ``max(|lhs|, |rhs|)``.
    """
    tau = tuple(float(t) for t in tau_pair)
    if len(tau) != 2 or not all(np.isfinite(tau)) or min(tau) <= 0:
        raise ValueError(f"tau pair must be two positive finite values, got {tau_pair}")
    targets = _targets(stage, specs, plant, m_gains)
    if stage == "lowfreq":
        omegas, terms, n = (specs.omega11, specs.omega12), _lag_terms, specs.lag_order
    else:
        omegas, terms, n = (specs.omega21, specs.omega22), _lead_terms, specs.lead_order
    out = []
    for w, g in zip(omegas, targets):
        lhs, rhs = terms(tau, w, n, g)
        r = lhs - rhs
        out.append(r / max(abs(lhs), abs(rhs)) if relative else r)
    return np.array(out)


# log-form residuals and Jacobians in (log tau1, log tau2); plain floats since
# the sweep calls these a few hundred thousand times

def _lag_log_system(x, omegas, p, log_targets):
    t21, t22 = math.exp(x[0]), math.exp(x[1])
    r, J = [], []
    for w, lg in zip(omegas, log_targets):
        w2 = w * w
        a, b = w2 + t21 * t21, w2 + t22 * t22
        r.append(p * x[1] + 0.5 * p * (math.log(a) - math.log(b)) - lg)
        J.append((p * t21 * t21 / a, p * w2 / b))
    return r, J


def _lead_log_system(x, omegas, m, log_targets):
    t11, t12 = math.exp(x[0]), math.exp(x[1])
    r, J = [], []
    for w, lg in zip(omegas, log_targets):
        w2 = w * w
        a, b = w2 + t11 * t11, w2 + t12 * t12
        r.append(m * (x[1] - x[0]) + 0.5 * m * (math.log(a) - math.log(b)) - lg)
        J.append((-m * w2 / a, m * w2 / b))
    return r, J


def _solve2(J, r):
    (a, b), (c, d) = J
    det = a * d - b * c
    if det == 0 or not math.isfinite(det):
        raise ZeroDivisionError
    return ((-r[0] * d + b * r[1]) / det, (c * r[0] - a * r[1]) / det)


def _damped_newton(system, x0, tol=NEWTON_TOL, max_iter=MAX_NEWTON_ITER):
    """Newton with backtracking on ``||r||``; returns ``(x, ||r||, iterations, reason)``."""
    x = (float(x0[0]), float(x0[1]))
    r, J = system(x)
    nr = math.hypot(*r)
    for it in range(1, max_iter + 1):
        if nr < tol:
            return x, nr, it - 1, None
        try:
            dx = _solve2(J, r)
        except ZeroDivisionError:
            return x, nr, it, "singular Jacobian"
        step = 1.0
        while step > 1e-6:
            xn = (x[0] + step * dx[0], x[1] + step * dx[1])
            if max(abs(xn[0]), abs(xn[1])) <= LOG_TAU_LIMIT:
                rn, Jn = system(xn)
                nrn = math.hypot(*rn)
                if nrn < (1 - 1e-4 * step) * nr:
                    break
            step *= 0.5
        else:
            return x, nr, it, "line search stalled"
        x, r, J, nr = xn, rn, Jn, nrn
    if nr < tol:
        return x, nr, max_iter, None
    return x, nr, max_iter, "iteration limit"


def _multistart(system, x0, seed):
    rng = np.random.default_rng(seed)
    starts = [np.asarray(x0, dtype=float)]
    starts += [starts[0] + rng.normal(scale=1.0, size=2) for _ in range(RESTARTS)]
    best = None
    total = 0
    for x in starts:
        xs, nr, its, reason = _damped_newton(system, x)
        total += its
        if reason is None:
            return xs, nr, total, None
        if best is None or nr < best[1]:
            best = (xs, nr, reason)
    return best[0], best[1], total, f"boundary equations unsolved from {len(starts)} starts ({best[2]})"


@dataclass(frozen=True)
class PairResult:
    """Outcome of one pair solve. ``tau`` is ``(tau_zero, tau_pole)``."""

    tau: tuple[float, float] | None
    residuals: tuple[float, float]
    iterations: int
    converged: bool
    reason: str | None = None

    @property
    def feasible(self) -> bool:
        return self.converged and self.reason is None


def _finish(x, its, reason, kind, stage, specs, plant, m_gains):
    tau = tuple(float(t) for t in np.exp(x))
    if reason is not None:
        return PairResult(None, (np.nan, np.nan), its, False, reason)
    res = boundary_residuals(stage, tau, specs, plant, m_gains)
    t1, t2 = tau
    if kind == "lag" and t2 > t1:
        return PairResult(tau, tuple(res), its, True, "ordering violated: tau22 > tau21")
    if kind == "lead" and t1 > t2:
        return PairResult(tau, tuple(res), its, True, "ordering violated: tau11 > tau12")
    return PairResult(tau, tuple(res), its, True, None)


def solve_lag_pair(specs: DesignSpecs, plant, seed: int = 0) -> PairResult:
    """Solve the low-frequency boundary equations for ``(tau21, tau22)``.

    The starting point reads each coefficient off the low- and high-frequency
    asymptotes of ``|W2|``, then is tried from 5 log-jittered restarts.
    Ordering ``tau22 <= tau21`` is checked here; the condition against the
    crossover frequency needs the filter loop and is checked by the caller
    (see :func:`solve_design`).
    """
    p = specs.lag_order
    g1, g2 = _targets("lowfreq", specs, plant)
    # |W2| ~ tau21**p below tau21 and ~ tau22**p above it
    t21 = np.clip(g1 ** (1 / p), specs.omega11, specs.omega21)
    t22 = min(g2 ** (1 / p), t21)
    omegas = (specs.omega11, specs.omega12)
    logs = (np.log(g1), np.log(g2))
    system = lambda x: _lag_log_system(x, omegas, p, logs)
    x, nr, its, reason = _multistart(system, np.log([t21, t22]), seed)
    return _finish(x, its, reason, "lag", "lowfreq", specs, plant, None)


def solve_lead_pair(specs: DesignSpecs, plant, m_gains, seed: int = 0) -> PairResult:
    """Solve the high-frequency boundary equations for ``(tau11, tau12)``.

    ``m_gains`` are ``|M(i w21)|`` and ``|M(i w22)|`` of the lag-augmented
    filter loop. The start places ``tau11`` where the required gain ratio
    first departs from 1 and ``tau12`` at the upper spec frequency.
    """
    m = specs.lead_order
    h1, h2 = _targets("highfreq", specs, plant, m_gains)
    # |W1| ~ (w/tau11)**m between the corners
    t11 = specs.omega21 / max(h1, 1.0 + 1e-3) ** (1 / m)
    t12 = max(specs.omega22, t11) * max(h2 / max(h1, 1e-12), 1.0) ** (1 / m)
    omegas = (specs.omega21, specs.omega22)
    logs = (np.log(h1), np.log(h2))
    system = lambda x: _lead_log_system(x, omegas, m, logs)
    x, nr, its, reason = _multistart(system, np.log([t11, t12]), seed)
    return _finish(x, its, reason, "lead", "highfreq", specs, plant, m_gains)


# ---------------------------------------------------------------------------
# full solve and sweep

@dataclass(frozen=True)
class SolutionRecord:
    """One bound combination: coefficients, validity and diagnostics.

    ``tau`` is ``(tau11, tau12, tau21, tau22)`` with ``None`` for pairs that
    were not found. ``residuals`` holds the four relative boundary residuals.
    """

    bounds: tuple[float, float, float, float]
    tau: tuple
    valid: bool
    residuals: tuple
    omega0: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def lead(self) -> WeightingPair | None:
        t11, t12 = self.tau[:2]
        return None if t11 is None else WeightingPair.lead(t11, t12, self.diagnostics["lead_order"])

    @property
    def lag(self) -> WeightingPair | None:
        t21, t22 = self.tau[2:]
        return None if t21 is None else WeightingPair.lag(t21, t22, self.diagnostics["lag_order"])

    @property
    def reason(self) -> str | None:
        return self.diagnostics.get("reason")


@dataclass(frozen=True)
class _LagStage:
    result: PairResult
    kbf: KbfLoop | None
    omega0: float | None
    m_gains: tuple | None
    reason: str | None


def _lag_stage(specs: DesignSpecs, model: StateSpaceModel, seed: int) -> _LagStage:
    lag = solve_lag_pair(specs, model, seed)
    if not lag.feasible:
        return _LagStage(lag, None, None, None, f"lag pair: {lag.reason}")
    pair = WeightingPair.lag(*lag.tau, specs.lag_order)
    try:
        kbf = solve_kbf(build_augmented(model, UNITY, weighting_realization(pair)))
        omega0 = crossover_frequency(kbf)
    except CareError as exc:
        return _LagStage(lag, None, None, None, f"filter Riccati: {exc}")
    except NoCrossoverError as exc:
        return _LagStage(lag, None, None, None, f"filter loop: {exc}")
    m_gains = (abs(kbf(specs.omega21)), abs(kbf(specs.omega22)))
    reason = None if lag.tau[0] < omega0 else f"tau21 = {lag.tau[0]:.6g} not below crossover {omega0:.6g}"
    return _LagStage(lag, kbf, omega0, m_gains, reason)


def _record(specs: DesignSpecs, model, stage: _LagStage, seed: int) -> SolutionRecord:
    diag = {"lead_order": specs.lead_order, "lag_order": specs.lag_order,
            "lag_iterations": stage.result.iterations}
    lag_tau = stage.result.tau if stage.result.feasible else (None, None)
    if stage.kbf is None:
        diag["reason"] = stage.reason
        return SolutionRecord(specs.bounds, (None, None) + tuple(lag_tau), False,
                              tuple(stage.result.residuals) + (np.nan, np.nan), stage.omega0, diag)
    lead = solve_lead_pair(specs, model, stage.m_gains, seed)
    diag["lead_iterations"] = lead.iterations
    diag["m_gains"] = stage.m_gains
    reasons = [stage.reason] if stage.reason else []
    if not lead.feasible:
        reasons.append(f"lead pair: {lead.reason}")
    elif not stage.omega0 < lead.tau[0]:
        reasons.append(f"tau11 = {lead.tau[0]:.6g} not above crossover {stage.omega0:.6g}")
    lead_tau = lead.tau if lead.tau is not None and lead.converged else (None, None)
    diag["reason"] = "; ".join(reasons) if reasons else None
    return SolutionRecord(specs.bounds, tuple(lead_tau) + tuple(lag_tau), not reasons,
                          tuple(stage.result.residuals) + tuple(lead.residuals), stage.omega0, diag)


def solve_design(specs: DesignSpecs, plant, seed: int = 0) -> SolutionRecord:
    """Lag pair, filter loop and crossover, then lead pair, for one set of bounds.

    The record is valid when both pairs converge, ``tau22 <= tau21 < w0 <
    tau11 <= tau12`` and ``w0`` is the unity-gain crossover of the filter
    loop of the lag-augmented plant.
    """
    model = _as_model(plant)
    return _record(specs, model, _lag_stage(specs, model, seed), seed)


@dataclass(frozen=True)
class BoundGrid:
    """``count`` dB-linear points on ``[min(a, b), max(a, b)]``, endpoints included."""

    a: float
    b: float
    count: int

    def __post_init__(self):
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"grid count must be a positive integer, got {self.count!r}")
        if self.count == 1 and self.a != self.b:
            raise ValueError("a one-point grid needs equal endpoints")

    @classmethod
    def point(cls, value: float) -> "BoundGrid":
        return cls(value, value, 1)

    @property
    def values(self) -> np.ndarray:
        lo, hi = min(self.a, self.b), max(self.a, self.b)
        return np.linspace(lo, hi, int(self.count))


def _lag_block(args):
    specs, model, lead_bounds, seed = args
    stage = _lag_stage(specs, model, seed)
    return [_record(specs.with_bounds(specs.m11, specs.m12, c, d), model, stage, seed)
            for c, d in lead_bounds]


def sweep(template: DesignSpecs, plant, grids, jobs: int = 1, seed: int = 0) -> list[SolutionRecord]:
    """Solve every combination of the four bound grids.

    ``grids`` is a sequence of four :class:`BoundGrid` for ``m11, m12, m21,
    m22``. Records come back in combination-index order (``m11`` slowest,
    ``m22`` fastest) regardless of ``jobs``. The lag pair and filter loop are
    computed once per ``(m11, m12)`` and shared by all lead combinations.
    """
    if len(grids) != 4:
        raise ValueError("need four grids (m11, m12, m21, m22)")
    g11, g12, g21, g22 = (g.values for g in grids)
    model = _as_model(plant)
    lead_bounds = [(float(c), float(d)) for c, d in itertools.product(g21, g22)]
    tasks = [(template.with_bounds(a, b, template.m21, template.m22), model, lead_bounds, seed)
             for a, b in itertools.product(g11, g12)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            blocks = list(pool.map(_lag_block, tasks))
    else:
        blocks = [_lag_block(t) for t in tasks]
    return [rec for block in blocks for rec in block]
