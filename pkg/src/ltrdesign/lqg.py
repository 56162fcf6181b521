"""
LQG compensator synthesis on the augmented plant, and the loops built from it.

Notation: ``M`` is the Kalman-Bucy filter loop ``C (sI-A)^-1 S C^T`` of the
augmented plant, ``M0`` the same loop for unity weightings, ``K`` the LQG
compensator and ``L = W1 G0 K`` the augmented open loop. The loop that is
actually closed around the plant is ``G0 K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .augment import AugmentedPlant, build_augmented
from .frequency import crossover_frequency, db, log_grid
from .riccati import CareError, CareProblem, CareSolution, solve_filter_care, solve_regulator_care
from .sysmodels import (
    RationalTransferFunction,
    SingularEvaluation,
    StateSpaceModel,
    balance,
    realize,
    ss_evaluate,
)
from .weightings import WeightingPair, cascade_realization

DEFAULT_RHO = 1e8
MAX_RHO = 1e12
GAP_THRESHOLD_DB = 0.1
LOOP_KINDS = ("M", "M0", "L", "G0K", "S_aug", "S_nom", "KS_nom", "K", "KBF_S", "G0", "W1", "W2")

UNITY = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])


def plant_realization(plant: RationalTransferFunction) -> StateSpaceModel:
    """Balanced controllable-canonical realization of a strictly proper plant."""
    if not plant.is_strictly_proper:
        raise ValueError("plant transfer function must be strictly proper")
    return balance(realize(plant))


def weighting_realization(pair: WeightingPair | None) -> StateSpaceModel:
    """Cascade realization; equal corners collapse to a static gain."""
    if pair is None:
        return UNITY
    if pair.tau1 == pair.tau2:
        return StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[pair.gain]])
    return cascade_realization(pair)


@dataclass(frozen=True)
class KbfLoop:
    """Filter Riccati solution and loop for one augmented plant."""

    plant: AugmentedPlant
    S: CareSolution
    problem: CareProblem

    @cached_property
    def model(self) -> StateSpaceModel:
        return StateSpaceModel(self.plant.A, self.S.X @ self.plant.C.T, self.plant.C, [[0.0]])

    def __call__(self, omega: float) -> complex:
        return ss_evaluate(self.model, omega)


def solve_kbf(plant: AugmentedPlant) -> KbfLoop:
    sol, problem = solve_filter_care(plant.A, plant.C, plant.F)
    return KbfLoop(plant, sol, problem)


def kbf_loop(design_or_plant, omega: float, S=None) -> complex:
    """``M(i omega) = C (i omega I - A)^-1 S C^T``.

    Accepts an :class:`LqgDesign`, or an :class:`AugmentedPlant` together
    with the filter Riccati solution ``S``.
    """
    if isinstance(design_or_plant, LqgDesign):
        return design_or_plant.kbf(omega)
    plant = design_or_plant
    X = S.X if isinstance(S, CareSolution) else np.asarray(S)
    return ss_evaluate(StateSpaceModel(plant.A, X @ plant.C.T, plant.C, [[0.0]]), omega)


def build_compensator(plant: AugmentedPlant, S, P, rho: float) -> StateSpaceModel:
    """``K(s) = rho B^T P (sI - A + rho B B^T P + S C^T C)^-1 S C^T``."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    S_sol = S if isinstance(S, CareSolution) else None
    P_sol = P if isinstance(P, CareSolution) else None
    Sx = S_sol.X if S_sol else np.asarray(S, dtype=float)
    Px = P_sol.X if P_sol else np.asarray(P, dtype=float)
    A, B, C = plant.A, plant.B, plant.C
    if np.any(np.linalg.eigvals(A - Sx @ C.T @ C).real >= 0):
        raise CareError("filter solution is not stabilizing")
    if np.any(np.linalg.eigvals(A - rho * B @ B.T @ Px).real >= 0):
        raise CareError("regulator solution is not stabilizing")
    gain = rho * B.T @ Px
    L = Sx @ C.T
    AK = A - B @ gain - L @ C
    return StateSpaceModel(AK, L, gain, [[0.0]])


@dataclass(frozen=True)
class LqgDesign:
    """A synthesized design; immutable, all evaluations pure."""

    plant: AugmentedPlant
    S: CareSolution
    P: CareSolution
    rho: float
    compensator: StateSpaceModel
    lead: WeightingPair | None = None
    lag: WeightingPair | None = None
    nominal_kbf: KbfLoop | None = field(default=None, compare=False)
    rho_history: tuple = ()

    @property
    def order(self) -> int:
        return self.compensator.order

    @property
    def is_nominal(self) -> bool:
        return self.plant.w1.order == 0 and self.plant.w2.order == 0

    def kbf(self, omega: float) -> complex:
        return kbf_loop(self.plant, omega, self.S)

    @cached_property
    def _gains(self):
        return self.compensator.C, self.compensator.B

    def K(self, omega: float) -> complex:
        """Compensator response from open-loop resolvents of the augmented plant.

        With ``a = Kc Phi B``, ``b = Kc Phi L``, ``c = C Phi B``, ``e = C Phi L``
        and ``Phi = (i omega I - A)^-1``, ``K = b / ((1 + a)(1 + e) - b c)``.
        This avoids the large entries of ``A_K`` in the cheap-control regime,
        which otherwise put a floor of a few 1e-6 dB on the recovery gap.
        """
        Kc, L = self._gains
        A, B, C = self.plant.A, self.plant.B, self.plant.C
        n = A.shape[0]
        try:
            Phi = np.linalg.solve(1j * omega * np.eye(n) - A, np.hstack([B, L]))
        except np.linalg.LinAlgError as exc:
            raise SingularEvaluation(f"augmented state matrix has an eigenvalue at i*{omega}") from exc
        a = (Kc @ Phi[:, :1])[0, 0]
        b = (Kc @ Phi[:, 1:])[0, 0]
        c = (C @ Phi[:, :1])[0, 0]
        e = (C @ Phi[:, 1:])[0, 0]
        den = (1 + a) * (1 + e) - b * c
        if den == 0:
            raise SingularEvaluation(f"compensator has a pole at i*{omega}")
        return complex(b / den)

    def G0(self, omega: float) -> complex:
        return ss_evaluate(self.plant.plant, omega)

    def W1(self, omega: float) -> complex:
        return ss_evaluate(self.plant.w1, omega)

    def W2(self, omega: float) -> complex:
        return ss_evaluate(self.plant.w2, omega)

    def M0(self, omega: float) -> complex:
        if self.nominal_kbf is None:
            object.__setattr__(self, "nominal_kbf", nominal_kbf(self.plant.plant))
        return self.nominal_kbf(omega)

    def closed_loop(self) -> StateSpaceModel:
        """Reference-to-output loop of ``G0`` under unity negative feedback through ``K``."""
        return closed_loop(self.plant.plant, self.compensator)

    def augmented_closed_loop_matrix(self) -> np.ndarray:
        A, B, C = self.plant.A, self.plant.B, self.plant.C
        K = self.compensator
        return np.block([[A, B @ K.C], [-K.B @ C, K.A]])


def nominal_kbf(plant: StateSpaceModel) -> KbfLoop:
    return solve_kbf(build_augmented(plant, UNITY, UNITY))


def closed_loop(plant: StateSpaceModel, comp: StateSpaceModel) -> StateSpaceModel:
    """``T = G K / (1 + G K)`` for strictly proper ``G`` and ``K``."""
    A0, B0, C0 = plant.A, plant.B, plant.C
    AK, BK, CK = comp.A, comp.B, comp.C
    n, k = plant.order, comp.order
    A = np.block([[A0, B0 @ CK], [-BK @ C0, AK]])
    B = np.vstack([np.zeros((n, 1)), BK])
    C = np.hstack([C0, np.zeros((1, k))])
    return StateSpaceModel(A, B, C, [[0.0]])


def loop_eval(design: LqgDesign, kind: str, omega: float) -> complex:
    """Evaluate one of the design's loops or closed-loop maps at ``i omega``.

    ``kind`` is one of ``M, M0, L, G0K, S_aug, S_nom, KS_nom`` plus the
    building blocks ``K, G0, W1, W2`` and ``KBF_S = 1/(1 + M)``.
    """
    if kind == "M":
        return design.kbf(omega)
    if kind == "M0":
        return design.M0(omega)
    if kind == "K":
        return design.K(omega)
    if kind == "G0":
        return design.G0(omega)
    if kind == "W1":
        return design.W1(omega)
    if kind == "W2":
        return design.W2(omega)
    if kind == "KBF_S":
        return _inv1p(design.kbf(omega), omega)
    g0k = design.G0(omega) * design.K(omega)
    if kind == "G0K":
        return g0k
    if kind == "L":
        return design.W1(omega) * g0k
    if kind == "S_aug":
        return _inv1p(design.W1(omega) * g0k, omega)
    if kind == "S_nom":
        return _inv1p(g0k, omega)
    if kind == "KS_nom":
        return design.K(omega) * _inv1p(g0k, omega)
    raise ValueError(f"unknown loop kind {kind!r}; expected one of {LOOP_KINDS}")


def _inv1p(x: complex, omega: float) -> complex:
    d = 1.0 + x
    if abs(d) <= 1e-14 * max(1.0, abs(x)):
        raise SingularEvaluation(f"1 + loop vanishes at omega = {omega}")
    return 1.0 / d


def recovery_gap(design: LqgDesign, band: tuple[float, float], points: int = 100) -> float:
    """Largest ``| |L|_dB - |M|_dB |`` on a log grid over ``band``."""
    grid = log_grid(band[0], band[1], points=points)
    return float(max(abs(db(loop_eval(design, "L", w)) - db(design.kbf(w))) for w in grid))


def synthesize(plant: RationalTransferFunction | StateSpaceModel,
               lead: WeightingPair | None = None,
               lag: WeightingPair | None = None,
               rho: float | str = "auto",
               gap_band: tuple[float, float] | None = None,
               gap_threshold_db: float = GAP_THRESHOLD_DB) -> LqgDesign:
    """Full LQG/LTR synthesis for given weighting pairs.

    With ``rho='auto'`` the recovery parameter starts at ``1e8`` and grows by
    decades until the recovery gap over ``gap_band`` drops below
    ``gap_threshold_db`` or ``1e12`` is reached. ``gap_band`` defaults to
    ``[1e-1, w0]`` with ``w0`` the crossover of the filter loop; callers with
    design specs pass ``(omega11, w0)``.
    """
    model = plant if isinstance(plant, StateSpaceModel) else plant_realization(plant)
    aug = build_augmented(model, weighting_realization(lead), weighting_realization(lag))
    S = solve_kbf(aug).S

    def make(r):
        P, _ = solve_regulator_care(aug.A, aug.B, aug.C, r)
        K = build_compensator(aug, S, P, r)
        return LqgDesign(aug, S, P, float(r), K, lead, lag)

    if rho != "auto":
        return make(float(rho))

    if gap_band is None:
        w0 = crossover_frequency(lambda w: kbf_loop(aug, w, S))
        gap_band = (min(1e-1, w0 / 10), w0)
    r = DEFAULT_RHO
    history = []
    while True:
        design = make(r)
        gap = recovery_gap(design, gap_band)
        history.append((r, gap))
        if gap < gap_threshold_db or r >= MAX_RHO:
            object.__setattr__(design, "rho_history", tuple(history))
            return design
        r *= 10.0

