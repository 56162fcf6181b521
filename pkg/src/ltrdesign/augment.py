"""Augmented plant: both weightings placed at the plant input."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sysmodels import StateSpaceModel, ss_evaluate


class AugmentationError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentedPlant:
    """State ``x = (x0, x1, x2)``: plant, lead-weighting and lag-weighting states.

    ``B`` is the input matrix of the control channel (through W1), ``F`` that
    of the process-noise channel (through W2), ``C`` the measured output row.
    """

    A: np.ndarray
    B: np.ndarray
    F: np.ndarray
    C: np.ndarray
    plant: StateSpaceModel
    w1: StateSpaceModel
    w2: StateSpaceModel

    @property
    def order(self) -> int:
        return self.A.shape[0]

    @property
    def partition(self) -> dict[str, slice]:
        n, p, m = self.plant.order, self.w1.order, self.w2.order
        return {"x0": slice(0, n), "x1": slice(n, n + p), "x2": slice(n + p, n + p + m)}

    def control_channel(self) -> StateSpaceModel:
        """``C (sI - A)^-1 B``, i.e. W1 G0."""
        return StateSpaceModel(self.A, self.B, self.C, [[0.0]])

    def noise_channel(self) -> StateSpaceModel:
        """``C (sI - A)^-1 F``, i.e. W2 G0."""
        return StateSpaceModel(self.A, self.F, self.C, [[0.0]])


def _siso(model: StateSpaceModel, name: str):
    if model.B.shape[1] != 1 or model.C.shape[0] != 1:
        raise AugmentationError(f"{name} must be SISO, got B {model.B.shape}, C {model.C.shape}")


def build_augmented(plant: StateSpaceModel, w1: StateSpaceModel,
                    w2: StateSpaceModel) -> AugmentedPlant:
    """Assemble::

        A = [[A0, B0 C1, B0 C2],      B = [[B0 D1],    F = [[B0 D2],
             [0,  A1,    0    ],           [B1   ],         [0    ],
             [0,  0,     A2   ]]           [0    ]]         [B2   ]]

        C = [C0, 0, 0]
    """
    for model, name in ((plant, "plant"), (w1, "w1"), (w2, "w2")):
        _siso(model, name)
    if np.any(plant.D != 0):
        raise AugmentationError("plant must be strictly proper (D0 = 0)")
    for model, name in ((w1, "w1"), (w2, "w2")):
        if not model.is_hurwitz():
            raise AugmentationError(f"{name} state matrix is not Hurwitz")
        if model.D[0, 0] == 0:
            raise AugmentationError(f"{name} must be biproper (nonzero direct feedthrough)")

    n, p, m = plant.order, w1.order, w2.order
    N = n + p + m
    A0, B0, C0 = plant.A, plant.B, plant.C
    A = np.zeros((N, N))
    A[:n, :n] = A0
    A[:n, n:n + p] = B0 @ w1.C
    A[:n, n + p:] = B0 @ w2.C
    A[n:n + p, n:n + p] = w1.A
    A[n + p:, n + p:] = w2.A
    B = np.vstack([B0 * w1.D[0, 0], w1.B, np.zeros((m, 1))])
    F = np.vstack([B0 * w2.D[0, 0], np.zeros((p, 1)), w2.B])
    C = np.hstack([C0, np.zeros((1, p + m))])
    for M in (A, B, F, C):
        M.setflags(write=False)
    return AugmentedPlant(A, B, F, C, plant, w1, w2)


def channel_response(aug: AugmentedPlant, omega: float, channel: str = "control") -> complex:
    model = aug.control_channel() if channel == "control" else aug.noise_channel()
    return ss_evaluate(model, omega)
