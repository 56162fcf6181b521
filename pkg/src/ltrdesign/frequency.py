"""Frequency-grid helpers shared by the design and analysis layers."""

from __future__ import annotations

from typing import Callable

import numpy as np

Evaluator = Callable[[float], complex]


class NoCrossoverError(ValueError):
    """The loop magnitude never crosses unity in the search band."""


def db(x) -> np.ndarray | float:
    out = 20.0 * np.log10(np.abs(x))
    return float(out) if np.ndim(out) == 0 else out


def from_db(x) -> np.ndarray | float:
    out = 10.0 ** (np.asarray(x, dtype=float) / 20.0)
    return float(out) if np.ndim(out) == 0 else out


def log_grid(lo: float, hi: float, points: int | None = None,
             points_per_decade: int | None = None) -> np.ndarray:
    """Log-spaced grid on ``[lo, hi]`` with both endpoints included."""
    if not (0 < lo < hi):
        raise ValueError(f"need 0 < lo < hi, got ({lo}, {hi})")
    if points is None:
        if points_per_decade is None:
            raise ValueError("give points or points_per_decade")
        points = int(np.ceil(points_per_decade * np.log10(hi / lo))) + 1
    if points < 2:
        raise ValueError("a grid needs at least two points")
    return np.logspace(np.log10(lo), np.log10(hi), points)


def bisect_log(f: Callable[[float], float], a: float, b: float, rtol: float) -> float:
    fa = f(a)
    while b / a - 1.0 > rtol:
        c = np.sqrt(a * b)
        fc = f(c)
        if (fc > 0) == (fa > 0):
            a, fa = c, fc
        else:
            b = c
    return float(np.sqrt(a * b))


def crossover_frequency(loop: Evaluator, band: tuple[float, float] = (1e-2, 1e6),
                        points_per_decade: int = 100, rtol: float = 1e-6) -> float:
    """Smallest frequency in ``band`` where ``|loop(i w)| = 1``.

    The first sign change of ``log|loop|`` on a log grid is refined by
    bisection in ``log w``.
    """
    grid = log_grid(*band, points_per_decade=points_per_decade)
    f = lambda w: float(np.log(abs(loop(w))))
    vals = np.array([f(w) for w in grid])
    change = np.flatnonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))
    if vals[0] == 0.0:
        return float(grid[0])
    if change.size == 0:
        raise NoCrossoverError(
            f"|loop| stays {'above' if vals[0] > 0 else 'below'} 1 on [{band[0]:g}, {band[1]:g}] rad/s"
        )
    i = change[0]
    return bisect_log(f, grid[i], grid[i + 1], rtol)
