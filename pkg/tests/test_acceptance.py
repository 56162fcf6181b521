"""
Acceptance criteria, one test each, at the stated tolerances.

Every test records a PASS/FAIL line that is printed as it runs and again in
the terminal summary. Weighting orders are given as (lead, lag); the
reference design uses lead order 3 and lag order 2.
"""

import time

import numpy as np
import pytest

from ltrdesign import lqg
from ltrdesign.analysis import design_margins, kalman_check, min_return_difference, step_response
from ltrdesign.frequency import crossover_frequency, db
from ltrdesign.lqg import loop_eval, nominal_kbf, plant_realization, recovery_gap, synthesize
from ltrdesign.riccati import CareError, care_residual
from ltrdesign.specsolver import solve_design, sweep

import cases
from conftest import ACCEPTANCE_LINES

W11, W12, W21, W22 = cases.OMEGAS
REFERENCE_LAG = (17.760, 0.654)


def report(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def rel_errors(got, expected):
    return np.abs(np.asarray(got, float) / np.asarray(expected, float) - 1)


# ---------------------------------------------------------------------------
# every filter and regulator Riccati solve in criteria 1-6 is logged

class CareLog:
    def __init__(self):
        self.entries = []

    def wrap(self, fn, kind):
        def inner(*args, **kwargs):
            try:
                sol, problem = fn(*args, **kwargs)
            except CareError as exc:
                self.entries.append((kind, np.nan, np.nan, str(exc)))
                raise
            spectrum = np.linalg.eigvals(problem.A - problem.G @ sol.X)
            self.entries.append((kind, care_residual(problem, sol.X), float(spectrum.real.max()), None))
            return sol, problem
        return inner


@pytest.fixture(scope="module")
def care_log():
    log = CareLog()
    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(lqg, "solve_filter_care", log.wrap(lqg.solve_filter_care, "filter"))
        mp.setattr(lqg, "solve_regulator_care", log.wrap(lqg.solve_regulator_care, "regulator"))
        yield log


@pytest.fixture(scope="module")
def plant():
    return cases.plant()


def _solve(bounds, orders, plant):
    start = time.perf_counter()
    rec = solve_design(cases.specs(bounds, orders), plant)
    return rec, time.perf_counter() - start


def _design(rec, plant):
    return synthesize(plant, rec.lead, rec.lag, gap_band=(W11, rec.omega0))


@pytest.fixture(scope="module")
def case3(care_log, plant):
    rec, elapsed = _solve(cases.CASE3_BOUNDS, cases.CASE3, plant)
    return rec, elapsed, (_design(rec, plant) if rec.valid else None)


@pytest.fixture(scope="module")
def case2(care_log, plant):
    rec, _ = _solve(cases.CASE2_BOUNDS, cases.CASE2, plant)
    return rec, (_design(rec, plant) if rec.valid else None)


@pytest.fixture(scope="module")
def modified(care_log, plant):
    rec, _ = _solve(cases.MODIFIED_BOUNDS, cases.CASE3, plant)
    return rec, (_design(rec, plant) if rec.valid else None)


# ---------------------------------------------------------------------------

def test_criterion_01_case3_coefficients(case3):
    rec, elapsed, _ = case3
    expected = (488.553, 1.411e4) + REFERENCE_LAG
    errs = rel_errors(rec.tau, expected) if rec.valid else np.array([np.inf])
    ok = rec.valid and np.all(errs <= 0.01) and elapsed < 10.0
    detail = (f"orders (3, 2), tau = ({', '.join(f'{t:.6g}' for t in rec.tau if t is not None)}), "
              f"max rel err {errs.max():.2e} (tol 1e-2), solve time {elapsed:.2f} s (limit 10 s)")
    assert report(1, "Case 3 coefficients", ok, detail)


def test_criterion_02_case2_coefficients(case2):
    rec, _ = case2
    expected = (330.100, 1.192e4) + REFERENCE_LAG
    errs = rel_errors(rec.tau, expected) if rec.valid else np.array([np.inf])
    ok = rec.valid and np.all(errs <= 0.01)
    detail = (f"orders (2, 2), tau = ({', '.join(f'{t:.6g}' for t in rec.tau if t is not None)}), "
              f"max rel err {errs.max():.2e} (tol 1e-2)")
    assert report(2, "Case 2 coefficients", ok, detail)


def test_criterion_03_modified_coefficients(modified):
    rec, _ = modified
    errs = rel_errors(rec.tau[:2], (752.646, 5819.489)) if rec.valid else np.array([np.inf])
    ok = rec.valid and np.all(errs <= 0.01)
    detail = f"tau11 = {rec.tau[0]:.6g}, tau12 = {rec.tau[1]:.6g}, max rel err {errs.max():.2e} (tol 1e-2)"
    assert report(3, "modified design coefficients", ok, detail)


def test_criterion_04_closed_loop_magnitudes(case3):
    rec, _, d = case3
    got = [db(loop_eval(d, "S_nom", W11)), db(loop_eval(d, "S_nom", W12)),
           db(loop_eval(d, "KS_nom", W21)), db(loop_eval(d, "KS_nom", W22))]
    expected = (-34.995, -17.648, -2.944, -10.001)
    dev = np.abs(np.subtract(got, expected))
    gap = recovery_gap(d, (W11, rec.omega0))
    ok = np.all(dev <= 0.5) and gap < 0.1
    detail = (f"achieved ({', '.join(f'{g:.4f}' for g in got)}) dB, max dev {dev.max():.4f} dB (tol 0.5), "
              f"rho {d.rho:.0e}, recovery gap {gap:.2e} dB")
    assert report(4, "closed-loop magnitudes", ok, detail)


def test_criterion_05_margins(case3, modified):
    orig = design_margins(case3[2])
    mod = design_margins(modified[1])
    ok = (abs(orig.gain_margin / 1.889 - 1) <= 0.1 and abs(orig.phase_margin - 15.130) <= 2.0
          and abs(mod.gain_margin / 4.752 - 1) <= 0.1 and abs(mod.phase_margin - 35.15) <= 2.0)
    detail = (f"original GM {orig.gain_margin:.4f} PM {orig.phase_margin:.3f} deg, "
              f"modified GM {mod.gain_margin:.4f} PM {mod.phase_margin:.3f} deg")
    assert report(5, "gain and phase margins", ok, detail)


def test_criterion_06_case1_sweep(care_log, plant):
    template = cases.specs(cases.CASE3_BOUNDS, cases.CASE1)
    start = time.perf_counter()
    parallel = sweep(template, plant, cases.SWEEP_GRIDS, jobs=4)
    elapsed = time.perf_counter() - start
    # worker processes do not report to the Riccati log, so the serial rerun
    # feeds criterion 8 and must agree with the parallel result
    serial = sweep(template, plant, cases.SWEEP_GRIDS, jobs=1)
    same = [(r.bounds, r.tau, r.valid) for r in parallel] == [(r.bounds, r.tau, r.valid) for r in serial]
    valid = sum(r.valid for r in parallel)
    ok = len(parallel) == 2401 and valid == 0 and elapsed < 300 and same
    detail = (f"orders (1, 1), {len(parallel)} combinations, {valid} valid, "
              f"{elapsed:.2f} s with 4 jobs (limit 300 s), serial rerun identical: {same}")
    assert report(6, "Case 1 sweep infeasibility", ok, detail)


def test_criterion_07_kalman_identity(case3, case2):
    worst, floor = 0.0, np.inf
    for d in (case3[2], case2[1]):
        worst = max(worst, kalman_check(d, (1e-1, 1e5), 200))
        floor = min(floor, min_return_difference(d, (1e-1, 1e5), 200))
    ok = worst < 1e-6 and floor >= 1 - 1e-6
    detail = f"max rel violation {worst:.2e} (tol 1e-6), min |1+M| = {floor:.12f}"
    assert report(7, "return-difference identity", ok, detail)


def test_criterion_08_riccati_quality(care_log, case3, case2, modified):
    entries = care_log.entries
    failures = [e for e in entries if e[3] is not None]
    residuals = [e[1] for e in entries if e[3] is None]
    spectra = [e[2] for e in entries if e[3] is None]
    block = 0.0
    for d in (case3[2], case2[1], modified[1]):
        X = d.S.X
        x1 = d.plant.partition["x1"]
        block = max(block, np.max(np.abs(X[x1, :]), initial=0.0) / np.linalg.norm(X))
    ok = bool(entries) and not failures and max(residuals) <= 1e-8 and max(spectra) < 0 and block <= 1e-8
    detail = (f"{len(entries)} solves, {len(failures)} failures, max residual {max(residuals):.2e} (tol 1e-8), "
              f"max closed-loop Re {max(spectra):.3g}, lead-block of S {block:.2e} x ||S|| (tol 1e-8)")
    assert report(8, "Riccati quality", ok, detail)


def test_criterion_09_recovery_monotone(case3, plant):
    rec = case3[0]
    gaps = [recovery_gap(synthesize(plant, rec.lead, rec.lag, rho=r), (W11, W22)) for r in (1e6, 1e8, 1e10)]
    ok = gaps[0] > gaps[1] > gaps[2]
    detail = "gap on [w11, w22] at rho 1e6, 1e8, 1e10: " + ", ".join(f"{g:.3e}" for g in gaps) + " dB"
    assert report(9, "recovery monotonicity", ok, detail)


def test_criterion_10_nominal_crossover(plant):
    w0 = crossover_frequency(nominal_kbf(plant_realization(plant)))
    ok = abs(w0 / 250.0 - 1) <= 0.1
    detail = f"w0 = {w0:.4f} rad/s (250 +- 10%)"
    assert report(10, "nominal filter-loop crossover", ok, detail)


def test_criterion_11_step_response(case3, modified):
    stable, finals, overshoots = [], [], []
    for d in (case3[2], modified[1]):
        T = d.closed_loop()
        stable.append(bool(np.all(np.linalg.eigvals(T.A).real < 0)))
        r = step_response(T, horizon=1.0, dt=1e-4)
        target = 1 - loop_eval(d, "S_nom", 0.0).real
        finals.append(abs(r.final - target))
        overshoots.append(r.overshoot(target))
    ok = all(stable) and overshoots[0] > overshoots[1] and max(finals) <= 1e-6
    detail = (f"stable {stable}, overshoot original {overshoots[0]:.4f} vs modified {overshoots[1]:.4f}, "
              f"max |final - (1 - S0(0))| {max(finals):.2e} (tol 1e-6)")
    assert report(11, "step response", ok, detail)
