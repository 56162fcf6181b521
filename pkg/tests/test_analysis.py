import numpy as np
import pytest

from ltrdesign.analysis import (
    FrequencyCurve,
    UnstableClosedLoopError,
    design_curve,
    design_margins,
    kalman_check,
    margins,
    min_return_difference,
    sample_curve,
    step_response,
    zoh,
)
from ltrdesign.frequency import db, log_grid
from ltrdesign.lqg import loop_eval, synthesize
from ltrdesign.sysmodels import (
    RationalTransferFunction,
    SingularEvaluation,
    StateSpaceModel,
    evaluate,
    realize,
)
from ltrdesign.weightings import weighting_gain

import cases

tf = RationalTransferFunction.from_coeffs
W11, W12, W21, W22 = cases.OMEGAS


# --- curves ---------------------------------------------------------------

def test_constant_curve():
    c = sample_curve(lambda w: 1.0, band=(0.1, 10.0), points_per_decade=10)
    assert c.omegas.size == 21
    assert np.all(c.values == 1.0) and not c.singular.any()
    np.testing.assert_array_equal(c.magnitude_db, 0.0)


def test_curve_validation():
    with pytest.raises(ValueError, match="ascending"):
        FrequencyCurve(np.array([2.0, 1.0]), np.array([1.0, 1.0]))
    with pytest.raises(ValueError, match="length"):
        FrequencyCurve(np.array([1.0, 2.0]), np.array([1.0]))


def test_singular_points_flagged():
    def f(w):
        if abs(w - 1.0) < 1e-12:
            raise SingularEvaluation("pole")
        return 1.0

    c = sample_curve(f, band=(0.1, 10.0), points_per_decade=10)
    assert c.singular.sum() == 1 and np.isnan(c.values[c.singular]).all()


def test_phase_is_unwrapped():
    g = tf([1.0], np.poly([-1.0, -1.0, -1.0, -1.0]))
    c = sample_curve(lambda w: evaluate(g, w), band=(1e-2, 1e3), points_per_decade=50)
    assert c.phase_deg[0] == pytest.approx(0.0, abs=3.0)
    assert c.phase_deg[-1] == pytest.approx(-360.0, abs=1.0)
    assert np.all(np.diff(c.phase_deg) <= 1e-9)


def test_lead_weighting_curve_matches_closed_form(case3):
    rec, d = case3
    c = design_curve(d, "W1", points_per_decade=20)
    np.testing.assert_allclose(np.abs(c.values), weighting_gain(rec.lead, c.omegas), rtol=1e-10)


def test_sensitivity_curve_at_second_low_frequency(case3):
    _, d = case3
    c = design_curve(d, "S_nom", band=(W11, W12), points_per_decade=50)
    assert c.omegas[-1] == pytest.approx(W12)
    assert c.magnitude_db[-1] == pytest.approx(-17.648, abs=0.5)


# --- margins ----------------------------------------------------------------

def test_third_order_lag_gain_margin():
    g = tf([1.0], [1.0, 3.0, 3.0, 1.0])
    m = margins(lambda w: evaluate(g, w))
    assert m.gain_margin == pytest.approx(8.0, rel=1e-7)
    assert m.gm_frequency == pytest.approx(np.sqrt(3.0), rel=1e-7)
    assert not m.pm_found and m.phase_margin == np.inf


def test_phase_margin_of_integrator_loop():
    # k/((s+a)(s+1)) with a small a: crossover and phase have closed forms
    k = 2.0
    g = tf([k], np.poly([-1e-3, -1.0]))
    m = margins(lambda w: evaluate(g, w))
    wc = np.sqrt((-1 + np.sqrt(1 + 4 * k**2)) / 2)
    assert m.pm_frequency == pytest.approx(wc, rel=1e-3)
    expected = 180 - np.degrees(np.arctan(wc / 1e-3) + np.arctan(wc))
    assert m.phase_margin == pytest.approx(expected, abs=1e-3)
    assert not m.gm_found


def test_case3_margins(case3, modified):
    orig = design_margins(case3[1])
    mod = design_margins(modified[1])
    assert orig.gain_margin == pytest.approx(1.889, rel=0.1)
    assert orig.phase_margin == pytest.approx(15.130, abs=2.0)
    assert mod.gain_margin == pytest.approx(4.752, rel=0.1)
    assert mod.phase_margin == pytest.approx(35.15, abs=2.0)


@pytest.mark.parametrize("which", ["case3", "modified"])
def test_nyquist_distance_consistent_with_gain_margin(which, request):
    _, d = request.getfixturevalue(which)
    m = design_margins(d)
    grid = log_grid(1e-2, 1e6, points_per_decade=400)
    locus = np.array([loop_eval(d, "G0K", w) for w in grid])
    i = np.argmin(np.abs(grid - m.gm_frequency))
    assert abs(locus[i] + 1) >= (1 - 1 / m.gain_margin) - 1e-2
    assert abs(loop_eval(d, "G0K", m.gm_frequency) + 1) == pytest.approx(1 - 1 / m.gain_margin, rel=1e-6)


def test_peak_sensitivity_lower_for_modified(case3, modified):
    peaks = [np.max(np.abs(design_curve(d, "S_nom").values)) for _, d in (case3, modified)]
    assert peaks[1] < peaks[0]


# --- step response ------------------------------------------------------------

def test_first_order_step():
    r = step_response(realize(tf([1.0], [1.0, 1.0])), horizon=10.0, dt=0.01)
    np.testing.assert_allclose(r.y, 1 - np.exp(-r.t), atol=1e-9, rtol=0)


def test_zero_system_step():
    T = StateSpaceModel(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[0.0]])
    r = step_response(T, horizon=1.0, dt=0.1)
    assert np.all(r.y == 0) and r.t.size == 11


def test_zero_gain_step():
    T = StateSpaceModel([[-1.0]], [[1.0]], [[0.0]])
    assert np.all(step_response(T, 1.0, 0.1).y == 0)


def test_step_rejects_unstable_and_feedthrough():
    with pytest.raises(UnstableClosedLoopError):
        step_response(StateSpaceModel([[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(ValueError, match="strictly proper"):
        step_response(StateSpaceModel([[-1.0]], [[1.0]], [[1.0]], [[1.0]]))
    with pytest.raises(ValueError, match="positive"):
        step_response(StateSpaceModel([[-1.0]], [[1.0]], [[1.0]]), horizon=0.0)


def test_zoh_of_scalar():
    Ad, Bd = zoh(np.array([[-2.0]]), np.array([[1.0]]), 0.5)
    assert Ad[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-14)
    assert Bd[0, 0] == pytest.approx((1 - np.exp(-1.0)) / 2, rel=1e-14)


def test_overshoot_definition():
    from ltrdesign.analysis import StepResponse

    r = StepResponse(np.arange(4.0), np.array([0.0, 1.5, 0.8, 1.0]))
    assert r.final == 1.0 and r.overshoot() == pytest.approx(0.5)
    assert r.overshoot(2.0) == 0.0


def test_step_final_value_and_overshoot_ordering(case3, modified):
    results = []
    for _, d in (case3, modified):
        T = d.closed_loop()
        assert T.is_hurwitz()
        r = step_response(T, horizon=1.0, dt=1e-4)
        final = 1 - loop_eval(d, "S_nom", 0.0).real
        assert r.final == pytest.approx(final, abs=1e-6)
        results.append(r.overshoot(final))
    assert results[0] > results[1]


# --- return difference -----------------------------------------------------------

@pytest.mark.parametrize("which", ["case3", "case2"])
def test_kalman_identity(which, request):
    _, d = request.getfixturevalue(which)
    assert kalman_check(d) < 1e-6
    assert min_return_difference(d) >= 1 - 1e-6


def test_kalman_identity_nominal(plant):
    d = synthesize(plant)
    assert kalman_check(d) < 1e-6
    assert min_return_difference(d) >= 1 - 1e-6


def test_return_difference_bounded_below_on_every_design(case3, case2, modified):
    for _, d in (case3, case2, modified):
        for w in log_grid(1e-1, 1e5, points=200):
            assert abs(1 + d.kbf(w)) >= 1 - 1e-9


def test_db_conventions():
    assert db(10.0) == 20.0
    assert db(np.array([1.0, 0.1])).tolist() == [0.0, -20.0]
