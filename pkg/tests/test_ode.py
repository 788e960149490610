import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spincavity.ode import (
    IntegrationError,
    NonFiniteError,
    OdeProblem,
    StepSizeUnderflowError,
    integrate,
    sample,
)


def decay(t, y):
    return -y


def oscillator(t, y):
    return np.array([y[1], -y[0]])


def test_exponential_decay():
    sol = integrate(OdeProblem(decay, [1.0], (0.0, 1.0), rtol=1e-10, atol=1e-12))
    assert abs(sol.y_final[0] - math.exp(-1)) < 1e-9


def test_oscillator_period():
    sol = integrate(OdeProblem(oscillator, [1.0, 0.0], (0.0, 2 * math.pi), rtol=1e-10, atol=1e-12))
    assert np.max(np.abs(sol.y_final - [1.0, 0.0])) < 1e-7
    energy = 0.5 * np.sum(sol.y ** 2, axis=1)
    assert np.max(np.abs(energy - 0.5)) < 1e-7


def test_zero_rhs_is_exact():
    y0 = np.array([0.3, -1.7, 2.5])
    sol = integrate(OdeProblem(lambda t, y: np.zeros_like(y), y0, (0.0, 10.0)))
    assert sol.n_rejected == 0
    assert np.all(sol.y == y0)


def test_mesh_strictly_increasing():
    sol = integrate(OdeProblem(oscillator, [1.0, 0.0], (0.0, 20.0)))
    assert np.all(np.diff(sol.t) > 0)
    assert sol.t[0] == 0.0 and sol.t[-1] == 20.0


def test_sample_at_mesh_is_exact():
    sol = integrate(OdeProblem(oscillator, [1.0, 0.0], (0.0, 5.0)))
    assert np.array_equal(sample(sol, sol.t), sol.y)


def test_dense_output_reproduces_mesh_states():
    # evaluate the interpolant formula at theta = 0 and 1 via nearby points
    sol = integrate(OdeProblem(oscillator, [1.0, 0.0], (0.0, 5.0)))
    r = sol.coeffs
    left = r[:, 0]
    right = r[:, 0] + r[:, 1]
    assert np.max(np.abs(left - sol.y[:-1])) < 1e-12
    assert np.max(np.abs(right - sol.y[1:])) < 1e-12


def test_sample_mid_step():
    rtol = 1e-8
    sol = integrate(OdeProblem(decay, [1.0], (0.0, 3.0), rtol=rtol, atol=1e-10))
    mids = 0.5 * (sol.t[:-1] + sol.t[1:])
    vals = sample(sol, mids)[:, 0]
    assert np.max(np.abs(vals - np.exp(-mids)) / np.exp(-mids)) < 10 * rtol


def test_sample_empty():
    sol = integrate(OdeProblem(decay, [1.0, 2.0], (0.0, 1.0)))
    out = sample(sol, [])
    assert out.shape == (0, 2)


@pytest.mark.parametrize("t", [-0.1, 1.5])
def test_sample_out_of_span(t):
    sol = integrate(OdeProblem(decay, [1.0], (0.0, 1.0)))
    with pytest.raises(ValueError):
        sample(sol, [0.5, t])


def test_non_finite_rhs_reported():
    def bad(t, y):
        return np.array([np.nan]) if t > 0.5 else -y
    with pytest.raises(NonFiniteError) as info:
        integrate(OdeProblem(bad, [1.0], (0.0, 1.0)))
    assert info.value.t is not None and info.value.t >= 0.0


def test_blow_up_reported_with_time():
    # y' = y^2 escapes to infinity at t = 1
    with pytest.raises(IntegrationError) as info:
        integrate(OdeProblem(lambda t, y: y * y, [1.0], (0.0, 2.0)))
    assert isinstance(info.value, (StepSizeUnderflowError, NonFiniteError, IntegrationError))
    assert info.value.t is not None and info.value.t == pytest.approx(1.0, abs=1e-2)


@pytest.mark.parametrize("kw", [dict(t_span=(1.0, 1.0)), dict(rtol=0.0), dict(max_step=0.0)])
def test_problem_validation(kw):
    args = dict(rhs=decay, y0=[1.0], t_span=(0.0, 1.0))
    args.update(kw)
    with pytest.raises(ValueError):
        OdeProblem(**args)


def test_rhs_shape_mismatch():
    with pytest.raises(ValueError):
        integrate(OdeProblem(lambda t, y: np.zeros(3), [1.0, 2.0], (0.0, 1.0)))


def test_max_step_respected():
    sol = integrate(OdeProblem(decay, [1.0], (0.0, 1.0), max_step=0.01))
    assert np.max(np.diff(sol.t)) <= 0.01 * (1 + 1e-12)


def _errors(problem_factory, exact, tols):
    errs = []
    for tol in tols:
        sol = integrate(problem_factory(tol))
        errs.append(np.max(np.abs(sol.y_final - exact)))
    return errs


@pytest.mark.parametrize("case", ["decay", "oscillator", "zero"])
def test_halving_tolerance_never_increases_error(case):
    tols = [1e-6 / 2 ** k for k in range(8)]
    if case == "decay":
        errs = _errors(lambda tol: OdeProblem(decay, [1.0], (0.0, 1.0), rtol=tol, atol=tol * 1e-2),
                       math.exp(-1), tols)
    elif case == "oscillator":
        errs = _errors(lambda tol: OdeProblem(oscillator, [1.0, 0.0], (0.0, 2 * math.pi), rtol=tol,
                                              atol=tol * 1e-2), np.array([1.0, 0.0]), tols)
    else:
        errs = _errors(lambda tol: OdeProblem(lambda t, y: 0 * y, [1.0], (0.0, 1.0), rtol=tol,
                                              atol=tol * 1e-2), 1.0, tols)
    for a, b in zip(errs, errs[1:]):
        assert b <= a * (1 + 1e-9) + 1e-15


def test_deterministic():
    p = lambda: OdeProblem(oscillator, [1.0, 0.0], (0.0, 30.0))  # noqa: E731
    a, b = integrate(p()), integrate(p())
    assert np.array_equal(a.t, b.t) and np.array_equal(a.y, b.y)
    ts = np.linspace(0, 30, 77)
    assert np.array_equal(sample(a, ts), sample(b, ts))


@given(st.floats(-3.0, 3.0), st.floats(0.1, 5.0))
def test_linear_growth_property(rate, t1):
    sol = integrate(OdeProblem(lambda t, y: rate * y, [1.0], (0.0, t1), rtol=1e-10, atol=1e-12))
    assert sol.y_final[0] == pytest.approx(math.exp(rate * t1), rel=1e-8)


def test_solution_is_callable():
    sol = integrate(OdeProblem(decay, [1.0], (0.0, 1.0), rtol=1e-10, atol=1e-12))
    assert sol([0.25])[0, 0] == pytest.approx(math.exp(-0.25), rel=1e-8)
