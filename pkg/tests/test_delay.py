import numpy as np
import pytest

from delayhk.delay import DelaySpec, constant_delay, deviating_argument, tau_eval


def test_constant_delay_values():
    assert tau_eval(3.7, constant_delay(1.0)) == 1.0
    assert tau_eval(0.0, constant_delay(0.0)) == 0.0
    assert deviating_argument(0.0, constant_delay(1.0)) == -1.0
    assert deviating_argument(5.0, constant_delay(5.0)) == 0.0
    assert deviating_argument(10.0, constant_delay(0.0)) == 10.0


def test_affine_periodic_reduces_to_constant():
    spec = DelaySpec(kind="affine_periodic", tau_bar=2.0, amplitude=0.0, omega=3.0)
    t = np.linspace(0, 20, 57)
    np.testing.assert_array_equal(tau_eval(t, spec), 2.0)


def test_affine_periodic_bounds_and_slope():
    spec = DelaySpec(kind="affine_periodic", tau_bar=1.0, c_bound=0.5, amplitude=0.5, omega=1.0)
    t = np.linspace(0, 30, 30001)
    tau = tau_eval(t, spec)
    assert tau.max() <= 1.0 + 1e-15
    assert tau.min() >= spec.tau_star - 1e-15
    assert np.abs(np.diff(tau) / np.diff(t)).max() <= 0.5 + 1e-6
    with pytest.raises(ValueError):
        DelaySpec(kind="affine_periodic", tau_bar=1.0, c_bound=0.1, amplitude=0.5, omega=1.0)


def test_user_function_validation():
    ok = DelaySpec(kind="user_function", tau_bar=1.0, c_bound=0.2,
                   func=lambda t: 0.9 + 0.1 * np.cos(t))
    assert tau_eval(0.0, ok) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        DelaySpec(kind="user_function", tau_bar=1.0, c_bound=0.2, func=lambda t: 0.5 + 0.5 * np.sin(2 * t))


def test_bad_inputs():
    with pytest.raises(ValueError):
        DelaySpec(tau_bar=-1.0)
    with pytest.raises(ValueError):
        DelaySpec(tau_bar=1.0, c_bound=1.0)
    with pytest.raises(ValueError):
        deviating_argument(-1.0, constant_delay(1.0))


def test_roundtrip():
    spec = DelaySpec(kind="affine_periodic", tau_bar=1.0, c_bound=0.5, amplitude=0.5, omega=1.0)
    assert DelaySpec.from_dict(spec.to_dict()) == spec
