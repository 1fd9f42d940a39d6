import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delayhk.dynamics import ModelConfig
from delayhk.kernel import KernelSpec
from delayhk.theory import (NotApplicableError, TheoryInputs, beta_window, bounds_report,
                            delay_bound, delay_bound_improved)

mpmath.mp.dps = 50


def table_inputs(psi, c=0.0, lam=1.0, form="symmetric"):
    """Inputs whose psi(2R) is exactly ``psi`` (flat table kernel)."""
    k = KernelSpec.from_table([(0.0, 1.0), (1.0, psi)])
    return TheoryInputs(radius_R=1.0, c_bound=c, lam=lam, kernel=k, rate_form=form)


def test_unit_psi_values():
    inp = TheoryInputs(radius_R=1e-300, c_bound=0.0, lam=1.0, kernel=KernelSpec(1.0))
    assert inp.psi_2R == 1.0
    assert delay_bound(inp) == pytest.approx(math.log(4 / 3), rel=1e-15)
    assert delay_bound_improved(inp) == pytest.approx(math.log(4 / 3), rel=1e-15)


def test_reference_setting_against_high_precision():
    inp = TheoryInputs(radius_R=10.0, c_bound=0.0, lam=1.0, kernel=KernelSpec(1.0))
    p = mpmath.mpf(1) / 401
    base = mpmath.log(1 + p ** 3 / (2 + p ** 2))
    improved = mpmath.log(1 + p / (2 + p))
    assert delay_bound(inp) == pytest.approx(float(base), rel=1e-13)
    assert delay_bound_improved(inp) == pytest.approx(float(improved), rel=1e-13)
    # the quoted magnitudes, at the precision they are quoted with
    assert f"{delay_bound(inp):.2e}" in ("7.75e-09",)
    assert 1.24e-3 < delay_bound_improved(inp) < 1.25e-3


def test_bound_vanishes_as_c_tends_to_one():
    vals = [delay_bound(table_inputs(0.5, c=c)) for c in (0.9, 0.99, 0.999999)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-6


def test_improved_needs_symmetric_rates():
    with pytest.raises(NotApplicableError):
        delay_bound_improved(table_inputs(0.5, form="normalized"))


def test_weight_window_unit_psi():
    lo, hi = beta_window(table_inputs(1.0), 0.1)
    e = mpmath.exp(mpmath.mpf("-0.1"))
    assert lo == pytest.approx(float(2 / (e - (1 - e))), rel=1e-13)
    assert hi == pytest.approx(float(1 / (1 - e)), rel=1e-13)
    assert lo == pytest.approx(2.4701274, abs=1e-6)
    assert hi == pytest.approx(10.508, abs=1e-3)


def test_window_empty_past_denominator_zero():
    inp = table_inputs(0.4, c=0.2, lam=0.5)
    assert beta_window(inp, math.log1p(0.4 * 0.8 / 0.5) * 1.01) is None


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(0.0, 0.95), st.floats(0.05, 20.0),
       st.floats(1e-3, 10.0))
def test_improved_dominates_and_iff(psi, c, lam, frac):
    inp = table_inputs(psi, c=c, lam=lam)
    b = delay_bound(inp)
    assert delay_bound_improved(inp) >= b
    tau = b * frac
    if abs(frac - 1) > 1e-9:
        assert (beta_window(inp, tau) is not None) == (tau < b)


def test_bounds_report_keys():
    cfg = ModelConfig.build(np.array([[-3.0], [10.0]]), beta=1.0, tau=1.0)
    rep = bounds_report(cfg)
    assert rep["radius_R"] == 10.0
    assert rep["beta_window"] is None and rep["within_delay_bound"] is False
    rep = bounds_report(cfg, radius_override=0.01)
    assert rep["radius_R"] == 0.01
