"""Closed-form sufficiency conditions for exponential consensus.

With p = psi(2R), delay slope bound c and coupling lam:

* admissible delay:  tau_bar < ln(1 + p^3 (1 - c) / ((2 + p^2) lam))
* symmetric rates (a_ij <= 1) sharpen it to  ln(1 + p (1 - c) / ((2 + p) lam))
* a Lyapunov weight w works when
  2 lam / (p (1 - c) e^{-tau} - lam (1 - e^{-tau})) <= w < p^2 / (1 - e^{-tau}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .kernel import KernelSpec, RateForm, psi_eval


@dataclass(frozen=True)
class TheoryInputs:
    radius_R: float
    c_bound: float
    lam: float
    kernel: KernelSpec
    rate_form: RateForm = RateForm.SYMMETRIC

    def __post_init__(self):
        object.__setattr__(self, "rate_form", RateForm(self.rate_form))
        if not self.radius_R > 0:
            raise ValueError("radius_R must be positive")
        if not 0 <= self.c_bound < 1:
            raise ValueError("c_bound must lie in [0, 1)")
        if not self.lam > 0:
            raise ValueError("lam must be positive")

    @property
    def psi_2R(self):
        return psi_eval(2.0 * self.radius_R, self.kernel)

    @classmethod
    def from_config(cls, cfg, radius_override=None):
        """Inputs for a model config; R comes from the initial history."""
        radius = cfg.radius if radius_override is None else float(radius_override)
        return cls(radius_R=radius, c_bound=cfg.delay.c_bound, lam=cfg.lam,
                   kernel=cfg.kernel, rate_form=cfg.rate_form)


class NotApplicableError(ValueError):
    pass


def delay_bound(inp: TheoryInputs):
    p = inp.psi_2R
    return math.log1p(p ** 3 * (1.0 - inp.c_bound) / ((2.0 + p * p) * inp.lam))


def delay_bound_improved(inp: TheoryInputs):
    """Sharper bound valid when every rate is at most one (symmetric form)."""
    if inp.rate_form is not RateForm.SYMMETRIC:
        raise NotApplicableError("the improved delay bound needs symmetric rates")
    p = inp.psi_2R
    return math.log1p(p * (1.0 - inp.c_bound) / ((2.0 + p) * inp.lam))


def beta_window(inp: TheoryInputs, tau_bar) -> Optional[tuple]:
    """Half-open interval ``(w_min, w_max)`` of admissible Lyapunov weights,
    or ``None`` when it is empty."""
    if not tau_bar > 0:
        raise ValueError("tau_bar must be positive")
    p = inp.psi_2R
    lam = inp.lam
    one_minus = -math.expm1(-tau_bar)
    denom = p * (1.0 - inp.c_bound) * math.exp(-tau_bar) - lam * one_minus
    if denom <= 0:
        return None
    w_min = 2.0 * lam / denom
    w_max = p * p / one_minus
    if w_min >= w_max:
        return None
    return w_min, w_max


def default_beta_weight(cfg, radius_override=None):
    """Midpoint of the admissible weight window for ``cfg`` (None if empty)."""
    inp = TheoryInputs.from_config(cfg, radius_override)
    tau_bar = cfg.delay.tau_bar
    if tau_bar <= 0:
        return 1.0
    win = beta_window(inp, tau_bar)
    if win is None:
        return None
    return 0.5 * (win[0] + win[1])


def bounds_report(cfg, radius_override=None):
    """Both delay bounds and the weight window as a JSON-ready dict."""
    inp = TheoryInputs.from_config(cfg, radius_override)
    out = {
        "radius_R": inp.radius_R,
        "psi_2R": inp.psi_2R,
        "c_bound": inp.c_bound,
        "lambda": inp.lam,
        "rate_form": inp.rate_form.value,
        "tau_bar": cfg.delay.tau_bar,
        "delay_bound": delay_bound(inp),
        "delay_bound_improved": (delay_bound_improved(inp)
                                 if inp.rate_form is RateForm.SYMMETRIC else None),
    }
    win = beta_window(inp, cfg.delay.tau_bar) if cfg.delay.tau_bar > 0 else None
    out["beta_window"] = list(win) if win else None
    out["within_delay_bound"] = cfg.delay.tau_bar < out["delay_bound"]
    return out
