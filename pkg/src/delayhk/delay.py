"""Time-variable delay tau(t) and the deviating argument t - tau(t)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

# samples per unit time when validating user supplied delay functions
VALIDATION_DENSITY = 10_000


@dataclass(frozen=True)
class DelaySpec:
    """Delay function with its bounds.

    ``kind`` is one of ``constant``, ``affine_periodic`` or ``user_function``.
    For ``affine_periodic`` the delay is
    ``tau_bar * (1 + amplitude * sin(omega * t)) / (1 + amplitude)``.
    A ``user_function`` is any callable of t (vectorized calls are tried
    first); its hypotheses are checked by dense sampling on
    ``[0, validate_until]``.
    """

    kind: str = "constant"
    tau_bar: float = 0.0
    c_bound: float = 0.0
    tau_star: Optional[float] = None
    amplitude: float = 0.0
    omega: float = 0.0
    func: Optional[Callable] = field(default=None, compare=False, repr=False)
    validate_until: float = 10.0

    def __post_init__(self):
        if not (self.tau_bar >= 0 and np.isfinite(self.tau_bar)):
            raise ValueError(f"tau_bar must be finite and >= 0, got {self.tau_bar}")
        if not 0.0 <= self.c_bound < 1.0:
            raise ValueError(f"c_bound must lie in [0, 1), got {self.c_bound}")
        if self.kind == "constant":
            floor = self.tau_bar
        elif self.kind == "affine_periodic":
            a, w = self.amplitude, self.omega
            if not 0.0 <= a <= 1.0:
                raise ValueError("amplitude must lie in [0, 1]")
            if w < 0:
                raise ValueError("omega must be >= 0")
            if a * w * self.tau_bar / (1.0 + a) > self.c_bound + 1e-15:
                raise ValueError(
                    "affine_periodic delay violates the derivative bound: "
                    f"a*omega*tau_bar/(1+a) = {a * w * self.tau_bar / (1 + a):.6g} > c = {self.c_bound}"
                )
            floor = self.tau_bar * (1.0 - a) / (1.0 + a)
        elif self.kind == "user_function":
            if self.func is None:
                raise ValueError("user_function delay needs func")
            floor = self._validate_sampled()
        else:
            raise ValueError(f"unknown delay kind {self.kind!r}")
        if self.tau_star is None:
            object.__setattr__(self, "tau_star", float(floor))
        elif self.tau_star < 0 or self.tau_star > floor + 1e-12:
            raise ValueError(f"tau_star={self.tau_star} exceeds the minimum delay {floor}")

    def _validate_sampled(self):
        n = max(2, int(np.ceil(self.validate_until * VALIDATION_DENSITY)) + 1)
        t = np.linspace(0.0, self.validate_until, n)
        tau = self._call_func(t)
        if not np.all(np.isfinite(tau)):
            raise ValueError("delay function returned non-finite values")
        if tau.min() < 0 or tau.max() > self.tau_bar * (1 + 1e-12):
            raise ValueError(
                f"delay function leaves [0, tau_bar]: range [{tau.min():.6g}, {tau.max():.6g}]"
            )
        slope = np.diff(tau) / np.diff(t)
        if slope.max() > self.c_bound + 1e-8:
            raise ValueError(
                f"delay function derivative {slope.max():.6g} exceeds c_bound {self.c_bound}"
            )
        return float(tau.min())

    def _call_func(self, t):
        t = np.asarray(t, dtype=float)
        try:
            out = np.asarray(self.func(t), dtype=float)
            if out.shape == t.shape:
                return out
        except Exception:
            pass
        return np.array([float(self.func(s)) for s in t.ravel()]).reshape(t.shape)

    @property
    def is_constant(self):
        return self.kind == "constant" or (self.kind == "affine_periodic" and self.amplitude == 0.0)

    def to_dict(self):
        if self.kind == "user_function":
            raise ValueError("user_function delays cannot be serialized")
        d = {"kind": self.kind, "tau_bar": self.tau_bar, "c_bound": self.c_bound,
             "tau_star": self.tau_star}
        if self.kind == "affine_periodic":
            d.update(amplitude=self.amplitude, omega=self.omega)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {"kind", "tau_bar", "c_bound", "tau_star", "amplitude", "omega"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown keys in delay: {sorted(extra)}")
        if d.get("kind") == "user_function":
            raise ValueError("user_function delays cannot be loaded from a config file")
        return cls(**d)


def constant_delay(tau):
    return DelaySpec(kind="constant", tau_bar=float(tau))


def tau_eval(t, spec: DelaySpec):
    """Delay value(s) at time(s) t."""
    t_arr = np.asarray(t, dtype=float)
    if spec.kind == "constant":
        out = np.full(t_arr.shape, spec.tau_bar)
    elif spec.kind == "affine_periodic":
        a = spec.amplitude
        out = spec.tau_bar * (1.0 + a * np.sin(spec.omega * t_arr)) / (1.0 + a)
    else:
        out = spec._call_func(t_arr)
    if np.ndim(t) == 0:
        return float(out)
    return out


def deviating_argument(t, spec: DelaySpec):
    """``t - tau(t)``: the time at which delayed states are read."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("deviating argument is defined for t >= 0")
    out = t_arr - tau_eval(t_arr, spec)
    if np.ndim(t) == 0:
        return float(out)
    return out
