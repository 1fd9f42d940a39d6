"""Influence function psi and the pairwise communication rates.

Two kernel forms are supported: the power law ``psi(r) = (1 + r**2) ** -beta``
used in all shipped experiments, and a user table of ``(r, psi)`` breakpoints
with linear interpolation (held constant past the last breakpoint).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class RateForm(str, enum.Enum):
    SYMMETRIC = "symmetric"
    NORMALIZED = "normalized"


@dataclass(frozen=True)
class KernelSpec:
    beta_exponent: float = 1.0
    form: str = "power_law"
    table: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.form == "power_law":
            if not self.beta_exponent > 0:
                raise ValueError(f"beta_exponent must be positive, got {self.beta_exponent}")
        elif self.form == "user_table":
            tab = np.asarray(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 1:
                raise ValueError("user_table needs a list of (r, psi) pairs")
            r, v = tab[:, 0], tab[:, 1]
            if r[0] != 0.0 or v[0] != 1.0:
                raise ValueError("user_table must start at (0, 1)")
            if np.any(np.diff(r) <= 0):
                raise ValueError("user_table breakpoints must be strictly increasing in r")
            if np.any(np.diff(v) > 0):
                raise ValueError("user_table values must be non-increasing")
            if np.any(v <= 0):
                raise ValueError("user_table values must be strictly positive")
            object.__setattr__(self, "table", tuple(map(tuple, tab.tolist())))
        else:
            raise ValueError(f"unknown kernel form {self.form!r}")

    @classmethod
    def from_table(cls, pairs):
        return cls(beta_exponent=1.0, form="user_table", table=tuple(pairs))

    def table_arrays(self):
        """Breakpoints as ``(r, psi)`` arrays; empty arrays for the power law."""
        if self.form != "user_table":
            return np.zeros(0), np.zeros(0)
        tab = np.asarray(self.table, dtype=float)
        return tab[:, 0].copy(), tab[:, 1].copy()

    def to_dict(self):
        if self.form == "power_law":
            return {"form": "power_law", "beta_exponent": self.beta_exponent}
        return {"form": "user_table", "table": [list(p) for p in self.table]}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        form = d.pop("form", "power_law")
        if form == "power_law":
            beta = d.pop("beta_exponent")
            _reject_unknown(d, "kernel")
            return cls(beta_exponent=float(beta))
        table = d.pop("table")
        _reject_unknown(d, "kernel")
        return cls.from_table(table)


def _reject_unknown(d, where):
    if d:
        raise ValueError(f"unknown keys in {where}: {sorted(d)}")


def psi_eval(r, k: KernelSpec):
    """Evaluate psi at distance(s) ``r`` (scalar or array)."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0) or np.any(np.isnan(r_arr)):
        raise ValueError("psi is defined for r >= 0 only")
    if k.form == "power_law":
        out = (1.0 + r_arr * r_arr) ** (-k.beta_exponent)
    else:
        rt, vt = k.table_arrays()
        out = np.interp(r_arr, rt, vt)
    if np.ndim(r) == 0:
        return float(out)
    return out


def rate_matrix(x_now, x_delayed, k: KernelSpec, form=RateForm.SYMMETRIC):
    """Full ``N x N`` matrix of communication rates a_ij, diagonal included.

    Row i uses agent i's current state and every agent's delayed state.
    Normalized rows average to exactly one. Leading batch axes are allowed:
    inputs of shape (..., N, d) give rates of shape (..., N, N).
    """
    xn = _as_points(x_now)
    xd = _as_points(x_delayed)
    if xn.shape != xd.shape:
        raise ValueError(f"shape mismatch: {xn.shape} vs {xd.shape}")
    diff = xd[..., None, :, :] - xn[..., :, None, :]
    w = psi_eval(np.sqrt(np.einsum("...ijk,...ijk->...ij", diff, diff)), k)
    if RateForm(form) is RateForm.NORMALIZED:
        n = xn.shape[-2]
        w = n * w / w.sum(axis=-1, keepdims=True)
    return w


def _as_points(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim < 2:
        raise ValueError(f"expected an (N, d) array of points, got shape {x.shape}")
    return x
