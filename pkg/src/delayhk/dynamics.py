"""Model configuration, initial histories and the right-hand side of the
delayed Hegselmann-Krause system

    x_i'(t) = lam/N * sum_{j in J} a_ij(t) (x_j(t - tau(t)) - x_i(t)),

with J = {j != i} for the particle model and J = {1..N} when
``self_interaction`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .delay import DelaySpec, tau_eval
from .kernel import KernelSpec, RateForm, _as_points, rate_matrix


@dataclass(frozen=True, eq=False)
class HistorySpec:
    """Initial opinions on ``[-tau(0), 0]``.

    ``constant_vector``: ``values`` has shape (N, d).
    ``function_table``: ``times`` has shape (M,) ending at 0 and ``values``
    has shape (M, N, d); paths are linearly interpolated between samples.
    """

    kind: str
    values: np.ndarray = field(repr=False)
    times: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if self.kind == "constant_vector":
            if vals.ndim == 1:
                vals = vals[:, None]
            if vals.ndim != 2:
                raise ValueError("constant_vector history needs an (N, d) array")
            times = None
        elif self.kind == "function_table":
            times = np.array(self.times, dtype=float)
            if vals.ndim == 2:
                vals = vals[:, :, None]
            if times.ndim != 1 or vals.ndim != 3 or vals.shape[0] != times.size:
                raise ValueError("function_table needs times (M,) and values (M, N, d)")
            if times[-1] != 0.0:
                raise ValueError("function_table must end at s = 0")
            if times.size > 1 and np.any(np.diff(times) <= 0):
                raise ValueError("function_table times must be strictly increasing")
            times.setflags(write=False)
        else:
            raise ValueError(f"unknown history kind {self.kind!r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("history values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "times", times)

    def __eq__(self, other):
        if not isinstance(other, HistorySpec):
            return NotImplemented
        if self.kind != other.kind or not np.array_equal(self.values, other.values):
            return False
        return self.times is None and other.times is None or (
            self.times is not None and other.times is not None
            and np.array_equal(self.times, other.times))

    __hash__ = None

    @classmethod
    def constant(cls, values):
        return cls("constant_vector", values)

    @classmethod
    def table(cls, times, values):
        return cls("function_table", values, times)

    @classmethod
    def from_function(cls, f, t_start, n_samples=201):
        """Sample ``f(s) -> (N, d)`` on ``[t_start, 0]``."""
        times = np.linspace(t_start, 0.0, n_samples) if t_start < 0 else np.zeros(1)
        return cls.table(times, np.stack([np.asarray(f(s), dtype=float) for s in times]))

    @property
    def n_agents(self):
        return self.values.shape[-2]

    @property
    def dimension(self):
        return self.values.shape[-1]

    @property
    def start(self):
        return -np.inf if self.kind == "constant_vector" else float(self.times[0])

    def final_state(self):
        return np.array(self.values if self.kind == "constant_vector" else self.values[-1])

    def table_arrays(self):
        """History as a (times, values) table for compiled evaluation."""
        if self.kind == "constant_vector":
            return np.zeros(1), self.values[None, :, :].copy()
        return self.times.copy(), self.values.copy()

    def eval(self, s):
        """States at time(s) s <= 0; returns shape s.shape + (N, d)."""
        s_arr = np.asarray(s, dtype=float)
        if np.any(s_arr > 1e-12):
            raise ValueError("history is defined for s <= 0 only")
        if self.kind == "constant_vector":
            return np.broadcast_to(self.values, s_arr.shape + self.values.shape).copy()
        if np.any(s_arr < self.times[0] - 1e-12):
            raise ValueError(f"history table starts at {self.times[0]}, asked for {s_arr.min()}")
        if self.times.size == 1:
            return np.broadcast_to(self.values[0], s_arr.shape + self.values.shape[1:]).copy()
        flat = s_arr.ravel()
        idx = np.clip(np.searchsorted(self.times, flat, side="right") - 1, 0, self.times.size - 2)
        t0, t1 = self.times[idx], self.times[idx + 1]
        w = ((flat - t0) / (t1 - t0))[:, None, None]
        out = (1 - w) * self.values[idx] + w * self.values[idx + 1]
        return out.reshape(s_arr.shape + self.values.shape[1:])

    def derivative(self, s):
        """Slopes of the interpolated paths; zero for constant histories."""
        s_arr = np.asarray(s, dtype=float)
        shape = s_arr.shape + self.values.shape[-2:]
        if self.kind == "constant_vector" or self.times.size == 1:
            return np.zeros(shape)
        flat = s_arr.ravel()
        # left-continuous slope so that s = 0 uses the last segment
        idx = np.clip(np.searchsorted(self.times, flat, side="left") - 1, 0, self.times.size - 2)
        slope = (self.values[idx + 1] - self.values[idx]) / (
            self.times[idx + 1] - self.times[idx])[:, None, None]
        return slope.reshape(shape)

    def radius(self, t_start):
        """max over s in [t_start, 0] of max_i |x_i(s)|."""
        if self.kind == "constant_vector":
            return float(np.linalg.norm(self.values, axis=-1).max())
        inside = self.times >= t_start
        pts = [self.values[inside]]
        if t_start > self.times[0]:
            pts.append(self.eval(np.array([t_start])))
        return float(max(np.linalg.norm(p, axis=-1).max() for p in pts))

    def to_dict(self):
        if self.kind == "constant_vector":
            return {"kind": "constant_vector", "values": self.values.tolist()}
        return {"kind": "function_table", "times": self.times.tolist(),
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind")
        values = d.pop("values")
        times = d.pop("times", None)
        if d:
            raise ValueError(f"unknown keys in initial_history: {sorted(d)}")
        if kind == "constant_vector":
            if times is not None:
                raise ValueError("constant_vector history takes no times")
            return cls.constant(values)
        return cls.table(times, values)


@dataclass(frozen=True)
class ModelConfig:
    n_agents: int
    dimension: int
    lam: float
    kernel: KernelSpec
    rate_form: RateForm
    delay: DelaySpec
    initial_history: HistorySpec
    self_interaction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rate_form", RateForm(self.rate_form))
        if self.n_agents < 2:
            raise ValueError("need at least two agents")
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if not self.lam > 0:
            raise ValueError("coupling strength lam must be positive")
        h = self.initial_history
        if (h.n_agents, h.dimension) != (self.n_agents, self.dimension):
            raise ValueError(
                f"history has shape ({h.n_agents}, {h.dimension}), "
                f"config says ({self.n_agents}, {self.dimension})")
        if h.start > -self.tau0 + 1e-12:
            raise ValueError(f"history must cover [-tau(0), 0] = [{-self.tau0}, 0]")

    @classmethod
    def build(cls, history, *, lam=1.0, beta=1.0, rate_form="symmetric", tau=0.0,
              delay=None, kernel=None, self_interaction=False):
        """Convenience constructor from raw initial values (constant history)."""
        if not isinstance(history, HistorySpec):
            history = HistorySpec.constant(history)
        return cls(
            n_agents=history.n_agents,
            dimension=history.dimension,
            lam=float(lam),
            kernel=kernel if kernel is not None else KernelSpec(beta_exponent=float(beta)),
            rate_form=RateForm(rate_form),
            delay=delay if delay is not None else DelaySpec(kind="constant", tau_bar=float(tau)),
            initial_history=history,
            self_interaction=self_interaction,
        )

    @property
    def tau0(self):
        return tau_eval(0.0, self.delay)

    @property
    def radius(self):
        """R: largest initial opinion norm over [-tau(0), 0]."""
        return self.initial_history.radius(-self.tau0)

    def with_history(self, history):
        if not isinstance(history, HistorySpec):
            history = HistorySpec.constant(history)
        return replace(self, initial_history=history, n_agents=history.n_agents,
                       dimension=history.dimension)

    def to_dict(self):
        return {
            "n_agents": self.n_agents,
            "dimension": self.dimension,
            "lambda": self.lam,
            "kernel": self.kernel.to_dict(),
            "rate_form": self.rate_form.value,
            "delay": self.delay.to_dict(),
            "self_interaction": self.self_interaction,
            "initial_history": self.initial_history.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        try:
            cfg = cls(
                n_agents=int(d.pop("n_agents")),
                dimension=int(d.pop("dimension")),
                lam=float(d.pop("lambda")),
                kernel=KernelSpec.from_dict(d.pop("kernel")),
                rate_form=RateForm(d.pop("rate_form")),
                delay=DelaySpec.from_dict(d.pop("delay")),
                initial_history=HistorySpec.from_dict(d.pop("initial_history")),
                self_interaction=bool(d.pop("self_interaction", False)),
            )
        except KeyError as exc:
            raise ValueError(f"missing model key {exc.args[0]!r}") from None
        if d:
            raise ValueError(f"unknown keys in model: {sorted(d)}")
        return cfg


def rhs(t, x_now, x_delayed, cfg: ModelConfig):
    """Velocities of all agents, shape (N, d).

    Batches of states with shape (..., N, d) are evaluated in one call.
    """
    xn = _as_points(x_now)
    xd = _as_points(x_delayed)
    if xn.shape[-2:] != (cfg.n_agents, cfg.dimension) or xd.shape != xn.shape:
        raise ValueError(
            f"states must have shape ({cfg.n_agents}, {cfg.dimension}), "
            f"got {xn.shape} and {xd.shape}")
    a = rate_matrix(xn, xd, cfg.kernel, cfg.rate_form)
    if not cfg.self_interaction:
        idx = np.arange(cfg.n_agents)
        a[..., idx, idx] = 0.0
    diff = xd[..., None, :, :] - xn[..., :, None, :]
    return cfg.lam / cfg.n_agents * np.einsum("...ij,...ijk->...ik", a, diff)
