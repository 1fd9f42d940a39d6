"""Continuum objects restricted to atomic (empirical) measures.

For equal-weight atomic data the continuity equation is solved by pushing
the initial atoms along the particle flow, so a :class:`MeasurePath` is just a
view on a :class:`~delayhk.integrator.Trajectory`. Distances between
equal-size empirical measures are computed by the sorted coupling in one
dimension, with a permutation brute force as the reference.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .delay import deviating_argument
from .dynamics import HistorySpec, ModelConfig, rhs
from .integrator import DEFAULT_STEP, Trajectory, history_eval, solve
from .kernel import KernelSpec, RateForm, psi_eval

ORACLE_MAX_ATOMS = 8


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform probability measure on N atoms in R^d."""

    atoms: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("atoms must be a nonempty (N, d) array")
        if not np.all(np.isfinite(a)):
            raise ValueError("atoms must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def dimension(self):
        return self.atoms.shape[1]

    @property
    def support_diameter(self):
        from .diagnostics import diameter
        return diameter(self.atoms)

    def refine(self, factor):
        """Same measure written with every atom repeated ``factor`` times."""
        return EmpiricalMeasure(np.repeat(self.atoms, int(factor), axis=0))


class MeasurePath:
    """mu_t = X(t; .) # mu_0 for a computed particle flow."""

    def __init__(self, traj: Trajectory):
        self.trajectory = traj

    def at(self, t) -> EmpiricalMeasure:
        return EmpiricalMeasure(history_eval(self.trajectory, float(t)))

    def at_node(self, k) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.trajectory.x[k])

    @property
    def times(self):
        return self.trajectory.t


def velocity_field(mu_delayed: EmpiricalMeasure, x, k: KernelSpec, form=RateForm.SYMMETRIC,
                   lam=1.0):
    """F[mu](x), coupling strength included.

    symmetric:  lam * mean_j psi(|x - y_j|) (y_j - x)
    normalized: lam * sum_j psi(|x - y_j|) (y_j - x) / sum_j psi(|x - y_j|)

    ``x`` may be a single point (d,) or a batch (..., d).
    """
    y = mu_delayed.atoms
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1 and y.shape[1] == x.shape[0]
    xb = x[None, :] if single else (x[:, None] if x.ndim == 1 else x)
    diff = y[None, :, :] - xb[:, None, :]
    w = psi_eval(np.sqrt(np.einsum("pjk,pjk->pj", diff, diff)), k)
    num = np.einsum("pj,pjk->pk", w, diff)
    if RateForm(form) is RateForm.NORMALIZED:
        out = lam * num / w.sum(axis=1)[:, None]
    else:
        out = lam * num / y.shape[0]
    return out[0] if single else out


def consistency_gap(traj: Trajectory, t):
    """max_i |F[mu^N_{t - tau(t)}](x_i(t)) - x_i'(t)|: the size of the
    self-interaction term the particle model drops.

    The difference is evaluated as the self term itself, so it is exactly
    zero when tau(t) = 0 or when the model keeps the self term.
    """
    return float(consistency_gap_series(traj, np.array([float(t)]))[0])


def consistency_gap_series(traj: Trajectory, times=None):
    """Vectorized consistency gap on the trajectory nodes (or given times)."""
    cfg = traj.config
    t = traj.t if times is None else np.asarray(times, dtype=float)
    now = history_eval(traj, t)
    late = history_eval(traj, deviating_argument(t, cfg.delay))
    lag = late - now
    w = psi_eval(np.linalg.norm(lag, axis=-1), cfg.kernel)
    if cfg.rate_form is RateForm.NORMALIZED:
        diff = late[:, None, :, :] - now[:, :, None, :]
        denom = psi_eval(np.sqrt(np.einsum("tijk,tijk->tij", diff, diff)), cfg.kernel).sum(axis=-1)
        scale = cfg.lam * w / denom
    else:
        scale = cfg.lam * w / cfg.n_agents
    gap = scale * np.linalg.norm(lag, axis=-1)
    if cfg.self_interaction:
        gap = np.zeros_like(gap)
    return gap.max(axis=-1)


# ---------------------------------------------------------------------------
# Wasserstein distances

def _check_pair(mu, nu, p):
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if mu.n_atoms != nu.n_atoms:
        raise NotImplementedError("only equal-size empirical measures are supported")
    if mu.dimension != nu.dimension:
        raise ValueError("measures live in different dimensions")


def _aggregate(dist, p):
    if math.isinf(p):
        return float(dist.max())
    return float(np.mean(dist ** p) ** (1.0 / p))


def wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p=2.0):
    """d_p between equal-size empirical measures.

    In one dimension the monotone (sorted) coupling is optimal. In higher
    dimensions the permutation oracle is used up to 8 atoms.
    """
    _check_pair(mu, nu, p)
    if mu.dimension == 1:
        dist = np.abs(np.sort(mu.atoms[:, 0]) - np.sort(nu.atoms[:, 0]))
        return _aggregate(dist, p)
    if mu.n_atoms <= ORACLE_MAX_ATOMS:
        return wasserstein_oracle(mu, nu, p)
    raise NotImplementedError("d > 1 is supported only up to 8 atoms")


def wasserstein_oracle(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p=2.0):
    """Minimum transport cost over all N! permutation couplings."""
    _check_pair(mu, nu, p)
    n = mu.n_atoms
    if n > ORACLE_MAX_ATOMS:
        raise ValueError(f"oracle enumerates N! couplings; N={n} exceeds {ORACLE_MAX_ATOMS}")
    x, y = mu.atoms, nu.atoms
    cost = np.linalg.norm(x[:, None, :] - y[None, :, :], axis=-1)
    rows = np.arange(n)
    best = math.inf
    for perm in itertools.permutations(range(n)):
        val = _aggregate(cost[rows, perm], p)
        best = min(best, val)
    return best


def wasserstein_series(traj_a: Trajectory, traj_b: Trajectory, p=2.0, stride=1):
    """d_p between two 1-D particle flows on their common node grid.

    Equal-weight measures with N and k*N atoms are compared by repeating
    the smaller atom set k times."""
    if traj_a.h != traj_b.h:
        raise ValueError("trajectories use different steps")
    n_nodes = min(traj_a.t.size, traj_b.t.size)
    idx = np.arange(0, n_nodes, max(1, int(stride)))
    if idx[-1] != n_nodes - 1:
        idx = np.append(idx, n_nodes - 1)
    xa, xb = traj_a.x[idx], traj_b.x[idx]
    if xa.shape[-1] != 1:
        raise NotImplementedError("series distances need d = 1")
    na, nb = xa.shape[1], xb.shape[1]
    big = max(na, nb)
    if big % na or big % nb:
        raise NotImplementedError("atom counts must divide each other")
    a = np.sort(np.repeat(xa[..., 0], big // na, axis=1), axis=1)
    b = np.sort(np.repeat(xb[..., 0], big // nb, axis=1), axis=1)
    dist = np.abs(a - b)
    if math.isinf(p):
        vals = dist.max(axis=1)
    else:
        vals = np.mean(dist ** p, axis=1) ** (1.0 / p)
    return traj_a.t[idx], vals


# ---------------------------------------------------------------------------
# experiments

@dataclass
class StabilityResult:
    times: np.ndarray
    distances: np.ndarray
    initial_distance: float
    amplification: float
    outside_hypotheses: bool

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("t,d_p\n")
            for t, d in zip(self.times.tolist(), self.distances.tolist()):
                fh.write(f"{t!r},{d!r}\n")


def perturbation_pattern(n_agents, dimension, kind="ramp"):
    """Deterministic unit-sup displacement of each atom.

    ``translation`` moves every atom by the same unit vector; ``ramp``
    moves atom i by (2 i / (N - 1) - 1) along every axis."""
    if kind == "translation":
        return np.ones((n_agents, dimension))
    if kind == "ramp":
        ramp = 2.0 * np.arange(n_agents) / (n_agents - 1) - 1.0
        return np.repeat(ramp[:, None], dimension, axis=1)
    raise ValueError(f"unknown perturbation kind {kind!r}")


def _shift_history(hist: HistorySpec, shift):
    if hist.kind == "constant_vector":
        return HistorySpec.constant(hist.values + shift)
    return HistorySpec.table(hist.times, hist.values + shift[None])


def stability_experiment(cfg: ModelConfig, perturbation, p=2.0, t_end=50.0, h=DEFAULT_STEP,
                         kind="ramp", stride=1):
    """Run the flow from g and from g displaced by ``perturbation * pattern``
    and report d_p between the two measure paths.

    The amplification factor is sup_t d_p(mu1_t, mu2_t) divided by the
    largest initial-history distance max_s d_p(g1_s, g2_s).
    """
    if perturbation < 0:
        raise ValueError("perturbation size must be >= 0")
    outside = not cfg.delay.tau_star > 0
    if outside:
        warnings.warn("tau_star = 0: stability run lies outside the stability estimate's hypotheses",
                      stacklevel=2)
    shift = perturbation * perturbation_pattern(cfg.n_agents, cfg.dimension, kind)
    cfg2 = replace(cfg, initial_history=_shift_history(cfg.initial_history, shift))
    tr1 = solve(cfg, t_end, h)
    tr2 = solve(cfg2, t_end, h)
    times, dist = _distance_path(tr1, tr2, p, stride)

    hist = cfg.initial_history
    s_grid = np.array([0.0]) if hist.kind == "constant_vector" else hist.times[hist.times >= -cfg.tau0]
    g1 = hist.eval(s_grid)
    g2 = cfg2.initial_history.eval(s_grid)
    init = max(_pair_distance(g1[k], g2[k], p) for k in range(s_grid.size))
    amp = float(dist.max() / init) if init > 0 else (0.0 if dist.max() == 0 else math.inf)
    return StabilityResult(times, dist, init, amp, outside)


def _pair_distance(a, b, p):
    return wasserstein(EmpiricalMeasure(a), EmpiricalMeasure(b), p)


def _distance_path(tr1, tr2, p, stride):
    if tr1.config.dimension == 1:
        return wasserstein_series(tr1, tr2, p, stride)
    idx = np.arange(0, tr1.t.size, max(1, int(stride)))
    vals = np.array([_pair_distance(tr1.x[k], tr2.x[k], p) for k in idx])
    return tr1.t[idx], vals


def uniform_sampler(low=-1.0, high=1.0, dimension=1):
    def sample(rng, n):
        return rng.uniform(low, high, size=(n, dimension))
    return sample


def point_mass_sampler(value=0.0, dimension=1):
    def sample(rng, n):
        return np.full((n, dimension), float(value))
    return sample


@dataclass
class ConvergenceRow:
    n: int
    p: float
    sup_dp: float


def convergence_study(cfg: ModelConfig, sampler, n_list, p=2.0, t_end=20.0, seed=0,
                      h=DEFAULT_STEP, stride=10):
    """sup_t d_p(mu^N_t, mu^{2N}_t) for each N in ``n_list``.

    One seeded draw of max(2N) initial opinions is made; the N-atom system
    uses its first N entries, so every N-set is nested in its 2N-set.
    Histories are constant in time. Only d = 1 is supported.
    """
    if cfg.dimension != 1:
        raise NotImplementedError("convergence_study needs d = 1")
    n_list = [int(n) for n in n_list]
    rng = np.random.default_rng(seed)
    pool = np.asarray(sampler(rng, 2 * max(n_list)), dtype=float).reshape(-1, 1)
    cache = {}

    def run(n):
        if n not in cache:
            cache[n] = solve(cfg.with_history(HistorySpec.constant(pool[:n])), t_end, h)
        return cache[n]

    rows = []
    for n in n_list:
        _, dist = wasserstein_series(run(n), run(2 * n), p, stride)
        rows.append(ConvergenceRow(n, float(p), float(dist.max())))
    return rows


def write_convergence_csv(rows, path):
    with open(path, "w") as fh:
        fh.write("N,p,sup_dp\n")
        for r in rows:
            fh.write(f"{r.n},{r.p!r},{r.sup_dp!r}\n")
