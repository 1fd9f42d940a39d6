"""Method-of-steps solver: fixed-step classical RK4 with cubic Hermite dense
output of the computed history.

The stepping loop is compiled with numba; everything the loop needs (the
deviating argument at every stage time, the initial history as a table,
the kernel breakpoints) is precomputed in Python so user supplied delay
functions never enter compiled code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .delay import deviating_argument
from .dynamics import HistorySpec, ModelConfig, rhs
from .kernel import RateForm

DEFAULT_STEP = 1e-2
CORRECTOR_TOL = 1e-12
CORRECTOR_MAXITER = 10
# relative slack for deciding that a deviating argument sits on a committed node
_NODE_SLACK = 1e-9


class DivergenceError(RuntimeError):
    def __init__(self, time, reason):
        super().__init__(f"integration diverged at t={time:.6g}: {reason}")
        self.time = time


@dataclass(frozen=True)
class Trajectory:
    """Dense numerical solution.

    ``t`` holds the uniform grid ``0, h, 2h, ...`` (the last node is at or just
    past the requested end), ``x`` and ``dx`` the states and right-hand side
    values there, each of shape (n_nodes, N, d). Times before 0 are served by
    the configuration's initial history.
    """

    config: ModelConfig
    h: float
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    dx: np.ndarray = field(repr=False)
    t_end: float = None

    def __post_init__(self):
        for arr in (self.t, self.x, self.dx):
            arr.setflags(write=False)
        if self.t_end is None:
            object.__setattr__(self, "t_end", float(self.t[-1]))

    @property
    def t_start(self):
        return -self.config.tau0

    @property
    def history(self) -> HistorySpec:
        return self.config.initial_history

    @property
    def n_nodes(self):
        return self.t.size

    def nodes(self):
        """Full node grid on [-tau(0), t_end] with states, history part included."""
        hist = self.history
        t0 = self.t_start
        if hist.kind == "function_table":
            ht = hist.times[(hist.times >= t0) & (hist.times < 0)]
            if ht.size == 0 or ht[0] > t0:
                ht = np.concatenate([[t0], ht]) if t0 < 0 else ht
        else:
            ht = np.array([t0]) if t0 < 0 else np.zeros(0)
        times = np.concatenate([ht, self.t])
        states = np.concatenate([hist.eval(ht), self.x]) if ht.size else np.array(self.x)
        return times, states

    def speed(self):
        """max_k |x_k'(t)| at the grid nodes t >= 0."""
        return np.linalg.norm(self.dx, axis=-1).max(axis=-1)

    def to_csv(self, path, stride=1):
        """Write ``t,x_1_1,...,x_N_d`` rows, one per node (every ``stride``-th
        node past 0), floats in shortest round-trip form."""
        times, states = self.nodes()
        n_hist = times.size - self.t.size
        keep = np.concatenate([np.arange(n_hist), n_hist + _strided(self.t.size, stride)])
        n, d = self.config.n_agents, self.config.dimension
        header = ["t"] + [f"x_{i + 1}_{k + 1}" for i in range(n) for k in range(d)]
        flat = states.reshape(states.shape[0], -1)
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in keep:
                fh.write(repr(float(times[row])) + "," + ",".join(map(repr, flat[row].tolist())) + "\n")


def _strided(n, stride):
    idx = np.arange(0, n, max(1, int(stride)))
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    return idx


# ---------------------------------------------------------------------------
# compiled core

@numba.njit(cache=True, nogil=True)
def _psi_sq(r2, kform, beta, tab_r, tab_v):
    """psi as a function of the squared distance."""
    if kform == 0:
        return 1.0 / (1.0 + r2) ** beta
    if kform == 2:
        # integer exponent fast path, beta >= 1
        base = 1.0 + r2
        acc = base
        for _ in range(int(beta) - 1):
            acc *= base
        return 1.0 / acc
    r = math.sqrt(r2)
    m = tab_r.size
    if r >= tab_r[m - 1]:
        return tab_v[m - 1]
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tab_r[mid] <= r:
            lo = mid
        else:
            hi = mid
    w = (r - tab_r[lo]) / (tab_r[hi] - tab_r[lo])
    return (1.0 - w) * tab_v[lo] + w * tab_v[hi]


@numba.njit(cache=True, nogil=True)
def _field(xn, xd, out, lam, kform, beta, tab_r, tab_v, normalized, self_inter):
    n, d = xn.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = 0.0
        denom = 0.0
        for j in range(n):
            r2 = 0.0
            for k in range(d):
                diff = xd[j, k] - xn[i, k]
                r2 += diff * diff
            w = _psi_sq(r2, kform, beta, tab_r, tab_v)
            denom += w
            if j == i and not self_inter:
                continue
            for k in range(d):
                out[i, k] += w * (xd[j, k] - xn[i, k])
        if normalized:
            scale = lam / denom
        else:
            scale = lam / n
        for k in range(d):
            out[i, k] *= scale


@numba.njit(cache=True, nogil=True)
def _hermite(theta, h, p0, m0, p1, m1, out):
    # cubic Hermite on a step of length h, theta in [0, 1] (extrapolates outside)
    t2 = theta * theta
    t3 = t2 * theta
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + theta
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    n, d = p0.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = h00 * p0[i, k] + h10 * h * m0[i, k] + h01 * p1[i, k] + h11 * h * m1[i, k]


@numba.njit(cache=True, nogil=True)
def _history_state(u, hist_t, hist_x, out):
    m = hist_t.size
    if m == 1 or u <= hist_t[0]:
        out[:, :] = hist_x[0]
        return
    if u >= hist_t[m - 1]:
        out[:, :] = hist_x[m - 1]
        return
    lo = 0
    hi = m - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hist_t[mid] <= u:
            lo = mid
        else:
            hi = mid
    w = (u - hist_t[lo]) / (hist_t[hi] - hist_t[lo])
    n, d = out.shape
    for i in range(n):
        for k in range(d):
            out[i, k] = (1.0 - w) * hist_x[lo, i, k] + w * hist_x[hi, i, k]


@numba.njit(cache=True, nogil=True)
def _committed_state(u, n_done, x, f, h, hist_t, hist_x, out):
    """State at u <= t_{n_done} from the history table or stored steps."""
    if u <= 0.0:
        _history_state(u, hist_t, hist_x, out)
        return
    q = u / h
    k = int(math.floor(q))
    if k >= n_done:
        k = n_done - 1
    theta = q - k
    if theta == 0.0:
        out[:, :] = x[k]
        return
    if theta >= 1.0 and k + 1 <= n_done:
        out[:, :] = x[k + 1]
        return
    _hermite(theta, h, x[k], f[k], x[k + 1], f[k + 1], out)


@numba.njit(cache=True, nogil=True)
def _march(x, f, h, n_steps, dev, hist_t, hist_x, lam, kform, beta, tab_r, tab_v,
           normalized, self_inter, bound):
    """Fill x[1:], f[:] in place. Returns (status, step) with status
    0 = ok, 1 = non-finite state, 2 = confinement bound exceeded."""
    n, d = x.shape[1], x.shape[2]
    xd = np.empty((n, d))
    k1 = np.empty((n, d))
    k2 = np.empty((n, d))
    k3 = np.empty((n, d))
    k4 = np.empty((n, d))
    xs = np.empty((n, d))
    x_new = np.empty((n, d))
    f_new = np.empty((n, d))
    x_prev = np.empty((n, d))
    half = 0.5 * h
    stage_off = np.array([0.0, half, half, h])
    stage_col = np.array([0, 1, 1, 2])

    for step in range(n_steps):
        tn = step * h
        slack = _NODE_SLACK * h
        # k1: the deviating argument at t_n never exceeds t_n
        u = dev[step, 0]
        if u == tn:
            xd[:, :] = x[step]
        else:
            _committed_state(min(u, tn), step, x, f, h, hist_t, hist_x, xd)
        _field(x[step], xd, k1, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
        f[step] = k1

        in_step = dev[step, 2] > tn + slack and dev[step, 2] != tn + h
        if dev[step, 1] > tn + slack and dev[step, 1] != tn + half:
            in_step = True

        if not in_step:
            for s in range(1, 4):
                if s == 1:
                    src = k1
                elif s == 2:
                    src = k2
                else:
                    src = k3
                c = half if s < 3 else h
                for i in range(n):
                    for kk in range(d):
                        xs[i, kk] = x[step, i, kk] + c * src[i, kk]
                u = dev[step, stage_col[s]]
                ts = tn + stage_off[s]
                if u == ts:
                    xd[:, :] = xs
                else:
                    _committed_state(min(u, tn), step, x, f, h, hist_t, hist_x, xd)
                if s == 1:
                    _field(xs, xd, k2, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                elif s == 2:
                    _field(xs, xd, k3, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                else:
                    _field(xs, xd, k4, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
            for i in range(n):
                for kk in range(d):
                    x[step + 1, i, kk] = x[step, i, kk] + h / 6.0 * (
                        k1[i, kk] + 2.0 * k2[i, kk] + 2.0 * k3[i, kk] + k4[i, kk])
        else:
            # predictor: extrapolate the previous step's dense output
            if step == 0:
                for i in range(n):
                    for kk in range(d):
                        x_new[i, kk] = x[0, i, kk] + h * k1[i, kk]
                        f_new[i, kk] = k1[i, kk]
            else:
                _hermite(2.0, h, x[step - 1], f[step - 1], x[step], f[step], x_new)
                # derivative of the extrapolated cubic at theta = 2
                for i in range(n):
                    for kk in range(d):
                        p0 = x[step - 1, i, kk]
                        p1 = x[step, i, kk]
                        m0 = f[step - 1, i, kk]
                        m1 = f[step, i, kk]
                        # d/dtheta of the Hermite basis at theta=2, divided by h
                        f_new[i, kk] = ((6.0 * 4.0 - 6.0 * 2.0) * p0 / h
                                        + (3.0 * 4.0 - 4.0 * 2.0 + 1.0) * m0
                                        + (-6.0 * 4.0 + 6.0 * 2.0) * p1 / h
                                        + (3.0 * 4.0 - 2.0 * 2.0) * m1)
            for it in range(CORRECTOR_MAXITER):
                x_prev[:, :] = x_new
                for s in range(1, 4):
                    if s == 1:
                        src = k1
                    elif s == 2:
                        src = k2
                    else:
                        src = k3
                    c = half if s < 3 else h
                    for i in range(n):
                        for kk in range(d):
                            xs[i, kk] = x[step, i, kk] + c * src[i, kk]
                    u = dev[step, stage_col[s]]
                    ts = tn + stage_off[s]
                    if u == ts:
                        xd[:, :] = xs
                    elif u <= tn + slack:
                        _committed_state(min(u, tn), step, x, f, h, hist_t, hist_x, xd)
                    else:
                        _hermite((u - tn) / h, h, x[step], k1, x_new, f_new, xd)
                    if s == 1:
                        _field(xs, xd, k2, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                    elif s == 2:
                        _field(xs, xd, k3, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                    else:
                        _field(xs, xd, k4, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                for i in range(n):
                    for kk in range(d):
                        x_new[i, kk] = x[step, i, kk] + h / 6.0 * (
                            k1[i, kk] + 2.0 * k2[i, kk] + 2.0 * k3[i, kk] + k4[i, kk])
                # end-node derivative from the corrected step
                u = dev[step, 2]
                if u == tn + h:
                    xd[:, :] = x_new
                elif u <= tn + slack:
                    _committed_state(min(u, tn), step, x, f, h, hist_t, hist_x, xd)
                else:
                    _hermite((u - tn) / h, h, x[step], k1, x_new, f_new, xd)
                _field(x_new, xd, f_new, lam, kform, beta, tab_r, tab_v, normalized, self_inter)
                change = 0.0
                for i in range(n):
                    for kk in range(d):
                        change = max(change, abs(x_new[i, kk] - x_prev[i, kk]))
                if it >= 1 and change <= CORRECTOR_TOL:
                    break
            x[step + 1] = x_new
            f[step + 1] = f_new

        biggest = 0.0
        for i in range(n):
            r2 = 0.0
            for kk in range(d):
                v = x[step + 1, i, kk]
                if not math.isfinite(v):
                    return 1, step + 1
                r2 += v * v
            biggest = max(biggest, r2)
        if math.sqrt(biggest) > bound:
            return 2, step + 1

    # derivative at the final node
    tn = n_steps * h
    u = dev[n_steps, 0]
    if u == tn:
        xd[:, :] = x[n_steps]
    else:
        _committed_state(min(u, tn), n_steps, x, f, h, hist_t, hist_x, xd)
    _field(x[n_steps], xd, f[n_steps], lam, kform, beta, tab_r, tab_v, normalized, self_inter)
    return 0, n_steps


# ---------------------------------------------------------------------------

def _kernel_code(kernel):
    if kernel.form != "power_law":
        return 1
    b = kernel.beta_exponent
    return 2 if b == int(b) and 1 <= b <= 16 else 0


def effective_step(cfg: ModelConfig, h=DEFAULT_STEP):
    """Step size actually used by :func:`solve` for a requested ``h``."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    h = float(h)
    if cfg.delay.tau_star and cfg.delay.tau_star > 0:
        h = min(h, cfg.delay.tau_star / 4.0)
    if cfg.delay.is_constant and cfg.delay.tau_bar > 0:
        tau = cfg.delay.tau_bar
        h = tau / math.ceil(tau / h - 1e-9)
    return h


def stage_arguments(cfg: ModelConfig, h, n_steps):
    """Deviating arguments at stage times t_n, t_n + h/2, t_n + h.

    Row ``n_steps`` holds the value at the final node (column 0 only)."""
    tn = np.arange(n_steps + 1) * h
    stages = np.stack([tn, tn + 0.5 * h, tn + h], axis=1)
    if cfg.delay.is_constant:
        dev = stages - cfg.delay.tau_bar
    else:
        dev = deviating_argument(stages.ravel(), cfg.delay).reshape(stages.shape)
    return dev


def solve(cfg: ModelConfig, t_end, h=DEFAULT_STEP) -> Trajectory:
    """Integrate the delayed system on [0, t_end] with (adjusted) step h.

    The step is reduced to ``tau_star / 4`` when the delay has a positive
    floor and, for constant delays, shrunk so that it divides the delay
    (breaking points at multiples of the delay land on nodes).
    """
    if not t_end > 0:
        raise ValueError(f"t_end must be positive, got {t_end}")
    h = effective_step(cfg, h)
    n_steps = int(math.ceil(t_end / h - 1e-9))
    dev = stage_arguments(cfg, h, n_steps)
    hist_t, hist_x = cfg.initial_history.table_arrays()
    tab_r, tab_v = cfg.kernel.table_arrays()
    kform = _kernel_code(cfg.kernel)

    n, d = cfg.n_agents, cfg.dimension
    x = np.empty((n_steps + 1, n, d))
    f = np.zeros((n_steps + 1, n, d))
    x[0] = cfg.initial_history.final_state()
    radius = cfg.radius
    status, where = _march(
        x, f, h, n_steps, dev, hist_t, hist_x, float(cfg.lam), kform,
        float(cfg.kernel.beta_exponent), tab_r, tab_v,
        cfg.rate_form is RateForm.NORMALIZED, bool(cfg.self_interaction), 10.0 * radius)
    if status == 1:
        raise DivergenceError(where * h, "non-finite state")
    if status == 2:
        raise DivergenceError(where * h, f"max |x_i| exceeded 10 R = {10 * radius:.6g}")
    t = np.arange(n_steps + 1) * h
    return Trajectory(config=cfg, h=h, t=t, x=x, dx=f, t_end=float(t_end))


def history_eval(traj: Trajectory, t):
    """States at time(s) t via the initial history (t <= 0) or cubic Hermite
    interpolation on the bracketing step. Shape ``t.shape + (N, d)``."""
    t_arr = np.asarray(t, dtype=float)
    flat = t_arr.ravel()
    if np.any(flat < traj.t_start - 1e-12):
        raise ValueError(f"t below the history start {traj.t_start}")
    if np.any(flat > traj.t[-1] * (1 + 1e-12) + 1e-12):
        raise ValueError(f"t beyond the trajectory end {traj.t[-1]}")
    out = np.empty(flat.shape + traj.x.shape[1:])
    neg = flat <= 0
    if np.any(neg):
        out[neg] = traj.history.eval(flat[neg])
        # s = 0 is the first solution node
        zero = flat == 0
        out[zero] = traj.x[0]
    pos = ~neg
    if np.any(pos):
        h = traj.h
        tp = flat[pos]
        k = np.minimum(np.floor(tp / h).astype(np.int64), traj.t.size - 2)
        theta = tp / h - k
        out_pos = _hermite_vec(theta, h, traj.x[k], traj.dx[k], traj.x[k + 1], traj.dx[k + 1])
        near = np.rint(tp / h).astype(np.int64)
        near = np.minimum(near, traj.t.size - 1)
        on_node = traj.t[near] == tp
        out_pos[on_node] = traj.x[near[on_node]]
        out[pos] = out_pos
    return out.reshape(t_arr.shape + traj.x.shape[1:])


def _hermite_vec(theta, h, p0, m0, p1, m1):
    th = theta[:, None, None]
    t2 = th * th
    t3 = t2 * th
    return ((2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + th) * h * m0
            + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * h * m1)


def hermite_derivative(traj: Trajectory, t):
    """Time derivative of the dense output at t >= 0."""
    t_arr = np.asarray(t, dtype=float).ravel()
    h = traj.h
    k = np.minimum(np.floor(t_arr / h).astype(np.int64), traj.t.size - 2)
    th = (t_arr / h - k)[:, None, None]
    p0, m0, p1, m1 = traj.x[k], traj.dx[k], traj.x[k + 1], traj.dx[k + 1]
    return ((6 * th ** 2 - 6 * th) * p0 / h + (3 * th ** 2 - 4 * th + 1) * m0
            + (-6 * th ** 2 + 6 * th) * p1 / h + (3 * th ** 2 - 2 * th) * m1)


def velocities(traj: Trajectory, t):
    """Right-hand side evaluated at interpolated current and delayed states,
    shape ``t.shape + (N, d)``; valid for t >= 0."""
    t_arr = np.asarray(t, dtype=float)
    cfg = traj.config
    now = history_eval(traj, t_arr)
    late = history_eval(traj, deviating_argument(t_arr, cfg.delay))
    return rhs(t_arr, now, late, cfg)
