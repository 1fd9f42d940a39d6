"""Quantities from the consensus analysis, evaluated along a trajectory.

Diameter d_X, radius R_X, the delay integral

    sigma_tau(t) = int_{t - tau(t)}^t max_k |x_k'(s)| ds,

the Lyapunov functional

    F(t) = d_X(t) + w * int_{t - tau(t)}^t e^{-(t - s)} int_s^t max_k |x_k'| ds,

numerical checks of the diameter and velocity inequalities, decay-rate
fits and 1-D cluster counting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage

from .delay import tau_eval
from .integrator import Trajectory, hermite_derivative, history_eval
from .kernel import RateForm, psi_eval, rate_matrix

# nodes per vectorized block when scanning long trajectories
CHUNK = 20_000


def diameter(x):
    """Largest pairwise distance among the points ``x`` (N, d) or (N,)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] <= 1:
        return 0.0
    diff = x[:, None, :] - x[None, :, :]
    return float(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)).max())


def diameter_series(x):
    """Diameter at every time of a state array of shape (T, N, d)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] == 1:
        return np.ptp(x[..., 0], axis=-1)
    out = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], CHUNK // 10):
        blk = x[lo:lo + CHUNK // 10]
        diff = blk[:, :, None, :] - blk[:, None, :, :]
        out[lo:lo + blk.shape[0]] = np.sqrt(np.einsum("tijk,tijk->tij", diff, diff)).max(axis=(1, 2))
    return out


def radius_series(x):
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1).max(axis=-1)


# ---------------------------------------------------------------------------
# speed integrals

def _cumulative_speed(traj: Trajectory):
    """Trapezoid cumulative integral of the node speeds, starting at t = 0."""
    m = traj.speed()
    c = np.zeros_like(m)
    c[1:] = np.cumsum(0.5 * traj.h * (m[1:] + m[:-1]))
    return c


def _speed_at(traj: Trajectory, s):
    """max_k |x_k'(s)| at arbitrary times from the dense output; history
    slopes for s < 0."""
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape)
    neg = s < 0
    if np.any(neg):
        out[neg] = np.linalg.norm(traj.history.derivative(s[neg]), axis=-1).max(axis=-1)
    if np.any(~neg):
        out[~neg] = np.linalg.norm(hermite_derivative(traj, s[~neg]), axis=-1).max(axis=-1)
    return out


def _history_speed_integral(traj: Trajectory, u):
    """int_u^0 of the history speed (exact for piecewise linear tables)."""
    hist = traj.history
    u = np.asarray(u, dtype=float)
    if hist.kind == "constant_vector" or hist.times.size == 1:
        return np.zeros(u.shape)
    knots = hist.times
    seg_speed = np.linalg.norm(np.diff(hist.values, axis=0), axis=-1).max(axis=-1) / np.diff(knots)
    # tail integral from each knot to 0
    tail = np.concatenate([np.cumsum((seg_speed * np.diff(knots))[::-1])[::-1], [0.0]])
    idx = np.clip(np.searchsorted(knots, u, side="right") - 1, 0, knots.size - 2)
    return tail[idx + 1] + seg_speed[idx] * (knots[idx + 1] - u)


def cumulative_speed_at(traj: Trajectory, u, _cum=None):
    """C(u) = int_0^u max_k |x_k'| ds (negative for u < 0)."""
    cum = _cumulative_speed(traj) if _cum is None else _cum
    u = np.asarray(u, dtype=float)
    out = np.empty(u.shape)
    neg = u < 0
    if np.any(neg):
        out[neg] = -_history_speed_integral(traj, u[neg])
    pos = ~neg
    if np.any(pos):
        up = u[pos]
        h = traj.h
        q = up / h
        near = np.rint(q).astype(np.int64)
        on_node = np.abs(q - near) <= 1e-9
        res = np.empty(up.shape)
        res[on_node] = cum[np.minimum(near[on_node], cum.size - 1)]
        off = ~on_node
        if np.any(off):
            k = np.minimum(np.floor(q[off]).astype(np.int64), cum.size - 2)
            m_k = traj.speed()[k]
            m_u = _speed_at(traj, up[off])
            res[off] = cum[k] + 0.5 * (up[off] - k * h) * (m_k + m_u)
        out[pos] = res
    return out


def sigma_tau(traj: Trajectory, t):
    """Delay integral of the maximal speed over [t - tau(t), t]."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("sigma_tau is defined for t >= 0")
    if np.any(t_arr > traj.t[-1] * (1 + 1e-12)):
        raise ValueError("t beyond the trajectory end")
    cum = _cumulative_speed(traj)
    lower = t_arr - tau_eval(t_arr, traj.config.delay)
    out = cumulative_speed_at(traj, t_arr, cum) - cumulative_speed_at(traj, lower, cum)
    out = np.maximum(out, 0.0)
    if np.ndim(t) == 0:
        return float(out)
    return out


def lyapunov_F(traj: Trajectory, t, beta_weight):
    """Diameter plus the weighted, exponentially discounted delay integral.

    The outer integral uses the trapezoid rule on the step-size grid
    ``t, t - h, ...`` ending at ``t - tau(t)``; the inner integral is the
    cumulative trapezoid of the node speeds.
    """
    if not beta_weight > 0:
        raise ValueError("beta_weight must be positive")
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("lyapunov_F is defined for t >= 0")
    cum = _cumulative_speed(traj)
    h = traj.h
    taus = tau_eval(t_arr, traj.config.delay)
    c_t = cumulative_speed_at(traj, t_arr, cum)
    d_t = diameter_series(history_eval(traj, t_arr))
    out = np.empty(t_arr.shape)
    for idx, (tt, tau) in enumerate(zip(t_arr, taus)):
        if tau <= 0:
            out[idx] = d_t[idx]
            continue
        n_full = int(np.floor(tau / h * (1 + 1e-12)))
        s = tt - h * np.arange(n_full + 1)
        if tt - s[-1] < tau * (1 - 1e-12):
            s = np.append(s, tt - tau)
        s = s[::-1]
        g = np.exp(-(tt - s)) * np.maximum(c_t[idx] - cumulative_speed_at(traj, s, cum), 0.0)
        out[idx] = d_t[idx] + beta_weight * np.trapezoid(g, s)
    if np.ndim(t) == 0:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------

@dataclass
class DiagnosticsSeries:
    times: np.ndarray
    d_X: np.ndarray
    R_X: np.ndarray
    sigma_tau: np.ndarray
    max_speed: np.ndarray
    lyapunov_F: Optional[np.ndarray] = None
    beta_weight: Optional[float] = None

    def to_csv(self, path):
        cols = [self.times, self.d_X, self.R_X, self.sigma_tau, self.max_speed]
        lyap = self.lyapunov_F if self.lyapunov_F is not None else np.full(self.times.shape, np.nan)
        cols.append(lyap)
        with open(path, "w") as fh:
            fh.write("t,d_X,R_X,sigma_tau,max_speed,lyapunov_F\n")
            for row in zip(*(c.tolist() for c in cols)):
                fh.write(",".join(map(repr, row)) + "\n")


def compute_series(traj: Trajectory, beta_weight=None, stride=1, lyapunov=True):
    """Diagnostics at every ``stride``-th node.

    The Lyapunov column is filled when a weight is given, or else when the
    admissible weight window for this configuration is nonempty (midpoint).
    """
    idx = np.arange(0, traj.t.size, max(1, int(stride)))
    if idx[-1] != traj.t.size - 1:
        idx = np.append(idx, traj.t.size - 1)
    times = traj.t[idx]
    x = traj.x[idx]
    series = DiagnosticsSeries(
        times=times,
        d_X=diameter_series(x),
        R_X=radius_series(x),
        sigma_tau=sigma_tau(traj, times),
        max_speed=traj.speed()[idx],
    )
    if lyapunov:
        if beta_weight is None:
            from .theory import default_beta_weight
            beta_weight = default_beta_weight(traj.config)
        if beta_weight is not None:
            series.beta_weight = beta_weight
            series.lyapunov_F = lyapunov_F(traj, times, beta_weight)
    return series


# ---------------------------------------------------------------------------
# inequality checks

@dataclass
class CheckResult:
    name: str
    worst_slack: float = np.inf
    n_violations: int = 0
    first_violation_time: Optional[float] = None

    def update(self, times, slack, tol):
        if slack.size == 0:
            return
        self.worst_slack = min(self.worst_slack, float(slack.min()))
        bad = slack < -tol
        if np.any(bad):
            if self.first_violation_time is None:
                self.first_violation_time = float(times[bad][0])
            self.n_violations += int(bad.sum())


@dataclass
class InequalityReport:
    tol: float
    radius: float
    psi_2R: float
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def n_violations(self):
        return sum(c.n_violations for c in self.checks.values())

    @property
    def ok(self):
        return self.n_violations == 0

    def to_dict(self):
        return {
            "tol": self.tol,
            "radius": self.radius,
            "psi_2R": self.psi_2R,
            "n_violations": self.n_violations,
            "notes": list(self.notes),
            "checks": {
                k: {"worst_slack": c.worst_slack, "n_violations": c.n_violations,
                    "first_violation_time": c.first_violation_time}
                for k, c in self.checks.items()
            },
        }


def check_inequalities(traj: Trajectory, tol=None):
    """Evaluate both sides of the analysis inequalities at every node.

    Checks (slack = right side - left side, violation when slack < -tol):

    * ``confinement``: R_X(t) <= R (1 + 1e-6);
    * ``diameter_dini``: forward difference of d_X against
      2 lam sigma / psi(2R) - lam psi(2R) d_X;
    * ``speed``: max |x_i'| <= lam (sigma + d_X) / psi(2R);
    * ``velocity``: max |x_i'| <= lam (max_j |x_j(t - tau) - x_j(t)| + d_X) / psi(2R);
    * ``rate_lower`` / ``rate_upper``: psi(2R) <= a_ij <= 1 / psi(2R);
    * ``rate_row_mean``: (1/N) sum_j a_ij <= 1;
    * ``rate_unit`` (symmetric form only): a_ij <= 1.

    The a priori estimate checks use ``tol = 1e-6 + 10 h``; the pointwise rate and
    confinement checks use a 1e-12 relative rounding allowance.
    """
    cfg = traj.config
    h = traj.h
    if tol is None:
        tol = 1e-6 + 10.0 * h
    radius = cfg.radius
    psi2 = psi_eval(2.0 * radius, cfg.kernel)
    lam = cfg.lam
    report = InequalityReport(tol=tol, radius=radius, psi_2R=psi2)
    names = ["confinement", "diameter_dini", "speed", "velocity", "rate_lower",
             "rate_upper", "rate_row_mean"]
    if cfg.rate_form is RateForm.SYMMETRIC:
        names.append("rate_unit")
    for name in names:
        report.checks[name] = CheckResult(name)
    round_tol = 1e-12

    cum = _cumulative_speed(traj)
    speed = traj.speed()
    n_nodes = traj.t.size
    for lo in range(0, n_nodes, CHUNK):
        hi = min(n_nodes, lo + CHUNK)
        t = traj.t[lo:hi]
        x = traj.x[lo:hi]
        d = diameter_series(x)
        rx = radius_series(x)
        report.checks["confinement"].update(t, radius * (1 + 1e-6) - rx, 0.0)
        lower = t - tau_eval(t, cfg.delay)
        sig = np.maximum(cumulative_speed_at(traj, t, cum) - cumulative_speed_at(traj, lower, cum), 0.0)
        # forward difference needs the next node
        nxt = min(n_nodes, hi + 1)
        d_next = diameter_series(traj.x[lo + 1:nxt])
        m = d_next.size
        dini = (d_next - d[:m]) / h
        rhs_dini = 2 * lam / psi2 * sig[:m] - lam * psi2 * d[:m]
        report.checks["diameter_dini"].update(t[:m], rhs_dini - dini, tol)
        spd = speed[lo:hi]
        report.checks["speed"].update(t, lam / psi2 * (sig + d) - spd, tol)

        xd = history_eval(traj, lower)
        lag = np.linalg.norm(xd - x, axis=-1).max(axis=-1)
        report.checks["velocity"].update(t, lam / psi2 * (lag + d) - spd, tol)

        a = rate_matrix(x, xd, cfg.kernel, cfg.rate_form)
        scale = max(1.0, 1.0 / psi2) * round_tol
        report.checks["rate_lower"].update(t, a.min(axis=(1, 2)) - psi2, scale)
        report.checks["rate_upper"].update(t, 1.0 / psi2 - a.max(axis=(1, 2)), scale)
        report.checks["rate_row_mean"].update(t, 1.0 - a.mean(axis=2).max(axis=1), round_tol)
        if cfg.rate_form is RateForm.SYMMETRIC:
            report.checks["rate_unit"].update(t, 1.0 - a.max(axis=(1, 2)), round_tol)

    if report.checks["confinement"].n_violations:
        report.notes.append("trajectory leaves the initial R-ball; the rate and a priori "
                            "bounds are outside their hypotheses")
    return report


# ---------------------------------------------------------------------------

def fit_decay_rate(times, d_X=None, window=None):
    """Least-squares slope of ln d_X on a time window.

    Accepts a :class:`DiagnosticsSeries` or explicit ``times, d_X`` arrays.
    Returns ``(gamma_hat, r_squared)`` with ``gamma_hat`` the negated slope.
    Points where d_X has reached exactly zero end the fit window.
    """
    if isinstance(times, DiagnosticsSeries):
        times, d_X = times.times, times.d_X
    t = np.asarray(times, dtype=float)
    d = np.asarray(d_X, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, d = t[sel], d[sel]
    if t.size == 0:
        raise ValueError("empty fit window")
    zero = np.nonzero(d <= 0)[0]
    if zero.size:
        t, d = t[:zero[0]], d[:zero[0]]
    if t.size < 2:
        raise ValueError("need at least two positive diameter samples in the window")
    y = np.log(d)
    if np.all(y == y[0]):
        return 0.0, 1.0
    tc = t - t.mean()
    slope = float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))
    resid = y - y.mean() - slope * tc
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    ss_res = float(np.dot(resid, resid))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return -slope, r2


def decay_window(times, d_X, lower_frac, upper_frac):
    """Time interval on which d_X first falls from ``upper_frac * d_X(0)``
    to ``lower_frac * d_X(0)``."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(d_X, dtype=float)
    d0 = d[0]
    start = time_to_threshold(t, d, upper_frac * d0)
    end = time_to_threshold(t, d, lower_frac * d0)
    if not np.isfinite(start) or not np.isfinite(end):
        raise ValueError("diameter never reaches the requested window")
    return start, end


def time_to_threshold(times, d_X, threshold):
    """First time at which d_X drops below ``threshold`` (inf if never)."""
    d = np.asarray(d_X, dtype=float)
    below = np.nonzero(d < threshold)[0]
    return float(np.asarray(times)[below[0]]) if below.size else float("inf")


def count_clusters(x, gap):
    """Number of opinion groups separated by more than ``gap``.

    In one dimension the sorted opinions are split at every consecutive
    difference exceeding ``gap``. For d > 1 the same rule generalizes to
    single-linkage clustering at distance ``gap``.
    """
    if not gap > 0:
        raise ValueError("gap must be positive")
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 1:
        return 1
    if x.shape[1] == 1:
        srt = np.sort(x[:, 0])
        return int(np.count_nonzero(np.diff(srt) > gap)) + 1
    labels = fcluster(linkage(x, method="single"), t=gap, criterion="distance")
    return int(labels.max())
