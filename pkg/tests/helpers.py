"""Shared, cached preset runs and the acceptance criteria as plain functions.

Each ``criterion_N`` returns ``(ok, detail)`` so that the pytest wrappers and
the standalone ``python tests/test_acceptance.py`` report share one code path.
"""

from __future__ import annotations

import functools
import math
import time

import numpy as np

from delayhk import experiments
from delayhk.diagnostics import (check_inequalities, count_clusters, decay_window, diameter,
                                 fit_decay_rate, time_to_threshold)
from delayhk.dynamics import HistorySpec, ModelConfig
from delayhk.integrator import solve
from delayhk.kernel import KernelSpec
from delayhk.meanfield import (EmpiricalMeasure, consistency_gap_series, stability_experiment,
                               wasserstein, wasserstein_oracle)
from delayhk.theory import TheoryInputs, beta_window, delay_bound, delay_bound_improved

PRESET_NAMES = ("fig1", "fig2", "fig3", "fig4")
RUNTIME_LIMIT = 60.0


@functools.lru_cache(maxsize=None)
def preset(name):
    """(bundles, wall seconds) for a preset at h = 1e-2, no files written."""
    start = time.perf_counter()
    bundles = experiments.run_preset(name, write=False)
    return bundles, time.perf_counter() - start


def by_tau(name):
    return {b.tau: b for b in preset(name)[0]}


def d_at(bundle, t):
    traj = bundle.trajectory
    k = int(np.argmin(np.abs(traj.t - t)))
    return diameter(traj.x[k])


# -- 1 ---------------------------------------------------------------------

def criterion_1():
    lines, ok = [], True
    for name in PRESET_NAMES:
        bundles, secs = preset(name)
        worst = max(float(np.abs(b.trajectory.x).max()) for b in bundles)
        radius = bundles[0].config.model.radius
        good = worst <= radius * (1 + 1e-6) and secs <= RUNTIME_LIMIT
        ok &= good
        lines.append(f"{name}: max|x|={worst:.6g} R={radius:g} time={secs:.1f}s")
    return ok, "; ".join(lines)


# -- 2 ---------------------------------------------------------------------

def criterion_2():
    total, lines = 0, []
    for name in PRESET_NAMES:
        for b in preset(name)[0]:
            rep = check_inequalities(b.trajectory)
            total += rep.n_violations
            lines.append(f"{name}/tau={b.tau:g}:{rep.n_violations}")
    return total == 0, f"violations={total} ({' '.join(lines)})"


# -- 3 ---------------------------------------------------------------------

def criterion_3():
    runs = by_tau("fig1")
    d200 = {tau: d_at(runs[tau], 200.0) for tau in (1.0, 5.0, 10.0)}
    d300 = d_at(runs[50.0], 300.0)
    ttt = {tau: time_to_threshold(b.series.times, b.series.d_X, 0.5)
           for tau, b in sorted(runs.items())}
    seq = [ttt[tau] for tau in sorted(ttt)]
    monotone = all(a <= b for a, b in zip(seq, seq[1:]))
    parts = {
        "d(200)|tau=1 < 0.1": d200[1.0] < 0.1,
        "d(200)|tau=5 < 1": d200[5.0] < 1,
        "d(200)|tau=10 < 1": d200[10.0] < 1,
        "d(300)|tau=50 < 5": d300 < 5,
        "time_to_threshold monotone": monotone,
    }
    failed = [k for k, v in parts.items() if not v]
    detail = (f"d200={ {k: float(f'{v:.3g}') for k, v in d200.items()} } d300={d300:.3g} "
              f"t(0.5)={ {k: round(v, 3) for k, v in ttt.items()} }")
    if failed:
        detail += " FAILED: " + ", ".join(failed)
    return not failed, detail


# -- 4 ---------------------------------------------------------------------

def criterion_4():
    counts = {b.tau: count_clusters(b.trajectory.x[-1], 1.0) for b in preset("fig2")[0]}
    return all(c == 2 for c in counts.values()), f"clusters by tau: {counts}"


# -- 5 ---------------------------------------------------------------------

def criterion_5():
    sym, nrm = by_tau("fig1"), by_tau("fig3")
    rows, ok = [], True
    for tau in (1.0, 5.0, 10.0):
        a = time_to_threshold(nrm[tau].series.times, nrm[tau].series.d_X, 0.5)
        b = time_to_threshold(sym[tau].series.times, sym[tau].series.d_X, 0.5)
        ok &= a < b
        rows.append(f"tau={tau:g}: normalized {a:.2f} vs symmetric {b:.2f}")
    return ok, "; ".join(rows)


# -- 6 ---------------------------------------------------------------------

def _mp_bounds(psi, c=0.0, lam=1.0):
    import mpmath
    mpmath.mp.dps = 50
    p = mpmath.mpf(psi)
    base = mpmath.log(1 + p ** 3 * (1 - c) / ((2 + p ** 2) * lam))
    improved = mpmath.log(1 + p * (1 - c) / ((2 + p) * lam))
    return base, improved


def iff_violations(n_draws=10_000, seed=7, tol=1e-12):
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_draws):
        inp = TheoryInputs(radius_R=float(rng.uniform(0.01, 20.0)),
                           c_bound=float(rng.uniform(0.0, 0.99)),
                           lam=float(10 ** rng.uniform(-2, 2)),
                           kernel=KernelSpec(float(rng.uniform(0.1, 5.0))))
        bound = delay_bound(inp)
        # half the draws straddle the bound closely, half are spread widely
        if rng.random() < 0.5:
            tau = bound * float(10 ** rng.uniform(-3, 1))
        else:
            tau = bound * (1 + float(rng.uniform(-1e-6, 1e-6)))
        if abs(tau - bound) <= tol * max(1.0, bound):
            continue
        nonempty = beta_window(inp, tau) is not None
        if nonempty != (tau < bound):
            bad += 1
    return bad


def criterion_6():
    bad = iff_violations()
    inp = TheoryInputs(radius_R=10.0, c_bound=0.0, lam=1.0, kernel=KernelSpec(1.0))
    ref_base, ref_imp = _mp_bounds(1 / 401)
    got_base, got_imp = delay_bound(inp), delay_bound_improved(inp)
    rel_b = abs(got_base - float(ref_base)) / float(ref_base)
    rel_i = abs(got_imp - float(ref_imp)) / float(ref_imp)
    ok = bad == 0 and rel_b < 5e-7 and rel_i < 5e-7
    return ok, (f"iff violations={bad}/10000; delay_bound={got_base:.9g} (mp {float(ref_base):.9g}, "
                f"rel {rel_b:.1e}); improved={got_imp:.9g} (mp {float(ref_imp):.9g}, rel {rel_i:.1e})")


# -- 7 ---------------------------------------------------------------------

def decay_rates(n_list=(10, 20, 40), seed=2024, t_end=25.0):
    rng = np.random.default_rng(seed)
    out = {}
    for n in n_list:
        hist = rng.uniform(-1.0, 1.0, size=(n, 1))
        probe = ModelConfig.build(hist, beta=1.0, tau=1.0)
        tau_bar = 0.5 * delay_bound(TheoryInputs.from_config(probe))
        cfg = ModelConfig.build(hist, beta=1.0, tau=tau_bar)
        tr = solve(cfg, t_end, 1e-2)
        d = np.ptp(tr.x[..., 0], axis=1)
        window = decay_window(tr.t, d, 1e-6, 1e-1)
        gamma, r2 = fit_decay_rate(tr.t, d, window)
        out[n] = (gamma, r2, tau_bar)
    return out


def criterion_7():
    rates = decay_rates()
    gammas = [g for g, _, _ in rates.values()]
    r2s = [r for _, r, _ in rates.values()]
    ok = min(r2s) > 0.99 and min(gammas) > 0 and max(gammas) / min(gammas) < 2
    detail = "; ".join(f"N={n}: gamma={g:.5f} r2={r:.7f} tau={t:.3g}"
                       for n, (g, r, t) in rates.items())
    return ok, detail


# -- 8 ---------------------------------------------------------------------

def wasserstein_corpus(n_instances=1000, seed=11):
    rng = np.random.default_rng(seed)
    for _ in range(n_instances):
        n = int(rng.integers(1, 6))
        scale = rng.uniform(0.1, 5.0)
        yield tuple(EmpiricalMeasure(scale * rng.normal(size=n)) for _ in range(3))


def criterion_8():
    worst, axiom_fail = 0.0, 0
    for mu, nu, rho in wasserstein_corpus():
        prev = None
        for p in (1.0, 2.0, math.inf):
            a = wasserstein(mu, nu, p)
            worst = max(worst, abs(a - wasserstein_oracle(mu, nu, p)))
            if wasserstein(mu, mu, p) != 0:
                axiom_fail += 1
            if abs(a - wasserstein(nu, mu, p)) > 1e-12:
                axiom_fail += 1
            if a > wasserstein(mu, rho, p) + wasserstein(rho, nu, p) + 1e-12:
                axiom_fail += 1
            if prev is not None and prev > a + 1e-12:
                axiom_fail += 1
            prev = a
    ok = worst <= 1e-12 and axiom_fail == 0
    return ok, f"max |sorted - brute force| = {worst:.2e}; axiom failures = {axiom_fail}"


# -- 9 ---------------------------------------------------------------------

def doubled(cfg):
    hist = cfg.initial_history
    vals = np.repeat(hist.values, 2, axis=0)
    return cfg.with_history(HistorySpec.constant(vals))


def gap_sup(traj, stride=None):
    if stride is None:
        stride = max(1, traj.t.size // 20_000)
    times = traj.t[::stride]
    return float(consistency_gap_series(traj, times).max())


def criterion_9():
    ok, rows = True, []
    for name in PRESET_NAMES:
        for b in preset(name)[0]:
            cfg = b.config.model
            bound = 2 * cfg.lam * cfg.radius / cfg.n_agents
            g = gap_sup(b.trajectory)
            ok &= g <= bound
            rows.append(f"{name}/tau={b.tau:g}: gap={g:.3g}<= {bound:g}")
    ratios = []
    for name in ("fig1", "fig3"):
        cfg = by_tau(name)[1.0].config.model
        g1 = gap_sup(solve(cfg, 100.0))
        g2 = gap_sup(solve(doubled(cfg), 100.0))
        ratios.append(g2 / g1)
    ok &= all(abs(r - 0.5) <= 0.1 for r in ratios)
    zero_cfg = ModelConfig.build(np.array(experiments.PRESET_HISTORY)[:, None], beta=1.0, tau=0.0)
    g0 = gap_sup(solve(zero_cfg, 50.0), stride=1)
    ok &= g0 == 0.0
    rows.append(f"doubling ratios={[round(r, 3) for r in ratios]}; gap(tau=0)={g0}")
    return ok, "; ".join(rows)


# -- 10 --------------------------------------------------------------------

def criterion_10():
    cfg = by_tau("fig1")[1.0].config.model
    trans = stability_experiment(cfg, 0.1, p=2.0, t_end=50.0, kind="translation")
    amps = [stability_experiment(cfg, eps, p=2.0, t_end=50.0, kind="ramp").amplification
            for eps in (1e-1, 1e-2, 1e-3)]
    ok = abs(trans.amplification - 1.0) <= 1e-8 and max(amps) / min(amps) <= 3.0
    return ok, (f"translation amplification={trans.amplification!r}; "
                f"ramp amplifications={[round(a, 4) for a in amps]}")


# -- 11 --------------------------------------------------------------------

def order_factors(t_end=5.0, h0=0.1):
    hist = np.array([[-1.0], [0.3], [2.0]])
    cfg = ModelConfig.build(hist, beta=1.0, tau=1.0)
    ref = solve(cfg, t_end, h0 / 128).x[-1]
    errs = [float(np.abs(solve(cfg, t_end, h0 / 2 ** k).x[-1] - ref).max()) for k in range(4)]
    return errs, [errs[k] / errs[k + 1] for k in range(3)]


def mean_drift():
    cfg = ModelConfig.build(np.array(experiments.PRESET_HISTORY)[:, None], beta=1.0, tau=0.0)
    tr = solve(cfg, 100.0)
    s = tr.x.sum(axis=(1, 2))
    return float(np.abs(s - s[0]).max())


def criterion_11():
    _, factors = order_factors()
    drift = mean_drift()
    ok = all(12 <= f <= 20 for f in factors) and drift <= 1e-8
    return ok, f"factors={[round(f, 3) for f in factors]}; mean drift={drift:.2e}"


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}
RESULTS = {}


def evaluate(i):
    ok, detail = CRITERIA[i]()
    RESULTS[i] = (ok, detail)
    return ok, detail
