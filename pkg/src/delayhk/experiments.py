"""Named presets for the four reference figure settings, config-driven runs and
comparison metrics.

Every preset uses lam = 1, N = 10, d = 1 and the constant integer histories
below, with psi(r) = (1 + r^2)^-beta:

    fig1  symmetric   beta = 1   t_end = 200 (300 for tau = 50)
    fig2  symmetric   beta = 3   t_end = 1e4
    fig3  normalized  beta = 1   t_end = 200 (300 for tau = 50)
    fig4  normalized  beta = 3   t_end = 3e3 (1e4 for tau = 50)

each for tau in {1, 5, 10, 50}.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .diagnostics import (DiagnosticsSeries, compute_series, count_clusters, fit_decay_rate,
                          time_to_threshold)
from .dynamics import ModelConfig
from .integrator import DEFAULT_STEP, Trajectory, solve
from .theory import bounds_report

PRESET_HISTORY = (-3.0, 7.0, 5.0, -6.0, -1.0, -8.0, -4.0, -5.0, 10.0, 1.0)
PRESET_DELAYS = (1.0, 5.0, 10.0, 50.0)

PRESETS = {
    "fig1": {"rate_form": "symmetric", "beta": 1.0, "horizon": {50.0: 300.0}, "default": 200.0},
    "fig2": {"rate_form": "symmetric", "beta": 3.0, "horizon": {}, "default": 1e4},
    "fig3": {"rate_form": "normalized", "beta": 1.0, "horizon": {50.0: 300.0}, "default": 200.0},
    "fig4": {"rate_form": "normalized", "beta": 3.0, "horizon": {50.0: 1e4}, "default": 3e3},
}

# trajectory CSVs of presets are thinned to at most about this many rows
PRESET_MAX_ROWS = 100_000


def worker_count(n_jobs):
    cap = os.environ.get("HK_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(limit, n_jobs))


@dataclass
class ExperimentConfig:
    model: ModelConfig
    t_end: float
    h: float = DEFAULT_STEP
    output_dir: Optional[str] = None
    preset: str = "custom"
    seed: int = 0
    output_stride: int = 1
    radius_override: Optional[float] = None
    beta_weight: Optional[float] = None
    study: Optional[dict] = None

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.preset not in ("custom", *PRESETS):
            raise ValueError(f"unknown preset {self.preset!r}")
        if self.output_stride < 1:
            raise ValueError("output_stride must be >= 1")

    def to_dict(self):
        d = {
            "model": self.model.to_dict(),
            "t_end": self.t_end,
            "h": self.h,
            "output_dir": self.output_dir,
            "preset": self.preset,
            "seed": self.seed,
            "output_stride": self.output_stride,
        }
        for key in ("radius_override", "beta_weight", "study"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        allowed = {"model", "t_end", "h", "output_dir", "preset", "seed", "output_stride",
                   "radius_override", "beta_weight", "study"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown config keys: {sorted(extra)}")
        if "model" not in d or "t_end" not in d:
            raise ValueError("config needs 'model' and 't_end'")
        d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def preset_configs(name, h=DEFAULT_STEP, output_dir=None, delays=PRESET_DELAYS):
    """One :class:`ExperimentConfig` per delay of a named preset."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    spec = PRESETS[name]
    out = []
    for tau in delays:
        tau = float(tau)
        t_end = spec["horizon"].get(tau, spec["default"])
        model = ModelConfig.build(np.array(PRESET_HISTORY)[:, None], lam=1.0, beta=spec["beta"],
                                  rate_form=spec["rate_form"], tau=tau)
        n_nodes = t_end / h
        stride = max(1, int(math.ceil(n_nodes / PRESET_MAX_ROWS)))
        sub_dir = None if output_dir is None else str(Path(output_dir) / name / f"tau_{tau:g}")
        out.append(ExperimentConfig(model=model, t_end=t_end, h=h, output_dir=sub_dir,
                                    preset=name, output_stride=stride))
    return out


@dataclass
class RunBundle:
    config: ExperimentConfig
    trajectory: Trajectory
    series: DiagnosticsSeries
    bounds: dict
    files: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    @property
    def tau(self):
        return self.config.model.delay.tau_bar

    def summary(self):
        s = self.series
        x_end = self.trajectory.x[-1]
        return {
            "preset": self.config.preset,
            "tau": self.tau,
            "t_end": float(self.trajectory.t[-1]),
            "h": self.trajectory.h,
            "final_diameter": float(s.d_X[-1]),
            "max_radius": float(s.R_X.max()),
            "radius_R": self.config.model.radius,
            "time_to_threshold_0.5": time_to_threshold(s.times, s.d_X, 0.5),
            "clusters_gap_1": count_clusters(x_end, 1.0),
        }

    def confinement_ok(self):
        r = self.config.model.radius
        return bool(np.linalg.norm(self.trajectory.x, axis=-1).max() <= r * (1 + 1e-6))


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def run(cfg: ExperimentConfig, write=True) -> RunBundle:
    """Solve, compute diagnostics and theory bounds; optionally write the
    trajectory CSV, diagnostics CSV, bounds JSON and a manifest with
    SHA-256 checksums to ``cfg.output_dir``."""
    traj = solve(cfg.model, cfg.t_end, cfg.h)
    series = compute_series(traj, beta_weight=cfg.beta_weight, stride=cfg.output_stride)
    bounds = bounds_report(cfg.model, cfg.radius_override)
    bundle = RunBundle(cfg, traj, series, bounds)
    if write and cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "trajectory": out / "trajectory.csv",
            "diagnostics": out / "diagnostics.csv",
            "bounds": out / "bounds.json",
            "config": out / "config.json",
        }
        traj.to_csv(paths["trajectory"], stride=cfg.output_stride)
        series.to_csv(paths["diagnostics"])
        with open(paths["bounds"], "w") as fh:
            json.dump(bounds, fh, indent=2)
        cfg.dump(paths["config"])
        manifest = {
            "config": cfg.to_dict(),
            "step_used": traj.h,
            "n_nodes": int(traj.t.size),
            "summary": bundle.summary(),
            "files": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in paths.items()},
        }
        with open(out / "manifest.json", "w") as fh:
            json.dump(manifest, fh, indent=2)
        bundle.files = {k: str(p) for k, p in paths.items()}
        bundle.manifest = manifest
    return bundle


def run_preset(name, output_dir=None, h=DEFAULT_STEP, delays=PRESET_DELAYS, write=True):
    """All sub-runs of a preset, concurrently (capped by HK_THREADS)."""
    cfgs = preset_configs(name, h=h, output_dir=output_dir, delays=delays)
    with ThreadPoolExecutor(max_workers=worker_count(len(cfgs))) as pool:
        bundles = list(pool.map(lambda c: run(c, write=write), cfgs))
    if write and output_dir:
        summary = [b.summary() for b in bundles]
        target = Path(output_dir) / name
        target.mkdir(parents=True, exist_ok=True)
        with open(target / "summary.json", "w") as fh:
            json.dump(summary, fh, indent=2)
    return bundles


def verify_manifest(directory):
    """True when every file listed in a run manifest matches its checksum."""
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    return all(_sha256(directory / entry["path"]) == entry["sha256"]
               for entry in manifest["files"].values())


# ---------------------------------------------------------------------------

@dataclass
class Comparison:
    metric: str
    value_a: float
    value_b: float
    ratio: float
    difference: float


def _series_of(run_or_series):
    if isinstance(run_or_series, RunBundle):
        return run_or_series.series
    if isinstance(run_or_series, DiagnosticsSeries):
        return run_or_series
    raise TypeError("expected a RunBundle or DiagnosticsSeries")


def compare(run_a, run_b, metric="time_to_threshold", threshold=0.5, window=None):
    """Evaluate one metric on two runs over their common time range.

    ``ratio`` is a / b and ``difference`` a - b.
    """
    sa, sb = _series_of(run_a), _series_of(run_b)
    if sa.times[0] != sb.times[0]:
        raise ValueError("runs start at different times")
    end = min(sa.times[-1], sb.times[-1])
    if not end > sa.times[0]:
        raise ValueError("runs share no time range")

    def value(s):
        keep = s.times <= end * (1 + 1e-12)
        t, d = s.times[keep], s.d_X[keep]
        if metric == "time_to_threshold":
            return time_to_threshold(t, d, threshold)
        if metric == "final_diameter":
            return float(d[-1])
        if metric == "decay_rate":
            return fit_decay_rate(t, d, window)[0]
        raise ValueError(f"unknown metric {metric!r}")

    a, b = value(sa), value(sb)
    if a == b:
        ratio = 1.0
    else:
        ratio = a / b if b != 0 else math.inf
    diff = a - b if not (math.isinf(a) and math.isinf(b)) else 0.0
    return Comparison(metric, a, b, ratio, diff)
