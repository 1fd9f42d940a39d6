"""Command line front end.

    delayhk simulate --config run.json
    delayhk preset fig1 --out results/
    delayhk bounds --config run.json
    delayhk study --kind stability --config study.json
    delayhk verify --config run.json | --preset fig2

Exit status: 0 success, 2 invariant violation, 1 error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import experiments, meanfield
from .diagnostics import check_inequalities
from .experiments import ExperimentConfig
from .integrator import solve
from .theory import bounds_report

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def _emit(obj):
    print(json.dumps(obj, indent=2, default=_jsonable))


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return str(v)
    if hasattr(v, "tolist"):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v)}")


def cmd_simulate(args):
    cfg = ExperimentConfig.load(args.config)
    if args.out:
        cfg.output_dir = args.out
    bundle = experiments.run(cfg)
    _emit(bundle.summary())
    return EXIT_OK if bundle.confinement_ok() else EXIT_VIOLATION


def cmd_preset(args):
    bundles = experiments.run_preset(args.name, output_dir=args.out, h=args.h)
    _emit([b.summary() for b in bundles])
    return EXIT_OK if all(b.confinement_ok() for b in bundles) else EXIT_VIOLATION


def cmd_bounds(args):
    cfg = ExperimentConfig.load(args.config)
    _emit(bounds_report(cfg.model, cfg.radius_override))
    return EXIT_OK


def cmd_study(args):
    cfg = ExperimentConfig.load(args.config)
    study = dict(cfg.study or {})
    out = Path(args.out or cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    p = float(study.pop("p", 2.0))
    if args.kind == "stability":
        eps = float(study.pop("perturbation", 1e-2))
        pattern = study.pop("pattern", "ramp")
        if study:
            raise ValueError(f"unknown stability keys: {sorted(study)}")
        res = meanfield.stability_experiment(cfg.model, eps, p=p, t_end=cfg.t_end, h=cfg.h,
                                             kind=pattern, stride=cfg.output_stride)
        res.to_csv(out / "stability.csv")
        _emit({"amplification": res.amplification, "initial_distance": res.initial_distance,
               "sup_distance": float(res.distances.max()),
               "outside_hypotheses": res.outside_hypotheses})
        return EXIT_OK
    n_list = study.pop("n_list", [10, 20, 40, 80])
    sampler_spec = dict(study.pop("sampler", {"kind": "uniform", "low": -1.0, "high": 1.0}))
    if study:
        raise ValueError(f"unknown convergence keys: {sorted(study)}")
    kind = sampler_spec.pop("kind")
    if kind == "uniform":
        sampler = meanfield.uniform_sampler(**sampler_spec)
    elif kind == "point_mass":
        sampler = meanfield.point_mass_sampler(**sampler_spec)
    else:
        raise ValueError(f"unknown sampler {kind!r}")
    rows = meanfield.convergence_study(cfg.model, sampler, n_list, p=p, t_end=cfg.t_end,
                                       seed=cfg.seed, h=cfg.h)
    meanfield.write_convergence_csv(rows, out / "convergence.csv")
    _emit([{"N": r.n, "p": r.p, "sup_dp": r.sup_dp} for r in rows])
    return EXIT_OK


def cmd_verify(args):
    if args.preset:
        cfgs = experiments.preset_configs(args.preset)
    elif args.config:
        cfgs = [ExperimentConfig.load(args.config)]
    else:
        raise ValueError("verify needs --config or --preset")
    reports = []
    for cfg in cfgs:
        rep = check_inequalities(solve(cfg.model, cfg.t_end, cfg.h))
        reports.append({"tau": cfg.model.delay.tau_bar, **rep.to_dict()})
    _emit(reports)
    return EXIT_OK if all(r["n_violations"] == 0 for r in reports) else EXIT_VIOLATION


def build_parser():
    parser = argparse.ArgumentParser(prog="delayhk", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_dir")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("preset", help="reproduce a figure preset")
    p.add_argument("name", choices=sorted(experiments.PRESETS))
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=float, default=experiments.DEFAULT_STEP)
    p.set_defaults(func=cmd_preset)

    p = sub.add_parser("bounds", help="print delay bounds and weight window")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("study", help="mean-field stability or convergence study")
    p.add_argument("--kind", choices=["stability", "convergence"], required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("verify", help="check the analysis inequalities along a run")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--config")
    grp.add_argument("--preset", choices=sorted(experiments.PRESETS))
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
