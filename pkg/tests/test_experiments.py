import json

import numpy as np
import pytest

import helpers
from delayhk import experiments
from delayhk.diagnostics import DiagnosticsSeries, count_clusters
from delayhk.experiments import ExperimentConfig, compare, preset_configs, run, verify_manifest


def test_presets_pin_the_reference_setting():
    for name in helpers.PRESET_NAMES:
        cfgs = preset_configs(name)
        assert [c.model.delay.tau_bar for c in cfgs] == [1.0, 5.0, 10.0, 50.0]
        for c in cfgs:
            m = c.model
            assert (m.n_agents, m.dimension, m.lam) == (10, 1, 1.0)
            assert m.initial_history.values[:, 0].tolist() == list(experiments.PRESET_HISTORY)
            assert m.kernel.beta_exponent == (1.0 if name in ("fig1", "fig3") else 3.0)
            assert m.rate_form.value == ("symmetric" if name in ("fig1", "fig2") else "normalized")
    horizons = {n: [c.t_end for c in preset_configs(n)] for n in helpers.PRESET_NAMES}
    assert horizons == {"fig1": [200, 200, 200, 300], "fig2": [1e4] * 4,
                        "fig3": [200, 200, 200, 300], "fig4": [3e3, 3e3, 3e3, 1e4]}
    with pytest.raises(ValueError):
        preset_configs("fig5")


def test_fig1_tau1_consensus():
    assert helpers.d_at(helpers.by_tau("fig1")[1.0], 200.0) < 0.1


def test_fig2_tau1_two_clusters():
    assert count_clusters(helpers.by_tau("fig2")[1.0].trajectory.x[-1], 1.0) == 2


def test_normalized_faster_than_symmetric_at_tau1():
    c = compare(helpers.by_tau("fig3")[1.0], helpers.by_tau("fig1")[1.0], "time_to_threshold")
    assert c.value_a < c.value_b and c.ratio < 1


def test_fig1_longer_delay_slower():
    c = compare(helpers.by_tau("fig1")[5.0], helpers.by_tau("fig1")[50.0], "time_to_threshold")
    assert c.value_b > c.value_a


def test_compare_trivial_cases():
    b = helpers.by_tau("fig1")[1.0]
    for metric in ("time_to_threshold", "final_diameter"):
        assert compare(b, b, metric).ratio == 1.0
    t = np.linspace(0, 10, 201)
    z = np.zeros_like(t)
    s1 = DiagnosticsSeries(t, np.exp(-t), z, z, z)
    s2 = DiagnosticsSeries(t, np.exp(-2 * t), z, z, z)
    c = compare(s1, s2, "decay_rate")
    assert c.ratio == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        compare(s1, s2, "wiggliness")
    late = DiagnosticsSeries(t + 1, np.exp(-t), z, z, z)
    with pytest.raises(ValueError):
        compare(s1, late)


def test_run_writes_bundle_with_checksums(tmp_path):
    cfg = preset_configs("fig3", output_dir=str(tmp_path), delays=(5.0,))[0]
    cfg.t_end = 40.0
    bundle = run(cfg)
    out = tmp_path / "fig3" / "tau_5"
    names = sorted(p.name for p in out.iterdir())
    assert names == ["bounds.json", "config.json", "diagnostics.csv", "manifest.json",
                     "trajectory.csv"]
    assert verify_manifest(out)
    assert json.loads((out / "bounds.json").read_text())["radius_R"] == 10.0
    assert ExperimentConfig.load(out / "config.json").to_dict() == cfg.to_dict()
    (out / "diagnostics.csv").write_text("tampered\n")
    assert not verify_manifest(out)
    assert bundle.confinement_ok()


def test_rerun_is_bitwise_identical(tmp_path):
    for tag in ("a", "b"):
        experiments.run_preset("fig1", output_dir=str(tmp_path / tag), delays=(10.0,))
    for f in ("trajectory.csv", "diagnostics.csv", "bounds.json"):
        a = (tmp_path / "a" / "fig1" / "tau_10" / f).read_bytes()
        b = (tmp_path / "b" / "fig1" / "tau_10" / f).read_bytes()
        assert a == b
    summary = json.loads((tmp_path / "a" / "fig1" / "summary.json").read_text())
    assert summary[0]["tau"] == 10.0


def test_strict_config():
    d = preset_configs("fig1")[0].to_dict()
    ExperimentConfig.from_dict(d)
    for bad in ({"t_ned": 3}, {"model": {**d["model"], "betta": 1}}):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({**d, **bad})
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**d, "t_end": -1})


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("HK_THREADS", "1")
    assert experiments.worker_count(4) == 1
    monkeypatch.setenv("HK_THREADS", "3")
    assert experiments.worker_count(2) == 2
