"""Sweep harness: config parsing, schemes, determinism and output round trips."""
import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import pytest

from risee.allocator import evaluate_allocation
from risee.channels import dbm_to_watt, generate_scenario
from risee.experiment import (PRESETS, SCHEMES, ConfigError, aggregate, config_from_dict, emit,
                              emit_summary, load_config, load_records, run_scheme, run_sweep,
                              run_trial, trial_seed)
from risee.model import RisMode, check_feasibility

TINY = {"N": 4, "trials": 2, "timing": False, "solver": {"max_sca": 10}}


def tiny(**kw):
    data = dict(TINY)
    data.update(kw)
    return config_from_dict(data, "desk")


def test_presets_and_units():
    paper = config_from_dict({}, "paper")
    assert (paper.K, paper.N_B, paper.N, paper.trials) == (4, 4, 100, 1000)
    desk = config_from_dict({}, "desk")
    assert (desk.K, desk.N_B, desk.N, desk.trials) == (2, 2, 16, 50)
    cfg = config_from_dict({"p_tmax_dbm": 20.0, "sweep": {"variable": "NEV", "grid": [-10, 10]}}, "desk")
    assert cfg.p_tmax == pytest.approx(0.1)
    assert cfg.grid_linear == pytest.approx((0.1, 10.0))
    assert set(PRESETS) == {"paper", "desk"}
    # the transmit budget is shared: every user may spend P_tmax / K
    np.testing.assert_allclose(cfg.params().p_max, [0.05, 0.05])
    assert np.sum(paper.params(p_tmax=2.0).p_max) == pytest.approx(2.0)


@pytest.mark.parametrize("bad", [
    {"unknown": 1},
    {"sweep": {"variable": "nope"}},
    {"sweep": {"variable": "quant_bits", "grid": [1.5]}},
    {"schemes": ["z"]},
    {"trials": 0},
    {"solver": {"tolerance": 1}},
    {"sweep": {"variable": "NEV", "grid": []}},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad, "desk")


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    good = tmp_path / "good.json"
    good.write_text(json.dumps({"K": 3}))
    assert load_config(good, "desk").K == 3


def test_config_echo_roundtrip():
    cfg = tiny(p_tmax_dbm=17.0, sweep={"variable": "P_c_n_active", "grid": [0, 20]})
    again = config_from_dict(cfg.to_dict(), "paper")
    assert again == cfg


@pytest.mark.parametrize("tag", SCHEMES)
def test_every_scheme_is_feasible(tag):
    cfg = tiny()
    params = cfg.params(p_tmax=float(dbm_to_watt(20.0)))
    ch, _ = generate_scenario(params, cfg.geometry, cfg.fading, 3, cfg.error_ratio)
    out = run_scheme(tag, ch, params, cfg.solver, (4, 2), seed=3)
    assert check_feasibility(out.alloc, ch, params).feasible
    assert math.isfinite(evaluate_allocation(out.alloc, ch, params).see_true)
    with pytest.raises(ValueError):
        run_scheme("x", ch, params)


def test_trial_records_cover_the_grid():
    cfg = tiny(schemes=["a", "g"], sweep={"variable": "P_tmax", "grid": [0, 20]})
    recs = run_trial(cfg, 0)
    assert sorted((r.sweep_value, r.scheme) for r in recs) == [(0, "a"), (0, "g"), (20, "a"), (20, "g")]
    assert all(r.seed == trial_seed(cfg.seed, 0) and not r.failed for r in recs)


def test_passive_rows_are_shared_across_the_grid():
    cfg = tiny(schemes=["a"], sweep={"variable": "P_c_n_active", "grid": [0, 30]})
    recs = run_trial(cfg, 0)
    passive = [r for r in recs if r.ris_mode == RisMode.PASSIVE.value]
    active = [r for r in recs if r.ris_mode == RisMode.ACTIVE.value]
    assert len(passive) == len(active) == 2
    assert passive[0].see_true == passive[1].see_true
    assert active[0].see_true > active[1].see_true


def test_quantization_rows():
    cfg = tiny(schemes=["a"], sweep={"variable": "quant_bits", "grid": [0, 1, 4]})
    recs = {r.sweep_value: r for r in run_trial(cfg, 0)}
    assert recs[0].see_true >= recs[1].see_true
    assert recs[4].see_true == pytest.approx(recs[0].see_true, rel=0.2)


def test_sweep_is_deterministic_and_thread_independent(tmp_path):
    cfg = tiny(schemes=["a", "g"], sweep={"variable": "NEV", "grid": [-10, 10]})
    one = run_sweep(cfg, threads=1)
    two = run_sweep(cfg, threads=2)
    assert one == two
    a = emit(one, tmp_path / "a.csv", "csv", cfg)
    b = emit(run_sweep(cfg), tmp_path / "b.csv", "csv", cfg)
    assert a.read_bytes() == b.read_bytes()


def test_output_roundtrip(tmp_path):
    cfg = tiny(schemes=["a", "g"], sweep={"variable": "P_tmax", "grid": [10]})
    recs = run_sweep(cfg)
    for fmt in ("csv", "json"):
        path = emit(recs, tmp_path / f"r.{fmt}", fmt, cfg)
        back = load_records(path)
        assert [r.scheme for r in back] == [r.scheme for r in recs]
        np.testing.assert_allclose([r.see_true for r in back], [r.see_true for r in recs], rtol=1e-8)
    doc = json.loads((tmp_path / "r.json").read_text())
    assert doc["config"]["K"] == cfg.K
    rows = aggregate(recs)
    assert {r.scheme for r in rows} == {"a", "g"} and all(r.n == 2 for r in rows)
    emit_summary(rows, tmp_path / "s.csv", "csv", cfg)
    assert (tmp_path / "s.csv").read_text().startswith("scheme,ris_mode,sweep_value,n,n_failed")


def test_aggregate_excludes_failed_records():
    cfg = tiny(schemes=["g"], sweep={"variable": "P_tmax", "grid": [10]})
    recs = run_sweep(cfg)
    broken = dataclasses.replace(recs[0], see_true=math.nan, flags="failed: test")
    rows = aggregate([broken] + recs[1:])
    assert rows[0].n == 1 and rows[0].n_failed == 1
    assert rows[0].mean["see_true"] == pytest.approx(recs[1].see_true)


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parent.parent / "configs").glob("*.json")),
                         ids=lambda p: p.stem)
@pytest.mark.parametrize("preset", list(PRESETS))
def test_shipped_configs_parse(path, preset):
    cfg = load_config(path, preset)
    assert cfg.grid and cfg.schemes
