"""Evaluation under common random numbers and benchmark tables."""

from dataclasses import replace

import numpy as np
import pytest

from wncs import harness
from wncs.config import ConfigError, ExperimentConfig, load_config
from wncs.drl import Td3Config
from wncs.harness import (SchedulerControllerPolicy, evaluate, parse_scales, run_benchmark_suite,
                          run_sweep)
from wncs.lqr import ConvergenceError, riccati_standard

FAST = ExperimentConfig(K=3, M=3, N=3, L=3, eval_episodes=8, eval_steps=40, loss_warmup_episodes=2,
                        td3=Td3Config(episodes=2, steps=20, hidden=(8, 6, 4), warmup_steps=20, batch_size=8))


def _lqr(world, sched="random"):
    return SchedulerControllerPolicy(world, sched, riccati_standard(world.system, 0.99))


def test_evaluate_is_reproducible(world3):
    a = evaluate(world3, _lqr(world3), 5, 30, seed=3)
    b = evaluate(world3, _lqr(world3), 5, 30, seed=3)
    assert np.array_equal(a.episode_costs, b.episode_costs)
    assert a.to_dict() == b.to_dict()


def test_beta_zero_is_first_slot(world3):
    rec = []
    rep = evaluate(world3, _lqr(world3), 3, 10, seed=0, beta=0.0, record=rec)
    first = [r["total"] for r in rec if r["slot"] == 0]
    assert np.allclose(rep.discounted_costs, first)
    assert len(rec) == 30


def test_components_add_up(world3):
    rep = evaluate(world3, _lqr(world3, "aoi_greedy"), 4, 25, seed=1)
    s = rep.component_sums
    assert s["est_cost"] + s["ctrl_cost"] + s["state_cost"] == pytest.approx(s["overall"])
    assert rep.component_slot_means["overall"] == pytest.approx(s["overall"] / 25)
    assert rep.ci_halfwidth > 0


def test_zero_input_is_worst(world3):
    zero = evaluate(world3, SchedulerControllerPolicy(world3, "random", None), 10, 100, seed=2)
    lqr = evaluate(world3, _lqr(world3, "csi_greedy"), 10, 100, seed=2)
    assert lqr.mean_cost < zero.mean_cost


def test_suite_rows_and_repeatability():
    pairs = (("random", "zero"), ("csi_greedy", "standard_lqr"), ("aoi_greedy", "modified_lqr"))
    cfg = replace(FAST, pairs=pairs)
    rows = run_benchmark_suite(cfg)
    assert len(rows) == 3
    assert rows[1]["overall"] < rows[0]["overall"]
    assert run_benchmark_suite(cfg) == rows


def test_suite_reports_not_converge(monkeypatch):
    def boom(*a, **k):
        raise ConvergenceError("diverged", 1e13, 5)

    monkeypatch.setattr(harness, "riccati_modified", boom)
    rows = run_benchmark_suite(replace(FAST, pairs=(("random", "modified_lqr"),)))
    assert rows[0]["overall"] == "not converge"


def test_learned_pairs_run():
    pairs = (("gca", "gca"), ("round_robin", "td3"), ("td3_priority", "td3"), ("td3_priority", "standard_lqr"))
    rows = run_benchmark_suite(replace(FAST, pairs=pairs, eval_episodes=2))
    assert [r["scheduler"] for r in rows] == [p[0] for p in pairs]
    assert all(np.isfinite(r["overall"]) for r in rows)


def test_unsupported_pair(world3):
    with pytest.raises(ValueError):
        harness.build_policy(world3, FAST, "gca", "zero")


def test_parse_scales():
    assert parse_scales("4,5,6;5,5,5") == [(4, 5, 6), (5, 5, 5)]
    assert parse_scales(" 4,5,6 ; ") == [(4, 5, 6)]


def test_sweep_blocks():
    cfg = replace(FAST, pairs=(("csi_greedy", "standard_lqr"),), eval_episodes=2, eval_steps=10)
    blocks = run_sweep(cfg, [(2, 2, 3), (3, 3, 3)])
    assert [b[0] for b in blocks] == [(2, 2, 3), (3, 3, 3)]
    assert blocks[0][1][0]["scale"] == "(2,2,3)"


def test_config_roundtrip_and_errors(tmp_path):
    d = FAST.to_dict()
    assert ExperimentConfig.from_dict(d) == FAST
    assert ExperimentConfig.from_dict(d).config_hash() == FAST.config_hash()
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"eval_epsiodes": 3})
    assert e.value.key == "eval_epsiodes"
    with pytest.raises(ConfigError) as e:
        ExperimentConfig.from_dict({"td3": {"lr_actor": 1}})
    assert e.value.key == "td3.lr_actor"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"L": 9, "M": 2, "N": 2})
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
