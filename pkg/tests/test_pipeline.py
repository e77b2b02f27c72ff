import math

import numpy as np
import pytest

from acoustopt import pipeline
from acoustopt.errors import ConfigurationError


def test_linear_run_bookkeeping(tiny_cfg):
    rec = pipeline.run_linear(tiny_cfg)
    n_guesses = len(tiny_cfg.initial_guesses)
    assert rec.tuning_epochs == n_guesses * tiny_cfg.tuning_epochs
    assert rec.stage1_epochs == tiny_cfg.stage1_epochs
    assert 1 <= rec.stage2_epochs <= tiny_cfg.stage2_max_epochs + 1
    assert len(rec.history) == rec.stage1_epochs + rec.stage2_epochs
    assert [h["epoch"] for h in rec.history] == list(range(len(rec.history)))
    assert [h["stage"] for h in rec.history] == [1] * rec.stage1_epochs + [2] * rec.stage2_epochs
    assert set(np.unique(rec.final_design)) <= {0.0, 1.0}
    assert rec.info["initial_guess"] in tiny_cfg.initial_guesses
    assert all(math.isfinite(v) for v in rec.lp_values())


def test_stage_two_executes_one_plus_multiple_of_check_period(tiny_cfg):
    cfg = tiny_cfg.replace(stage2_max_epochs=25, stage2_factor=0.0, initial_guess=0.5)
    rec = pipeline.run_linear(cfg)
    # an unreachable stopping threshold runs to the final permitted epoch
    assert rec.stage2_epochs == 26
    cfg = cfg.replace(stage2_factor=1e9)
    assert pipeline.run_linear(cfg).stage2_epochs == 1


def test_beta_schedule_in_history(tiny_cfg):
    rec = pipeline.run_linear(tiny_cfg.replace(initial_guess=0.5))
    betas = [h["beta"] for h in rec.history if h["stage"] == 1]
    np.testing.assert_allclose(betas, 1.02 ** np.arange(len(betas)), rtol=1e-15)
    s2 = [h["beta"] for h in rec.history if h["stage"] == 2]
    assert s2[0] == pytest.approx(min(betas[-1] * 1.02, 150.0))


def test_stage_two_disabled(tiny_cfg):
    rec = pipeline.run_linear(tiny_cfg.replace(stage2_max_epochs=0, initial_guess=1.0))
    assert rec.stage2_epochs == 0 and rec.design_stage2 is None
    assert math.isnan(rec.lp_stage2)
    assert rec.tuning_epochs == 0


def test_runs_are_deterministic(tiny_cfg):
    a = pipeline.run_linear(tiny_cfg)
    b = pipeline.run_linear(tiny_cfg)
    assert a.lp_final == b.lp_final
    assert [h["C"] for h in a.history] == [h["C"] for h in b.history]


def test_evaluate_design_requires_binary(tiny_cfg):
    shape = tiny_cfg.grid().design_shape
    lp, C = pipeline.evaluate_design(np.zeros(shape), tiny_cfg)
    assert lp == pytest.approx(pipeline.sound_pressure_level(C, tiny_cfg.p_ref))
    with pytest.raises(ConfigurationError):
        pipeline.evaluate_design(np.full(shape, 0.5), tiny_cfg)


def test_parallel_map_matches_serial():
    items = list(range(5))
    assert pipeline.parallel_map(abs, items, workers=2) == pipeline.parallel_map(abs, items, workers=1)


def test_nn_run_untuned_uses_default_alpha(unet_cfg):
    rec = pipeline.run_nn(unet_cfg, tune=False)
    assert rec.epoch_triple == (0, 2, 0)
    assert rec.info["alpha"] == unet_cfg.alpha_nn
    assert rec.info["seed"] == unet_cfg.seeds[0]
    # lr decay is recorded per update
    assert rec.history[1]["alpha"] == pytest.approx(unet_cfg.alpha_nn * 1.2 ** -0.5)


def test_nn_tuning_epochs(unet_cfg):
    cfg = unet_cfg.replace(seeds=(0, 1), alpha_grid=(1e-5, 2e-5), stage1_epochs=1)
    rec = pipeline.run_nn(cfg)
    assert rec.tuning_epochs == 2 * 2 * cfg.tuning_epochs
    assert set(rec.info["tuning_costs"]) == {(0, 1e-5), (0, 2e-5), (1, 1e-5), (1, 2e-5)}
    best = min(rec.info["tuning_costs"], key=rec.info["tuning_costs"].get)
    assert (rec.info["seed"], rec.info["alpha"]) == best


def test_bypass_runs_skip_stage_two(unet_cfg):
    lin, nn_ = pipeline.bypass_runs(unet_cfg.replace(stage2_max_epochs=10, tuning_epochs=1))
    for rec in (lin, nn_):
        assert rec.stage2_epochs == 0
        assert math.isfinite(pipeline.thresholding_penalty(rec))
    assert nn_.tuning_epochs == 0
