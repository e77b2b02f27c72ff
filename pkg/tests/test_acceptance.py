"""Acceptance criteria, one PASS/FAIL line each (repeated in the pytest summary).

Scaled setup for the NN criteria: reference room on 144 x 72 voxels (the
smallest grid the U-net accepts), filter radius of two voxels, 20 tuning epochs
and NN learning rates 8x the full-grid ones (tuning there always picked the
largest full-grid value).  The statistical study reuses the networks pretrained
on the reference room for the moved source and quiet zone.
Set ``ACOUSTOPT_FULL=1`` to also run the full-resolution linear reproduction.
"""

import math
import os
import time

import numpy as np
import pytest
from test_fem import dense_reference
from test_nn import fd_check

from acoustopt import bench, nn, pipeline, transfer
from acoustopt.adjoint import evaluate, frequency_response
from acoustopt.config import GENERALIZATION_SETUP, RunConfig
from acoustopt.fem import HelmholtzModel, MaterialFields, natural_frequencies
from acoustopt.filters import (FilterProjection, ProjectionParams, beta_schedule, build_filter, density_filter,
                               project)
from acoustopt.geometry import Discretization, ProblemSetup, build_grid
from acoustopt.nn import engine as E

F_TEST = 69.43
SCALED = RunConfig(nx=144, ny=72, filter_radius=0.25, tuning_epochs=20, pretrain_epochs=600,
                   alpha_grid=(8e-5, 1.6e-4, 3.2e-4), alpha_nn=1.6e-4)
STATS_FREQS = (76.30, 95.37)
STATS_RUNS = 10


class Pretrained:
    """Scaled-setup dataset and pretrained U-nets, built on first use and shared."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dataset = None
        self.weights = {}

    def source(self, seeds):
        if self.dataset is None:
            self.dataset = transfer.generate_dataset(self.cfg)
        missing = tuple(s for s in seeds if s not in self.weights)
        if missing:
            self.weights.update(transfer.pretrain_seeds(self.cfg, self.dataset, missing).weights)
        return transfer.PretrainedSource(self.cfg.grid().design_shape,
                                         {s: self.weights[s] for s in seeds})


@pytest.fixture(scope="module")
def pretrained():
    return Pretrained(SCALED)


def test_c1_adjoint_gradient(report):
    t0 = time.perf_counter()
    model = HelmholtzModel(Discretization(build_grid(ProblemSetup(), 24, 12), 2, 2))
    rng = np.random.default_rng(2024)
    z = rng.uniform(0.0, 1.0, model.grid.design_shape)
    ev = evaluate(model, z, F_TEST)
    h = 1e-6
    flat = rng.choice(z.size, size=20, replace=False)
    worst = 0.0
    for k in flat:
        j, i = np.unravel_index(k, z.shape)
        zp, zm = z.copy(), z.copy()
        zp[j, i] = min(z[j, i] + h, 1.0)
        zm[j, i] = max(z[j, i] - h, 0.0)
        fd = (evaluate(model, zp, F_TEST, False).C - evaluate(model, zm, F_TEST, False).C) / (zp[j, i] - zm[j, i])
        worst = max(worst, abs(ev.gradient[j, i] - fd) / abs(fd))
    dt = time.perf_counter() - t0
    ok = report(1, worst <= 1e-4 and dt < 30, f"max rel error {worst:.2e} on 20 voxels (<= 1e-4), {dt:.1f} s (< 30 s)")
    assert ok


def test_c2_preintegration_oracle(report, small_setup):
    rng = np.random.default_rng(5)
    errs = {}
    for q, n_v in [(1, 1), (2, 2), (2, 4), (4, 4)]:
        grid = build_grid(small_setup, 8 * n_v, 4 * n_v)
        model = HelmholtzModel(Discretization(grid, q, n_v))
        rho, kap = 0.1 + rng.random(grid.shape), 0.1 + rng.random(grid.shape)
        sys_ = model.assemble(MaterialFields(rho, kap), 1.0)
        K_ref, M_ref = dense_reference(model, rho, kap)
        errs[(q, n_v)] = max(np.max(np.abs(A - R)) / np.max(np.abs(R))
                             for A, R in ((sys_.K.toarray(), K_ref), (sys_.M.toarray(), M_ref)))
    worst = max(errs.values())
    ok = report(2, worst <= 1e-10, "max rel entry error " + ", ".join(f"{k}: {v:.1e}" for k, v in errs.items())
                + " (<= 1e-10)")
    assert ok


def test_c3_resonances(report):
    model = HelmholtzModel(Discretization(build_grid(ProblemSetup(), 144, 72), 2, 2))
    air = np.zeros(model.grid.design_shape)
    modes = {(m.n, m.m): m.f for m in natural_frequencies(18.0, 9.0, 3, 3)}
    step, ks = 0.05, np.arange(-5, 6)
    details, ok = [], True
    for nm in ((1, 1), (0, 2)):
        f0 = modes[nm]
        C = frequency_response(model, air, f0 + step * ks)
        k = int(np.argmax(C))
        # parabolic refinement of the sampled peak, for the report only
        if 0 < k < len(ks) - 1:
            d = 0.5 * (C[k - 1] - C[k + 1]) / (C[k - 1] - 2 * C[k] + C[k + 1])
        else:
            d = 0.0
        ok &= abs(ks[k]) <= 1
        details.append(f"f_{nm[0]}{nm[1]} = {f0:.3f} Hz: peak at step {ks[k]:+d} "
                       f"(refined {f0 + step * (ks[k] + d):.3f} Hz)")
    assert report(3, ok, "; ".join(details) + " (|step| <= 1)")


def test_c4_architecture_counts(report):
    net = nn.build_unet((24, 432))
    counts = [r.n_params for r in net.layer_table() if r.n_params]
    table = [2, 312, 24, 7224, 48, 28848, 96, 57648, 144, 43224, 72, 10812, 26, 326]
    mlp = [nn.BenchMLP(w, seed=0).n_params for w in (25, 50, 100, 200, 400)]
    ok = net.n_params == 148806 and counts == table and mlp == [327, 652, 1302, 2602, 5202]
    assert report(4, ok, f"U-net {net.n_params} parameters, per-layer table {'matches' if counts == table else counts}; "
                  f"MLP {mlp}")


def test_c5_engine_gradients(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = {}

    def p(*shape):
        return nn.parameter(rng.standard_normal(shape))

    x4, w, b = p(2, 3, 6, 5), p(4, 3, 5, 5), p(4)
    worst["conv2d"] = fd_check(lambda: E.conv2d(x4, w, b), [x4, w, b], rng)
    xb, s, t = p(3, 2, 4, 4), p(2), p(2)
    worst["batchnorm"] = fd_check(lambda: E.batchnorm(xb, s, t), [xb, s, t], rng)
    for op in (E.leaky_relu, E.sigmoid, E.maxpool2, E.upsample2):
        xo = p(1, 2, 4, 6)
        worst[op.__name__] = fd_check(lambda: op(xo), [xo], rng)
    a, c = p(1, 2, 3, 3), p(1, 1, 3, 3)
    worst["concat"] = fd_check(lambda: E.concat([a, c]), [a, c], rng)
    a2 = p(1, 2, 3, 3)
    worst["add"] = fd_check(lambda: E.add(a, a2), [a, a2], rng)
    xd, wd, bd = p(3, 4), p(5, 4), p(5)
    worst["dense"] = fd_check(lambda: E.dense(xd, wd, bd), [xd, wd, bd], rng)
    y, target = p(3, 5), rng.random((3, 5))
    worst["mse"] = fd_check(lambda: E.mse(y, target), [y], rng)
    net = nn.build_unet((8, 48), seed=3)
    xin = nn.Tensor(rng.standard_normal((1, 1, 48, 8)))
    worst["unet 48x8"] = fd_check(lambda: net(xin), net.params, rng, n_probe=4, h=1e-7)
    dt = time.perf_counter() - t0
    top = max(worst.values())
    assert report(5, top <= 1e-4 and dt < 60,
                  f"{len(worst)} checks, worst {max(worst, key=worst.get)} {top:.1e} (<= 1e-4), {dt:.1f} s (< 60 s)")


def test_c6_benchmark_statistics(report):
    t0 = time.perf_counter()
    adam = bench.success_statistics("rosenbrock", 200, width=100, optimizer="adam", seed=0)
    sd = bench.success_statistics("rosenbrock", 200, width=100, optimizer="sgd", seed=0)
    dt = time.perf_counter() - t0
    ok = 65.0 <= adam.percentage <= 90.0 and 35.0 <= sd.percentage <= 65.0 and dt < 900
    assert report(6, ok, f"NN wins Adam {adam.percentage:.1f}% (in [65, 90]), steepest descent "
                  f"{sd.percentage:.1f}% (in [35, 65]), {dt:.1f} s (< 15 min, {bench.BACKEND} kernel)")


def test_c7_filter_projection(report):
    grid = build_grid(ProblemSetup(), 432, 216)
    fp = FilterProjection(build_filter(grid), eta=0.5)
    const = density_filter(np.full(grid.design_shape, 0.37), fp.kernel)
    fixed = np.max(np.abs(const - 0.37))
    H = [float(project(np.array([v]), ProjectionParams(8.0, 0.5))[0]) for v in (0.0, 1.0, 0.5)]
    rng = np.random.default_rng(3)
    small = FilterProjection(build_filter(build_grid(ProblemSetup(), 48, 24), r_f=0.6), eta=0.5)
    z, wgt = rng.random(small.kernel.shape), rng.standard_normal(small.kernel.shape)
    small.forward(z, 5.0)
    g = small.backward(wgt)
    h, worst = 1e-6, 0.0
    for _ in range(10):
        j, i = rng.integers(z.shape[0]), rng.integers(z.shape[1])
        zp, zm = z.copy(), z.copy()
        zp[j, i] += h
        zm[j, i] -= h
        fd = (np.sum(wgt * small.forward(zp, 5.0)) - np.sum(wgt * small.forward(zm, 5.0))) / (2 * h)
        worst = max(worst, abs(g[j, i] - fd) / max(abs(fd), 1e-10))
    caps = (beta_schedule(279), beta_schedule(400, stage=2, start=76.5))
    ok = fixed <= 1e-14 and H == [0.0, 1.0, 0.5] and worst <= 1e-6 and caps == (75.0, 150.0)
    assert report(7, ok, f"fixed point dev {fixed:.1e}, H(0,1,0.5) = {H}, backward vs FD {worst:.1e} (<= 1e-6), "
                  f"beta caps {caps}")


def test_c8_linear_end_to_end(report):
    # default physical filter radius, one voxel spacing here, so the filter is the identity
    cfg = RunConfig(nx=216, ny=108, stage1_epochs=120, stage2_max_epochs=20, tuning_epochs=20).validate()
    t0 = time.perf_counter()
    lp0, _ = pipeline.evaluate_design(np.zeros(cfg.grid().design_shape), cfg)
    rec = pipeline.run_linear(cfg)
    dt = time.perf_counter() - t0
    ok = rec.lp_final <= lp0 - 20.0 and dt < 1200
    assert report(8, ok, f"216x108: {lp0:.2f} dB -> {rec.lp_final:.2f} dB evaluated "
                  f"(drop {lp0 - rec.lp_final:.2f} >= 20 dB), {dt:.0f} s (< 20 min)")


@pytest.mark.slow
@pytest.mark.skipif(os.environ.get("ACOUSTOPT_FULL") != "1", reason="set ACOUSTOPT_FULL=1 for the full-scale run")
def test_c8_full_scale_optional(report):
    rec = pipeline.run_linear(RunConfig().validate())
    assert report("8 (full scale)", abs(rec.lp_final - 60.5) <= 8.0,
                  f"432x216: {rec.lp_final:.2f} dB (60.5 +- 8), epochs {rec.epoch_triple}")


def test_c9_bypass_and_pretraining(report, pretrained):
    lin, he = pipeline.bypass_runs(SCALED)
    _, pre = pipeline.bypass_runs(SCALED, pretrained.source((SCALED.seeds[0],)))
    pl, ph, pp = (pipeline.thresholding_penalty(r) for r in (lin, he, pre))
    ok = ph - pl >= 3.0 and pp < 2.0

    def fmt(name, r):
        return f"{name} {r.lp_stage1_continuous:.2f} -> {r.lp_stage1:.2f} dB"

    assert report(9, ok, f"{fmt('linear', lin)}, {fmt('He-init NN', he)}, {fmt('pretrained NN', pre)}; "
                  f"He-init penalty exceeds linear by {ph - pl:.2f} dB (>= 3), pretrained penalty {pp:.2f} dB (< 2)")


def test_c10_epoch_accounting(report):
    cfg = SCALED.replace(tuning_epochs=50, stage1_epochs=280, stage2_max_epochs=100)
    lin = pipeline.run_linear(cfg)
    nn_ = pipeline.run_nn(cfg)
    ok = True
    for rec, tuning in ((lin, 150), (nn_, 450)):
        t, s1, s2 = rec.epoch_triple
        ok &= t == tuning and s1 == 280 and 1 <= s2 <= 101 and len(rec.history) == s1 + s2
    assert report(10, ok, f"linear {lin.epoch_triple}, NN {nn_.epoch_triple} "
                  "(tuning 150 / 450, stage 1 280, stage 2 in [1, 101])")


def test_statistical_study(report, pretrained):
    source = pretrained.source(tuple(range(STATS_RUNS)))
    rows, best_nn_wins = [], 0
    medians = None
    for f in STATS_FREQS:
        cfg = SCALED.replace(frequency=f, **GENERALIZATION_SETUP)
        lin = [r.lp_final for r in transfer.statistical_study(cfg, "linear", STATS_RUNS) if r.ok]
        nns = [r.lp_final for r in transfer.statistical_study(cfg, "nn", STATS_RUNS, source) if r.ok]
        if medians is None:
            medians = (float(np.median(lin)), float(np.median(nns)))
        best_nn_wins += min(nns) < min(lin)
        rows.append(f"{f} Hz: median linear {np.median(lin):.2f} / NN {np.median(nns):.2f} dB, "
                    f"best {min(lin):.2f} / {min(nns):.2f} dB")
    ok = medians[1] <= medians[0] + 2.0 and best_nn_wins >= 1 and not any(map(math.isnan, medians))
    assert report("stats", ok, "; ".join(rows) + f" (NN median <= linear + 2 dB at {STATS_FREQS[0]} Hz, "
                  f"best NN wins at {best_nn_wins} of 2 >= 1; moved source and quiet zone)")
