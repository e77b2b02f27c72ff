"""Supervised pretraining of the U-net on optimized linear-ansatz designs.

A sample pairs the (max-abs scaled) cost sensitivity of an all-air room with the
thresholded design a linear-ansatz optimization found at the same frequency.
The pretrained network then serves as initial guess for the NN ansatz, for a
linear ansatz (control experiment) or, fitted to a single design, in the
restarting scheme.
"""

from __future__ import annotations

import logging
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .config import RunConfig
from .errors import ConfigurationError, NumericalError
from .optim import AdamState, adam_step
from .pipeline import (
    LinearAnsatz,
    NNAnsatz,
    RunRecord,
    initial_sensitivity,
    nn_input_field,
    optimize,
    parallel_map,
    probe,
    run_linear,
    run_nn,
    scale_input,
    tune_linear,
)

log = logging.getLogger(__name__)

DATASET_MAGIC = b"AOPTDS01"
DATASET_VERSION = 1


@dataclass
class PretrainSample:
    input: np.ndarray  # (n_ceiling, nx), scaled to [-1, 1]
    label: np.ndarray  # (n_ceiling, nx), 0/1
    frequency: float


def _make_sample(args):
    cfg, f = args
    c = cfg.replace(frequency=float(f))
    try:
        raw = initial_sensitivity(c)
        rec = run_linear(c)
    except NumericalError as exc:
        warnings.warn(f"dropping sample at {f:.3f} Hz: {exc}")
        return None
    return PretrainSample(scale_input(raw), rec.final_design.astype(np.uint8), float(f))


def sample_frequencies(n_samples, f_range, seed):
    if n_samples < 1:
        raise ConfigurationError("need at least one pretraining sample")
    lo, hi = f_range
    return np.random.default_rng(seed).uniform(lo, hi, size=n_samples)


def generate_dataset(cfg: RunConfig, n_samples=None, f_range=None, seed=None):
    """Optimize the linear ansatz at uniformly drawn frequencies and collect samples."""
    n_samples = cfg.pretrain_samples if n_samples is None else n_samples
    f_range = (cfg.f_min, cfg.f_max) if f_range is None else f_range
    seed = cfg.dataset_seed if seed is None else seed
    freqs = sample_frequencies(n_samples, f_range, seed)
    out = parallel_map(_make_sample, [(cfg, f) for f in freqs])
    return [s for s in out if s is not None]


def save_dataset(samples, path):
    """Header: magic, u32 version, u32 count, u32 H, u32 W, count x f8 frequencies;
    then per sample H*W f8 input values followed by H*W u8 labels (little endian)."""
    if not samples:
        raise ConfigurationError("refusing to write an empty dataset")
    H, W = samples[0].input.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<IIII", DATASET_VERSION, len(samples), H, W))
        fh.write(np.asarray([s.frequency for s in samples], dtype="<f8").tobytes())
        for s in samples:
            if s.input.shape != (H, W) or s.label.shape != (H, W):
                raise ConfigurationError("all samples must share one shape")
            fh.write(np.ascontiguousarray(s.input, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(s.label, dtype=np.uint8).tobytes())


def load_dataset(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != DATASET_MAGIC:
        raise ConfigurationError(f"{path}: not a pretraining dataset")
    try:
        version, count, H, W = struct.unpack_from("<IIII", data, 8)
        if version != DATASET_VERSION:
            raise ConfigurationError(f"{path}: unsupported dataset version {version}")
        off = 24
        freqs = np.frombuffer(data, "<f8", count, off)
        off += 8 * count
        samples = []
        for f in freqs:
            x = np.frombuffer(data, "<f8", H * W, off).reshape(H, W).astype(np.float64)
            off += 8 * H * W
            y = np.frombuffer(data, np.uint8, H * W, off).reshape(H, W).copy()
            off += H * W
            samples.append(PretrainSample(x, y, float(f)))
    except ValueError as exc:
        raise ConfigurationError(f"{path}: truncated dataset") from exc
    if off != len(data):
        raise ConfigurationError(f"{path}: {len(data) - off} trailing bytes")
    return samples


# ---------------------------------------------------------------------------
# pretraining

@dataclass
class PretrainResult:
    net: nn.UNet
    losses: list


def pretrain(net: nn.UNet, dataset, epochs=2000, alpha=1e-3, tol=0.0):
    """Mean-squared-error fit of ``net(input)`` to the labels with Adam.

    Samples are forwarded one at a time (batch statistics identical to the
    optimization regime) and their gradients averaged into one full-batch step.
    Stops early once the mean loss drops below ``tol``.
    """
    if not dataset:
        raise ConfigurationError("pretraining needs a non-empty dataset")
    inputs = [nn.design_to_nn(s.input) for s in dataset]
    labels = [nn.design_to_nn(s.label.astype(float)) for s in dataset]
    state = AdamState(alpha)
    losses = []
    n = len(dataset)
    for epoch in range(epochs):
        net.zero_grad()
        total = 0.0
        for x, y in zip(inputs, labels):
            loss = nn.mse(net(x), y)
            loss.backward()
            total += float(loss.value)
        total /= n
        if not np.isfinite(total):
            raise NumericalError("pretraining loss is not finite", epoch=epoch)
        losses.append(total)
        if total < tol:
            break
        net.set_flat(adam_step(net.get_flat(), net.grad_flat() / n, state, epoch=epoch))
    return PretrainResult(net, losses)


def binariness(field):
    """Mean distance to the nearest of 0 and 1 (0 for a perfectly binary field)."""
    field = np.asarray(field)
    return float(np.mean(np.minimum(field, 1.0 - field)))


def predict(net: nn.UNet, field):
    """Network output for a ``(n_ceiling, nx)`` input, as a design field."""
    return nn.nn_to_design(net(nn.design_to_nn(field)).value)


class PretrainedSource:
    """Picklable seed -> network factory over already pretrained weights."""

    def __init__(self, design_shape, weights):
        self.design_shape = design_shape
        self.weights = dict(weights)

    def __call__(self, seed):
        net = nn.build_unet(self.design_shape)
        net.set_flat(self.weights[seed])
        return net

    @property
    def seeds(self):
        return tuple(self.weights)


def _pretrain_seed(args):
    cfg, dataset, seed = args
    net = nn.build_unet(cfg.grid().design_shape, seed=seed)
    res = pretrain(net, dataset, cfg.pretrain_epochs, cfg.pretrain_alpha, cfg.pretrain_tol)
    log.info("seed %d pretrained: loss %.3e after %d epochs", seed, res.losses[-1], len(res.losses))
    return seed, net.get_flat()


def pretrain_seeds(cfg: RunConfig, dataset, seeds=None) -> PretrainedSource:
    seeds = cfg.seeds if seeds is None else seeds
    out = parallel_map(_pretrain_seed, [(cfg, dataset, s) for s in seeds])
    return PretrainedSource(cfg.grid().design_shape, dict(out))


# ---------------------------------------------------------------------------
# schemes built on pretraining

def restart_scheme(cfg: RunConfig, seed=None, alpha=None):
    """Linear optimization, supervised fit of the U-net to its design, NN optimization.

    The projection sharpness restarts at 1 for the NN phase.  ``lp_initial``
    holds the thresholded level of the linear phase; the epoch triple reports
    linear tuning, both first-stage phases together, and stage two.
    """
    seed = cfg.seeds[0] if seed is None else seed
    alpha = cfg.alpha_nn if alpha is None else alpha
    shape = cfg.grid().design_shape
    if cfg.initial_guess >= 0:
        guess, tuning_epochs = cfg.initial_guess, 0
    else:
        tuning = tune_linear(cfg)
        guess, tuning_epochs = tuning.choice, tuning.epochs
    c1 = cfg.replace(stage1_epochs=cfg.restart_linear_epochs, stage2_max_epochs=0)
    first = optimize(c1, LinearAnsatz(guess, shape, cfg.alpha_linear, cfg.optimizer))
    nn_in = nn_input_field(cfg)
    net = nn.build_unet(shape, seed=seed)
    fit = pretrain(net, [PretrainSample(nn_in, first.design_stage1, cfg.frequency)],
                   cfg.restart_fit_epochs, cfg.pretrain_alpha, cfg.pretrain_tol)
    c2 = cfg.replace(stage1_epochs=cfg.restart_nn_epochs)
    record = RunRecord(cfg.frequency, "nn")
    record.info.update(initial_guess=guess, seed=seed, alpha=alpha, fit_loss=fit.losses[-1])
    optimize(c2, NNAnsatz(net, nn_in, alpha, cfg.clip_norm, cfg.optimizer), record, beta_start=1.0)
    record.lp_initial = first.lp_stage1
    record.info["design_initial"] = first.design_stage1
    record.history = first.history + [
        dict(h, epoch=h["epoch"] + first.stage1_epochs) for h in record.history
    ]
    record.tuning_epochs = tuning_epochs
    record.stage1_epochs += first.stage1_epochs
    return record


def _probe_guess(args):
    cfg, field, alpha = args
    a = LinearAnsatz(field, field.shape, alpha, cfg.optimizer)
    return probe(cfg, a, cfg.tuning_epochs)


def nn_guess_for_linear(cfg: RunConfig, source: PretrainedSource):
    """Linear ansatz started from a pretrained network's prediction.

    Tuning probes every seed x linear learning rate (``alpha_grid_linear``).
    """
    nn_in = nn_input_field(cfg)
    fields = {s: np.clip(predict(source(s), nn_in), 0.0, 1.0) for s in cfg.seeds}
    pairs = [(s, a) for s in cfg.seeds for a in cfg.alpha_grid_linear]
    costs = parallel_map(_probe_guess, [(cfg, fields[s], a) for s, a in pairs])
    best = min(range(len(pairs)), key=lambda i: (costs[i], i))
    seed, alpha = pairs[best]
    record = RunRecord(cfg.frequency, "linear")
    record.info.update(seed=seed, alpha=alpha, tuning_costs=dict(zip(pairs, costs)))
    a = LinearAnsatz(fields[seed], fields[seed].shape, alpha, cfg.optimizer)
    return optimize(cfg, a, record, tuning_epochs=len(pairs) * cfg.tuning_epochs)


# ---------------------------------------------------------------------------
# statistics over initializations

@dataclass
class StudyRun:
    ansatz: str
    tag: float  # initial guess (linear) or seed (nn)
    lp_final: float
    ok: bool


def _study_linear(args):
    cfg, g = args
    try:
        return StudyRun("linear", g, run_linear(cfg.replace(initial_guess=float(g))).lp_final, True)
    except NumericalError as exc:
        log.warning("linear run from %.3f failed: %s", g, exc)
        return StudyRun("linear", g, float("nan"), False)


def _study_nn(args):
    cfg, source, seed = args
    try:
        rec = run_nn_fixed(cfg, source, seed)
        return StudyRun("nn", seed, rec.lp_final, True)
    except NumericalError as exc:
        log.warning("nn run with seed %d failed: %s", seed, exc)
        return StudyRun("nn", seed, float("nan"), False)


def run_nn_fixed(cfg: RunConfig, source, seed, alpha=None):
    return run_nn(cfg, source, tune=False, seed=seed, alpha=cfg.alpha_nn if alpha is None else alpha)


def statistical_study(cfg: RunConfig, kind, n_runs=None, source=None):
    """Final levels over ``n_runs`` initializations.

    Linear: homogeneous guesses ``linspace(0, 1, n_runs)``.  NN: one run per
    pretrained seed in ``source`` (its first ``n_runs`` seeds).
    """
    n_runs = cfg.stats_runs if n_runs is None else n_runs
    if n_runs < 2:
        raise ConfigurationError("a statistical study needs at least two runs")
    if kind == "linear":
        runs = parallel_map(_study_linear, [(cfg, g) for g in np.linspace(0.0, 1.0, n_runs)])
    elif kind == "nn":
        if source is None:
            raise ConfigurationError("the NN study needs pretrained networks")
        seeds = list(source.seeds)[:n_runs]
        runs = parallel_map(_study_nn, [(cfg, source, s) for s in seeds])
    else:
        raise ConfigurationError(f"unknown ansatz {kind!r}")
    failed = sum(not r.ok for r in runs)
    if failed:
        log.warning("%d of %d runs failed and are excluded", failed, len(runs))
    return runs
