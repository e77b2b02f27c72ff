"""Two-stage topology optimization runs for the linear and the NN ansatz.

One epoch: design producer -> filter -> projection -> forward solve -> cost ->
adjoint -> sensitivities -> chain back through projection and filter (and the
network) -> optimizer step.  Stage one runs at a coarse multi-resolution
discretization; stage two corrects the design at a higher polynomial degree and
stops early once the cost is back within a factor of the stage-one cost.
"""

from __future__ import annotations

import functools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .adjoint import evaluate
from .config import RunConfig, worker_count
from .errors import ConfigurationError, NumericalError
from .fem import HelmholtzModel, sound_pressure_level, spl_field
from .filters import FilterProjection, build_filter, threshold
from .geometry import Discretization, ProblemSetup, build_grid
from .optim import AdamState, adam_step, clip_gradients, lr_schedule, sgd_step

log = logging.getLogger(__name__)


@functools.lru_cache(maxsize=16)
def get_model(setup: ProblemSetup, nx, ny, q, n_v) -> HelmholtzModel:
    return HelmholtzModel(Discretization(build_grid(setup, nx, ny), q, n_v))


def model_for(cfg: RunConfig, q, n_v):
    return get_model(cfg.setup(), cfg.nx, cfg.ny, q, n_v)


def filter_for(cfg: RunConfig):
    grid = cfg.grid()
    return build_filter(grid, None if cfg.filter_radius < 0 else cfg.filter_radius)


def parallel_map(fn, items, workers=None):
    """``map`` over a process pool when more than one worker is configured."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# ansaetze

class LinearAnsatz:
    """One indicator per design voxel, clamped to [0, 1] after every step."""

    kind = "linear"

    def __init__(self, initial, design_shape, alpha, optimizer="adam"):
        self.x = np.broadcast_to(np.asarray(initial, dtype=float), design_shape).copy()
        if np.any(self.x < 0) or np.any(self.x > 1):
            raise ConfigurationError("linear initial guess must lie in [0, 1]")
        self.alpha = alpha
        self.optimizer = optimizer
        self.state = AdamState(alpha)

    def design(self):
        return self.x

    def step(self, grad, epoch):
        if self.optimizer == "adam":
            new = adam_step(self.x.ravel(), grad.ravel(), self.state, epoch=epoch)
        else:
            new = sgd_step(self.x.ravel(), grad.ravel(), self.alpha, epoch=epoch)
        self.x = np.clip(new, 0.0, 1.0).reshape(self.x.shape)
        return self.alpha


class NNAnsatz:
    """Design field predicted by a U-net from a fixed input; weights are optimized.

    The polynomial learning-rate decay and global-norm clipping are active only
    for this ansatz.
    """

    kind = "nn"

    def __init__(self, net: nn.UNet, nn_input, alpha, clip_norm=1.0, optimizer="adam"):
        self.net = net
        self.input = nn.design_to_nn(nn_input)
        self.alpha = alpha
        self.clip_norm = clip_norm
        self.optimizer = optimizer
        self.state = AdamState(alpha)
        self._out = None

    def design(self):
        self._out = self.net(self.input)
        return nn.nn_to_design(self._out.value)

    def step(self, grad, epoch):
        if self._out is None:
            raise NumericalError("NN step without a forward pass", epoch=epoch)
        self.net.zero_grad()
        nn.weighted_sum(self._out, nn.design_to_nn(grad)).backward()
        self._out = None
        g = clip_gradients(self.net.grad_flat(), self.clip_norm)
        lr = lr_schedule(self.alpha, epoch)
        theta = self.net.get_flat()
        if self.optimizer == "adam":
            theta = adam_step(theta, g, self.state, alpha=lr, epoch=epoch)
        else:
            theta = sgd_step(theta, g, lr, epoch=epoch)
        self.net.set_flat(theta)
        return lr


def nn_input_field(cfg: RunConfig):
    """Sensitivity of the cost at an all-air room, stage-one discretization, max-abs scaled."""
    raw = initial_sensitivity(cfg)
    return scale_input(raw)


def initial_sensitivity(cfg: RunConfig):
    model = model_for(cfg, cfg.q_stage1, cfg.n_v_stage1)
    return evaluate(model, np.zeros(cfg.grid().design_shape), cfg.frequency).gradient


def scale_input(raw):
    m = np.max(np.abs(raw))
    if m == 0 or not np.isfinite(m):
        raise NumericalError("sensitivity field is zero or non-finite; cannot scale")
    return raw / m


# ---------------------------------------------------------------------------
# records

@dataclass
class RunRecord:
    frequency: float
    ansatz: str
    history: list = field(default_factory=list)  # dicts: epoch, stage, C, L_p, beta, alpha
    tuning_epochs: int = 0
    stage1_epochs: int = 0
    stage2_epochs: int = 0
    lp_stage1: float = float("nan")
    lp_stage2: float = float("nan")
    lp_final: float = float("nan")
    lp_stage1_continuous: float = float("nan")
    lp_initial: float = float("nan")  # restart scheme: first optimization
    design_stage1: np.ndarray = None
    design_stage2: np.ndarray = None
    design_continuous: np.ndarray = None
    lp_field: np.ndarray = None
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def total_epochs(self):
        return self.tuning_epochs + self.stage1_epochs + self.stage2_epochs

    @property
    def epoch_triple(self):
        return (self.tuning_epochs, self.stage1_epochs, self.stage2_epochs)

    @property
    def final_design(self):
        return self.design_stage2 if self.design_stage2 is not None else self.design_stage1

    def lp_values(self):
        return (self.lp_stage1, self.lp_stage2, self.lp_final)


def evaluate_design(design, cfg: RunConfig, q=None, n_v=None, with_field=False):
    """Sound pressure level of a 0/1 ceiling design (default discretization: evaluation)."""
    design = np.asarray(design, dtype=float)
    if np.any((design != 0) & (design != 1)):
        raise ConfigurationError("evaluate_design expects a 0/1 design")
    q = cfg.q_eval if q is None else q
    n_v = cfg.n_v_eval if n_v is None else n_v
    model = model_for(cfg, q, n_v)
    ev = evaluate(model, design, cfg.frequency, gradient=False)
    lp = sound_pressure_level(ev.C, cfg.p_ref)
    if with_field:
        return lp, ev.C, spl_field(model, ev.p, cfg.p_ref)
    return lp, ev.C


# ---------------------------------------------------------------------------
# optimization loop

def _run_stage(ansatz, model, fp, cfg, stage, epochs, beta_start, epoch0, record, c_stop=None):
    """Run one stage; returns ``(n_epochs_executed, last_C, last_beta, last_physical)``.

    With ``c_stop`` set, the cost is checked every ``stage2_check_every``
    epochs from the first one on, and the stage ends (without a further update)
    as soon as ``C <= c_stop``; the final permitted epoch also ends it without
    an update, so the executed count is ``1 + k*check_every``.
    """
    cap = cfg.beta_cap_stage1 if stage == 1 else cfg.beta_cap_stage2
    C = float("nan")
    beta = beta_start
    phys = None
    n_done = 0
    for k in range(epochs):
        beta = min(beta_start * cfg.beta_growth**k, cap)
        zeta = ansatz.design()
        phys = fp.forward(zeta, beta)
        ev = evaluate(model, phys, cfg.frequency)
        C = ev.C
        n_done = k + 1
        entry = dict(epoch=epoch0 + k, stage=stage, C=C, L_p=sound_pressure_level(C, cfg.p_ref),
                     beta=beta, alpha=float("nan"))
        record.history.append(entry)
        if c_stop is not None:
            last = k == epochs - 1
            if last or (k % cfg.stage2_check_every == 0 and C <= c_stop):
                break
        grad = fp.backward(ev.gradient)
        entry["alpha"] = ansatz.step(grad, epoch0 + k)
    return n_done, C, beta, phys


def optimize(cfg: RunConfig, ansatz, record: RunRecord = None, beta_start=1.0, tuning_epochs=0):
    """Full two-stage run of ``ansatz`` followed by thresholded evaluation."""
    t0 = time.perf_counter()
    if record is None:
        record = RunRecord(cfg.frequency, ansatz.kind)
    record.tuning_epochs = tuning_epochs
    fp = FilterProjection(filter_for(cfg), cfg.eta)
    m1 = model_for(cfg, cfg.q_stage1, cfg.n_v_stage1)

    if cfg.stage1_epochs == 0:
        phys = fp.forward(ansatz.design(), beta_start)
        C1, beta1 = evaluate(m1, phys, cfg.frequency, gradient=False).C, beta_start
        n1 = 0
    else:
        n1, C1, beta1, phys = _run_stage(ansatz, m1, fp, cfg, 1, cfg.stage1_epochs, beta_start, 0, record)
        # the design after the final update
        phys = fp.forward(ansatz.design(), beta1)
    record.stage1_epochs = n1
    record.design_continuous = phys.copy()
    record.design_stage1 = threshold(phys, cfg.eta)
    record.lp_stage1 = sound_pressure_level(evaluate(m1, record.design_stage1, cfg.frequency, False).C, cfg.p_ref)
    record.lp_stage1_continuous = sound_pressure_level(evaluate(m1, phys, cfg.frequency, False).C, cfg.p_ref)
    record.info["C_stage1"] = C1

    if cfg.stage2_max_epochs > 0:
        m2 = model_for(cfg, cfg.q_stage2, cfg.n_v_stage2)
        b2 = 1.0 if cfg.beta_reset_stage2 else min(beta1 * cfg.beta_growth, cfg.beta_cap_stage2)
        n2, C2, _, phys2 = _run_stage(
            ansatz, m2, fp, cfg, 2, cfg.stage2_max_epochs + 1, b2, n1, record,
            c_stop=cfg.stage2_factor * C1,
        )
        record.stage2_epochs = n2
        record.design_stage2 = threshold(phys2, cfg.eta)
        record.lp_stage2 = sound_pressure_level(
            evaluate(m2, record.design_stage2, cfg.frequency, False).C, cfg.p_ref
        )
    lp, _, lp_field = evaluate_design(record.final_design, cfg, with_field=True)
    record.lp_final = lp
    record.lp_field = lp_field
    record.wall_time = time.perf_counter() - t0
    log.info("%s run at %.2f Hz: L_p %.2f / %.2f / %.2f dB, epochs %s", ansatz.kind, cfg.frequency,
             record.lp_stage1, record.lp_stage2, record.lp_final, record.epoch_triple)
    return record


def probe(cfg: RunConfig, ansatz, epochs):
    """Stage-one cost after ``epochs`` epochs (tuning criterion)."""
    fp = FilterProjection(filter_for(cfg), cfg.eta)
    m1 = model_for(cfg, cfg.q_stage1, cfg.n_v_stage1)
    scratch = RunRecord(cfg.frequency, ansatz.kind)
    _, C, _, _ = _run_stage(ansatz, m1, fp, cfg, 1, epochs, 1.0, 0, scratch)
    return C


# ---------------------------------------------------------------------------
# tuning

@dataclass
class TuningResult:
    choice: object
    costs: dict
    epochs: int


def _probe_linear(args):
    cfg, guess = args
    a = LinearAnsatz(guess, cfg.grid().design_shape, cfg.alpha_linear, cfg.optimizer)
    return probe(cfg, a, cfg.tuning_epochs)


def tune_linear(cfg: RunConfig) -> TuningResult:
    """Probe each homogeneous initial guess; lowest cost wins, ties go to the earlier guess."""
    guesses = list(cfg.initial_guesses)
    costs = parallel_map(_probe_linear, [(cfg, g) for g in guesses])
    best = min(range(len(guesses)), key=lambda i: (costs[i], i))
    return TuningResult(guesses[best], dict(zip(guesses, costs)), len(guesses) * cfg.tuning_epochs)


def _probe_nn(args):
    cfg, net_source, seed, alpha, nn_in = args
    net = net_source(seed)
    return probe(cfg, NNAnsatz(net, nn_in, alpha, cfg.clip_norm, cfg.optimizer), cfg.tuning_epochs)


class HeInitSource:
    """Picklable factory for He-initialized networks (no pretraining)."""

    def __init__(self, design_shape):
        self.design_shape = design_shape

    def __call__(self, seed):
        return nn.build_unet(self.design_shape, seed=seed)


class CheckpointSource:
    """Networks restored from per-seed checkpoint files."""

    def __init__(self, design_shape, paths):
        self.design_shape = design_shape
        self.paths = dict(paths)

    def __call__(self, seed):
        net = nn.build_unet(self.design_shape)
        return nn.load_checkpoint(net, self.paths[seed])


def tune_nn(cfg: RunConfig, net_source, nn_in=None) -> TuningResult:
    """Every seed x learning rate is probed; lowest cost wins, ties go to the first pair."""
    if nn_in is None:
        nn_in = nn_input_field(cfg)
    pairs = [(s, a) for s in cfg.seeds for a in cfg.alpha_grid]
    costs = parallel_map(_probe_nn, [(cfg, net_source, s, a, nn_in) for s, a in pairs])
    best = min(range(len(pairs)), key=lambda i: (costs[i], i))
    return TuningResult(pairs[best], dict(zip(pairs, costs)), len(pairs) * cfg.tuning_epochs)


def run_linear(cfg: RunConfig, tune=True):
    """Tuned (or fixed ``initial_guess``) linear-ansatz run."""
    shape = cfg.grid().design_shape
    tuning = None
    if cfg.initial_guess >= 0 or not tune:
        guess = max(cfg.initial_guess, 0.0)
    else:
        tuning = tune_linear(cfg)
        guess = tuning.choice
    record = RunRecord(cfg.frequency, "linear")
    record.info["initial_guess"] = guess
    if tuning is not None:
        record.info["tuning_costs"] = tuning.costs
    a = LinearAnsatz(guess, shape, cfg.alpha_linear, cfg.optimizer)
    return optimize(cfg, a, record, tuning_epochs=tuning.epochs if tuning else 0)


def run_nn(cfg: RunConfig, net_source=None, tune=True, seed=None, alpha=None):
    """NN-ansatz run, tuned over seeds x learning rates unless ``seed``/``alpha`` are given."""
    shape = cfg.grid().design_shape
    net_source = HeInitSource(shape) if net_source is None else net_source
    nn_in = nn_input_field(cfg)
    tuning = None
    if tune and seed is None:
        tuning = tune_nn(cfg, net_source, nn_in)
        seed, alpha = tuning.choice
    seed = cfg.seeds[0] if seed is None else seed
    alpha = cfg.alpha_nn if alpha is None else alpha
    record = RunRecord(cfg.frequency, "nn")
    record.info.update(seed=seed, alpha=alpha)
    if tuning is not None:
        record.info["tuning_costs"] = tuning.costs
    a = NNAnsatz(net_source(seed), nn_in, alpha, cfg.clip_norm, cfg.optimizer)
    return optimize(cfg, a, record, tuning_epochs=tuning.epochs if tuning else 0)


def thresholding_penalty(record: RunRecord):
    """Stage-one level after thresholding minus the level of the continuous design (dB)."""
    return record.lp_stage1 - record.lp_stage1_continuous


def bypass_runs(cfg: RunConfig, net_source=None):
    """Linear (tuned guess) and NN (first seed, ``alpha_nn``) runs without stage two."""
    c = cfg.replace(stage2_max_epochs=0)
    return run_linear(c), run_nn(c, net_source, tune=False)


# ---------------------------------------------------------------------------
# discretization sweep

@dataclass
class SweepCell:
    q: int
    n_v: int
    time: float
    speedup: float
    cost_increase: float
    lp_corrected: float


def _sweep_run(args):
    cfg, q, n_v = args
    if cfg.two_step:
        c = cfg.replace(q_stage1=q, n_v_stage1=n_v, q_stage2=q + 2, n_v_stage2=n_v,
                        stage1_epochs=cfg.sweep_epochs - 20, stage2_max_epochs=19,
                        stage2_check_every=10**9, initial_guess=max(cfg.initial_guess, 0.0))
    else:
        c = cfg.replace(q_stage1=q, n_v_stage1=n_v, stage1_epochs=cfg.sweep_epochs,
                        stage2_max_epochs=0, initial_guess=max(cfg.initial_guess, 0.0))
    t0 = time.perf_counter()
    rec = run_linear(c, tune=False)
    elapsed = time.perf_counter() - t0
    q_tr, nv_tr = (q + 2, n_v) if cfg.two_step else (q, n_v)
    _, C_train = evaluate_design(rec.final_design, c, q_tr, nv_tr)
    lp_eval, C_eval = evaluate_design(rec.final_design, c)
    return q, n_v, elapsed, C_eval / C_train, lp_eval


def discretization_sweep(cfg: RunConfig):
    """Time and accuracy of training at each ``(q, n_v)``, relative to ``q = n_v = 1``.

    Cells whose ``n_v`` does not divide the grid are skipped.
    """
    cells = [(1, 1)] + [
        (q, n_v) for q in cfg.sweep_q for n_v in cfg.sweep_n_v
        if (q, n_v) != (1, 1) and cfg.nx % n_v == 0 and cfg.ny % n_v == 0
    ]
    rows = parallel_map(_sweep_run, [(cfg, q, n_v) for q, n_v in cells], workers=1)
    t_ref = rows[0][2]
    return [SweepCell(q, n_v, t, t_ref / t, ci, lp) for q, n_v, t, ci, lp in rows]
