"""2-D optimizer benchmarks: direct (linear) vs. MLP-reparametrized descent.

The per-epoch work is a tiny dense MLP, so a whole trajectory runs inside one
kernel call.  The compiled kernel (``_core``) is used when it was built; the
numpy reference (``_bench_py``) otherwise, or when ``ACOUSTOPT_PURE_PYTHON=1``.
"""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import _bench_py
from .config import worker_count
from .errors import ConfigurationError
from .nn.models import BenchMLP
from .pipeline import parallel_map

log = logging.getLogger(__name__)

PURE_ENV = "ACOUSTOPT_PURE_PYTHON"
KINDS = _bench_py.KINDS
ACTIVATIONS = {"leaky_relu": 0, "sigmoid": 1}
DEFAULT_ALPHA_GRID = (1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1)


def _select_backend():
    if os.environ.get(PURE_ENV) == "1":
        return _bench_py, "python"
    try:
        from . import _core
    except ImportError:
        return _bench_py, "python"
    return _core, "compiled"


_kernel, BACKEND = _select_backend()


def use_backend(name):
    """Switch between ``"compiled"`` and ``"python"`` kernels (for benchmarking)."""
    global _kernel, BACKEND
    if name == "python":
        _kernel, BACKEND = _bench_py, "python"
    elif name == "compiled":
        from . import _core

        _kernel, BACKEND = _core, "compiled"
    else:
        raise ConfigurationError(f"unknown backend {name!r}")
    return BACKEND


@dataclass(frozen=True)
class Landscape:
    kind: str
    minimum: tuple

    @property
    def code(self):
        return KINDS.index(self.kind)

    def __call__(self, x, y):
        return _kernel.landscape(self.code, float(x), float(y))[0]

    def gradient(self, x, y):
        return _kernel.landscape(self.code, float(x), float(y))[1:]


LANDSCAPES = {
    "rosenbrock": Landscape("rosenbrock", (1.0, 1.0)),
    "rastrigin": Landscape("rastrigin", (0.0, 0.0)),
    "ackley": Landscape("ackley", (0.0, 0.0)),
    "levi": Landscape("levi", (1.0, 1.0)),
}


def get_landscape(kind) -> Landscape:
    try:
        return LANDSCAPES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown benchmark function {kind!r}; choose from {KINDS}") from None


def evaluate(kind, x, y):
    """``(f, (df/dx, df/dy))`` at one point."""
    f, fx, fy = _kernel.landscape(get_landscape(kind).code, float(x), float(y))
    return f, (fx, fy)


@dataclass
class Trajectory:
    ansatz: str
    alpha: float
    costs: np.ndarray  # f before each update, plus the final value
    theta: np.ndarray
    point: tuple  # final (x, y)

    @property
    def final(self):
        return float(self.costs[-1])


def _mlp(width, seed, start, activation):
    return BenchMLP(width, seed, start=start, activation=activation)


def run_single(kind, start, ansatz, optimizer="adam", alpha=1e-3, epochs=300, width=100,
               seed=0, activation="leaky_relu", mlp=None):
    """One optimization run from ``start`` with a fixed learning rate."""
    code = get_landscape(kind).code
    if optimizer not in ("adam", "sgd"):
        raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {optimizer!r}")
    act = ACTIVATIONS[activation]
    start = np.asarray(start, dtype=float)
    if ansatz == "linear":
        costs, theta = _kernel.trajectory(code, start, np.zeros(BenchMLP.N_IN), start, 0, False,
                                          optimizer == "adam", alpha, epochs, act)
        point = (float(theta[0]), float(theta[1]))
    elif ansatz == "nn":
        net = mlp if mlp is not None else _mlp(width, seed, start, activation)
        costs, theta = _kernel.trajectory(code, net.get_flat(), net.z, start, net.width, True,
                                          optimizer == "adam", alpha, epochs, act)
        probe = _mlp_point(net, theta)
        point = (float(probe[0]), float(probe[1]))
    else:
        raise ConfigurationError(f"ansatz must be 'linear' or 'nn', got {ansatz!r}")
    return Trajectory(ansatz, alpha, np.asarray(costs), np.asarray(theta), point)


def _mlp_point(net, theta):
    saved = net.get_flat()
    net.set_flat(theta)
    with np.errstate(over="ignore", invalid="ignore"):
        out = net.predict_numpy()
    net.set_flat(saved)
    return out


def tune_alpha(kind, start, ansatz, optimizer="adam", alpha_grid=DEFAULT_ALPHA_GRID,
               probe_epochs=20, **kw):
    """Grid value with the lowest cost after ``probe_epochs``; earliest wins ties."""
    best, best_cost = None, math.inf
    for alpha in alpha_grid:
        c = run_single(kind, start, ansatz, optimizer, alpha, probe_epochs, **kw).final
        if best is None or c < best_cost:
            best, best_cost = alpha, c
    return best


@dataclass
class PairResult:
    start: tuple
    linear: Trajectory
    nn: Trajectory

    @property
    def nn_wins(self):
        return self.nn.final < self.linear.final


def run_pair(kind, x0, y0, optimizer="adam", width=100, epochs=300, seed=0, alpha=None,
             alpha_grid=DEFAULT_ALPHA_GRID, probe_epochs=20, activation="leaky_relu"):
    """Linear and MLP runs from ``(x0, y0)``; ``alpha=None`` tunes each ansatz separately."""
    start = (float(x0), float(y0))
    kw = dict(width=width, seed=seed, activation=activation)
    out = {}
    for ansatz in ("linear", "nn"):
        a = alpha
        if a is None:
            a = tune_alpha(kind, start, ansatz, optimizer, alpha_grid, probe_epochs, **kw)
        out[ansatz] = run_single(kind, start, ansatz, optimizer, a, epochs, **kw)
    return PairResult(start, out["linear"], out["nn"])


@dataclass
class SuccessStats:
    kind: str
    width: int
    optimizer: str
    n_guesses: int
    wins: int
    starts: np.ndarray
    final_linear: np.ndarray
    final_nn: np.ndarray
    alphas: list = field(default_factory=list)

    @property
    def percentage(self):
        return 100.0 * self.wins / self.n_guesses


def sample_guesses(n, box=4.0, seed=0):
    rng = np.random.default_rng(seed)
    return rng.uniform(-box, box, size=(n, 2))


def _pair_job(args):
    kind, start, kw = args
    r = run_pair(kind, start[0], start[1], **kw)
    return r.linear.final, r.nn.final, r.linear.alpha, r.nn.alpha


def success_statistics(kind, n_guesses, width=100, seed_policy="single", optimizer="adam",
                       epochs=300, probe_epochs=20, alpha_grid=DEFAULT_ALPHA_GRID, box=4.0,
                       seed=0, activation="leaky_relu", workers=None):
    """Percentage of uniformly sampled starts where the MLP ansatz ends strictly lower.

    ``seed_policy="single"`` uses one network initialization for every guess;
    ``"per_guess"`` draws a fresh one per guess (seed + index).
    """
    if n_guesses < 1:
        raise ConfigurationError("n_guesses must be >= 1")
    if seed_policy not in ("single", "per_guess"):
        raise ConfigurationError(f"unknown seed policy {seed_policy!r}")
    expected = 13 * width + 2
    n_params = _mlp(width, seed, (0.0, 0.0), activation).n_params
    if n_params != expected:
        raise AssertionError(f"MLP of width {width} has {n_params} parameters, expected {expected}")
    starts = sample_guesses(n_guesses, box, seed)
    jobs = []
    for i, s in enumerate(starts):
        kw = dict(optimizer=optimizer, width=width, epochs=epochs, probe_epochs=probe_epochs,
                  alpha_grid=tuple(alpha_grid), activation=activation,
                  seed=seed if seed_policy == "single" else seed + i)
        jobs.append((kind, (float(s[0]), float(s[1])), kw))
    res = parallel_map(_pair_job, jobs, worker_count() if workers is None else workers)
    lin = np.array([r[0] for r in res])
    nn_ = np.array([r[1] for r in res])
    wins = int(np.sum(nn_ < lin))
    return SuccessStats(kind, width, optimizer, n_guesses, wins, starts, lin, nn_,
                        [(r[2], r[3]) for r in res])


def instance_average(kind, start, width=100, n_seeds=20, optimizer="adam", alpha=None,
                     epochs=300, probe_epochs=20, alpha_grid=DEFAULT_ALPHA_GRID,
                     activation="leaky_relu"):
    """Cost traces of ``n_seeds`` MLP initializations and their per-epoch mean."""
    traces = []
    for s in range(n_seeds):
        kw = dict(width=width, seed=s, activation=activation)
        a = alpha
        if a is None:
            a = tune_alpha(kind, start, "nn", optimizer, alpha_grid, probe_epochs, **kw)
        traces.append(run_single(kind, start, "nn", optimizer, a, epochs, **kw).costs)
    traces = np.array(traces)
    return traces, traces.mean(axis=0)
