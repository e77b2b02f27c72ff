"""Run configuration: typed defaults, presets and the ``key = value`` file format."""

import dataclasses
import os
from dataclasses import dataclass, fields
from typing import Tuple

from .errors import ConfigurationError
from .geometry import Discretization, ProblemSetup, build_grid

SETUP_KEYS = ("a", "b", "h_c", "x_f", "y_f", "x_s", "y_s", "a_s", "b_s", "s_hat", "eta_d")
WORKERS_ENV = "ACOUSTOPT_WORKERS"
BENCH_FUNCTIONS = ("rosenbrock", "rastrigin", "ackley", "levi")
# shorthand keys that set several fields at once
ALIASES = {"n_v": ("n_v_stage1", "n_v_stage2"), "epochs": ("stage1_epochs",)}


@dataclass
class RunConfig:
    # geometry (m), excitation
    a: float = 18.0
    b: float = 9.0
    h_c: float = 1.0
    x_f: float = 2.0
    y_f: float = 2.0
    x_s: float = 16.0
    y_s: float = 2.0
    a_s: float = 2.0
    b_s: float = 2.0
    s_hat: float = 10.0
    eta_d: float = 0.01
    frequency: float = 69.43  # Hz
    p_ref: float = 2e-5  # Pa
    # voxel grid
    nx: int = 432
    ny: int = 216
    # two-stage protocol
    ansatz: str = "linear"
    optimizer: str = "adam"
    q_stage1: int = 2
    n_v_stage1: int = 4
    q_stage2: int = 4
    n_v_stage2: int = 4
    q_eval: int = 2
    n_v_eval: int = 1
    stage1_epochs: int = 280
    stage2_max_epochs: int = 100  # 0 disables stage two
    stage2_check_every: int = 10
    stage2_factor: float = 1.5
    # filter and projection
    filter_radius: float = -1.0  # m; negative selects two voxels of the 216-row grid
    eta: float = 0.5
    beta_growth: float = 1.02
    beta_cap_stage1: float = 75.0
    beta_cap_stage2: float = 150.0
    beta_reset_stage2: bool = False
    # tuning
    tuning_epochs: int = 50
    initial_guesses: Tuple[float, ...] = (0.0, 0.5, 1.0)
    initial_guess: float = -1.0  # >= 0 skips linear tuning
    alpha_linear: float = 0.05
    alpha_grid_linear: Tuple[float, ...] = (0.02, 0.05, 0.1)
    alpha_grid: Tuple[float, ...] = (1e-5, 2e-5, 4e-5)
    alpha_nn: float = 2e-5  # NN learning rate whenever it is not tuned
    seeds: Tuple[int, ...] = (0, 1, 2)
    clip_norm: float = 1.0
    # transfer learning
    pretrain_samples: int = 4
    f_min: float = 10.0
    f_max: float = 100.0
    dataset_seed: int = 0
    pretrain_epochs: int = 2000
    pretrain_alpha: float = 1e-3
    pretrain_tol: float = 1e-4
    dataset_path: str = ""
    checkpoint_path: str = ""
    restart_linear_epochs: int = 200
    restart_nn_epochs: int = 100
    restart_fit_epochs: int = 500
    stats_runs: int = 30
    # discretization sweep
    sweep_q: Tuple[int, ...] = (1, 2, 3, 4)
    sweep_n_v: Tuple[int, ...] = (1, 2, 4, 8)
    sweep_epochs: int = 300
    two_step: bool = False
    # 2-D benchmarks
    bench_function: str = "rosenbrock"
    bench_width: int = 100
    bench_guesses: int = 200
    bench_epochs: int = 300
    bench_probe_epochs: int = 20
    bench_alpha_grid: Tuple[float, ...] = (1e-6, 3e-6, 1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2,
                                           3e-2, 1e-1, 3e-1)
    bench_box: float = 4.0
    bench_seed: int = 0
    bench_activation: str = "leaky_relu"
    bench_seed_policy: str = "single"
    bench_optimizer: str = "adam"
    # output
    output_dir: str = "out"
    preset: str = "reference"

    def setup(self) -> ProblemSetup:
        return ProblemSetup(frequency=self.frequency, **{k: getattr(self, k) for k in SETUP_KEYS})

    def grid(self):
        return build_grid(self.setup(), self.nx, self.ny)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def validate(self):
        if self.ansatz not in ("linear", "nn"):
            raise ConfigurationError(f"ansatz must be 'linear' or 'nn', got {self.ansatz!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {self.preset!r}")
        for name in ("stage1_epochs", "stage2_max_epochs", "tuning_epochs", "pretrain_epochs"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be non-negative")
        if self.stage2_check_every < 1:
            raise ConfigurationError("stage2_check_every must be >= 1")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigurationError("eta must lie in [0, 1]")
        if self.f_min <= 0 or self.f_max < self.f_min:
            raise ConfigurationError("need 0 < f_min <= f_max")
        if self.bench_function not in BENCH_FUNCTIONS:
            raise ConfigurationError(f"bench_function must be one of {BENCH_FUNCTIONS}")
        if self.bench_optimizer not in ("adam", "sgd"):
            raise ConfigurationError("bench_optimizer must be 'adam' or 'sgd'")
        if self.bench_activation not in ("leaky_relu", "sigmoid"):
            raise ConfigurationError("bench_activation must be 'leaky_relu' or 'sigmoid'")
        if self.bench_seed_policy not in ("single", "per_guess"):
            raise ConfigurationError("bench_seed_policy must be 'single' or 'per_guess'")
        grid = self.grid()
        for stage in ("stage1", "stage2", "eval"):
            try:
                Discretization(grid, getattr(self, f"q_{stage}"), getattr(self, f"n_v_{stage}"))
            except ConfigurationError as exc:
                exc.key = f"n_v_{stage}"
                raise
        return self


GENERALIZATION_SETUP = dict(x_f=17.0, y_f=6.0, x_s=5.5, y_s=6.5, a_s=1.0, b_s=1.0)

PRESETS = {
    "reference": {},
    # CI scale: linear ansatz only (108 columns are not divisible by 8 for the U-net)
    "reduced": dict(nx=108, ny=54, n_v_stage1=2, n_v_stage2=2, stage1_epochs=60,
                    stage2_max_epochs=20, tuning_epochs=10, ansatz="linear"),
    # desk scale for both ansaetze: 288 x 16 ceiling voxels
    "desk": dict(nx=288, ny=144, stage1_epochs=120, stage2_max_epochs=20, tuning_epochs=20,
                 restart_linear_epochs=80, restart_nn_epochs=40, pretrain_epochs=600),
    # source moved near the ceiling on the right, small quiet zone on the left
    "generalization": dict(GENERALIZATION_SETUP),
}


def _coerce(name, tp, raw, line):
    try:
        if tp is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if tp in (Tuple[float, ...], Tuple[int, ...]):
            inner = float if tp == Tuple[float, ...] else int
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if not items:
                raise ValueError(raw)
            return tuple(inner(s) for s in items)
        if tp is int:
            return int(raw)
        if tp is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigurationError(f"cannot parse {name} = {raw!r}", line=line) from None


def _types():
    types = {f.name: f.type for f in fields(RunConfig)}
    for alias, targets in ALIASES.items():
        types[alias] = types[targets[0]]
    return types


def parse_text(text, overrides=()):
    """Parse ``key = value`` lines; ``preset`` (if given) is applied before other keys."""
    types = _types()
    entries = []
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected 'key = value', got {rawline.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"unknown key {key!r}", line=lineno)
        entries.append((key, value, lineno))
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = (s.strip() for s in item.split("=", 1))
        if key not in types:
            raise ConfigurationError(f"unknown override key {key!r}")
        entries.append((key, value, None))
    values = {}
    preset = "reference"
    for key, value, lineno in entries:
        if key == "preset":
            if value not in PRESETS:
                raise ConfigurationError(f"unknown preset {value!r}", line=lineno)
            preset = value
    values.update(PRESETS[preset])
    values["preset"] = preset
    line_of = {}
    for key, value, lineno in entries:
        if key == "preset":
            continue
        for target in ALIASES.get(key, (key,)):
            values[target] = _coerce(key, types[key], value, lineno)
            line_of[target] = lineno
    try:
        return RunConfig(**values).validate()
    except ConfigurationError as exc:
        line = line_of.get(getattr(exc, "key", None))
        if exc.line is None and line is not None:
            raise ConfigurationError(str(exc), line=line) from None
        raise


def parse_config(path, overrides=()):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_text(text, overrides)


def format_config(cfg: RunConfig):
    """Inverse of :func:`parse_text`; used for the reproducibility manifest."""
    out = [f"preset = {cfg.preset}"]
    for f in fields(RunConfig):
        if f.name == "preset":
            continue
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ", ".join(repr(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        out.append(f"{f.name} = {v}")
    return "\n".join(out) + "\n"


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    return max(1, n)


def default_config(**changes):
    return RunConfig(**changes)
