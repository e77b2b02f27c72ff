"""Command-line interface: ``acoustopt <command> [-c CONFIG] [-o DIR] [-s key=value ...]``.

Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure, 3 I/O error.
The number of worker processes comes from ``ACOUSTOPT_WORKERS`` (default 1).
"""

import argparse
import logging
import os
import sys

import numpy as np

from . import bench, nn, outputs, pipeline, transfer
from .config import RunConfig, parse_config, parse_text
from .errors import ConfigurationError, DomainError, NumericalError, UsageError
from .fem import natural_frequencies

log = logging.getLogger("acoustopt")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


def _out(cfg, args, *parts):
    d = args.output or cfg.output_dir
    os.makedirs(d, exist_ok=True)
    return os.path.join(d, *parts)


def cmd_solve(cfg, args):
    grid = cfg.grid()
    if args.design:
        design = outputs.pixels_to_design(outputs.read_pgm(args.design))
        if design.shape != grid.design_shape:
            raise ConfigurationError(f"design image is {design.shape}, expected {grid.design_shape}")
        design = np.round(design)
    else:
        design = np.zeros(grid.design_shape)
    lp, C, field = pipeline.evaluate_design(design, cfg, with_field=True)
    outputs.write_csv(_out(cfg, args, "solve.csv"), ("frequency", "C", "L_p"), [[cfg.frequency, C, lp]])
    outputs.write_pgm(_out(cfg, args, "field_lp.pgm"), outputs.field_pixels(field))
    print(f"L_p = {lp:.2f} dB at {cfg.frequency} Hz")


def _net_source(cfg):
    if cfg.checkpoint_path:
        shape = cfg.grid().design_shape
        return pipeline.CheckpointSource(shape, {s: cfg.checkpoint_path for s in cfg.seeds})
    return None


def cmd_optimize(cfg, args):
    if cfg.ansatz == "linear":
        rec = pipeline.run_linear(cfg)
    else:
        rec = pipeline.run_nn(cfg, _net_source(cfg))
    outputs.emit_outputs(rec, cfg, args.output or cfg.output_dir)
    _report(rec)


def cmd_restart(cfg, args):
    rec = transfer.restart_scheme(cfg)
    outputs.emit_outputs(rec, cfg, args.output or cfg.output_dir,
                         {"lp_linear_phase": rec.lp_initial})
    _report(rec)


def _report(rec):
    s1, s2, ev = rec.lp_values()
    print(f"L_p stage 1 {s1:.2f} dB | stage 2 {s2:.2f} dB | evaluated {ev:.2f} dB; "
          f"epochs {rec.epoch_triple}")


def _dataset(cfg, args):
    if cfg.dataset_path and os.path.exists(cfg.dataset_path):
        return transfer.load_dataset(cfg.dataset_path)
    samples = transfer.generate_dataset(cfg)
    transfer.save_dataset(samples, cfg.dataset_path or _out(cfg, args, "dataset.bin"))
    return samples


def cmd_dataset(cfg, args):
    samples = transfer.generate_dataset(cfg)
    path = cfg.dataset_path or _out(cfg, args, "dataset.bin")
    transfer.save_dataset(samples, path)
    print(f"{len(samples)} samples -> {path}")


def cmd_pretrain(cfg, args):
    samples = _dataset(cfg, args)
    shape = cfg.grid().design_shape
    for seed in cfg.seeds:
        net = nn.build_unet(shape, seed=seed)
        res = transfer.pretrain(net, samples, cfg.pretrain_epochs, cfg.pretrain_alpha, cfg.pretrain_tol)
        path = _out(cfg, args, f"pretrained_seed{seed}.ckpt")
        nn.save_checkpoint(net, path)
        print(f"seed {seed}: loss {res.losses[-1]:.3e} after {len(res.losses)} epochs -> {path}")


def cmd_bench(cfg, args):
    st = bench.success_statistics(
        cfg.bench_function, cfg.bench_guesses, cfg.bench_width, cfg.bench_seed_policy,
        cfg.bench_optimizer, cfg.bench_epochs, cfg.bench_probe_epochs, cfg.bench_alpha_grid,
        cfg.bench_box, cfg.bench_seed, cfg.bench_activation,
    )
    outputs.write_csv(_out(cfg, args, "bench_summary.csv"),
                      ("function", "width", "optimizer", "guesses", "nn_wins", "percentage"),
                      [[st.kind, st.width, st.optimizer, st.n_guesses, st.wins, st.percentage]])
    outputs.write_csv(_out(cfg, args, "bench_runs.csv"),
                      ("x0", "y0", "alpha_linear", "alpha_nn", "final_linear", "final_nn"),
                      [[s[0], s[1], a[0], a[1], fl, fn] for s, a, fl, fn in
                       zip(st.starts, st.alphas, st.final_linear, st.final_nn)])
    pair = bench.run_pair(cfg.bench_function, 3.0, 3.0, cfg.bench_optimizer, cfg.bench_width,
                          cfg.bench_epochs, cfg.bench_seed, None, cfg.bench_alpha_grid,
                          cfg.bench_probe_epochs, cfg.bench_activation)
    outputs.write_csv(_out(cfg, args, "bench_traces.csv"), ("epoch", "linear", "nn"),
                      [[k, a, b] for k, (a, b) in enumerate(zip(pair.linear.costs, pair.nn.costs))])
    outputs.write_manifest(_out(cfg, args, "manifest.txt"), cfg, {"backend": bench.BACKEND})
    print(f"{cfg.bench_function}, width {cfg.bench_width}, {cfg.bench_optimizer}: "
          f"NN better in {st.percentage:.1f}% of {st.n_guesses} guesses")


def cmd_sweep(cfg, args):
    cells = pipeline.discretization_sweep(cfg)
    outputs.write_csv(_out(cfg, args, "sweep.csv"),
                      ("q", "n_v", "time_s", "speedup", "cost_increase", "lp_eval"),
                      [[c.q, c.n_v, c.time, c.speedup, c.cost_increase, c.lp_corrected] for c in cells])
    outputs.write_manifest(_out(cfg, args, "manifest.txt"), cfg)
    for c in cells:
        print(f"q={c.q} n_v={c.n_v}: speedup {c.speedup:.2f}, cost x{c.cost_increase:.3f}, "
              f"L_p {c.lp_corrected:.2f} dB")


def cmd_stats(cfg, args):
    runs = transfer.statistical_study(cfg, "linear")
    if cfg.ansatz == "nn":
        samples = _dataset(cfg, args)
        source = transfer.pretrain_seeds(cfg, samples, seeds=tuple(range(cfg.stats_runs)))
        runs += transfer.statistical_study(cfg, "nn", source=source)
    outputs.write_csv(_out(cfg, args, "stats.csv"), ("ansatz", "tag", "lp_final", "ok"),
                      [[r.ansatz, r.tag, r.lp_final, r.ok] for r in runs])
    outputs.write_manifest(_out(cfg, args, "manifest.txt"), cfg)
    for kind in ("linear", "nn"):
        lp = [r.lp_final for r in runs if r.ansatz == kind and r.ok]
        if lp:
            print(f"{kind}: median {np.median(lp):.2f} dB, best {np.min(lp):.2f} dB over {len(lp)} runs")


def cmd_freqs(cfg, args):
    modes = [m for m in natural_frequencies(cfg.a, cfg.b, args.n_max, args.n_max)]
    outputs.write_csv(_out(cfg, args, "freqs.csv"), ("n", "m", "f_Hz"), [list(m) for m in modes])
    for m in modes[: args.show]:
        print(f"f_{m.n}{m.m} = {m.f:.2f} Hz")


COMMANDS = {
    "solve": (cmd_solve, "evaluate one design (default: empty ceiling)"),
    "optimize": (cmd_optimize, "two-stage optimization with the configured ansatz"),
    "pretrain": (cmd_pretrain, "pretrain one U-net per seed on a dataset"),
    "dataset": (cmd_dataset, "generate a pretraining dataset"),
    "restart": (cmd_restart, "linear run, network fit, NN run"),
    "bench": (cmd_bench, "2-D benchmark success statistics"),
    "sweep": (cmd_sweep, "discretization speed/accuracy sweep"),
    "stats": (cmd_stats, "final levels over many initializations"),
    "freqs": (cmd_freqs, "analytic room resonances"),
}


def build_parser():
    p = argparse.ArgumentParser(prog="acoustopt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("-c", "--config", help="key = value configuration file")
        s.add_argument("-o", "--output", help="output directory (overrides output_dir)")
        s.add_argument("-s", "--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        if name == "solve":
            s.add_argument("--design", help="ceiling design as PGM (white = air)")
        if name == "freqs":
            s.add_argument("--n-max", type=int, default=6)
            s.add_argument("--show", type=int, default=10)
    return p


def load_config(args) -> RunConfig:
    if args.config:
        return parse_config(args.config, args.set)
    return parse_text("", args.set)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        return EXIT_CONFIG  # argparse already printed the usage message
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        COMMANDS[args.command][0](cfg, args)
    except (ConfigurationError, DomainError, UsageError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
