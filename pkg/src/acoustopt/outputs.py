"""File emission: CSV tables, binary PGM images and the reproducibility manifest.

Images are written top row first with the room's ceiling at the top, so the
array is flipped vertically (grid row 0 is the floor).
"""

import csv
import os
import platform

import numpy as np

from . import __version__
from .config import format_config


def fmt(x):
    """Full-precision, locale-independent number formatting."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_pgm(path, pixels):
    """8-bit binary graymap (P5) of a 2-D uint8 array, first row at the top."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2 or pixels.dtype != np.uint8:
        raise ValueError("write_pgm expects a 2-D uint8 array")
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(pixels).tobytes())
    return path


def read_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    pix = np.frombuffer(data, np.uint8, w * h, pos + 1)
    return pix.reshape(h, w).copy()


def design_pixels(design):
    """0 (air) -> 255 white, 1 (solid) -> 0 black; intermediate values scale linearly."""
    d = np.clip(np.asarray(design, dtype=float), 0.0, 1.0)
    return np.flipud(np.round(255.0 * (1.0 - d))).astype(np.uint8)


def pixels_to_design(pixels):
    return np.flipud(1.0 - np.asarray(pixels, dtype=float) / 255.0)


def field_pixels(values, lo=None, hi=None):
    """Linear gray map of a scalar field between ``lo`` (black) and ``hi`` (white)."""
    v = np.asarray(values, dtype=float)
    lo = float(np.min(v)) if lo is None else lo
    hi = float(np.max(v)) if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    return np.flipud(np.round(255.0 * np.clip((v - lo) / span, 0.0, 1.0))).astype(np.uint8)


SUMMARY_HEADER = ("lp_stage1", "lp_stage2", "lp_eval", "tuning_epochs", "stage1_epochs", "stage2_epochs")
HISTORY_HEADER = ("epoch", "stage", "C", "L_p", "beta", "alpha")


def write_manifest(path, cfg, extra=None):
    """Config in the parseable ``key = value`` format; provenance goes in comments."""
    lines = [
        f"# acoustopt {__version__}",
        f"# python {platform.python_version()}, numpy {np.__version__}",
    ]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n" + format_config(cfg))
    return path


def emit_outputs(record, cfg, out_dir, extra=None):
    """Write every artifact of one optimization run into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    paths["history"] = write_csv(
        os.path.join(out_dir, "history.csv"), HISTORY_HEADER,
        [[h[k] for k in HISTORY_HEADER] for h in record.history],
    )
    paths["design_stage1"] = write_pgm(os.path.join(out_dir, "design_stage1.pgm"),
                                       design_pixels(record.design_stage1))
    paths["design_final"] = write_pgm(os.path.join(out_dir, "design_final.pgm"),
                                      design_pixels(record.final_design))
    if record.lp_field is not None:
        paths["field_lp"] = write_pgm(os.path.join(out_dir, "field_lp.pgm"),
                                      field_pixels(record.lp_field))
    paths["summary"] = write_csv(
        os.path.join(out_dir, "summary.csv"), SUMMARY_HEADER,
        [[record.lp_stage1, record.lp_stage2, record.lp_final, *record.epoch_triple]],
    )
    info = {"ansatz": record.ansatz}
    for key in ("initial_guess", "seed", "alpha"):
        if key in record.info:
            info[key] = record.info[key]
    info.update(extra or {})
    paths["manifest"] = write_manifest(os.path.join(out_dir, "manifest.txt"), cfg, info)
    return paths
