"""Reference (pure numpy) trajectory kernel for the 2-D benchmarks.

Mirrors ``_core.pyx`` operation by operation; used when the compiled module is
unavailable or ``ACOUSTOPT_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

KINDS = ("rosenbrock", "rastrigin", "ackley", "levi")
LEAKY_SLOPE = 0.01
TWO_PI = 2.0 * math.pi


def landscape(kind, x, y):
    """Value and gradient ``(f, fx, fy)`` of a benchmark landscape."""
    if kind == 0:  # rosenbrock
        r = y - x * x
        return (1 - x) ** 2 + 100 * r * r, -2 * (1 - x) - 400 * x * r, 200 * r
    if kind == 1:  # rastrigin
        f = 20 + x * x - 10 * math.cos(TWO_PI * x) + y * y - 10 * math.cos(TWO_PI * y)
        return f, 2 * x + 10 * TWO_PI * math.sin(TWO_PI * x), 2 * y + 10 * TWO_PI * math.sin(TWO_PI * y)
    if kind == 2:  # ackley
        s = math.sqrt(0.5 * (x * x + y * y))
        e1 = math.exp(-0.2 * s)
        e2 = math.exp(0.5 * (math.cos(TWO_PI * x) + math.cos(TWO_PI * y)))
        f = -20 * e1 - e2 + math.e + 20
        if s > 0:
            c = 20 * 0.2 * e1 * 0.5 / s
            fx, fy = c * x, c * y
        else:
            fx = fy = 0.0
        fx += e2 * 0.5 * TWO_PI * math.sin(TWO_PI * x)
        fy += e2 * 0.5 * TWO_PI * math.sin(TWO_PI * y)
        return f, fx, fy
    if kind == 3:  # levi
        s3x, c3x = math.sin(3 * math.pi * x), math.cos(3 * math.pi * x)
        s3y, c3y = math.sin(3 * math.pi * y), math.cos(3 * math.pi * y)
        s2y, c2y = math.sin(TWO_PI * y), math.cos(TWO_PI * y)
        f = s3x * s3x + (x - 1) ** 2 * (1 + s3y * s3y) + (y - 1) ** 2 * (1 + s2y * s2y)
        fx = 6 * math.pi * s3x * c3x + 2 * (x - 1) * (1 + s3y * s3y)
        fy = ((x - 1) ** 2 * 6 * math.pi * s3y * c3y + 2 * (y - 1) * (1 + s2y * s2y)
              + (y - 1) ** 2 * 4 * math.pi * s2y * c2y)
        return f, fx, fy
    raise ValueError(f"unknown landscape code {kind}")


def trajectory(kind, theta, z, start, width, use_mlp, use_adam, alpha, epochs, activation):
    """Optimize one benchmark run; returns ``(f_history, theta_final)``.

    ``theta`` is either ``(x, y)`` (linear) or the flat MLP parameters
    ``[W1 (width x 10), b1, W2 (2 x width), b2]``; its output offset is taken
    from the first forward pass so the initial point equals ``start`` exactly.
    ``f_history[k]`` is the
    value before update ``k``; the last entry is the value after the final
    update.  A non-finite value stops the run and fills the rest with inf.
    """
    theta = np.array(theta, dtype=np.float64)
    hist = np.full(epochs + 1, np.inf)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2, eps = 0.9, 0.999, 1e-8
    z = np.asarray(z, dtype=np.float64).ravel()
    start = np.asarray(start, dtype=np.float64)
    n_in = z.size
    for k in range(epochs + 1):
        if use_mlp:
            W1 = theta[: width * n_in].reshape(width, n_in)
            o = width * n_in
            bb1 = theta[o:o + width]
            W2 = theta[o + width:o + 3 * width].reshape(2, width)
            bb2 = theta[o + 3 * width:]
            pre = W1 @ z + bb1
            if activation == 0:
                h = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
            else:
                h = 1.0 / (1.0 + np.exp(-pre))
            raw = W2 @ h + bb2
            if k == 0:
                raw0 = raw
            out = (raw - raw0) + start
            x, y = out[0], out[1]
        else:
            x, y = theta[0], theta[1]
        f, fx, fy = landscape(kind, x, y)
        if not (math.isfinite(f) and math.isfinite(fx) and math.isfinite(fy)):
            break
        hist[k] = f
        if k == epochs:
            break
        if use_mlp:
            go = np.array([fx, fy])
            dh = W2.T @ go
            if activation == 0:
                dpre = np.where(pre > 0, dh, LEAKY_SLOPE * dh)
            else:
                dpre = dh * h * (1.0 - h)
            g = np.concatenate([np.outer(dpre, z).ravel(), dpre, np.outer(go, h).ravel(), go])
        else:
            g = np.array([fx, fy])
        if use_adam:
            t = k + 1
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            theta = theta - alpha * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        else:
            theta = theta - alpha * g
    return hist, theta
