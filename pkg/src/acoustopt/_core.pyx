# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled benchmark trajectory kernel; same contract as ``_bench_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, exp, sqrt, pow, isfinite, M_PI, M_E

cnp.import_array()

cdef double LEAKY_SLOPE = 0.01


cdef inline void _landscape(int kind, double x, double y, double* out) noexcept nogil:
    cdef double r, s, e1, e2, c, s3x, c3x, s3y, c3y, s2y, c2y, tp = 2.0 * M_PI
    if kind == 0:
        r = y - x * x
        out[0] = (1 - x) * (1 - x) + 100 * r * r
        out[1] = -2 * (1 - x) - 400 * x * r
        out[2] = 200 * r
    elif kind == 1:
        out[0] = 20 + x * x - 10 * cos(tp * x) + y * y - 10 * cos(tp * y)
        out[1] = 2 * x + 10 * tp * sin(tp * x)
        out[2] = 2 * y + 10 * tp * sin(tp * y)
    elif kind == 2:
        s = sqrt(0.5 * (x * x + y * y))
        e1 = exp(-0.2 * s)
        e2 = exp(0.5 * (cos(tp * x) + cos(tp * y)))
        out[0] = -20 * e1 - e2 + M_E + 20
        if s > 0:
            c = 20 * 0.2 * e1 * 0.5 / s
            out[1] = c * x
            out[2] = c * y
        else:
            out[1] = 0.0
            out[2] = 0.0
        out[1] += e2 * 0.5 * tp * sin(tp * x)
        out[2] += e2 * 0.5 * tp * sin(tp * y)
    else:
        s3x = sin(3 * M_PI * x)
        c3x = cos(3 * M_PI * x)
        s3y = sin(3 * M_PI * y)
        c3y = cos(3 * M_PI * y)
        s2y = sin(tp * y)
        c2y = cos(tp * y)
        out[0] = s3x * s3x + (x - 1) * (x - 1) * (1 + s3y * s3y) + (y - 1) * (y - 1) * (1 + s2y * s2y)
        out[1] = 6 * M_PI * s3x * c3x + 2 * (x - 1) * (1 + s3y * s3y)
        out[2] = ((x - 1) * (x - 1) * 6 * M_PI * s3y * c3y + 2 * (y - 1) * (1 + s2y * s2y)
                  + (y - 1) * (y - 1) * 4 * M_PI * s2y * c2y)


def landscape(int kind, double x, double y):
    cdef double out[3]
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown landscape code {kind}")
    _landscape(kind, x, y, out)
    return out[0], out[1], out[2]


def trajectory(int kind, theta_in, z_in, start_in, int width, bint use_mlp,
               bint use_adam, double alpha, int epochs, int activation):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] theta = np.array(theta_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.ascontiguousarray(z_in, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] start = np.ascontiguousarray(start_in, dtype=np.float64).ravel()
    cdef Py_ssize_t n = theta.shape[0], n_in = z.shape[0], i, j, k, o1, o2, o3
    cdef cnp.ndarray[cnp.float64_t, ndim=1] hist = np.full(epochs + 1, np.inf)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] m = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] v = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] pre = np.zeros(max(width, 1))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] h = np.zeros(max(width, 1))
    cdef double raw0[2]
    cdef double b1 = 0.9, b2 = 0.999, eps = 1e-8, c1, c2, x, y, acc0, acc1, dh
    cdef double res[3]
    o1 = width * n_in
    o2 = o1 + width
    o3 = o2 + 2 * width
    with nogil:
        for k in range(epochs + 1):
            if use_mlp:
                for i in range(width):
                    acc0 = 0.0
                    for j in range(n_in):
                        acc0 = acc0 + theta[i * n_in + j] * z[j]
                    pre[i] = acc0 + theta[o1 + i]
                    if activation == 0:
                        h[i] = pre[i] if pre[i] > 0 else LEAKY_SLOPE * pre[i]
                    else:
                        h[i] = 1.0 / (1.0 + exp(-pre[i]))
                acc0 = 0.0
                acc1 = 0.0
                for i in range(width):
                    acc0 = acc0 + theta[o2 + i] * h[i]
                    acc1 = acc1 + theta[o2 + width + i] * h[i]
                acc0 = acc0 + theta[o3]
                acc1 = acc1 + theta[o3 + 1]
                if k == 0:
                    raw0[0] = acc0
                    raw0[1] = acc1
                x = (acc0 - raw0[0]) + start[0]
                y = (acc1 - raw0[1]) + start[1]
            else:
                x = theta[0]
                y = theta[1]
            _landscape(kind, x, y, res)
            if not (isfinite(res[0]) and isfinite(res[1]) and isfinite(res[2])):
                break
            hist[k] = res[0]
            if k == epochs:
                break
            if use_mlp:
                for i in range(width):
                    dh = theta[o2 + i] * res[1] + theta[o2 + width + i] * res[2]
                    if activation == 0:
                        if not pre[i] > 0:
                            dh = LEAKY_SLOPE * dh
                    else:
                        dh = dh * h[i] * (1.0 - h[i])
                    for j in range(n_in):
                        g[i * n_in + j] = dh * z[j]
                    g[o1 + i] = dh
                    g[o2 + i] = res[1] * h[i]
                    g[o2 + width + i] = res[2] * h[i]
                g[o3] = res[1]
                g[o3 + 1] = res[2]
            else:
                g[0] = res[1]
                g[1] = res[2]
            if use_adam:
                c1 = 1 - pow(b1, k + 1)
                c2 = 1 - pow(b2, k + 1)
                for i in range(n):
                    m[i] = b1 * m[i] + (1 - b1) * g[i]
                    v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
                    theta[i] = theta[i] - alpha * (m[i] / c1) / (sqrt(v[i] / c2) + eps)
            else:
                for i in range(n):
                    theta[i] = theta[i] - alpha * g[i]
    return hist, theta
