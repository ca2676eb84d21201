"""Hot numeric kernels, each with a numba build and a numpy fallback.

The public functions dispatch on :func:`csilab._accel.numba_enabled` at call
time, so flipping ``CSILAB_DISABLE_NUMBA`` takes effect without a reload.
Both builds are importable directly (``NUMPY_KERNELS`` / ``NUMBA_KERNELS``)
for the benchmark and the cross-check tests.
"""
import math

import numpy as np

from ._accel import HAS_NUMBA, njit, numba_enabled

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------- numpy path

def _accumulate_paths_np(gains, slopes, num_elements, chunk=4096):
    n_rows = gains.shape[0]
    out = np.empty((n_rows, num_elements), dtype=np.complex128)
    idx = np.arange(num_elements, dtype=np.float64)
    for start in range(0, n_rows, chunk):
        g = gains[start:start + chunk]
        s = slopes[start:start + chunk]
        phase = np.exp(1j * s[:, :, None] * idx[None, None, :])
        out[start:start + chunk] = np.einsum("rp,rpn->rn", g, phase)
    return out


def _array_power_np(y, spacing, u):
    # |a(u)^H y|^2 for one u per row
    n = np.arange(y.shape[1], dtype=np.float64)
    a = np.exp(1j * 2.0 * np.pi * spacing * u[:, None] * n[None, :])
    return np.abs(np.sum(np.conj(a) * y, axis=1)) ** 2


def _golden_refine_np(y, spacing, lo, hi, tol):
    a = lo.astype(np.float64).copy()
    b = hi.astype(np.float64).copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _array_power_np(y, spacing, c)
    fd = _array_power_np(y, spacing, d)
    while np.max(b - a) > tol:
        left = fc > fd
        # left: keep [a, d]; otherwise keep [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        f_new = _array_power_np(y, spacing, np.where(left, new_c, new_d))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def _greedy_color_np(adjacency, order):
    n = adjacency.shape[0]
    colors = np.full(n, -1, dtype=np.int64)
    for v in order:
        used = colors[adjacency[v] & (colors >= 0)]
        taken = np.zeros(n + 1, dtype=bool)
        taken[used] = True
        colors[v] = int(np.argmin(taken))
    return colors


# ---------------------------------------------------------------- numba path

@njit
def _accumulate_paths_nb(gains, slopes, num_elements):
    n_rows, n_paths = gains.shape
    out = np.zeros((n_rows, num_elements), dtype=np.complex128)
    for r in range(n_rows):
        for p in range(n_paths):
            g = gains[r, p]
            if g == 0:
                continue
            s = slopes[r, p]
            for n in range(num_elements):
                out[r, n] += g * np.exp(1j * s * n)
    return out


@njit
def _row_power_nb(y, spacing, u):
    acc = 0.0 + 0.0j
    w = 2.0 * np.pi * spacing * u
    for n in range(y.shape[0]):
        acc += np.exp(-1j * w * n) * y[n]
    return acc.real * acc.real + acc.imag * acc.imag


@njit
def _golden_refine_nb(y, spacing, lo, hi, tol):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    out = np.empty(y.shape[0])
    for r in range(y.shape[0]):
        row = y[r]
        a = lo[r]
        b = hi[r]
        c = b - g * (b - a)
        d = a + g * (b - a)
        fc = _row_power_nb(row, spacing, c)
        fd = _row_power_nb(row, spacing, d)
        while b - a > tol:
            if fc > fd:
                b = d
                d = c
                fd = fc
                c = b - g * (b - a)
                fc = _row_power_nb(row, spacing, c)
            else:
                a = c
                c = d
                fc = fd
                d = a + g * (b - a)
                fd = _row_power_nb(row, spacing, d)
        out[r] = 0.5 * (a + b)
    return out


@njit
def _greedy_color_nb(adjacency, order):
    n = adjacency.shape[0]
    colors = np.full(n, -1, dtype=np.int64)
    taken = np.zeros(n + 1, dtype=np.bool_)
    for v in order:
        taken[:] = False
        for w in range(n):
            if adjacency[v, w] and colors[w] >= 0:
                taken[colors[w]] = True
        c = 0
        while taken[c]:
            c += 1
        colors[v] = c
    return colors


NUMPY_KERNELS = {
    "accumulate_paths": _accumulate_paths_np,
    "golden_refine": _golden_refine_np,
    "greedy_color": _greedy_color_np,
}

NUMBA_KERNELS = {
    "accumulate_paths": _accumulate_paths_nb,
    "golden_refine": _golden_refine_nb,
    "greedy_color": _greedy_color_nb,
} if HAS_NUMBA else {}


def _pick(name):
    if numba_enabled():
        return NUMBA_KERNELS[name]
    return NUMPY_KERNELS[name]


# ---------------------------------------------------------------- dispatch

def accumulate_paths(gains, slopes, num_elements):
    """Sum of per-path array responses.

    ``out[r, n] = sum_p gains[r, p] * exp(1j * slopes[r, p] * n)``; ``slopes``
    is the per-element phase increment of each path in radians.
    """
    gains = np.ascontiguousarray(gains, dtype=np.complex128)
    slopes = np.ascontiguousarray(slopes, dtype=np.float64)
    if gains.ndim != 2 or gains.shape != slopes.shape:
        raise ValueError("gains and slopes must be equal-shape 2-D arrays")
    return _pick("accumulate_paths")(gains, slopes, int(num_elements))


def golden_refine(y, spacing, lo, hi, tol=1e-6):
    """Per-row golden-section maximisation of ``|a(u)^H y|^2`` over ``u`` in ``[lo, hi]``."""
    y = np.ascontiguousarray(y, dtype=np.complex128)
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    if y.shape[0] == 0:
        return np.empty(0)
    return _pick("golden_refine")(y, float(spacing), lo, hi, float(tol))


def greedy_color(adjacency, order):
    """Smallest-free-colour assignment visiting vertices in ``order``."""
    adjacency = np.ascontiguousarray(adjacency, dtype=np.bool_)
    order = np.ascontiguousarray(order, dtype=np.int64)
    return _pick("greedy_color")(adjacency, order)
