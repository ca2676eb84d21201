"""CSI pre-processing, DFT codebooks, quantisation and angular power spectra."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class DegenerateInputError(ValueError):
    """All-zero channel where a direction is required."""


def angular_transform(h, axis=-1):
    """Unitary DFT along ``axis``; norm-preserving and invertible."""
    return np.fft.fft(np.asarray(h, dtype=np.complex128), axis=axis, norm="ortho")


def inverse_angular_transform(x, axis=-1):
    return np.fft.ifft(np.asarray(x, dtype=np.complex128), axis=axis, norm="ortho")


def log_whiten(x, floor):
    """Log of ``max(x, floor)`` standardised to zero mean and unit variance.

    Works on the last axis, so a 2-D input is whitened row by row. Constant
    rows map to zeros.
    """
    if not np.all(np.asarray(floor) > 0):
        raise ValueError("floor must be positive")
    z = np.log(np.maximum(np.asarray(x, dtype=np.float64), floor))
    # constancy is judged on the logs themselves; the mean can round off
    varying = np.ptp(z, axis=-1, keepdims=True) > 0
    centred = z - z.mean(axis=-1, keepdims=True)
    sd = centred.std(axis=-1, keepdims=True)
    return np.where(varying, centred / np.where(varying, sd, 1.0), 0.0)


def csi_features(h, rel_floor=1e-12):
    """Angular-domain magnitudes, log-whitened with a floor relative to each row maximum."""
    mag = np.abs(angular_transform(h))
    peak = mag.max(axis=-1, keepdims=True)
    return log_whiten(mag, np.where(peak > 0, peak * rel_floor, 1.0))


@dataclass(frozen=True, eq=False)
class Codebook:
    num_elements: int
    oversampling: int
    codewords: np.ndarray  # (K, M), unit-norm rows

    @property
    def size(self):
        return self.codewords.shape[0]

    def sines(self, spacing=0.5):
        """Sine of the relative angle each codeword points at, wrapped into the visible range."""
        k = np.arange(self.size)
        u = k / (self.oversampling * self.num_elements * spacing)
        period = 1.0 / spacing
        return (u + period / 2) % period - period / 2

    def __eq__(self, other):
        return (isinstance(other, Codebook) and self.num_elements == other.num_elements
                and self.oversampling == other.oversampling)

    def __hash__(self):
        return hash((self.num_elements, self.oversampling))


def build_dft_codebook(num_elements, oversampling=1) -> Codebook:
    if num_elements < 1 or oversampling < 1:
        raise ValueError("num_elements and oversampling must be >= 1")
    k = np.arange(oversampling * num_elements)[:, None]
    n = np.arange(num_elements)[None, :]
    cw = np.exp(1j * 2.0 * np.pi * k * n / (oversampling * num_elements)) / np.sqrt(num_elements)
    cw.setflags(write=False)
    return Codebook(num_elements, oversampling, cw)


def codeword_responses(h, codebook: Codebook):
    """``|<c_k, h>|`` for every codeword; works on a single vector or a batch."""
    h = np.asarray(h, dtype=np.complex128)
    if h.shape[-1] != codebook.num_elements:
        raise ValueError(f"channel length {h.shape[-1]} != codebook size {codebook.num_elements}")
    return np.abs(h @ codebook.codewords.conj().T)


def quantize(h, codebook: Codebook):
    """Index of the best codeword (smallest index on ties). Vectorised over leading axes."""
    resp = codeword_responses(h, codebook)
    if np.any(resp.max(axis=-1) == 0):
        raise DegenerateInputError("cannot quantise an all-zero channel")
    return np.argmax(resp, axis=-1)


def beamforming_gain(h, w):
    """``|<w, h>|^2`` along the last axis."""
    w = np.asarray(w, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    return np.abs(np.sum(np.conj(w) * h, axis=-1)) ** 2


def gain_ratio(h, indices, codebook: Codebook):
    """Beamforming gain of the chosen codewords relative to the best codeword."""
    h = np.atleast_2d(h)
    indices = np.atleast_1d(indices)
    resp = codeword_responses(h, codebook) ** 2
    best = resp.max(axis=-1)
    if np.any(best == 0):
        raise DegenerateInputError("cannot normalise against an all-zero channel")
    return resp[np.arange(len(h)), indices] / best


def normalized_error(h, w_inferred, codebook: Codebook):
    h = np.asarray(h, dtype=np.complex128)
    k = quantize(h, codebook)
    opt = beamforming_gain(h, codebook.codewords[k])
    return float(1.0 - beamforming_gain(h, w_inferred) / opt)


def nearest_codeword(sine, codebook: Codebook, spacing=0.5):
    """Codeword whose pointing direction is closest (circularly, in sine space) to ``sine``."""
    u = codebook.sines(spacing)
    period = 1.0 / spacing
    d = np.abs((np.asarray(sine)[..., None] - u + period / 2) % period - period / 2)
    return np.argmin(d, axis=-1)


@dataclass(frozen=True, eq=False)
class Aps:
    bins: np.ndarray
    grid: np.ndarray  # relative angles in radians

    @property
    def sines(self):
        return np.sin(self.grid)


def aps_grid(grid_size, spacing=0.5):
    """Uniform sine grid over one spatial period: ``u_g = -1/(2d) + g/(G d)``."""
    period = 1.0 / spacing
    return -period / 2 + period * np.arange(grid_size) / grid_size


@lru_cache(maxsize=16)
def aps_matrix(num_elements, grid_size, spacing=0.5):
    """Steering matrix over the APS grid; cached and read-only."""
    u = aps_grid(grid_size, spacing)
    n = np.arange(num_elements)
    a = np.exp(1j * 2.0 * np.pi * spacing * n[:, None] * u[None, :])
    a.setflags(write=False)
    return a


def compute_aps(samples, grid_size, spacing=0.5) -> Aps:
    """Mean angular power spectrum of the snapshots in ``samples`` (``(S, M)``).

    Bins are scaled by ``1/G`` so the spectrum of a full-period grid sums to
    the mean snapshot power for every ``G >= M``.
    """
    x = np.atleast_2d(np.asarray(samples, dtype=np.complex128))
    if x.shape[0] == 0 or x.size == 0:
        raise ValueError("compute_aps needs at least one snapshot")
    m = x.shape[1]
    if grid_size < m:
        raise ValueError(f"grid_size {grid_size} smaller than array size {m}")
    a = aps_matrix(m, grid_size, spacing)
    power = np.abs(x @ a.conj()) ** 2
    bins = power.mean(axis=0) / grid_size
    u = aps_grid(grid_size, spacing)
    return Aps(bins, np.arcsin(np.clip(u, -1.0, 1.0)))


def batch_aps(snapshots, grid_size, spacing=0.5):
    """APS for many points at once: ``snapshots`` is ``(N, S, M)``, result ``(N, G)``."""
    x = np.asarray(snapshots, dtype=np.complex128)
    n, s, m = x.shape
    if grid_size < m:
        raise ValueError(f"grid_size {grid_size} smaller than array size {m}")
    a = aps_matrix(m, grid_size, spacing)
    power = np.abs(x.reshape(n * s, m) @ a.conj()) ** 2
    return power.reshape(n, s, grid_size).mean(axis=1) / grid_size
