"""Tensor grids periodic in the first coordinate and the derivative operators on them.

The first axis is periodic on [0, 2pi) and is differentiated spectrally.  The
second axis is a closed interval sampled uniformly and differentiated with
finite-difference matrices built from Fornberg weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi


def fornberg_weights(z: float, nodes: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights at ``z`` for derivatives 0..m on ``nodes``.

    Returns an array of shape (m + 1, len(nodes)); row k holds the weights of
    the k-th derivative.
    """
    n = len(nodes)
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = nodes[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - z
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


def fd_matrix(t: np.ndarray, order: int, accuracy: int = 4) -> sp.csr_matrix:
    """Sparse matrix of the ``order``-th derivative on the uniform nodes ``t``.

    Interior rows use the centered stencil of the requested accuracy; rows near
    the ends use a one-sided stencil of the same width shifted inside the grid.
    """
    n = len(t)
    width = 2 * ((order + 1) // 2) - 1 + accuracy
    # one-sided stencils need one more node for the same accuracy
    width_edge = order + accuracy
    if width > n or width_edge > n:
        raise ValueError(f"grid of {n} nodes too small for derivative order {order}")
    half = width // 2
    rows, cols, vals = [], [], []
    for i in range(n):
        if half <= i < n - half:
            lo, hi = i - half, i + half + 1
        else:
            w = width_edge
            lo = 0 if i < half else n - w
            hi = lo + w
        idx = np.arange(lo, hi)
        wts = fornberg_weights(t[i], t[idx], order)[order]
        rows.extend([i] * len(idx))
        cols.extend(idx)
        vals.extend(wts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def origin_biased_matrix(t: np.ndarray, order: int, accuracy: int = 4, origin: float = 0.0) -> sp.csr_matrix:
    """Difference matrix whose stencils lean toward ``origin``.

    Each row uses ``accuracy + 2`` nodes: all but one on the origin side of the
    row node.  For operators with a regular singular point at the origin whose
    singular solutions decay away from it, centered stencils admit a parasitic
    mode concentrated next to the origin; these stencils do not.  The row at
    the origin itself is centered.
    """
    n = len(t)
    width = accuracy + 2
    if width > n:
        raise ValueError(f"grid of {n} nodes too small for derivative order {order}")
    z = int(np.argmin(np.abs(t - origin)))
    centered = fd_matrix(t, order, accuracy).tolil()
    rows, cols, vals = [], [], []
    for i in range(n):
        if i == z:
            row = centered.rows[i]
            rows.extend([i] * len(row))
            cols.extend(row)
            vals.extend(centered.data[i])
            continue
        lo = i - (width - 2) if t[i] > origin else i - 1
        lo = max(0, min(lo, n - width))
        idx = np.arange(lo, lo + width)
        wts = fornberg_weights(t[i], t[idx], order)[order]
        rows.extend([i] * width)
        cols.extend(idx)
        vals.extend(wts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def fd2_matrix(t: np.ndarray, order: int = 1) -> sp.csr_matrix:
    """Second-order accurate difference matrix (3-point centered, one-sided at ends)."""
    n = len(t)
    rows, cols, vals = [], [], []
    for i in range(n):
        if 0 < i < n - 1:
            idx = np.array([i - 1, i, i + 1])
        elif i == 0:
            idx = np.arange(0, 3 + (order - 1))
        else:
            idx = np.arange(n - 3 - (order - 1), n)
        wts = fornberg_weights(t[i], t[idx], order)[order]
        rows.extend([i] * len(idx))
        cols.extend(idx)
        vals.extend(wts)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def periodic_fd2_matrix(n: int, length: float = TWO_PI) -> sp.csr_matrix:
    """Centered second-order first-derivative matrix on a periodic grid."""
    h = length / n
    main = np.arange(n)
    rows = np.concatenate([main, main])
    cols = np.concatenate([(main + 1) % n, (main - 1) % n])
    vals = np.concatenate([np.full(n, 0.5 / h), np.full(n, -0.5 / h)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def spectral_derivative(f: np.ndarray, order: int = 1, axis: int = 0) -> np.ndarray:
    """Derivative of 2pi-periodic samples along ``axis`` by FFT."""
    n = f.shape[axis]
    k = np.fft.fftfreq(n, d=1.0 / n)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    mult = (1j * k) ** order
    shape = [1] * f.ndim
    shape[axis] = n
    fh = np.fft.fft(f, axis=axis) * mult.reshape(shape)
    return np.real(np.fft.ifft(fh, axis=axis))


def spectral_matrix(n: int, order: int = 1) -> np.ndarray:
    """Dense spectral differentiation matrix on n periodic nodes."""
    return spectral_derivative(np.eye(n), order=order, axis=0)


def spectral_antiderivative(f: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative integral from x=0 of periodic samples.

    Returns ``(F, mean)`` where ``F(x) = mean * x + P(x)`` with ``P`` periodic and
    ``F(0) = 0``; ``2 pi * mean`` is the integral over one period.
    """
    n = f.shape[axis]
    fh = np.fft.fft(f, axis=axis)
    k = np.fft.fftfreq(n, d=1.0 / n)
    shape = [1] * f.ndim
    shape[axis] = n
    mean = np.real(np.take(fh, 0, axis=axis)) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(k == 0, 0.0, 1.0 / (1j * k))
    if n % 2 == 0:
        inv[n // 2] = 0.0
    p = np.real(np.fft.ifft(fh * inv.reshape(shape), axis=axis))
    p = p - np.take(p, [0], axis=axis)
    x = np.arange(n) * TWO_PI / n
    return np.expand_dims(mean, axis) * x.reshape(shape) + p, mean


def fourier_interp(f: np.ndarray, x: np.ndarray | float, axis: int = 0) -> np.ndarray:
    """Evaluate the trigonometric interpolant of periodic samples at ``x``."""
    n = f.shape[axis]
    fh = np.fft.fft(np.moveaxis(f, axis, 0), axis=0) / n
    k = np.fft.fftfreq(n, d=1.0 / n)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.exp(1j * np.outer(x, k))
    if n % 2 == 0:
        w[:, n // 2] = np.cos(x * (n // 2))
    out = np.real(np.tensordot(w, fh, axes=(1, 0)))
    return out


@dataclass(frozen=True)
class Grid:
    """Tensor grid: nx periodic nodes on [0, 2pi) times nt nodes on [tmin, tmax]."""

    nx: int
    nt: int
    tmin: float = -2.0
    tmax: float = 2.0

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * TWO_PI / self.nx

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(self.tmin, self.tmax, self.nt)

    @property
    def hx(self) -> float:
        return TWO_PI / self.nx

    @property
    def ht(self) -> float:
        return (self.tmax - self.tmin) / (self.nt - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nt)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.t, indexing="ij")

    @cached_property
    def zero_index(self) -> int | None:
        """Index of the t = 0 line, if it is a grid line."""
        j = int(np.argmin(np.abs(self.t)))
        return j if abs(self.t[j]) < 1e-12 * max(1.0, self.ht) else None

    def dt_matrix(self, order: int, accuracy: int = 4, biased: bool = False) -> sp.csr_matrix:
        return _dt_cache(self.nt, self.tmin, self.tmax, order, accuracy, biased)

    def dx(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        return spectral_derivative(f, order=order, axis=0)

    def dt(self, f: np.ndarray, order: int = 1, accuracy: int = 4, biased: bool = False) -> np.ndarray:
        return np.asarray(self.dt_matrix(order, accuracy, biased).dot(f.T)).T

    @cached_property
    def t_weights(self) -> np.ndarray:
        """Composite Simpson weights in t (trapezoid correction when nt is even)."""
        n, h = self.nt, self.ht
        if n % 2 == 1:
            w = np.full(n, 2.0 * h / 3.0)
            w[1::2] = 4.0 * h / 3.0
            w[0] = w[-1] = h / 3.0
        else:
            w = np.full(n, h)
            w[0] = w[-1] = h / 2.0
        return w

    def integrate(self, f: np.ndarray) -> float:
        """Quadrature over [0, 2pi) x [tmin, tmax] (trapezoid in x, Simpson in t)."""
        return float(self.hx * np.sum(f * self.t_weights[None, :]))


_DT_CACHE: dict = {}


def _dt_cache(nt, tmin, tmax, order, accuracy, biased=False):
    key = (nt, tmin, tmax, order, accuracy, biased)
    if key not in _DT_CACHE:
        t = np.linspace(tmin, tmax, nt)
        if biased:
            _DT_CACHE[key] = origin_biased_matrix(t, order, accuracy)
        elif accuracy == 2:
            _DT_CACHE[key] = fd2_matrix(t, order)
        else:
            _DT_CACHE[key] = fd_matrix(t, order, accuracy)
    return _DT_CACHE[key]


@dataclass
class GridField:
    """Samples of a scalar (shape (nx, nt)) or small vector (shape (k, nx, nt)) on a grid."""

    grid: Grid
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[-2:] != self.grid.shape:
            raise ValueError(f"field shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def ncomp(self) -> int:
        return 1 if self.values.ndim == 2 else self.values.shape[0]

    def l2(self) -> float:
        v = self.values if self.values.ndim == 3 else self.values[None]
        return float(np.sqrt(sum(self.grid.integrate(c**2) for c in v)))

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))
