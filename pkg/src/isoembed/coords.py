"""Arclength-type reparametrization x(y1) of the periodic direction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BranchError
from .grid import TWO_PI
from .metric import GeodesicMetric

_FINE = 1024


@dataclass
class XMap:
    """x(y1) = 2 pi int_0^y1 w / int_0^2pi w, with w = sqrt((alpha + 1) |kg|).

    ``sign`` is sign(kg) on the base curve; it selects the branch of the
    reduced operator.
    """

    metric: GeodesicMetric
    sign: int
    total: float
    _coef: np.ndarray = field(repr=False)
    _k: np.ndarray = field(repr=False)

    def _w(self, y, d: int = 0):
        m = self.metric
        s = self.sign
        c = (m.alpha + 1) * s
        k0 = c * m.kg(y)
        w = np.sqrt(k0)
        if d == 0:
            return w
        k1 = c * m.kg(y, 1)
        w1 = k1 / (2 * w)
        if d == 1:
            return w1
        k2 = c * m.kg(y, 2)
        w2 = (k2 - 2 * w1**2) / (2 * w)
        if d == 2:
            return w2
        raise ValueError("only derivatives up to 2 of the weight are coded")

    def __call__(self, y):
        """x(y); exact Fourier integration of the weight."""
        y = np.asarray(y, dtype=float)
        ky = np.multiply.outer(y, self._k)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(self._k == 0, 0.0, (np.exp(1j * ky) - 1.0) / (1j * np.where(self._k == 0, 1, self._k)))
        mean = np.real(self._coef[0])
        integral = mean * y + np.real(terms @ self._coef)
        return TWO_PI * integral / self.total

    def derivative(self, y, d: int = 1):
        """d-th derivative of x(y), d in 1..3."""
        return TWO_PI * self._w(y, d - 1) / self.total

    def inverse(self, x, tol: float = 1e-15, maxit: int = 50):
        x = np.asarray(x, dtype=float)
        y = x.copy()
        for _ in range(maxit):
            step = (self(y) - x) / self.derivative(y)
            y = y - step
            if np.max(np.abs(step)) < tol:
                break
        return y

    @property
    def is_identity(self) -> bool:
        c = self.metric._coef(1)
        return all(a == 0.0 for _, a in c.cos + c.sin)


def x_transform(m: GeodesicMetric) -> XMap:
    """Build the periodic reparametrization; requires kg of one sign."""
    s = np.arange(_FINE) * TWO_PI / _FINE
    kg = m.kg(s)
    if np.any(kg == 0) or (np.min(kg) < 0 < np.max(kg)):
        raise BranchError("kg changes sign or vanishes on the base curve; reparametrization undefined",
                          kg_min=float(np.min(kg)), kg_max=float(np.max(kg)))
    sign = 1 if kg[0] > 0 else -1
    w = np.sqrt((m.alpha + 1) * sign * kg)
    coef = np.fft.fft(w) / _FINE
    k = np.fft.fftfreq(_FINE, d=1.0 / _FINE)
    coef[_FINE // 2] = 0.0
    total = float(TWO_PI * np.real(coef[0]))
    return XMap(m, sign, total, coef, k)
