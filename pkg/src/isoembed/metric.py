"""Metrics in geodesic normal form  g = B(x1, x2)^2 dx1^2 + dx2^2.

B is a polynomial in x2 whose coefficients are trigonometric polynomials in
x1, so every partial derivative and every cancelling quotient used downstream
is available in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegenerateMetricError, OrderMismatchError
from .grid import TWO_PI

ZERO_TOL = 1e-8
NONZERO_FLOOR = 1e-6


@dataclass(frozen=True)
class TrigPoly:
    """c + sum_k (a_k cos kx + b_k sin kx)."""

    const: float = 0.0
    cos: tuple[tuple[int, float], ...] = ()
    sin: tuple[tuple[int, float], ...] = ()

    def __call__(self, x, d: int = 0):
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.const if d == 0 else 0.0)
        shift = d * np.pi / 2
        for k, a in self.cos:
            out = out + a * k**d * np.cos(k * x + shift)
        for k, b in self.sin:
            out = out + b * k**d * np.sin(k * x + shift)
        return out

    def antiderivative(self, x):
        """Integral from 0 to x."""
        x = np.asarray(x, dtype=float)
        out = self.const * x
        for k, a in self.cos:
            out = out + a * np.sin(k * x) / k
        for k, b in self.sin:
            out = out + b * (1.0 - np.cos(k * x)) / k
        return out

    @property
    def is_zero(self) -> bool:
        return self.const == 0.0 and all(a == 0.0 for _, a in self.cos + self.sin)

    def scaled(self, s: float) -> "TrigPoly":
        return TrigPoly(self.const * s, tuple((k, a * s) for k, a in self.cos), tuple((k, b * s) for k, b in self.sin))

    def to_dict(self) -> dict:
        return {"const": self.const, "cos": [list(p) for p in self.cos], "sin": [list(p) for p in self.sin]}

    @classmethod
    def from_dict(cls, d) -> "TrigPoly":
        if isinstance(d, (int, float)):
            return cls(float(d))
        return cls(float(d.get("const", 0.0)),
                   tuple((int(k), float(a)) for k, a in d.get("cos", [])),
                   tuple((int(k), float(b)) for k, b in d.get("sin", [])))


@dataclass(frozen=True)
class GeodesicMetric:
    """B(x1, x2) = sum_k c_k(x1) x2^k with c_0 = 1 and c_1 = kg.

    ``alpha`` is the vanishing-order parameter: K is expected to vanish to
    order 2 alpha - 1 on x2 = 0.
    """

    alpha: int
    coeffs: tuple[TrigPoly, ...]
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be a positive integer")
        c0 = self.coeffs[0]
        if c0.const != 1.0 or not all(a == 0.0 for _, a in c0.cos + c0.sin):
            raise ValueError("B(x1, 0) must be identically 1")

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def _coef(self, k: int) -> TrigPoly:
        return self.coeffs[k] if k < len(self.coeffs) else TrigPoly()

    def B(self, x1, x2, d1: int = 0, d2: int = 0):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        out = np.zeros(np.broadcast(x1, x2).shape)
        for k in range(d2, len(self.coeffs)):
            c = self.coeffs[k]
            if c.is_zero:
                continue
            fall = math.perm(k, d2)
            out = out + fall * c(x1, d1) * x2 ** (k - d2)
        return out

    def kg(self, x1, d: int = 0):
        return self._coef(1)(x1, d)

    def check_positive(self, x1, x2) -> np.ndarray:
        b = self.B(x1, x2)
        if np.any(~(b > 0)):
            idx = np.unravel_index(int(np.argmin(np.where(np.isfinite(b), b, -np.inf))), np.shape(b))
            raise DegenerateMetricError(f"B <= 0 at sample {idx}", min_B=float(np.nanmin(b)))
        return b

    def det_g(self, x1, x2):
        return self.B(x1, x2) ** 2

    # closed-form quotients; each would be 0/0 on x2 = 0 if evaluated naively

    def curvature_quotient(self, x1, x2):
        """D = d22 B / x2^(2 alpha - 1), so that K0 = -D / B."""
        p = 2 * self.alpha - 1
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.broadcast(x1, np.asarray(x2)).shape)
        for k in range(2 * self.alpha + 1, len(self.coeffs)):
            out = out + k * (k - 1) * self.coeffs[k](x1) * np.asarray(x2) ** (k - 2 - p)
        return out

    def curvature_quotient_increment(self, x1, x2):
        """(D(x1, x2) - D(x1, 0)) / x2."""
        p = 2 * self.alpha - 1
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.broadcast(x1, np.asarray(x2)).shape)
        for k in range(2 * self.alpha + 2, len(self.coeffs)):
            out = out + k * (k - 1) * self.coeffs[k](x1) * np.asarray(x2) ** (k - 3 - p)
        return out

    def kg_increment(self, x1, x2):
        """(d2 B(x1, x2) - kg(x1)) / x2."""
        x1 = np.asarray(x1, dtype=float)
        out = np.zeros(np.broadcast(x1, np.asarray(x2)).shape)
        for k in range(2, len(self.coeffs)):
            out = out + k * self.coeffs[k](x1) * np.asarray(x2) ** (k - 2)
        return out

    def K0(self, x1, x2):
        return -self.curvature_quotient(x1, x2) / self.B(x1, x2)

    def K_taylor(self, x1, order: int) -> np.ndarray:
        """Taylor coefficients k_j(x1), j = 0..order, of K = -d22 B / B in x2 at 0."""
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        n = order + 1
        b = np.zeros((n,) + x1.shape)
        for k in range(min(n, len(self.coeffs))):
            b[k] = self.coeffs[k](x1)
        num = np.zeros_like(b)
        for j in range(n):
            k = j + 2
            if k < len(self.coeffs):
                num[j] = -k * (k - 1) * self.coeffs[k](x1)
        inv = np.zeros_like(b)
        inv[0] = 1.0
        for m in range(1, n):
            inv[m] = -sum(b[j] * inv[m - j] for j in range(1, m + 1))
        out = np.zeros_like(b)
        for m in range(n):
            out[m] = sum(num[j] * inv[m - j] for j in range(m + 1))
        return out

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "name": self.name, "params": self.params,
                "coeffs": [c.to_dict() for c in self.coeffs]}

    @classmethod
    def from_dict(cls, d: dict) -> "GeodesicMetric":
        return cls(int(d["alpha"]), tuple(TrigPoly.from_dict(c) for c in d["coeffs"]),
                   d.get("name", "custom"), d.get("params", {}))


# ---------------------------------------------------------------- families

def kg_family(alpha: int, mu: float, k0: float = 1.0, c: float = 0.0, mode: int = 1) -> GeodesicMetric:
    """B = 1 + kg(x1) x2 - mu x2^(2a+1) / ((2a)(2a+1)) with kg = k0 + c cos(mode x1).

    Gives K = mu x2^(2 alpha - 1) / B and K0(x1, 0) = mu.
    """
    kg = TrigPoly(k0, ((mode, c),) if c else ())
    coeffs = [TrigPoly(1.0), kg] + [TrigPoly() for _ in range(2, 2 * alpha + 1)]
    coeffs.append(TrigPoly(-mu / ((2 * alpha) * (2 * alpha + 1))))
    name = "TF" if (k0 == 1.0 and c == 0.0) else "kg-variant"
    return GeodesicMetric(alpha, tuple(coeffs), name, {"mu": mu, "k0": k0, "c": c, "mode": mode})


def test_family(alpha: int, mu: float) -> GeodesicMetric:
    """TF(alpha, mu): the built-in alpha-surface with kg = 1."""
    return kg_family(alpha, mu)


def flat_annulus(alpha: int = 1, k0: float = 1.0, c: float = 0.0, mode: int = 1) -> GeodesicMetric:
    """B = 1 + kg(x1) x2, a flat metric (K = 0)."""
    kg = TrigPoly(k0, ((mode, c),) if c else ())
    return GeodesicMetric(alpha, (TrigPoly(1.0), kg), "flat", {"k0": k0, "c": c, "mode": mode})


def flat_cylinder(alpha: int = 1) -> GeodesicMetric:
    return GeodesicMetric(alpha, (TrigPoly(1.0),), "cylinder", {})


# ---------------------------------------------------------------- operations

@dataclass
class ChristoffelField:
    gamma111: np.ndarray
    gamma112: np.ndarray
    gamma211: np.ndarray

    @property
    def gamma221(self):
        return np.zeros_like(self.gamma111)

    gamma212 = gamma221
    gamma222 = gamma221

    def as_tuple(self):
        return self.gamma111, self.gamma112, self.gamma211


def christoffel(m: GeodesicMetric, x1, x2) -> ChristoffelField:
    """Nonzero Christoffel symbols (d1B/B, d2B/B, -B d2B) of the normal form."""
    b = m.check_positive(x1, x2)
    b1 = m.B(x1, x2, d1=1)
    b2 = m.B(x1, x2, d2=1)
    return ChristoffelField(b1 / b, b2 / b, -b * b2)


def gauss_curvature(m: GeodesicMetric, x1, x2):
    """K = -d22 B / B."""
    b = m.check_positive(x1, x2)
    return -m.B(x1, x2, d2=2) / b


@dataclass
class CurvatureFactorization:
    alpha: int
    K: Callable
    K0: Callable
    x1: np.ndarray
    K0_on_curve: np.ndarray
    taylor: np.ndarray  # (2 alpha, n) Taylor coefficients of K at x2 = 0

    def dK_on_curve(self, j: int) -> np.ndarray:
        """d2^j K (x1, 0) on the samples."""
        return math.factorial(j) * self.taylor[j]


def factor_K0(m: GeodesicMetric, n: int = 256) -> CurvatureFactorization:
    """Split K = x2^(2 alpha - 1) K0 after verifying the vanishing order on x2 = 0."""
    p = 2 * m.alpha - 1
    x1 = np.arange(n) * TWO_PI / n
    order = max(p + 2, 4)
    tay = m.K_taylor(x1, order)
    derivs = np.array([math.factorial(j) * np.max(np.abs(tay[j])) for j in range(order + 1)])
    mins = np.array([math.factorial(j) * np.min(np.abs(tay[j])) for j in range(order + 1)])
    nonzero = np.nonzero(derivs >= ZERO_TOL)[0]
    detected = int(nonzero[0]) if len(nonzero) else None
    if detected != p or mins[p] <= NONZERO_FLOOR:
        found = "none up to order %d" % order if detected is None else str(detected)
        raise OrderMismatchError(
            f"K must vanish to order exactly {p} on x2 = 0 (alpha = {m.alpha}); detected order {found}",
            detected_order=detected, expected_order=p)
    return CurvatureFactorization(
        alpha=m.alpha,
        K=lambda a, b: gauss_curvature(m, a, b),
        K0=m.K0,
        x1=x1,
        K0_on_curve=tay[p].copy(),
        taylor=tay[: p + 1].copy(),
    )


@dataclass
class ConditionResult:
    passed: bool
    value: complex | float


@dataclass
class AlphaSurfaceReport:
    cond_order: ConditionResult
    cond_total_turning: ConditionResult
    cond_closure: ConditionResult

    @property
    def verdict(self) -> bool:
        return self.cond_order.passed and self.cond_total_turning.passed and self.cond_closure.passed

    def failures(self) -> list[str]:
        names = {"cond_order": "sign condition kg d2^(2a-1) K > 0 on the base curve",
                 "cond_total_turning": "total turning condition int kg dx1 = 2 pi",
                 "cond_closure": "closure condition int exp(i int kg) dx1 = 0"}
        return [names[k] for k in names if not getattr(self, k).passed]

    def to_dict(self) -> dict:
        c = self.cond_closure.value
        return {
            "cond_order": {"passed": self.cond_order.passed, "min_kg_dK": float(self.cond_order.value)},
            "cond_total_turning": {"passed": self.cond_total_turning.passed,
                                   "integral": float(self.cond_total_turning.value)},
            "cond_closure": {"passed": self.cond_closure.passed, "real": float(c.real), "imag": float(c.imag),
                             "abs": float(abs(c))},
            "verdict": self.verdict,
        }


def check_alpha_surface(m: GeodesicMetric, quad_n: int = 256, tol: float = 1e-8) -> AlphaSurfaceReport:
    """Evaluate the three necessary conditions for an alpha-surface.

    The sign condition is checked pointwise on ``quad_n`` nodes; the two
    integrals use the periodic trapezoid rule.
    """
    if quad_n < 16:
        raise ValueError("quad_n must be at least 16")
    p = 2 * m.alpha - 1
    x1 = np.arange(quad_n) * TWO_PI / quad_n
    h = TWO_PI / quad_n
    kg = m.kg(x1)
    dK = math.factorial(p) * m.K_taylor(x1, p)[p]
    sign_vals = kg * dK
    order = ConditionResult(bool(np.all(sign_vals > 0)), float(np.min(sign_vals)))
    turning_val = float(h * np.sum(kg))
    turning = ConditionResult(abs(turning_val - TWO_PI) <= tol, turning_val)
    phase = m._coef(1).antiderivative(x1)
    closure_val = complex(h * np.sum(np.exp(1j * phase)))
    closure = ConditionResult(abs(closure_val) <= tol, closure_val)
    return AlphaSurfaceReport(order, turning, closure)
