"""Scalar functions carrying analytic first and second derivatives."""

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.hermite_e import HermiteE
from scipy.interpolate import CubicSpline

from .errors import DerivativeUnavailable
from .quadrature import Domain


class DifferentiableFn:
    """A callable x -> f(x) bundled with optional d1 and d2 callables.

    Instances are immutable by convention.  Linear combinations preserve
    derivative availability; anything with a missing derivative raises
    DerivativeUnavailable when that derivative is requested.
    """

    __slots__ = ("_value", "_d1", "_d2", "representation")

    def __init__(self, value, d1=None, d2=None, representation="custom"):
        self._value = value
        self._d1 = d1
        self._d2 = d2
        self.representation = representation

    def __call__(self, x):
        return self._value(x)

    @property
    def has_derivatives(self):
        return self._d1 is not None and self._d2 is not None

    def d1(self, x):
        if self._d1 is None:
            raise DerivativeUnavailable(f"{self.representation} function has no first derivative")
        return self._d1(x)

    def d2(self, x):
        if self._d2 is None:
            raise DerivativeUnavailable(f"{self.representation} function has no second derivative")
        return self._d2(x)

    def _combine(self, other, sign):
        if not isinstance(other, DifferentiableFn):
            other = constant_fn(float(other))
        a, b = self, other
        d1 = None
        d2 = None
        if a._d1 is not None and b._d1 is not None:
            d1 = lambda x: a._d1(x) + sign * b._d1(x)
        if a._d2 is not None and b._d2 is not None:
            d2 = lambda x: a._d2(x) + sign * b._d2(x)
        return DifferentiableFn(lambda x: a._value(x) + sign * b._value(x), d1, d2)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self.__mul__(-1.0)

    def __mul__(self, other):
        if isinstance(other, DifferentiableFn):
            a, b = self, other
            d1 = None
            d2 = None
            if a._d1 is not None and b._d1 is not None:
                d1 = lambda x: a._d1(x) * b._value(x) + a._value(x) * b._d1(x)
                if a._d2 is not None and b._d2 is not None:
                    d2 = lambda x: (a._d2(x) * b._value(x)
                                    + 2.0 * a._d1(x) * b._d1(x)
                                    + a._value(x) * b._d2(x))
            return DifferentiableFn(lambda x: a._value(x) * b._value(x), d1, d2)
        c = float(other)
        d1 = None if self._d1 is None else (lambda x: c * self._d1(x))
        d2 = None if self._d2 is None else (lambda x: c * self._d2(x))
        return DifferentiableFn(lambda x: c * self._value(x), d1, d2)

    __rmul__ = __mul__


def constant_fn(c: float) -> DifferentiableFn:
    c = float(c)
    return DifferentiableFn(
        lambda x: np.full_like(np.asarray(x, dtype=float), c),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        representation="polynomial",
    )


def polynomial_fn(coeffs) -> DifferentiableFn:
    """Polynomial with ascending coefficients: coeffs[k] multiplies x**k."""
    p = Polynomial(np.asarray(coeffs, dtype=float))
    return DifferentiableFn(p, p.deriv(1), p.deriv(2), representation="polynomial")


def monomial_fn(power: int) -> DifferentiableFn:
    if power < 0:
        raise ValueError("power must be nonnegative")
    coeffs = np.zeros(power + 1)
    coeffs[power] = 1.0
    return polynomial_fn(coeffs)


def hermite_fn(index: int) -> DifferentiableFn:
    """Probabilists' Hermite polynomial He_index."""
    if index < 0:
        raise ValueError("index must be nonnegative")
    h = HermiteE.basis(index)
    return DifferentiableFn(h, h.deriv(1), h.deriv(2), representation="hermite-combination")


def cosine_fn(harmonic: int, amplitude: float = 1.0, offset: float = 0.0) -> DifferentiableFn:
    """amplitude * cos(harmonic * x) + offset."""
    k = int(harmonic)
    a = float(amplitude)
    c = float(offset)
    if k <= 0:
        raise ValueError("harmonic must be a positive integer")
    return DifferentiableFn(
        lambda x: a * np.cos(k * x) + c,
        lambda x: -a * k * np.sin(k * x),
        lambda x: -a * k * k * np.cos(k * x),
        representation="cosine-combination",
    )


def gaussian_pdf_fn(mean: float, var: float) -> DifferentiableFn:
    """Normal density with the given mean and variance."""
    mu = float(mean)
    v = float(var)
    if not (np.isfinite(v) and v > 0):
        raise ValueError("variance must be positive")
    norm = 1.0 / np.sqrt(2.0 * np.pi * v)

    def value(x):
        z = np.asarray(x, dtype=float) - mu
        return norm * np.exp(-0.5 * z * z / v)

    def d1(x):
        z = np.asarray(x, dtype=float) - mu
        return -(z / v) * value(x)

    def d2(x):
        z = np.asarray(x, dtype=float) - mu
        return (z * z / (v * v) - 1.0 / v) * value(x)

    return DifferentiableFn(value, d1, d2, representation="gaussian")


def spline_fn(xs, ys) -> DifferentiableFn:
    """Natural cubic spline through tabulated samples."""
    cs = CubicSpline(np.asarray(xs, dtype=float), np.asarray(ys, dtype=float), bc_type="natural")
    return DifferentiableFn(cs, cs.derivative(1), cs.derivative(2), representation="tabulated-spline")


def check_derivatives(fn: DifferentiableFn, domain: Domain, points: int = 25,
                      rng=None, h: float = 1e-5) -> float:
    """Max relative deviation of d1/d2 from central differences at random points."""
    if rng is None:
        rng = np.random.default_rng(0)
    pad = 2 * h * domain.width
    x = rng.uniform(domain.lower + pad, domain.upper - pad, size=points)
    step = h * max(1.0, domain.width / 24.0)
    f0 = fn(x)
    fp = fn(x + step)
    fm = fn(x - step)
    scale1 = np.maximum(1.0, np.abs(fn.d1(x)))
    scale2 = np.maximum(1.0, np.abs(fn.d2(x)))
    err1 = np.abs((fp - fm) / (2 * step) - fn.d1(x)) / scale1
    err2 = np.abs((fp - 2 * f0 + fm) / step ** 2 - fn.d2(x)) / scale2
    return float(max(err1.max(), err2.max()))
