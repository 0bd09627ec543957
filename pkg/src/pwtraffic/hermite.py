"""Exact polynomial calculus for the standard Gaussian weight.

Everything here is arbitrary-precision rational: polynomials are carried
simultaneously in the power basis and in the basis of probabilists' Hermite
polynomials g_n (three-term recurrence g_{n+1}(y) = y*g_n(y) - n*g_{n-1}(y),
normalized so that E[g_n(xi) g_m(xi)] = delta_{n,m} * n! for a standard
Gaussian xi).  Floating point never enters; downstream limit identities are
checked as exact rational equalities.
"""

from __future__ import annotations

import json
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence, Union

Rational = Union[int, Fraction, str]

#: Degree guard for Hermite generation and basis conversion.  Desk-scale
#: experiments use odd polynomials up to degree 9; factorials stay small.
DEFAULT_MAX_DEGREE = 15


def _frac(x: Rational) -> Fraction:
    if isinstance(x, Fraction):
        return x
    return Fraction(x)


def _trim(coeffs: Sequence[Fraction]) -> tuple[Fraction, ...]:
    n = len(coeffs)
    while n > 0 and coeffs[n - 1] == 0:
        n -= 1
    return tuple(coeffs[:n])


def double_factorial(n: int) -> int:
    """(n)!! with the empty-product convention for n <= 0."""
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@lru_cache(maxsize=None)
def gaussian_moment(n: int) -> Fraction:
    """E[xi^n] for xi standard Gaussian: (n-1)!! for even n, else 0.

    Equals the number of pair partitions of an n-element set.
    """
    if n < 0:
        raise ValueError("moment order must be >= 0")
    if n % 2 == 1:
        return Fraction(0)
    return Fraction(double_factorial(n - 1))


class GaussianMoments:
    """Memoized moment table E[xi^n]; concurrent fills are idempotent."""

    def __init__(self) -> None:
        self.memo: dict[int, Fraction] = {}

    def __call__(self, n: int) -> Fraction:
        if n not in self.memo:
            self.memo[n] = gaussian_moment(n)
        return self.memo[n]


@lru_cache(maxsize=None)
def _hermite_power_coeffs(n: int) -> tuple[Fraction, ...]:
    # g_0 = 1, g_1 = y, g_{n+1} = y g_n - n g_{n-1}
    if n == 0:
        return (Fraction(1),)
    if n == 1:
        return (Fraction(0), Fraction(1))
    prev2 = _hermite_power_coeffs(n - 2)
    prev1 = _hermite_power_coeffs(n - 1)
    out = [Fraction(0)] * (n + 1)
    for k, c in enumerate(prev1):
        out[k + 1] += c
    for k, c in enumerate(prev2):
        out[k] -= (n - 1) * c
    return tuple(out)


def _power_to_hermite(power: Sequence[Fraction]) -> tuple[Fraction, ...]:
    # Back-substitution: g_n is monic, so the conversion matrix is unitriangular.
    work = list(power)
    herm = [Fraction(0)] * len(work)
    for n in range(len(work) - 1, -1, -1):
        c = work[n]
        if c == 0:
            continue
        herm[n] = c
        for k, g in enumerate(_hermite_power_coeffs(n)):
            work[k] -= c * g
    return _trim(herm)


def _hermite_to_power(herm: Sequence[Fraction]) -> tuple[Fraction, ...]:
    out = [Fraction(0)] * len(herm)
    for n, c in enumerate(herm):
        if c == 0:
            continue
        for k, g in enumerate(_hermite_power_coeffs(n)):
            out[k] += c * g
    return _trim(out)


class Polynomial:
    """Univariate polynomial held in power and Hermite bases simultaneously.

    Immutable.  Both coefficient tuples are trimmed and always represent the
    same polynomial; this is asserted at construction time by converting one
    basis into the other.
    """

    __slots__ = ("power_coeffs", "hermite_coeffs")

    def __init__(self, power_coeffs: Iterable[Rational]) -> None:
        power = _trim([_frac(c) for c in power_coeffs])
        object.__setattr__(self, "power_coeffs", power)
        object.__setattr__(self, "hermite_coeffs", _power_to_hermite(power))

    def __setattr__(self, name, value):  # pragma: no cover
        raise AttributeError("Polynomial is immutable")

    @classmethod
    def from_power(cls, coeffs: Iterable[Rational]) -> "Polynomial":
        return cls(coeffs)

    @classmethod
    def from_hermite(cls, coeffs: Iterable[Rational]) -> "Polynomial":
        return cls(_hermite_to_power([_frac(c) for c in coeffs]))

    @classmethod
    def zero(cls) -> "Polynomial":
        return cls(())

    @property
    def degree(self) -> int:
        """Degree, with the convention degree(0) = 0."""
        return max(len(self.power_coeffs) - 1, 0)

    @property
    def is_zero(self) -> bool:
        return not self.power_coeffs

    @property
    def is_odd(self) -> bool:
        """True iff only odd-degree power coefficients are present."""
        return all(c == 0 for k, c in enumerate(self.power_coeffs) if k % 2 == 0)

    def coeff(self, k: int) -> Fraction:
        if 0 <= k < len(self.power_coeffs):
            return self.power_coeffs[k]
        return Fraction(0)

    def hermite_coeff(self, n: int) -> Fraction:
        if 0 <= n < len(self.hermite_coeffs):
            return self.hermite_coeffs[n]
        return Fraction(0)

    def derivative(self, m: int = 1) -> "Polynomial":
        coeffs = self.power_coeffs
        for _ in range(m):
            coeffs = tuple(k * c for k, c in enumerate(coeffs) if k >= 1)
        return Polynomial(coeffs)

    def __call__(self, x):
        """Horner evaluation; exact on Fractions, float/ndarray otherwise."""
        acc = 0 * x
        for c in reversed(self.power_coeffs):
            acc = acc * x + (c if isinstance(x, Fraction) else float(c))
        return acc

    def __add__(self, other: "Polynomial") -> "Polynomial":
        a, b = self.power_coeffs, other.power_coeffs
        if len(a) < len(b):
            a, b = b, a
        out = list(a)
        for k, c in enumerate(b):
            out[k] += c
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-1) * other

    def __rmul__(self, scalar: Rational) -> "Polynomial":
        s = _frac(scalar)
        return Polynomial(s * c for c in self.power_coeffs)

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        if not isinstance(other, Polynomial):
            return NotImplemented
        a, b = self.power_coeffs, other.power_coeffs
        if not a or not b:
            return Polynomial.zero()
        out = [Fraction(0)] * (len(a) + len(b) - 1)
        for i, ca in enumerate(a):
            for j, cb in enumerate(b):
                out[i + j] += ca * cb
        return Polynomial(out)

    def scaled_argument(self, mu: Fraction) -> "Polynomial":
        """The polynomial y -> p(mu * y)."""
        return Polynomial(c * mu**k for k, c in enumerate(self.power_coeffs))

    def __eq__(self, other) -> bool:
        return isinstance(other, Polynomial) and self.power_coeffs == other.power_coeffs

    def __hash__(self) -> int:
        return hash(self.power_coeffs)

    def __repr__(self) -> str:
        return f"Polynomial({[str(c) for c in self.power_coeffs]})"

    def to_json(self, basis: str = "power") -> str:
        if basis == "power":
            coeffs = self.power_coeffs
        elif basis == "hermite":
            coeffs = self.hermite_coeffs
        else:
            raise ValueError(f"unknown basis {basis!r}")
        return json.dumps({"basis": basis, "coeffs": [str(c) for c in coeffs]})

    @classmethod
    def from_json(cls, text: str) -> "Polynomial":
        obj = json.loads(text) if isinstance(text, str) else text
        coeffs = [Fraction(c) for c in obj["coeffs"]]
        if obj["basis"] == "power":
            return cls(coeffs)
        if obj["basis"] == "hermite":
            return cls.from_hermite(coeffs)
        raise ValueError(f"unknown basis {obj['basis']!r}")


def monomial(n: int) -> Polynomial:
    """h_n : x -> x^n."""
    if n < 0:
        raise ValueError("monomial degree must be >= 0")
    return Polynomial([0] * n + [1])


def hermite(n: int, max_degree: int | None = None) -> Polynomial:
    """Probabilists' Hermite polynomial g_n, generated by the recurrence."""
    cap = DEFAULT_MAX_DEGREE if max_degree is None else max_degree
    if n < 0:
        raise ValueError("Hermite order must be >= 0")
    if n > cap:
        raise ValueError(f"Hermite order {n} exceeds the degree cap {cap}")
    return Polynomial(_hermite_power_coeffs(n))


def to_hermite(power_coeffs: Iterable[Rational], max_degree: int | None = None) -> tuple[Fraction, ...]:
    """Hermite-basis coefficients c_n with p = sum_n c_n g_n.

    Equivalently c_n = E[p(xi) g_n(xi)] / n!.
    """
    cap = DEFAULT_MAX_DEGREE if max_degree is None else max_degree
    coeffs = _trim([_frac(c) for c in power_coeffs])
    if len(coeffs) - 1 > cap:
        raise ValueError(f"degree {len(coeffs) - 1} exceeds the degree cap {cap}")
    return _power_to_hermite(coeffs)


def from_hermite(hermite_coeffs: Iterable[Rational]) -> tuple[Fraction, ...]:
    """Inverse of :func:`to_hermite`: power-basis coefficients."""
    return _hermite_to_power([_frac(c) for c in hermite_coeffs])


def expect_value(p: Polynomial) -> Fraction:
    """E[p(xi)] for standard Gaussian xi, exactly."""
    return sum((c * gaussian_moment(k) for k, c in enumerate(p.power_coeffs)), Fraction(0))


def expect_product(p: Polynomial, q: Polynomial) -> Fraction:
    """E[p(xi) q(xi)]; on Hermite inputs this is delta_{n,m} * n!."""
    return expect_value(p * q)


def expect_derivative(p: Polynomial, m: int = 1) -> Fraction:
    """E[p^(m)(xi)]."""
    return expect_value(p.derivative(m))


def expect_scaled(p: Polynomial, mu_sq: Fraction) -> Fraction:
    """E[p(mu * xi)] as an exact rational in mu^2.

    Odd Gaussian moments vanish, so only even powers of the scale survive.
    """
    mu_sq = _frac(mu_sq)
    total = Fraction(0)
    for k, c in enumerate(p.power_coeffs):
        if k % 2 == 0 and c != 0:
            total += c * mu_sq ** (k // 2) * gaussian_moment(k)
    return total


def f_kernel(p: Polynomial, q: Polynomial) -> Fraction:
    """E[p q] - E[p'] E[q'], the covariance kernel of the chaos component.

    On Hermite inputs equals n! delta_{n,m} - delta_{n,1} delta_{m,1}.
    """
    return expect_product(p, q) - expect_derivative(p, 1) * expect_derivative(q, 1)


def theta_coefficients(p: Polynomial) -> tuple[Fraction, Fraction]:
    """(theta1, theta2) = (E[p^2], E[p']^2)."""
    return expect_product(p, p), expect_derivative(p, 1) ** 2
