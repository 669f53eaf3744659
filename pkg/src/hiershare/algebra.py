"""Prime-field arithmetic, polynomials, and interpolation at zero.

All share and renewal math lives in a single prime field: the order of the
curve's base-point subgroup in curve mode, or a standalone small prime in
"no-curve" test mode (which enables exhaustive secrecy checks).

Values are immutable after construction and all operations are pure
functions, so everything here is safe to share across threads.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .errors import HierShareError


class ZeroInverse(HierShareError):
    """Multiplicative inverse of zero requested."""


class FieldMismatch(HierShareError):
    """Operands belong to different prime fields."""


class DuplicateAbscissa(HierShareError):
    """Two interpolation points share an x-coordinate."""


class ZeroAbscissa(HierShareError):
    """x = 0 used as an evaluation point; it would expose the free
    coefficient directly and is always a hard error, never skipped."""


def _small_primes(limit: int) -> tuple[int, ...]:
    sieve = bytearray([1]) * limit
    sieve[0:2] = b"\x00\x00"
    for i in range(2, int(limit**0.5) + 1):
        if sieve[i]:
            sieve[i * i :: i] = b"\x00" * len(sieve[i * i :: i])
    return tuple(i for i in range(limit) if sieve[i])


_TRIAL_PRIMES = _small_primes(1000)

# Deterministic Miller-Rabin witness set: proven sufficient for all
# n < 3_317_044_064_679_887_385_961_981 (Sorenson & Webster). Beyond that the
# extra bases make the test probabilistic but with deterministic output.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)
_MR_EXTRA_BASES = (41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)
_MR_DETERMINISTIC_BOUND = 3_317_044_064_679_887_385_961_981


def is_prime(n: int) -> bool:
    """Primality test: trial division at toy scale, Miller-Rabin above.

    Deterministic for n below ~3.3e24; for larger n (standard curve
    parameters) it uses a fixed extended base set, so the answer is still
    reproducible run to run.
    """
    if n < 2:
        return False
    for p in _TRIAL_PRIMES:
        if n % p == 0:
            return n == p
    if n < _TRIAL_PRIMES[-1] ** 2:
        return True
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    bases = _MR_BASES
    if n >= _MR_DETERMINISTIC_BOUND:
        bases = _MR_BASES + _MR_EXTRA_BASES
    for a in bases:
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


@dataclass(frozen=True)
class FieldParams:
    """The prime field all shares and renewal values live in."""

    modulus: int

    def __post_init__(self):
        if self.modulus <= 2:
            raise ValueError(f"field modulus must exceed 2, got {self.modulus}")
        if not is_prime(self.modulus):
            raise ValueError(f"field modulus {self.modulus} is not prime")

    def element(self, value: int) -> "FieldElement":
        return FieldElement(value % self.modulus, self)

    @property
    def zero(self) -> "FieldElement":
        return FieldElement(0, self)

    @property
    def one(self) -> "FieldElement":
        return FieldElement(1, self)

    def random_element(self, rng: random.Random) -> "FieldElement":
        return FieldElement(rng.randrange(self.modulus), self)

    def random_nonzero(self, rng: random.Random) -> "FieldElement":
        return FieldElement(rng.randrange(1, self.modulus), self)


@dataclass(frozen=True)
class FieldElement:
    """An integer in [0, modulus), closed under modular arithmetic."""

    value: int
    params: FieldParams

    def __post_init__(self):
        if not 0 <= self.value < self.params.modulus:
            raise ValueError(
                f"{self.value} outside field range [0, {self.params.modulus})"
            )

    def _check_field(self, other: "FieldElement") -> None:
        if not isinstance(other, FieldElement):
            raise TypeError(f"expected FieldElement, got {type(other).__name__}")
        if other.params != self.params:
            raise FieldMismatch(
                f"operands in different fields: "
                f"{self.params.modulus} vs {other.params.modulus}"
            )

    def __add__(self, other: "FieldElement") -> "FieldElement":
        self._check_field(other)
        return FieldElement((self.value + other.value) % self.params.modulus, self.params)

    def __sub__(self, other: "FieldElement") -> "FieldElement":
        self._check_field(other)
        return FieldElement((self.value - other.value) % self.params.modulus, self.params)

    def __mul__(self, other: "FieldElement") -> "FieldElement":
        self._check_field(other)
        return FieldElement((self.value * other.value) % self.params.modulus, self.params)

    def __neg__(self) -> "FieldElement":
        return FieldElement(-self.value % self.params.modulus, self.params)

    def __pow__(self, exponent: int) -> "FieldElement":
        return FieldElement(pow(self.value, exponent, self.params.modulus), self.params)

    def __truediv__(self, other: "FieldElement") -> "FieldElement":
        self._check_field(other)
        return self * field_inverse(other)

    def __bool__(self) -> bool:
        return self.value != 0


def field_inverse(a: FieldElement) -> FieldElement:
    """Multiplicative inverse via Fermat: a^(p-2) mod p. Raises on zero."""
    if a.value == 0:
        raise ZeroInverse("zero has no multiplicative inverse")
    p = a.params.modulus
    return FieldElement(pow(a.value, p - 2, p), a.params)


@dataclass(frozen=True)
class Polynomial:
    """Coefficients in ascending powers: coefficients[h] multiplies x^h."""

    coefficients: tuple[FieldElement, ...]

    def __post_init__(self):
        if not self.coefficients:
            raise ValueError("polynomial needs at least one coefficient")
        params = self.coefficients[0].params
        for c in self.coefficients[1:]:
            if c.params != params:
                raise FieldMismatch("polynomial coefficients span different fields")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @property
    def field(self) -> FieldParams:
        return self.coefficients[0].params

    @property
    def free_coefficient(self) -> FieldElement:
        return self.coefficients[0]


def poly_eval(q: Polynomial, x: FieldElement) -> FieldElement:
    """Horner evaluation of q at x; poly_eval(q, 0) is the free coefficient."""
    if x.params != q.field:
        raise FieldMismatch("evaluation point not in the polynomial's field")
    acc = q.field.zero
    for coeff in reversed(q.coefficients):
        acc = acc * x + coeff
    return acc


def sample_polynomial(
    rng: random.Random, degree: int, free_coeff: FieldElement
) -> Polynomial:
    """Random polynomial with the given free coefficient and exact degree.

    A zero leading coefficient would silently lower the effective threshold,
    so for degree >= 1 the top coefficient is resampled until nonzero.
    """
    if degree < 0:
        raise ValueError(f"degree must be nonnegative, got {degree}")
    field = free_coeff.params
    coeffs = [free_coeff]
    coeffs.extend(field.random_element(rng) for _ in range(degree))
    if degree >= 1:
        while coeffs[-1].value == 0:
            coeffs[-1] = field.random_element(rng)
    return Polynomial(tuple(coeffs))


def lagrange_at_zero(
    points: Sequence[tuple[FieldElement, FieldElement]]
) -> FieldElement:
    """Free coefficient of the unique polynomial through the given points.

    All abscissas must be distinct and nonzero (a zero abscissa would be the
    secret itself).
    """
    if not points:
        raise ValueError("interpolation needs at least one point")
    field = points[0][0].params
    seen: set[int] = set()
    for x, y in points:
        if x.params != field or y.params != field:
            raise FieldMismatch("interpolation points span different fields")
        if x.value == 0:
            raise ZeroAbscissa("x = 0 is forbidden as an evaluation point")
        if x.value in seen:
            raise DuplicateAbscissa(f"abscissa {x.value} appears twice")
        seen.add(x.value)

    total = field.zero
    for i, (x_i, y_i) in enumerate(points):
        num = field.one
        den = field.one
        for j, (x_j, _) in enumerate(points):
            if i == j:
                continue
            num = num * x_j
            den = den * (x_j - x_i)
        total = total + y_i * num * field_inverse(den)
    return total
