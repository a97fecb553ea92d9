"""Integer points on shells of diagonal quadratic forms.

A form ``Q(N) = sum_j a_j N_j**2`` with positive rational ``a_j`` is stored
together with its integerized version ``Q_int = p * Q`` so that shell
membership is decided in exact integer arithmetic.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

INT64_MAX = 2**63 - 1

# primes congruent to 1 mod 4, enough for every prime-product sequence we use
_PRIMES_1_MOD_4 = (5, 13, 17, 29, 37, 41, 53, 61, 73, 89, 97, 101, 109, 113)


class ShellTooLarge(ValueError):
    """Raised when a shell would overflow 64-bit intermediate products."""


class SearchExhausted(RuntimeError):
    """Raised when a sequence search runs out of candidates."""


@dataclass(frozen=True)
class QuadraticForm:
    """Diagonal positive form with rational coefficients.

    Parameters
    ----------
    coeffs : sequence of Fraction-like
        Coefficients ``a_1..a_d``; ints, Fractions and ``(p, q)`` pairs are accepted.
    """

    coeffs: tuple[Fraction, ...]

    def __init__(self, coeffs: Iterable) -> None:
        parsed = tuple(_as_fraction(c) for c in coeffs)
        if len(parsed) < 2:
            raise ValueError("a quadratic form needs dimension d >= 2")
        if any(c <= 0 for c in parsed):
            raise ValueError("all coefficients must be positive")
        object.__setattr__(self, "coeffs", parsed)

    @classmethod
    def circle(cls) -> "QuadraticForm":
        return cls((1, 1))

    @classmethod
    def from_sides(cls, sides_squared: Sequence) -> "QuadraticForm":
        """Form ``sum N_j**2 / l_j**2`` for a box with rational squared sides."""
        return cls(tuple(1 / _as_fraction(s) for s in sides_squared))

    @property
    def d(self) -> int:
        return len(self.coeffs)

    @cached_property
    def scale(self) -> int:
        """The positive integer p with ``p * Q`` integral."""
        return math.lcm(*(c.denominator for c in self.coeffs))

    @cached_property
    def int_coeffs(self) -> tuple[int, ...]:
        return tuple(int(c * self.scale) for c in self.coeffs)

    def value_int(self, N: Sequence[int]) -> int:
        return sum(a * n * n for a, n in zip(self.int_coeffs, N))

    def value(self, N: Sequence[int]) -> Fraction:
        return Fraction(self.value_int(N), self.scale)

    def to_json(self) -> dict:
        return {"d": self.d, "coeffs": [[c.numerator, c.denominator] for c in self.coeffs]}

    @classmethod
    def from_json(cls, obj: dict) -> "QuadraticForm":
        form = cls(tuple(Fraction(p, q) for p, q in obj["coeffs"]))
        if "d" in obj and obj["d"] != form.d:
            raise ValueError("form dimension does not match its coefficient list")
        return form


def _as_fraction(c) -> Fraction:
    if isinstance(c, (list, tuple)):
        return Fraction(int(c[0]), int(c[1]))
    if isinstance(c, float):
        raise TypeError("coefficients must be exact rationals, not floats")
    return Fraction(c)


@dataclass(frozen=True)
class LatticeShell:
    """All integer vectors with ``Q_int(N) == mu``, in lexicographic order."""

    form: QuadraticForm
    mu: int
    points: tuple[tuple[int, ...], ...] = field(repr=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def points_D(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p for p in self.points if all(n >= 1 for n in p))

    @property
    def points_N(self) -> tuple[tuple[int, ...], ...]:
        return tuple(p for p in self.points if all(n >= 0 for n in p))

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float).reshape(len(self.points), self.form.d)

    def directions(self) -> np.ndarray:
        """Points mapped to the unit sphere by ``N -> sqrt(a) * N / sqrt(mu / p)``."""
        a = np.sqrt(np.array([float(c) for c in self.form.coeffs]))
        return self.as_array() * a / math.sqrt(self.mu / self.form.scale)

    def to_json(self) -> dict:
        return {"form": self.form.to_json(), "mu": self.mu, "points": [list(p) for p in self.points]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: dict) -> "LatticeShell":
        form = QuadraticForm.from_json(obj["form"])
        shell = enumerate_shell(form, int(obj["mu"]))
        given = tuple(tuple(int(v) for v in p) for p in obj.get("points", shell.points))
        if sorted(given) != list(shell.points):
            raise ValueError("stored points do not match the shell enumeration")
        return shell


def enumerate_shell(form: QuadraticForm, mu: int) -> LatticeShell:
    """Exhaustive enumeration of ``{N in Z^d : Q_int(N) = mu}``."""
    mu = int(mu)
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    a = form.int_coeffs
    if mu * max(a) > INT64_MAX:
        raise ShellTooLarge(f"shell mu={mu} exceeds 64-bit intermediate range")
    bounds = [math.isqrt(mu // aj) for aj in a]
    found: list[tuple[int, ...]] = []

    def rec(prefix: list[int], rest: int, j: int) -> None:
        if j == form.d - 1:
            if rest % a[j]:
                return
            q = rest // a[j]
            r = math.isqrt(q)
            if r * r == q:
                found.extend([(*prefix, -r), (*prefix, r)] if r else [(*prefix, 0)])
            return
        for n in range(-bounds[j], bounds[j] + 1):
            left = rest - a[j] * n * n
            if left >= 0:
                rec(prefix + [n], left, j + 1)

    rec([], mu, 0)
    found.sort()
    return LatticeShell(form, mu, tuple(found))


def representation_count(n: int) -> int:
    """Number of representations of n as a sum of two squares, ``4 (d_1 - d_3)``."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return 1
    chi = 0
    for div in range(1, math.isqrt(n) + 1):
        if n % div:
            continue
        for e in {div, n // div}:
            if e % 4 == 1:
                chi += 1
            elif e % 4 == 3:
                chi -= 1
    return 4 * chi


def is_square_or_three_square(n: int) -> bool:
    r = math.isqrt(n)
    if r * r == n:
        return True
    if n % 3 == 0:
        r = math.isqrt(n // 3)
        return r * r == n // 3
    return False


def angular_discrepancy(shell: LatticeShell) -> float:
    """Star discrepancy of the direction angles against the uniform law on the circle.

    Shell points are first mapped linearly onto the unit circle (the pull-back
    that makes the kernel converge to the Bessel profile), then their angles in
    ``[0, 1)`` turns are compared with the uniform distribution.
    """
    if shell.form.d != 2:
        raise ValueError("angular discrepancy is defined for d = 2 only")
    if len(shell) == 0 or shell.mu == 0:
        raise ValueError("empty shell")
    u = shell.directions()
    t = np.sort(np.mod(np.arctan2(u[:, 1], u[:, 0]) / (2 * math.pi), 1.0))
    n = len(t)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - t), np.max(t - (i - 1) / n)))


def shell_average(shell: LatticeShell, scale: float, f: Callable[[np.ndarray], float]) -> float:
    """Compensated mean of ``f(N / scale)`` over the shell."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    if len(shell) == 0:
        raise ValueError("empty shell")
    vals = [float(f(np.asarray(p, dtype=float) / scale)) for p in shell.points]
    return math.fsum(vals) / len(vals)


def equidistributed_sequence(
    form: QuadraticForm,
    count: int,
    strategy: str = "prime-products",
    *,
    exclude_square_multiples: bool = False,
    value_multiplier: int = 1,
    slack: float = 0.25,
    window: int = 10**6,
) -> list[int]:
    """Increasing shell labels along which the shell directions spread evenly.

    ``value_multiplier`` maps a label to the shell value of ``Q_int`` (4 for the
    equilateral form ``m**2 + 3 n**2 = 4 mu``). ``exclude_square_multiples``
    drops labels that are a square or three times a square.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if strategy == "prime-products":
        if form.int_coeffs != (1, 1) or value_multiplier != 1:
            raise ValueError("prime-products applies to the circle form only")
        if count > len(_PRIMES_1_MOD_4):
            raise SearchExhausted("not enough tabulated primes")
        return [math.prod(_PRIMES_1_MOD_4[:k]) for k in range(1, count + 1)]
    if strategy != "discrepancy-greedy":
        raise ValueError(f"unknown strategy {strategy!r}")
    kept: list[int] = []
    best = math.inf
    for mu in range(1, window + 1):
        if exclude_square_multiples and is_square_or_three_square(mu):
            continue
        shell = enumerate_shell(form, value_multiplier * mu)
        if len(shell) == 0:
            continue
        disc = angular_discrepancy(shell)
        if disc < best * (1 + slack):
            kept.append(mu)
            best = min(best, disc)
            if len(kept) == count:
                return kept
    raise SearchExhausted(f"found {len(kept)} of {count} shells below mu={window}")
