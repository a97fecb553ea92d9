import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from billiard_lens.lattice import (
    LatticeShell,
    QuadraticForm,
    SearchExhausted,
    angular_discrepancy,
    enumerate_shell,
    equidistributed_sequence,
    is_square_or_three_square,
    representation_count,
    shell_average,
)

CIRCLE = QuadraticForm((1, 1))


def brute_points(coeffs, mu):
    bound = math.isqrt(mu) + 1
    return sorted(p for p in itertools.product(range(-bound, bound + 1), repeat=len(coeffs))
                  if sum(c * n * n for c, n in zip(coeffs, p)) == mu)


def test_circle_shell_of_five():
    shell = enumerate_shell(CIRCLE, 5)
    assert set(shell.points) == {(a * x, b * y) for x, y in ((1, 2), (2, 1)) for a in (1, -1) for b in (1, -1)}
    assert set(shell.points_D) == {(1, 2), (2, 1)}


def test_zero_shell():
    shell = enumerate_shell(CIRCLE, 0)
    assert shell.points == ((0, 0),)
    assert shell.points_D == ()


def test_shell_of_25_has_12_points():
    assert len(enumerate_shell(CIRCLE, 25)) == 12


@pytest.mark.parametrize("n, expected", [(5, 8), (3, 0), (32045, 64), (0, 1), (1, 4)])
def test_representation_count_examples(n, expected):
    assert representation_count(n) == expected


@pytest.mark.parametrize("coeffs", [(1, 1), (1, 3), (2, 3), (1, 1, 1)])
@pytest.mark.parametrize("mu", [0, 1, 4, 12, 28, 50])
def test_enumeration_matches_brute_force(coeffs, mu):
    form = QuadraticForm(coeffs)
    assert sorted(enumerate_shell(form, mu).points) == brute_points(form.int_coeffs, mu)


def test_rational_form_integerized_exactly():
    form = QuadraticForm((Fraction(1, 2), Fraction(2, 3)))
    for N in itertools.product(range(-4, 5), repeat=2):
        exact = Fraction(1, 2) * N[0] ** 2 + Fraction(2, 3) * N[1] ** 2
        assert form.scale * exact == form.value_int(N)


def test_lexicographic_and_views_nested():
    shell = enumerate_shell(CIRCLE, 65)
    assert list(shell.points) == sorted(shell.points)
    assert set(shell.points_D) <= set(shell.points_N) <= set(shell.points)


@given(st.integers(min_value=0, max_value=3000))
def test_shell_closed_under_sign_flips_and_swaps(mu):
    pts = set(enumerate_shell(CIRCLE, mu).points)
    assert {(-a, b) for a, b in pts} == pts
    assert {(b, a) for a, b in pts} == pts


@given(st.integers(min_value=1, max_value=2000))
def test_unequal_form_sign_flip_closed(mu):
    pts = set(enumerate_shell(QuadraticForm((1, 3)), mu).points)
    assert {(a, -b) for a, b in pts} == pts


def test_prime_product_sequence():
    assert equidistributed_sequence(CIRCLE, 5) == [5, 65, 1105, 32045, 1185665]
    assert equidistributed_sequence(CIRCLE, 1) == [5]


def test_discrepancy_greedy_on_equilateral_form():
    form = QuadraticForm((1, 3))
    got = equidistributed_sequence(form, 3, "discrepancy-greedy", value_multiplier=4, window=2000)
    assert got == sorted(set(got)) and len(got) == 3
    # brute-force rescan with the same selection rule
    kept, best = [], math.inf
    for mu in range(1, 2000):
        pts = brute_points((1, 3), 4 * mu)
        if not pts:
            continue
        disc = angular_discrepancy(LatticeShell(form, 4 * mu, tuple(pts)))
        if disc < best * 1.25:
            kept.append(mu)
            best = min(best, disc)
        if len(kept) == 3:
            break
    assert got == kept


def test_square_exclusion_flag():
    form = QuadraticForm((1, 1))
    got = equidistributed_sequence(form, 6, "discrepancy-greedy", exclude_square_multiples=True, window=5000)
    assert not any(is_square_or_three_square(m) for m in got)


def test_search_exhausted():
    with pytest.raises(SearchExhausted):
        equidistributed_sequence(QuadraticForm((1, 1)), 50, "discrepancy-greedy", window=30)


def test_discrepancy_of_four_equispaced_points():
    assert angular_discrepancy(enumerate_shell(CIRCLE, 1)) == pytest.approx(0.25)


def test_discrepancy_decreases_along_prime_products():
    values = [angular_discrepancy(enumerate_shell(CIRCLE, mu)) for mu in (5, 65, 1105, 32045, 1185665)]
    assert values[-1] < values[0]
    assert all(b <= a + 1e-12 for a, b in zip(values[1:], values[2:]))


def test_discrepancy_bounds_and_empty_shell():
    one = LatticeShell(CIRCLE, 1, ((1, 0),))
    assert 0.5 < angular_discrepancy(one) <= 1.0
    with pytest.raises(ValueError):
        angular_discrepancy(enumerate_shell(CIRCLE, 3))


@given(st.sampled_from([5, 25, 65, 85, 1105]))
def test_discrepancy_rotation_invariant(mu):
    shell = enumerate_shell(CIRCLE, mu)
    rotated = LatticeShell(CIRCLE, mu, tuple(sorted((-b, a) for a, b in shell.points)))
    assert angular_discrepancy(rotated) == pytest.approx(angular_discrepancy(shell), abs=1e-12)


def test_shell_average_examples():
    shell = enumerate_shell(CIRCLE, 5)
    assert shell_average(shell, math.sqrt(5), lambda xi: 1.0) == 1.0
    assert shell_average(shell, math.sqrt(5), lambda xi: xi[0] ** 2) == pytest.approx(0.5, abs=1e-15)
    w = np.array([0.7, -1.3])
    expected = np.mean([math.cos(np.dot(np.array(p) / math.sqrt(5), w)) for p in shell.points])
    assert shell_average(shell, math.sqrt(5), lambda xi: math.cos(xi @ w)) == pytest.approx(expected)


def test_shell_json_round_trip():
    shell = enumerate_shell(CIRCLE, 65)
    assert LatticeShell.from_json(shell.to_json()) == shell
