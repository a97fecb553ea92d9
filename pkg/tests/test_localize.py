import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from billiard_lens.billiards import BilliardSpec, boundary_residual
from billiard_lens.localize import (
    CellDecomposition,
    LocalizationJob,
    RunConfig,
    SymmetryViolation,
    admissible_fraction,
    build_fixed_point,
    build_localized,
    build_on_lattice_polygon,
    dirichlet_approx,
    error_field,
    explicit_error_box,
    gluing_residual,
    localization_error,
    parity_residual,
    rescaled_field,
    run_localization,
    unfold,
)
from billiard_lens.waves import BesselTranslateSum, WaveSpec, symmetrize, table_row

J0 = BesselTranslateSum.single()
TWO = BesselTranslateSum(np.array([[0.8, 0.4], [-0.5, 1.1]]), np.array([1.0, 0.6]))


def window(R=3.0, n=25):
    ax = np.linspace(-R, R, n)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    return np.stack([X.ravel(), Y.ravel()], axis=1)


def test_single_translate_at_origin_is_kernel_plus_error():
    spec = BilliardSpec.square("N")
    z0 = (0.31, 0.47)
    e = build_localized(LocalizationJob(spec, J0, 65, z0))
    zero = np.zeros((1, 2))
    assert rescaled_field(e, z0, zero)[0] - error_field(e, z0, J0, zero)[0] == pytest.approx(1.0, abs=1e-13)


def test_iso_dirichlet_coefficients_antisymmetric():
    e = build_localized(LocalizationJob(BilliardSpec("iso_triangle", "D"), TWO, 65, (0.6, 0.2)))
    table = {tuple(N): c for N, c in zip(e.indices.tolist(), e.coeffs[:, 3])}
    for (m, n), c in table.items():
        assert table.get((n, m), 0.0) == pytest.approx(-c, abs=1e-15)


@pytest.mark.parametrize("bc", ["D", "N"])
@pytest.mark.parametrize("mu, z0", [(65, (0.21, 0.73)), (1105, (0.55, 0.12)), (32045, (0.9, 0.4))])
def test_error_field_matches_product_formula(bc, mu, z0):
    spec = BilliardSpec.square(bc)
    e = build_localized(LocalizationJob(spec, TWO, mu, z0))
    pts = window()
    assert np.max(np.abs(error_field(e, z0, TWO, pts) - explicit_error_box(spec, mu, z0, TWO, pts))) <= 1e-10


def test_error_shrinks_between_shells():
    spec = BilliardSpec.square("D")
    rng = np.random.default_rng(2)
    pts = window()
    low, high = [], []
    for z0 in rng.uniform(0.1, 0.9, (8, 2)):
        for mu, out in ((65, low), (32045, high)):
            e = build_localized(LocalizationJob(spec, J0, mu, tuple(z0)))
            out.append(np.max(np.abs(error_field(e, z0, J0, pts))))
    assert np.median(high) < np.median(low)


def test_localization_error_order_monotone():
    spec = BilliardSpec.square("N")
    e = build_localized(LocalizationJob(spec, J0, 1105, (0.4, 0.45)))
    assert localization_error(e, (0.4, 0.45), J0, 4.0, 0) <= localization_error(e, (0.4, 0.45), J0, 4.0, 1)


def test_localization_error_rejects_coarse_grid():
    e = build_localized(LocalizationJob(BilliardSpec.square("N"), J0, 5, (0.4, 0.45)))
    with pytest.raises(ValueError):
        localization_error(e, (0.4, 0.45), J0, 4.0, 0, h=1.0)


def test_job_validation():
    with pytest.raises(ValueError):
        LocalizationJob(BilliardSpec.square("N"), BesselTranslateSum.single((5.0, 0.0)), 5, (0.5, 0.5))
    with pytest.raises(ValueError):
        LocalizationJob(BilliardSpec.square("N"), J0, 5, (0.5, 0.5), k=-1)
    with pytest.raises(ValueError):
        build_localized(LocalizationJob(BilliardSpec("equi_triangle", "D"), J0, 4, (0.5, 0.3)))


def test_admissible_fraction():
    job = LocalizationJob(BilliardSpec.square("N"), J0, 65)
    grid = np.random.default_rng(0).uniform(0.1, 0.9, (12, 2))
    errs = admissible_fraction(job, grid, math.inf).errors
    assert admissible_fraction(job, grid, math.inf, errs).fraction == 1.0
    fractions = [admissible_fraction(job, grid, eps, errs).fraction for eps in np.linspace(0, 2, 9)]
    assert fractions == sorted(fractions)
    with pytest.raises(ValueError):
        admissible_fraction(job, np.zeros((0, 2)), 1.0)


@pytest.mark.parametrize("bc", ["D", "N"])
def test_fixed_point_square_centre_is_even(bc):
    spec = BilliardSpec.square(bc)
    target = symmetrize(TWO, table_row(f"tableA:square:{bc}").group(), bc)
    for mu in (5, 65, 1105):
        e = build_fixed_point(spec, target, mu, [Fraction(1, 2), Fraction(1, 2)])
        assert e.meta["base_point"] == [0.5, 0.5] and e.meta["s"] == 2
        assert parity_residual(e, e.meta["base_point"], 1.0) <= 1e-10
        assert boundary_residual(e) <= 1e-10


def test_fixed_point_rejects_asymmetric_target():
    with pytest.raises(SymmetryViolation):
        build_fixed_point(BilliardSpec.square("D"), TWO, 65, [Fraction(1, 2), Fraction(1, 2)])


def test_fixed_point_with_unit_denominator_matches_roaming():
    # at a vertex every mirror image of a symmetric target lands on the base point;
    # the roaming sum counts all four, the fixed-point builder averages them
    spec = BilliardSpec.square("N")
    target = symmetrize(TWO, table_row("tableA:square:N").group(), "N")
    fixed = build_fixed_point(spec, target, 65, [Fraction(0), Fraction(0)])
    roam = build_localized(LocalizationJob(spec, target, 65, (0.0, 0.0)))
    pts = window(2.0, 9)
    np.testing.assert_allclose(4 * rescaled_field(fixed, (0, 0), pts), rescaled_field(roam, (0, 0), pts), atol=1e-12)


def test_dirichlet_approx_examples():
    assert dirichlet_approx([0.5], 10)[:2] == ((1,), 2)
    alpha = math.sqrt(2) - 1
    r, s, _ = dirichlet_approx([alpha], 100)
    assert abs(alpha - r[0] / s) < s**-2
    # exhaustive scan: no smaller denominator does better
    best = min(range(1, 101), key=lambda q: (abs(alpha * q - round(alpha * q)), q))
    assert s == best
    assert (r[0], s) in {(2, 5), (5, 12), (12, 29), (29, 70)}


@given(st.lists(st.floats(0, 1), min_size=1, max_size=3), st.integers(2, 60))
def test_dirichlet_approx_inequality(alpha, s_max):
    r, s, _ = dirichlet_approx(alpha, s_max)
    d = len(alpha)
    assert all(abs(a - ri / s) < s ** (-1 - 1 / d) + 1e-15 for a, ri in zip(alpha, r))


def test_cell_decomposition_examples():
    single = CellDecomposition.single(BilliardSpec("equi_triangle", "D"))
    j, local, S, parity = unfold(single, [0.5, 0.3])
    assert j == 0 and np.allclose(local, [0.5, 0.3]) and np.allclose(S, np.eye(2))
    dec = CellDecomposition.equilateral_parallelogram("D")
    dec.verify()
    # reflection about the line through (1, 0) with slope -sqrt(3)
    r3 = math.sqrt(3)
    u = np.array([1.0, -r3]) / 2
    p = np.array([0.5, 0.3])
    expected = 2 * (np.array([1.0, 0]) + ((p - [1.0, 0]) @ u) * u) - p
    np.testing.assert_allclose(dec.apply(1, p), expected, atol=1e-15)
    assert unfold(dec, expected)[0] == 1
    with pytest.raises(ValueError):
        unfold(dec, [5.0, 5.0])


def test_cell_decomposition_json():
    dec = CellDecomposition.equilateral_parallelogram("N")
    back = CellDecomposition.from_json(dec.to_json())
    for j in range(len(dec)):
        np.testing.assert_allclose(back.cell_vertices(j), dec.cell_vertices(j), atol=1e-14)


def test_single_cell_reduces_to_roaming():
    base = BilliardSpec("equi_triangle", "D")
    z0 = (0.5, 0.35)
    [glued] = build_on_lattice_polygon(CellDecomposition.single(base), TWO, 91, z0)
    plain = build_localized(LocalizationJob(base, TWO, 91, z0))
    pts = base.interior_samples(30)
    np.testing.assert_allclose(glued(pts), plain(pts), atol=1e-13)


def test_symmetric_target_glues_continuously():
    dec = CellDecomposition.equilateral_parallelogram("D")
    target = symmetrize(TWO, table_row("tableB:equi:D").group(), "D")
    z0 = dec.apply(2, [0.45, 0.3])
    [field] = build_on_lattice_polygon(dec, target, 91, z0, roaming=False)
    assert gluing_residual(field)[0] <= 1e-8
    with pytest.raises(SymmetryViolation):
        build_on_lattice_polygon(dec, TWO, 91, z0, roaming=False)


def test_run_config_round_trip_and_run():
    cfg = RunConfig(BilliardSpec.square("N"), WaveSpec(J0), [5, 65], 3, 3)
    assert RunConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()
    report = run_localization(cfg)
    assert [r["mu"] for r in report["shells"]] == [5, 65]
    assert all(r["count"] == 9 for r in report["shells"])
