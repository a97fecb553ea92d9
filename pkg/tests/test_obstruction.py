import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from billiard_lens.billiards import BilliardSpec, disk_expansion, expansion
from billiard_lens.localize import LocalizationJob, build_localized
from billiard_lens.obstruction import (
    JetVector,
    SampleBlock,
    bessel_profile_samples,
    disk_constraint_residual,
    fit_plane_waves,
    jet_at,
    plane_wave_distance,
    q_tilde,
    radial_samples,
    rectangle_variety_residual,
    report,
    robin_span,
    sample_offsets,
    symbolic_q_tilde,
    window_grid,
)
from billiard_lens.waves import BesselTranslateSum

TWO = BesselTranslateSum(np.array([[0.3, -0.4], [1.1, 0.7]]), np.array([1.0, -0.6]))


def test_jet_layout():
    jet = JetVector(2, (1.0, 2.0, 3.0), (4.0, 5.0, 6.0, 7.0))
    assert len(jet) == 7
    assert jet.pure_second(1) == 3.0 and jet.mixed_third(0, 1) == 5.0 and jet.mixed_third(1, 0) == 6.0
    with pytest.raises(ValueError):
        JetVector(2, (1.0, 2.0), (0.0,) * 4)
    with pytest.raises(ValueError):
        JetVector(2, (math.nan, 0.0, 0.0), (0.0,) * 4)


def test_jet_of_cosine():
    e = expansion(BilliardSpec.square("N"), 1, {(1, 0): 1.0})
    jet = jet_at(e, [0.0, 0.0])
    np.testing.assert_allclose(jet.vector, [-1, 0, 0, 0, 0, 0, 0], atol=1e-15)
    assert rectangle_variety_residual(jet) == 0.0


def test_jet_of_bessel():
    # J0(r) = 1 - r^2/4 + ..., so the pure second derivatives are -1/2
    jet = jet_at(BesselTranslateSum.single(), [0.0, 0.0])
    np.testing.assert_allclose(jet.vector, [-0.5, 0, -0.5, 0, 0, 0, 0], atol=1e-15)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_jet_linear(a, b):
    f = BesselTranslateSum.single((0.2, 0.1))
    g = BesselTranslateSum.single((-0.7, 0.4))
    combo = BesselTranslateSum(np.array([[0.2, 0.1], [-0.7, 0.4]]), np.array([a, b]))
    z = [0.3, -0.2]
    np.testing.assert_allclose(jet_at(combo, z).vector, a * jet_at(f, z).vector + b * jet_at(g, z).vector,
                               atol=1e-13)


def test_irrational_rectangle_jets_on_variety():
    spec = BilliardSpec.rectangle(["sqrt(2)"], "D")
    rng = np.random.default_rng(1)
    for N in [(7, 11), (23, 5), (40, 41)]:
        z0 = rng.uniform(0.1, 0.9, 2) * spec.lengths
        e = build_localized(LocalizationJob(spec, TWO, N, z0))
        assert rectangle_variety_residual(jet_at(e, z0)) <= 1e-10


def test_rational_square_mixture_off_variety():
    e = expansion(BilliardSpec.square("D"), 5, {(1, 2): 1.0, (2, 1): 1.0})
    assert rectangle_variety_residual(jet_at(e, [0.23, 0.61])) > 1e-3


def test_rectangle_residual_validation():
    with pytest.raises(ValueError):
        rectangle_variety_residual(JetVector(2, (0.0,) * 3, (0.0,) * 4))
    with pytest.raises(ValueError):
        rectangle_variety_residual(jet_at(TWO, [0, 0]), partition=(0, 1))


@pytest.mark.parametrize("c", [1e-3, 1e3])
def test_residuals_scale_invariant(c):
    jet = jet_at(TWO, [0.1, 0.2])
    scaled = JetVector(2, tuple(c * v for v in jet.second), tuple(c * v for v in jet.third))
    assert rectangle_variety_residual(scaled) == pytest.approx(rectangle_variety_residual(jet), rel=1e-12)
    blocks = radial_samples(TWO, (np.zeros(2), 0.4), 4.0, 3)
    base = disk_constraint_residual(blocks)
    again = disk_constraint_residual(SampleBlock(c * blocks.values, blocks.R))
    np.testing.assert_allclose(again, base, rtol=1e-9)


def test_sample_offsets():
    np.testing.assert_allclose(sample_offsets(4.0, 2), [[0, 0.5, 1, 1.5], [2, 2.5, 3, 3.5]])


def test_profile_derivatives_match_differences():
    t, l, d, R, M = 3.7, 2, 2, 4.0, 3
    h = 1e-4
    mid = bessel_profile_samples(t, l, d, R, M).values.reshape(M, 4, 3)
    up = bessel_profile_samples(t + h, l, d, R, M).values.reshape(M, 4, 3)
    down = bessel_profile_samples(t - h, l, d, R, M).values.reshape(M, 4, 3)
    np.testing.assert_allclose(mid[..., 1], (up[..., 0] - down[..., 0]) / (2 * h), atol=1e-8)
    np.testing.assert_allclose(mid[..., 2], (up[..., 1] - down[..., 1]) / (2 * h), atol=1e-8)


def test_wave_samples_match_differences():
    angle = 0.7
    h = 1e-5
    step = np.array([math.cos(angle), math.sin(angle)])
    mid = radial_samples(TWO, (np.zeros(2), angle), 2.0, 2).values.reshape(2, 4, 3)
    up = radial_samples(TWO, (h * step, angle), 2.0, 2).values.reshape(2, 4, 3)
    down = radial_samples(TWO, (-h * step, angle), 2.0, 2).values.reshape(2, 4, 3)
    np.testing.assert_allclose(mid[..., 1], (up[..., 0] - down[..., 0]) / (2 * h), atol=1e-9)
    np.testing.assert_allclose(mid[..., 2], (up[..., 1] - down[..., 1]) / (2 * h), atol=1e-9)


def test_zero_field_gives_zero_blocks():
    zero = BesselTranslateSum(np.zeros((1, 2)), np.zeros(1))
    blocks = radial_samples(zero, (np.zeros(2), 0.0), 4.0, 3)
    assert not np.any(blocks.values)
    assert disk_constraint_residual(blocks) == [0.0, 0.0, 0.0]


def test_disk_mode_vanishes_on_boundary_and_segment_checked():
    e = disk_expansion(BilliardSpec("disk", "D"), 0, 1, {0: 1.0})
    assert abs(float(e.radial(np.array(1.0)))) <= 1e-12
    with pytest.raises(ValueError):
        radial_samples(e, (0.99, 0.0), 4.0, 3)


@pytest.mark.parametrize("d", [2, 3])
def test_bessel_profiles_on_variety(d):
    assert max(disk_constraint_residual(bessel_profile_samples(3.7, 2, d, 4.0, 3), d)) <= 1e-8


def test_disk_eigenfunction_on_variety():
    e = disk_expansion(BilliardSpec("disk", "D"), 2, 6, {2: 0.3, -2: -1.2})
    assert max(disk_constraint_residual(radial_samples(e, (0.5, 1.1), 4.0, 3))) <= 1e-6


def test_generic_wave_off_variety():
    wave = BesselTranslateSum.single((0.5, 0.8))
    assert max(disk_constraint_residual(radial_samples(wave, (np.zeros(2), 0.0), 4.0, 3))) >= 1e-3


def test_printed_form_matches_resultant():
    rng = np.random.default_rng(8)
    for _ in range(5):
        P = rng.normal(size=12)
        j, R, M, d = int(rng.integers(0, 3)), float(rng.uniform(1, 5)), 3, int(rng.integers(2, 4))
        printed = q_tilde(P, j, R, M, d)
        derived = symbolic_q_tilde(P, j, R, M, d)
        assert abs(printed - derived) <= 1e-9 * max(abs(derived), 1e-300)


def test_exact_plane_wave_sum_fits():
    angles = np.array([0.3, 1.1, 1.9, 2.6])
    pts = window_grid(3.0, 0.2)
    rng = np.random.default_rng(0)
    ph = pts @ np.stack([np.cos(angles), np.sin(angles)])
    values = np.cos(ph) @ rng.normal(size=4) + np.sin(ph) @ rng.normal(size=4)
    fit = plane_wave_distance(pts, values, 4, restarts=0, warm_start=list(angles))
    assert fit["residual"] <= 1e-10 and fit["warm"]
    assert fit_plane_waves(pts, np.zeros(len(pts)), angles)[0] == 0.0
    with pytest.raises(ValueError):
        plane_wave_distance(pts, values, 0)


def test_robin_eigenfunctions_in_span():
    span = robin_span(0.3, count=2)
    assert all(r["residual"] <= 1e-8 for r in span["fits"])


def test_report_verdicts():
    assert report("rect-jet", 1e-12, 1e-10)["verdict"] == "on-variety"
    assert report("rect-jet", 1e-3, 1e-10)["verdict"] == "off-variety"
    assert report("robin-span", 0.1, 1e-8, below_means_on=False)["verdict"] == "on-variety"
    assert set(report("disk-radial", 0.5, 1e-6)) == {"test", "residual", "threshold", "verdict"}
