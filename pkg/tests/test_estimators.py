import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from billiard_lens.billiards import BilliardSpec
from billiard_lens.estimators import LocalizedEigenfunction, PlaneWaveFit
from billiard_lens.localize import LocalizationJob, build_localized, rescaled_field
from billiard_lens.obstruction import window_grid
from billiard_lens.waves import BesselTranslateSum


def test_localized_estimator_wraps_builder():
    target = BesselTranslateSum.single()
    est = LocalizedEigenfunction(BilliardSpec.square("N"), mu=1105, base_point=(0.37, 0.41)).fit(target)
    Z = window_grid(2.0, 0.25)
    e = build_localized(LocalizationJob(BilliardSpec.square("N"), target, 1105, (0.37, 0.41)))
    assert est.eigenvalue_ == e.eigenvalue
    np.testing.assert_array_equal(est.predict(Z), rescaled_field(e, (0.37, 0.41), Z))
    assert est.score(Z) == -np.max(np.abs(est.predict(Z) - target(Z)))


def test_localized_estimator_params_and_clone():
    est = LocalizedEigenfunction(mu=65, base_point=(0.2, 0.3))
    assert est.get_params()["mu"] == 65
    copy = clone(est)
    assert copy.base_point == (0.2, 0.3) and copy is not est
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((1, 2)))


def test_plane_wave_fit_recovers_exact_sum():
    angles = np.array([0.2, 0.9, 1.7])
    X = window_grid(3.0, 0.25)
    ph = X @ np.stack([np.cos(angles), np.sin(angles)])
    y = np.cos(ph) @ [1.0, -0.5, 0.3] + np.sin(ph) @ [0.2, 0.4, -0.7]
    model = PlaneWaveFit(n_waves=3, restarts=2, warm_start_angles=list(angles)).fit(X, y)
    assert model.residual_ <= 1e-10
    assert model.relative_residual(X, y) <= 1e-10
    assert model.score(X, y) == pytest.approx(1.0)
    np.testing.assert_allclose(np.linalg.norm(model.directions_, axis=1), 1.0)


def test_plane_wave_fit_is_deterministic():
    X = window_grid(3.0, 0.3)
    y = BesselTranslateSum.single()(X)
    a = PlaneWaveFit(n_waves=4, restarts=3).fit(X, y)
    b = PlaneWaveFit(n_waves=4, restarts=3).fit(X, y)
    np.testing.assert_array_equal(a.angles_, b.angles_)
    assert 0 < a.residual_ < 1
