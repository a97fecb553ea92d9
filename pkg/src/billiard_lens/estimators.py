"""scikit-learn style wrappers around the localization and plane-wave fitting routines."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .billiards import BilliardSpec
from .localize import LocalizationJob, build_localized, rescaled_field
from .obstruction import plane_wave_coefficients, plane_wave_distance, plane_wave_eval


class LocalizedEigenfunction(BaseEstimator):
    """Eigenfunction of a billiard whose rescaled restriction near ``base_point`` imitates a wave.

    ``fit(target)`` builds the expansion; ``predict(Z)`` evaluates
    u(base_point + Z / sqrt(lam)) on window coordinates Z.

    Parameters
    ----------
    billiard : BilliardSpec
    mu : int or tuple
        Shell label.
    base_point : array-like of shape (d,)
    """

    def __init__(self, billiard: BilliardSpec | None = None, mu=5, base_point=(0.5, 0.5)):
        self.billiard = billiard
        self.mu = mu
        self.base_point = base_point

    def fit(self, target, y=None):
        spec = self.billiard or BilliardSpec.square("N")
        self.target_ = target
        self.expansion_ = build_localized(LocalizationJob(spec, target, self.mu, tuple(self.base_point)))
        self.eigenvalue_ = self.expansion_.eigenvalue
        return self

    def predict(self, Z):
        check_is_fitted(self, "expansion_")
        Z = check_array(Z)
        return rescaled_field(self.expansion_, self.base_point, Z)

    def score(self, Z, y=None):
        """Negative sup-norm error against the fitted target on Z."""
        Z = check_array(Z)
        y = self.target_(Z) if y is None else np.asarray(y, dtype=float)
        return -float(np.max(np.abs(self.predict(Z) - y)))


class PlaneWaveFit(RegressorMixin, BaseEstimator):
    """Least-squares fit by T real plane waves cos/sin(theta_j . z) with optimized directions.

    Parameters
    ----------
    n_waves : int
    restarts : int
        Random initializations besides the optional warm start.
    warm_start_angles : sequence of float, optional
    random_state : int
    """

    def __init__(self, n_waves: int = 8, restarts: int = 10, warm_start_angles=None, random_state: int = 20240607):
        self.n_waves = n_waves
        self.restarts = restarts
        self.warm_start_angles = warm_start_angles
        self.random_state = random_state

    def fit(self, X, y):
        X = check_array(X)
        y = np.asarray(y, dtype=float)
        fit = plane_wave_distance(X, y, self.n_waves, self.restarts, self.random_state, self.warm_start_angles)
        self.angles_ = np.asarray(fit["angles"])
        self.coef_ = plane_wave_coefficients(X, y, self.angles_)
        self.residual_ = fit["residual"]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return plane_wave_eval(check_array(X), self.angles_, self.coef_)

    @property
    def directions_(self) -> np.ndarray:
        check_is_fitted(self, "angles_")
        return np.stack([np.cos(self.angles_), np.sin(self.angles_)], axis=1)

    def relative_residual(self, X, y) -> float:
        y = np.asarray(y, dtype=float)
        return float(np.linalg.norm(self.predict(X) - y) / max(math.sqrt(float(y @ y)), 1e-300))
