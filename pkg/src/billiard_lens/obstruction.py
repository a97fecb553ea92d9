"""Residuals that separate localized eigenfunctions from generic waves.

* Irrational rectangles: order-3 jets of localized eigenfunctions satisfy a
  quadratic relation between the partial Laplacians along the axis blocks.
* Disks: radial restrictions solve a Bessel-type ODE whose two unknowns
  (shift and angular order) can be eliminated from four samples, leaving a
  polynomial in the samples.
* Robin squares: localized eigenfunctions are finite plane-wave sums, so the
  distance to an 8-term plane-wave family is zero for them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .billiards import DiskExpansion, TrigExpansion
from .waves import BesselTranslateSum, WaveSpec, bessel_j, bessel_j_derivative


# ------------------------------------------------------------------ jets


@dataclass(frozen=True)
class JetVector:
    """Second and third derivatives at a point, indices i <= j (<= l) in lexicographic order."""

    d: int
    second: tuple[float, ...]
    third: tuple[float, ...]

    def __post_init__(self) -> None:
        n2 = self.d * (self.d + 1) // 2
        n3 = math.comb(self.d + 2, 3)
        if len(self.second) != n2 or len(self.third) != n3:
            raise ValueError("jet entries do not match the dimension")
        if not all(math.isfinite(v) for v in self.second + self.third):
            raise ValueError("jet entries must be finite")

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.second + self.third)

    def __len__(self) -> int:
        return len(self.second) + len(self.third)

    def pure_second(self, i: int) -> float:
        return self.second[_index2(self.d)[(i, i)]]

    def mixed_third(self, i: int, j: int) -> float:
        """d_i^2 d_j f."""
        return self.third[_index3(self.d)[tuple(sorted((i, i, j)))]]


def _index2(d: int) -> dict:
    keys = [(i, j) for i in range(d) for j in range(i, d)]
    return {k: n for n, k in enumerate(keys)}


def _index3(d: int) -> dict:
    keys = [(i, j, l) for i in range(d) for j in range(i, d) for l in range(j, d)]
    return {k: n for n, k in enumerate(keys)}


def _alpha(d: int, idx: Sequence[int]) -> tuple[int, ...]:
    out = [0] * d
    for i in idx:
        out[i] += 1
    return tuple(out)


def jet_at(field, z0, scale: float | None = None) -> JetVector:
    """Jet at 0 of f(z) = field(z0 + scale * z) using analytic derivatives.

    ``scale`` defaults to 1/sqrt(lam) for eigenfunctions and 1 for waves.
    """
    if scale is None:
        lam = getattr(field, "eigenvalue", None)
        scale = 1.0 / math.sqrt(lam) if lam else 1.0
    z0 = np.asarray(z0, dtype=float)
    d = z0.size
    point = z0[None, :]

    def deriv(idx):
        a = _alpha(d, idx)
        return float(np.asarray(field.derivative(point, a)).reshape(-1)[0]) * scale ** len(idx)

    second = tuple(deriv(k) for k in _index2(d))
    third = tuple(deriv(k) for k in _index3(d))
    return JetVector(d, second, third)


def rectangle_variety_residual(jet: JetVector, partition: Sequence[int] = (0,)) -> float:
    """Largest violation over j of (sum_I d_i^2 d_j f)(sum_notI d_i^2 f) = (sum_notI d_i^2 d_j f)(sum_I d_i^2 f).

    ``partition`` lists the coordinates of the first block; the value is
    divided by the squared jet norm, so it is invariant under f -> c f.
    """
    first = set(partition)
    if not first or len(first) >= jet.d:
        raise ValueError("partition must be a proper nonempty subset of the axes")
    norm2 = float(np.dot(jet.vector, jet.vector))
    if norm2 == 0:
        raise ValueError("degenerate (zero) jet")
    lap_in = sum(jet.pure_second(i) for i in first)
    lap_out = sum(jet.pure_second(i) for i in range(jet.d) if i not in first)
    worst = 0.0
    for j in range(jet.d):
        third_in = sum(jet.mixed_third(i, j) for i in first)
        third_out = sum(jet.mixed_third(i, j) for i in range(jet.d) if i not in first)
        worst = max(worst, abs(third_in * lap_out - third_out * lap_in))
    return worst / norm2


# ------------------------------------------------------------------ disk radial samples


@dataclass
class SampleBlock:
    """Values, first and second derivatives at four offsets in each of M blocks (rows of 12)."""

    values: np.ndarray
    R: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).reshape(-1, 12)

    @property
    def M(self) -> int:
        return len(self.values)


def sample_offsets(R: float, M: int) -> np.ndarray:
    """(M, 4) sample positions alpha_j + {0, 1, 2, 3} R / (4M) with alpha_j = j R / M."""
    j = np.arange(M)[:, None]
    return j * R / M + np.arange(4)[None, :] * R / (4 * M)


def _pack(f0, f1, f2, R: float, M: int) -> SampleBlock:
    vals = np.stack([f0, f1, f2], axis=-1).reshape(M, 12)
    return SampleBlock(vals, R)


def bessel_profile_samples(t: float, l: int, d: int, R: float, M: int = 3) -> SampleBlock:
    """Samples of f(r) = (t + r)^(1 - d/2) J_{d/2 + l - 1}(t + r) from Bessel derivative identities."""
    x = t + sample_offsets(R, M)
    nu = d / 2 + l - 1
    s = 1 - d / 2
    J = [np.asarray(bessel_j(nu, x)), bessel_j_derivative(nu, x, 1), bessel_j_derivative(nu, x, 2)]
    f0 = x**s * J[0]
    f1 = s * x ** (s - 1) * J[0] + x**s * J[1]
    f2 = s * (s - 1) * x ** (s - 2) * J[0] + 2 * s * x ** (s - 1) * J[1] + x**s * J[2]
    return _pack(f0, f1, f2, R, M)


def radial_samples(field, z0, R: float, M: int = 3, eigenvalue: float | None = None) -> SampleBlock:
    """Sample blocks of a field restricted to a radial segment.

    For a disk expansion, ``z0 = (r0, theta0)`` in polar form (a unit vector
    for d = 3) and the restriction is f(r) = u((r0 + (r0 (1 - R) + r)/sqrt(lam)) theta0).
    For a wave, ``z0`` is a Cartesian start point plus a direction angle and
    f(r) = phi(p + r theta0).
    """
    offs = sample_offsets(R, M)
    if isinstance(field, DiskExpansion):
        r0, direction = z0
        direction = np.asarray(direction, dtype=float)
        if direction.ndim == 0:
            direction = np.array([math.cos(float(direction)), math.sin(float(direction))])
        lam = field.eigenvalue if eigenvalue is None else eigenvalue
        k = math.sqrt(lam)
        rho = r0 + (r0 * (1 - R) + offs) / k
        if np.max(rho) > 1 + 1e-12 or np.min(rho) < 0:
            raise ValueError("radial segment leaves the disk")
        ang = field._angular(direction[None, :])[0]
        f0 = field.radial(rho, 0) * ang
        f1 = field.radial(rho, 1) * ang / k
        f2 = field.radial(rho, 2) * ang / lam
        return _pack(f0, f1, f2, R, M)
    start, angle = z0
    start = np.asarray(start, dtype=float)
    c, s = math.cos(angle), math.sin(angle)
    pts = start + offs[..., None] * np.array([c, s])
    wave = field.wave if isinstance(field, WaveSpec) else field
    dx = lambda a: wave.derivative(pts, a)
    f0 = dx((0, 0))
    f1 = c * dx((1, 0)) + s * dx((0, 1))
    f2 = c * c * dx((2, 0)) + 2 * c * s * dx((1, 1)) + s * s * dx((0, 2))
    return _pack(f0, f1, f2, R, M)


def _block_polys(P: np.ndarray, alpha: float, R: float, M: int, d: int):
    """Quadratic coefficients in the shift for sample pairs (1, 2) and (3, 4)."""
    P1, P2, P3, P4, P5, P6, P7, P8, P9, P10, P11, P12 = (P[..., i] for i in range(12))
    q = R / M  # block length; offsets are multiples of q/4
    a = P3 * P4 - P6 * P1
    dd = P9 * P10 - P12 * P7
    b = (2 * alpha * (P3 * P4 + P1 * P4) + (d - 1) * (P2 * P4 - P5 * P1)
         - (2 * alpha + q / 2) * (P6 * P1 + P4 * P1))
    c = (alpha**2 * (P3 * P4 + P1 * P4) + alpha * (d - 1) * P2 * P4
         - (alpha + q / 4) * (d - 1) * P5 * P1 - (alpha + q / 4) ** 2 * (P6 * P1 + P4 * P1))
    e = ((2 * alpha + q) * (P9 * P10 + P7 * P10) + (d - 1) * (P8 * P10 - P11 * P7)
         - (2 * alpha + 3 * q / 2) * (P12 * P7 + P10 * P7))
    f = ((alpha + q / 2) ** 2 * (P9 * P10 + P7 * P10) + (alpha + q / 2) * (d - 1) * P8 * P10
         - (alpha + 3 * q / 4) * (d - 1) * P11 * P7 - (alpha + 3 * q / 4) ** 2 * (P12 * P7 + P10 * P7))
    return a, b, c, dd, e, f


def _q_tilde_terms(P: np.ndarray, j: int, R: float, M: int, d: int):
    alpha = j * R / M
    a, b, c, dd, e, f = _block_polys(np.asarray(P, dtype=float), alpha, R, M, d)
    first = b * b * dd - 2 * a * c * dd - a * b * e + 2 * a * a * f
    value = first**2 - (a * e - b * dd) ** 2 * (b * b - 4 * a * c)
    size = ((abs(b * b * dd) + 2 * abs(a * c * dd) + abs(a * b * e) + 2 * abs(a * a * f)) ** 2
            + (abs(a * e) + abs(b * dd)) ** 2 * (b * b + 4 * abs(a * c)))
    return value, size


def q_tilde(P: np.ndarray, j: int, R: float, M: int, d: int) -> np.ndarray:
    """Eliminant of the shift and angular order for one 12-sample block (degree 12 in P)."""
    return _q_tilde_terms(P, j, R, M, d)[0]


def disk_constraint_residual(blocks: SampleBlock, d: int = 2) -> list[float]:
    """Per-block eliminant relative to the size of the terms that must cancel.

    Numerator and denominator are both homogeneous of degree 12 in the
    samples, so the value lies in [0, 1] and ignores f -> c f.
    """
    out = []
    for j, P in enumerate(blocks.values):
        if P.size != 12:
            raise ValueError("each block needs 12 samples")
        value, size = _q_tilde_terms(P, j, blocks.R, blocks.M, d)
        out.append(0.0 if size == 0 else abs(float(value)) / float(size))
    return out


@lru_cache(maxsize=None)
def _symbolic_eliminant():
    """Resultant eliminating the angular order and the shift from the ODE at four offsets."""
    import sympy as sp

    P = sp.symbols("P1:13")
    t, L, alpha, q, dim = sp.symbols("t L alpha q dim")
    offsets = [alpha, alpha + q / 4, alpha + q / 2, alpha + 3 * q / 4]

    def ode(i):
        f, fp, fpp = P[3 * i], P[3 * i + 1], P[3 * i + 2]
        s = t + offsets[i]
        return s**2 * (fpp + f) + (dim - 1) * s * fp - L * f

    first = sp.expand(sp.resultant(ode(0), ode(1), L))
    second = sp.expand(sp.resultant(ode(2), ode(3), L))
    res = sp.resultant(sp.Poly(first, t), sp.Poly(second, t))
    lead = sp.Poly(first, t).coeff_monomial(t**2)
    return sp.lambdify((P, alpha, q, dim), res, "numpy"), sp.lambdify((P, alpha, q, dim), lead, "numpy")


def symbolic_q_tilde(P: np.ndarray, j: int, R: float, M: int, d: int) -> float:
    """4 a^2 Res_t of the two shift quadratics, built from the ODE by symbolic elimination."""
    res, lead = _symbolic_eliminant()
    P = np.asarray(P, dtype=float)
    alpha = j * R / M
    a = lead(tuple(P), alpha, R / M, d)
    return float(4 * a * a * res(tuple(P), alpha, R / M, d))


# ------------------------------------------------------------------ plane-wave fitting


def window_grid(R: float = 3.0, h: float = 0.2) -> np.ndarray:
    n = int(math.floor(R / h + 1e-9))
    axis = h * np.arange(-n, n + 1)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    return pts[np.linalg.norm(pts, axis=1) <= R + 1e-12]


def _design(points: np.ndarray, angles: np.ndarray) -> np.ndarray:
    ph = points @ np.stack([np.cos(angles), np.sin(angles)])
    return np.hstack([np.cos(ph), np.sin(ph)])


def _residual(points, values, angles, norm) -> float:
    A = _design(points, angles)
    coef, *_ = np.linalg.lstsq(A, values, rcond=1e-12)
    return float(np.linalg.norm(values - A @ coef) / norm)


class _CoordinateObjective:
    """Residual as one angle varies, the other columns projected out once."""

    def __init__(self, points, values, others, norm):
        self.points = points
        self.norm2 = norm * norm
        if len(others):
            self.Q, _ = np.linalg.qr(_design(points, others))
        else:
            self.Q = np.zeros((len(points), 0))
        self.rest = values - self.Q @ (self.Q.T @ values)
        self.rest2 = float(self.rest @ self.rest)

    def __call__(self, thetas) -> np.ndarray:
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        ph = self.points @ np.stack([np.cos(thetas), np.sin(thetas)])
        out = np.empty(len(thetas))
        for i in range(len(thetas)):
            B = np.stack([np.cos(ph[:, i]), np.sin(ph[:, i])], axis=1)
            B = B - self.Q @ (self.Q.T @ B)
            q, r = np.linalg.qr(B)
            keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, float(np.abs(r).max()))
            gain = q[:, keep].T @ self.rest
            out[i] = math.sqrt(max(self.rest2 - float(gain @ gain), 0.0) / self.norm2)
        return out


def _projected_residual(points, values, angles, norm) -> tuple[np.ndarray, np.ndarray]:
    """Variable-projection residual and its Kaufman Jacobian in the angles."""
    ph = points @ np.stack([np.cos(angles), np.sin(angles)])
    A = np.hstack([np.cos(ph), np.sin(ph)])
    Q, _ = np.linalg.qr(A)
    coef, *_ = np.linalg.lstsq(A, values, rcond=1e-12)
    res = values - A @ coef
    T = len(angles)
    lever = points @ np.stack([-np.sin(angles), np.cos(angles)])
    D = lever * (np.cos(ph) * coef[T:] - np.sin(ph) * coef[:T])
    J = -(D - Q @ (Q.T @ D))
    return res / norm, J / norm


def polish_angles(points, values, angles, max_nfev: int = 200) -> tuple[float, np.ndarray]:
    """Joint Levenberg-Marquardt refinement of all angles at once."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    norm = float(np.linalg.norm(values))
    angles = np.asarray(angles, dtype=float)
    start = _residual(points, values, angles, norm)
    if norm == 0 or start < 1e-14:
        return start, angles
    fit = least_squares(lambda th: _projected_residual(points, values, th, norm)[0], angles,
                        jac=lambda th: _projected_residual(points, values, th, norm)[1],
                        method="lm", xtol=1e-14, ftol=1e-14, max_nfev=max_nfev)
    polished = np.mod(fit.x, math.pi)
    value = _residual(points, values, polished, norm)
    return (value, polished) if value < start else (start, angles)


def fit_plane_waves(points, values, angles0, sweeps: int = 30, tol: float = 1e-10) -> tuple[float, np.ndarray]:
    """Coordinate descent on the angles with the amplitudes solved by least squares, then a joint polish."""
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    norm = float(np.linalg.norm(values))
    if norm == 0:
        return 0.0, np.asarray(angles0, dtype=float)
    angles = np.mod(np.asarray(angles0, dtype=float), math.pi)
    best = _residual(points, values, angles, norm)
    grid = np.linspace(0, math.pi, 24, endpoint=False)
    width = math.pi / 24
    for _ in range(sweeps):
        before, previous = best, angles.copy()
        for j in range(len(angles)):
            obj = _CoordinateObjective(points, values, np.delete(angles, j), norm)
            scan = obj(grid)
            i0 = int(np.argmin(scan))
            current = float(obj(angles[j])[0])
            centre = grid[i0] if scan[i0] < current else angles[j]
            opt = minimize_scalar(lambda th: float(obj(th)[0]), bounds=(centre - width, centre + width),
                                  method="bounded", options={"xatol": 1e-10})
            candidates = [(current, angles[j]), (float(scan[i0]), grid[i0]), (float(opt.fun), float(opt.x))]
            angles[j] = min(candidates, key=lambda c: c[0])[1]
        best = _residual(points, values, angles, norm)
        if best >= before:
            # the projected objective loses digits near an exact fit
            return polish_angles(points, values, previous)
        if before - best <= tol * before or best < 1e-14:
            break
    return polish_angles(points, values, angles)


def _fit_task(args):
    points, values, start, sweeps = args
    return fit_plane_waves(points, values, start, sweeps)


def plane_wave_distance(points, values, T: int = 8, restarts: int = 50, seed: int = 20240607,
                        warm_start: Sequence[float] | None = None, sweeps: int = 30,
                        workers: int = 1) -> dict:
    """Best relative L2 distance to span{cos, sin}(theta_j . z), j <= T, over seeded restarts."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(seed)
    starts = []
    if warm_start is not None:
        w = list(warm_start)[:T]
        w += list(rng.uniform(0, 2 * math.pi, T - len(w)))
        starts.append(np.array(w))
    starts += [rng.uniform(0, 2 * math.pi, T) for _ in range(restarts)]
    tasks = [(points, values, st, sweeps) for st in starts]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_fit_task, tasks))
    else:
        results = [_fit_task(t) for t in tasks]
    best = min(range(len(results)), key=lambda i: results[i][0])
    return {"residual": results[best][0], "angles": [float(a) for a in results[best][1]], "start": best,
            "warm": warm_start is not None, "tried": len(results)}


def plane_wave_coefficients(points, values, angles) -> np.ndarray:
    coef, *_ = np.linalg.lstsq(_design(np.asarray(points, dtype=float), np.asarray(angles)), values, rcond=1e-12)
    return coef


def plane_wave_eval(points, angles, coef) -> np.ndarray:
    return _design(np.asarray(points, dtype=float), np.asarray(angles)) @ coef


def robin_angles(e: TrigExpansion) -> list[float]:
    """Directions (+-k_m, +-k_n) of the plane waves making up a Robin-square expansion."""
    out = []
    for w in e.omegas:
        for sx in (1, -1):
            for sy in (1, -1):
                out.append(math.atan2(sy * w[1], sx * w[0]))
    return out


def report(test: str, residual: float, threshold: float, below_means_on: bool = True) -> dict:
    on = residual <= threshold if below_means_on else residual > threshold
    return {"test": test, "residual": residual, "threshold": threshold,
            "verdict": "on-variety" if on else "off-variety"}


# ------------------------------------------------------------------ contrast experiments


def _two_translates(rng, spread: float = 2.0) -> BesselTranslateSum:
    centres = rng.uniform(-spread, spread, (2, 2))
    second = rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 1.0)
    return BesselTranslateSum(centres, np.array([1.0, second]), 2)


def rectangle_contrast(count: int = 20, seed: int = 20240607, side_square: str = "sqrt(2)") -> dict:
    """Jet residuals of localized irrational-rectangle eigenfunctions against two-translate waves."""
    from .billiards import BilliardSpec
    from .localize import LocalizationJob, build_localized

    rng = np.random.default_rng(seed)
    spec = BilliardSpec.rectangle((side_square,), "D")
    box = np.array(spec.lengths)
    on, off = [], []
    for _ in range(count):
        N = (int(rng.integers(5, 60)), int(rng.integers(5, 60)))
        z0 = rng.uniform(0.1, 0.9, 2) * box
        e = build_localized(LocalizationJob(spec, _two_translates(rng), N, z0))
        on.append(rectangle_variety_residual(jet_at(e, z0)))
        off.append(rectangle_variety_residual(jet_at(_two_translates(rng), rng.uniform(-1, 1, 2))))
    return {"test": "rect-jet", "seed": seed, "eigenfunctions": on, "waves": off,
            "median_eigenfunctions": float(np.median(on)), "median_waves": float(np.median(off))}


def disk_contrast(count: int = 10, seed: int = 20240607, R: float = 4.0, M: int = 3) -> dict:
    """Eliminant residuals of disk eigenmodes, exact Bessel profiles and generic two-translate waves."""
    from .billiards import BilliardSpec, disk_expansion

    rng = np.random.default_rng(seed)
    spec = BilliardSpec("disk", "D", 2)
    modes, profiles, waves = [], [], []
    for _ in range(count):
        l = int(rng.integers(0, 7))
        n = int(rng.integers(l + 4, l + 12))
        harmonics = {l: 1.0} if l == 0 else {l: float(rng.normal()), -l: float(rng.normal())}
        e = disk_expansion(spec, l, n, harmonics)
        blocks = radial_samples(e, (0.5, float(rng.uniform(0, 2 * math.pi))), R, M)
        modes.append(max(disk_constraint_residual(blocks, 2)))
        t, lp, d = float(rng.uniform(3, 30)), int(rng.integers(0, 7)), int(rng.integers(2, 4))
        profiles.append(max(disk_constraint_residual(bessel_profile_samples(t, lp, d, R, M), d)))
        wave = _two_translates(rng)
        blocks = radial_samples(wave, (np.zeros(2), float(rng.uniform(0, 2 * math.pi))), R, M)
        waves.append(max(disk_constraint_residual(blocks, 2)))
    return {"test": "disk-radial", "seed": seed, "R": R, "M": M, "eigenfunctions": modes,
            "profiles": profiles, "waves": waves}


def robin_span(sigma: float = 0.3, count: int = 5, seed: int = 20240607, T: int = 8,
               R: float = 3.0, h: float = 0.2) -> dict:
    """Warm-started plane-wave fits of localized Robin-square eigenfunctions."""
    from .billiards import robin_eigenfunction

    rng = np.random.default_rng(seed)
    pts = window_grid(R, h)
    rows = []
    for _ in range(count):
        m, n = int(rng.integers(3, 25)), int(rng.integers(3, 25))
        e = robin_eigenfunction(sigma, m, n, (float(rng.normal()), float(rng.normal())))
        z0 = rng.uniform(0.2, 0.8, 2)
        vals = e(z0 + pts / math.sqrt(e.eigenvalue))
        fit = plane_wave_distance(pts, vals, T, restarts=0, warm_start=robin_angles(e))
        rows.append({"m": m, "n": n, "z0": [float(v) for v in z0], "residual": fit["residual"]})
    return {"test": "robin-span", "sigma": sigma, "seed": seed, "T": T, "fits": rows}


def wave_floor(wave, T: int = 8, restarts: int = 50, seed: int = 20240607, R: float = 8.0, h: float = 0.35,
               workers: int = 1) -> dict:
    """Multistart plane-wave distance of a wave sampled on the window ball."""
    pts = window_grid(R, h)
    fit = plane_wave_distance(pts, wave(pts), T, restarts=restarts, seed=seed, workers=workers)
    return {"test": "robin-span", "T": T, "restarts": restarts, "seed": seed, "R": R, "h": h, **fit}
