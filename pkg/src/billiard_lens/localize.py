"""Eigenfunctions whose wavelength-scale rescalings approximate a prescribed wave.

A localized eigenfunction is the signed point-group symmetrization of a
shell-discretized translate sum.  In plane-wave form its amplitude at the
frame frequency ``k`` is

    a_k = (1/#shell) sum_gamma c_gamma sum_g s_g exp(-i (g^T k) . y_gamma)

with ``y_gamma`` the frame coordinates of ``z0 + z_gamma / sqrt(lam)``.  The
identity element reproduces ``sum_gamma c_gamma K(z - z_gamma)``; the other
elements make up the error field.
"""

from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .billiards import (
    BilliardSpec,
    TrigExpansion,
    admissible_index,
    expansion_from_slots,
    frequency_scale,
    point_group,
    quadratic_form,
    shell_eigenvalue,
    shell_value,
    signed_shell,
)
from .kernel import reproducing_kernel, window_points
from .lattice import enumerate_shell, is_square_or_three_square
from .waves import (
    BesselTranslateSum,
    HerglotzPolynomial,
    WaveSpec,
    check_symmetry,
    reflection_matrix,
    table_row,
    translate_to_herglotz,
)

MAX_STEP = 0.05


class SymmetryViolation(ValueError):
    pass


def _translates(target) -> BesselTranslateSum:
    w = target.wave if isinstance(target, WaveSpec) else target
    if not isinstance(w, BesselTranslateSum):
        raise TypeError("localization needs the target as a Bessel translate sum")
    return w


def _polygon_tag(spec: BilliardSpec) -> str:
    return {"rectangle": "rectangle", "iso_triangle": "iso", "equi_triangle": "equi",
            "hemi_triangle": "hemi"}[spec.kind]


@dataclass
class LocalizationJob:
    """One (billiard, target, shell, base point) localization request."""

    spec: BilliardSpec
    target: WaveSpec | BesselTranslateSum
    mu: object
    z0: Sequence[float] | None = None
    window_R: float = 4.0
    k: int = 0
    h: float = MAX_STEP

    def __post_init__(self) -> None:
        if self.k < 0:
            raise ValueError("derivative order must be nonnegative")
        if self.window_R < _translates(self.target).envelope_radius:
            raise ValueError("window radius is smaller than the target's translate envelope")

    def at(self, z0) -> "LocalizationJob":
        return LocalizationJob(self.spec, self.target, self.mu, tuple(z0), self.window_R, self.k, self.h)


# ------------------------------------------------------------ plane-wave folding on arrays


def _fold(spec: BilliardSpec, shell: np.ndarray, amps: np.ndarray) -> dict[tuple[int, ...], np.ndarray]:
    """Slot coefficients of Re sum_N a_N exp(i k_N . zb), vectorized over the shell."""
    d = spec.d
    keys, inverse = np.unique(np.abs(shell), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    sgn = np.sign(shell)
    coeffs = np.zeros((len(keys), 1 << d))
    for s in range(1 << d):
        factor = np.ones(len(shell), dtype=complex)
        for j in range(d):
            if s >> j & 1:
                factor = factor * 1j * sgn[:, j]
        np.add.at(coeffs[:, s], inverse, (amps * factor).real)
    keep = np.any(np.abs(coeffs) > 1e-300, axis=1)
    return {tuple(int(v) for v in k): c for k, c in zip(keys[keep], coeffs[keep])}


def _shell_array(spec: BilliardSpec, mu) -> np.ndarray:
    shell = signed_shell(spec, mu)
    if not shell:
        raise ValueError(f"empty shell for mu={mu}")
    return np.array(shell, dtype=np.int64)


def _check_shell(spec: BilliardSpec, mu) -> None:
    if spec.kind in ("equi_triangle", "hemi_triangle") and is_square_or_three_square(int(mu)):
        raise ValueError("triangle shells with mu a square or three times a square are excluded")


def localized_amplitudes(spec: BilliardSpec, mu, target, z0) -> tuple[np.ndarray, np.ndarray, float]:
    """(signed shell, plane-wave amplitudes, eigenvalue) of the localized eigenfunction."""
    if spec.kind not in ("rectangle", "iso_triangle", "equi_triangle", "hemi_triangle"):
        raise ValueError(f"localization is implemented for polygons, not {spec.kind}")
    _check_shell(spec, mu)
    w = _translates(target)
    shell = _shell_array(spec, mu)
    lam = shell_eigenvalue(spec, mu)
    k = shell * frequency_scale(spec)
    y = spec.to_frame(np.asarray(z0, dtype=float) + w.centers / math.sqrt(lam))
    group = point_group(spec)
    signs = group.signs(spec.bc if spec.bc in ("D", "N") else "N")
    amps = np.zeros(len(shell), dtype=complex)
    for g, s in zip(group.elements, signs):
        phase = (k @ g) @ y.T
        amps += s * (np.exp(-1j * phase) @ w.coeffs)
    return shell, amps / len(shell), lam


def build_localized(job: LocalizationJob) -> TrigExpansion:
    if job.z0 is None:
        raise ValueError("build_localized needs a base point")
    shell, amps, lam = localized_amplitudes(job.spec, job.mu, job.target, job.z0)
    slots = _fold(job.spec, shell, amps)
    slots = {key: v for key, v in slots.items() if np.any(np.abs(v) > 1e-15 * np.abs(amps).max(initial=1.0))}
    if not slots:
        # every image cancels at this base point: the localized field is zero
        first = next(tuple(int(v) for v in np.abs(N)) for N in shell if admissible_index(job.spec, np.abs(N)))
        slots = {first: np.zeros(1 << job.spec.d)}
    e = expansion_from_slots(job.spec, job.mu, slots, lam)
    e.validate(tol=1e-10)
    return e


# ------------------------------------------------------------ rescaled fields and errors


def rescaled_field(e: TrigExpansion, z0, z, alpha=None) -> np.ndarray:
    """d^alpha/dz^alpha of u(z0 + z / sqrt(lam))."""
    z = np.asarray(z, dtype=float)
    alpha = tuple(alpha) if alpha is not None else (0,) * e.spec.d
    scale = 1.0 / math.sqrt(e.eigenvalue)
    return e.derivative(np.asarray(z0, dtype=float) + scale * z, alpha) * scale ** sum(alpha)


def _multi_indices(d: int, k: int):
    out = []
    for total in range(k + 1):
        for alpha in np.ndindex(*(total + 1,) * d):
            if sum(alpha) == total:
                out.append(tuple(int(a) for a in alpha))
    return out


def _window_axis(R: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    n = int(math.floor(R / h + 1e-9))
    axis = h * np.arange(-n, n + 1)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    return axis, (X * X + Y * Y) <= R * R + 1e-12


@dataclass
class WindowTarget:
    """Target derivatives sampled once on the window grid."""

    R: float
    h: float
    k: int
    axis: np.ndarray
    mask: np.ndarray
    values: dict

    @classmethod
    def sample(cls, target, R: float, h: float, k: int) -> "WindowTarget":
        if h > MAX_STEP:
            raise ValueError(f"grid step {h} does not resolve unit-frequency oscillations (need <= {MAX_STEP})")
        axis, mask = _window_axis(R, h)
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        pts = np.stack([X, Y], axis=-1)
        wave = target.wave if isinstance(target, WaveSpec) else target
        values = {alpha: wave.derivative(pts, alpha) for alpha in _multi_indices(2, k)}
        return cls(R, h, k, axis, mask, values)


def window_error(e: TrigExpansion, z0, window: WindowTarget) -> float:
    """C^k distance on the window between the rescaled eigenfunction and the sampled target."""
    scale = 1.0 / math.sqrt(e.eigenvalue)
    xs = z0[0] + scale * window.axis
    ys = z0[1] + scale * window.axis
    worst = 0.0
    for alpha, ref in window.values.items():
        u = e.eval_grid(xs, ys, alpha) * scale ** sum(alpha)
        worst = max(worst, float(np.max(np.abs(u - ref)[window.mask])))
    return worst


def localization_error(e: TrigExpansion, z0, target, R_win: float = 4.0, k: int = 0, h: float = MAX_STEP) -> float:
    """max over |alpha| <= k and the window grid of |d^alpha (u(z0 + z/sqrt(lam)) - target)|."""
    if h > MAX_STEP:
        raise ValueError(f"grid step {h} does not resolve unit-frequency oscillations (need <= {MAX_STEP})")
    if e.spec.d == 2:
        return window_error(e, z0, WindowTarget.sample(target, R_win, h, k))
    pts = window_points(R_win, h, e.spec.d)
    wave = target.wave if isinstance(target, WaveSpec) else target
    worst = 0.0
    for alpha in _multi_indices(e.spec.d, k):
        diff = rescaled_field(e, z0, pts, alpha) - wave.derivative(pts, alpha)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst


def error_field(e: TrigExpansion, z0, target, points) -> np.ndarray:
    """Rescaled eigenfunction minus its translation-invariant part sum c_gamma K(z - z_gamma)."""
    w = _translates(target)
    spec = e.spec
    shell = enumerate_shell(quadratic_form(spec), shell_value(spec, e.mu)) if spec.is_rational else None
    points = np.asarray(points, dtype=float)
    kernel_part = np.zeros(points.shape[:-1])
    for c, a in zip(w.centers, w.coeffs):
        if shell is not None:
            kernel_part = kernel_part + a * reproducing_kernel(shell, _polygon_tag(spec), points - c)
        else:
            dirs = _shell_array(spec, e.mu) * frequency_scale(spec) / math.sqrt(e.eigenvalue)
            kernel_part = kernel_part + a * np.cos((points - c) @ dirs.T).mean(axis=-1)
    return rescaled_field(e, z0, points) - kernel_part


def explicit_error_box(spec: BilliardSpec, mu, z0, target, points) -> np.ndarray:
    """Error field of a box from the per-axis product formula.

    For a single translate, with C2_j = cos(w_j (z_j - zg_j)) and
    C1_j = cos(2 w_j z0_j + w_j (z_j + zg_j)) where w_j = pi N_j / (l_j sqrt(lam)),

        E = (2^d / #shell) sum_{N >= 0} weight_N [prod (C2 -/+ C1) - prod C2]

    with the minus sign for Dirichlet; a zero coordinate halves the weight.
    """
    if spec.kind != "rectangle" or spec.bc not in ("D", "N"):
        raise ValueError("the product formula covers Dirichlet and Neumann boxes")
    w = _translates(target)
    shell = _shell_array(spec, mu)
    lam = shell_eigenvalue(spec, mu)
    positive = np.unique(np.abs(shell), axis=0)
    weights = np.prod(np.where(positive == 0, 0.5, 1.0), axis=1)
    freqs = positive * (math.pi / spec.lengths) / math.sqrt(lam)
    sign = -1.0 if spec.bc == "D" else 1.0
    points = np.asarray(points, dtype=float)
    z0 = np.asarray(z0, dtype=float)
    out = np.zeros(points.shape[:-1])
    lead = 2.0**spec.d / len(shell)
    for c, a in zip(w.centers, w.coeffs):
        full = np.ones(points.shape[:-1] + (len(positive),))
        inv = np.ones_like(full)
        for j in range(spec.d):
            zj = points[..., j][..., None]
            c2 = np.cos(freqs[:, j] * (zj - c[j]))
            c1 = np.cos(2 * freqs[:, j] * math.sqrt(lam) * z0[j] + freqs[:, j] * (zj + c[j]))
            full = full * (c2 + sign * c1)
            inv = inv * c2
        out = out + a * lead * ((full - inv) @ weights)
    return out


# ------------------------------------------------------------ base-point sweeps


def base_points(spec: BilliardSpec, nx: int, ny: int, margin: float) -> np.ndarray:
    """Cell-centred grid over the bounding box, shrunk by ``margin`` and clipped to the billiard.

    The margin is capped at 45% of the smaller half-width so low shells keep a
    nonempty grid; windows may then leave the billiard, where the trigonometric
    formulas still define the field.
    """
    if nx < 1 or ny < 1:
        raise ValueError("empty base grid")
    lo, hi = spec.bounding_box
    margin = min(margin, 0.45 * float(np.min(hi - lo)) / 2)
    xs = lo[0] + margin + (np.arange(nx) + 0.5) * (hi[0] - lo[0] - 2 * margin) / nx
    ys = lo[1] + margin + (np.arange(ny) + 0.5) * (hi[1] - lo[1] - 2 * margin) / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    if spec.kind != "rectangle":
        pts = pts[spec.contains(pts, tol=-1e-9)]
    return pts


def errors_over_grid(job: LocalizationJob, z0_grid) -> np.ndarray:
    window = WindowTarget.sample(job.target, job.window_R, job.h, job.k)
    out = np.empty(len(z0_grid))
    for i, z0 in enumerate(np.asarray(z0_grid, dtype=float)):
        out[i] = window_error(build_localized(job.at(z0)), z0, window)
    return out


@dataclass
class AdmissibleReport:
    fraction: float
    errors: np.ndarray
    epsilon: float

    @property
    def quartiles(self) -> list[float]:
        return [float(q) for q in np.quantile(self.errors, [0.25, 0.5, 0.75])]

    def to_json(self) -> dict:
        return {"fraction": self.fraction, "epsilon": self.epsilon, "quartiles": self.quartiles,
                "best_decile": float(np.quantile(self.errors, 0.1)), "count": int(len(self.errors))}


def admissible_fraction(job: LocalizationJob, z0_grid, epsilon: float, errors=None) -> AdmissibleReport:
    """Fraction of base points whose localization error is below epsilon."""
    z0_grid = np.asarray(z0_grid, dtype=float)
    if len(z0_grid) == 0:
        raise ValueError("empty base grid")
    errs = errors_over_grid(job, z0_grid) if errors is None else np.asarray(errors, dtype=float)
    return AdmissibleReport(float(np.mean(errs < epsilon)), errs, float(epsilon))


# ------------------------------------------------------------ fixed base points


def dirichlet_approx(alpha: Sequence[float], s_max: int) -> tuple[tuple[int, ...], int, float]:
    """Simultaneous approximation r/s of alpha with |alpha_i - r_i/s| < s^(-1-1/d).

    Among admissible denominators up to s_max the one minimizing
    max_i |s alpha_i - r_i| wins (smallest s on ties); the third value is s^(-1/d).
    """
    alpha = [float(a) for a in alpha]
    d = len(alpha)
    if not 1 <= d <= 3:
        raise ValueError("dimension must be 1, 2 or 3")
    if s_max < 2:
        raise ValueError("s_max must be at least 2")
    best = None
    for s in range(1, s_max + 1):
        r = [math.floor(a * s + 0.5) for a in alpha]
        if not all(abs(a - ri / s) < s ** (-1 - 1 / d) for a, ri in zip(alpha, r)):
            continue
        score = max(abs(a * s - ri) for a, ri in zip(alpha, r))
        if best is None or score < best[0] - 1e-15:
            best = (score, tuple(r), s)
    if best is None:
        raise ValueError("no admissible denominator")
    _, r, s = best
    g = math.gcd(s, *r)
    r, s = tuple(v // g for v in r), s // g
    return r, s, s ** (-1 / d)


def frame_units(spec: BilliardSpec) -> np.ndarray:
    """Lengths whose rational multiples give phase-commensurate frame coordinates."""
    if spec.kind == "rectangle":
        return spec.lengths
    if spec.kind == "iso_triangle":
        return np.ones(2)
    if spec.kind in ("equi_triangle", "hemi_triangle"):
        return np.array([1.5, math.sqrt(3) / 2])
    raise ValueError(f"fixed base points are not defined for {spec.kind}")


def _table_row_name(spec: BilliardSpec, table: str = "A") -> str:
    polygon = {"rectangle": "square", "iso_triangle": "iso", "equi_triangle": "equi", "hemi_triangle": "hemi"}[spec.kind]
    return f"table{table}:{polygon}:{spec.bc}"


def build_fixed_point(spec: BilliardSpec, target, mu: int, ratios: Sequence, *, check_tol: float = 1e-8) -> TrigExpansion:
    """Eigenfunction at eigenvalue s^2 lam localizing the target at a rational base point.

    ``ratios`` are rationals r_j/s_j giving the frame coordinates of z0 as
    multiples of ``frame_units(spec)``; s is their common denominator.  The
    returned expansion carries ``base_point``, ``s`` and ``projection_loss`` in
    its metadata.
    """
    if spec.bc not in ("D", "N"):
        raise ValueError("fixed-point localization needs Dirichlet or Neumann conditions")
    row = table_row(_table_row_name(spec))
    violation = check_symmetry(target, row)
    if violation > check_tol:
        raise SymmetryViolation(f"target violates {row} symmetry by {violation:.3g}")
    _check_shell(spec, mu)
    ratios = [Fraction(r) for r in ratios]
    s = math.lcm(*(r.denominator for r in ratios))
    wave = target.wave if isinstance(target, WaveSpec) else target
    herglotz = wave if isinstance(wave, HerglotzPolynomial) else translate_to_herglotz(wave)
    shell = _shell_array(spec, mu)
    scale = frequency_scale(spec)
    k = shell * scale
    lam = shell_eigenvalue(spec, mu)
    # rescaled plane wave exp(i (sigma k / sqrt(lam)) . z) at direction angle theta
    dirs = k * spec.frame_signs / math.sqrt(lam)
    theta = np.arctan2(dirs[:, 1], dirs[:, 0])
    frame_z0 = np.array([float(r) for r in ratios]) * frame_units(spec)
    phase = np.exp(-1j * s * (k @ frame_z0))
    amps = (2 * math.pi / len(shell)) * herglotz.density(theta) * phase
    big = shell * s
    group = point_group(spec)
    signs = group.signs(spec.bc)
    projected = np.zeros(len(shell), dtype=complex)
    index = {tuple(N): i for i, N in enumerate(shell)}
    for g, sg in zip(group.elements, signs):
        # amplitude at k moves to g^T k
        mapped = np.rint((k @ g) / scale).astype(np.int64)
        for i, M in enumerate(mapped):
            projected[index[tuple(M)]] += sg * amps[i] / len(group)
    loss = float(np.linalg.norm(projected - amps) / max(np.linalg.norm(amps), 1e-300))
    slots = _fold(spec, big, projected)
    slots = {key: v for key, v in slots.items() if np.any(np.abs(v) > 1e-15 * np.abs(projected).max(initial=1.0))}
    if not slots:
        raise ValueError("projection annihilated the target on this shell")
    e = expansion_from_slots(spec, mu * s * s, slots, lam * s * s)
    e.validate(tol=1e-10)
    e.meta = {"base_point": [float(v) for v in spec.from_frame(frame_z0)], "s": s, "projection_loss": loss}
    return e


def parity_residual(e: TrigExpansion, z0, sign: float, R: float = 3.0, count: int = 200, seed: int = 5) -> float:
    """max |u(z0 + w) - sign u(z0 - w)| over rescaled window samples, relative to max |u|."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(-R, R, (count, e.spec.d))
    a = rescaled_field(e, z0, w)
    b = rescaled_field(e, z0, -w)
    return float(np.max(np.abs(a - sign * b)) / max(float(np.max(np.abs(a))), 1e-300))


# ------------------------------------------------------------ lattice polygons


def _reflection_affine(point, slope) -> tuple[np.ndarray, np.ndarray]:
    S = reflection_matrix(float(slope))
    p = np.asarray(point, dtype=float)
    return S, p - S @ p


@dataclass
class CellDecomposition:
    """Cells A_j(P) of a polygon drawn on the reflection lattice of P.

    ``chains[j]`` lists reflection lines (point, slope) applied in order; the
    affine map is ``A_j(x) = linear[j] @ x + offset[j]``.
    """

    base: BilliardSpec
    chains: list
    name: str = "custom"
    linear: list = field(init=False)
    offset: list = field(init=False)

    def __post_init__(self) -> None:
        self.linear, self.offset = [], []
        for chain in self.chains:
            A, b = np.eye(2), np.zeros(2)
            for point, slope in chain:
                S, t = _reflection_affine(point, slope)
                A, b = S @ A, S @ b + t
            self.linear.append(A)
            self.offset.append(b)

    @classmethod
    def equilateral_parallelogram(cls, bc: str = "D") -> "CellDecomposition":
        """Four equilateral cells tiling the parallelogram (0,0), (1,0), (2,sqrt3), (1,sqrt3)."""
        r3 = math.sqrt(3)
        a2 = [((1.0, 0.0), -r3)]
        a3 = a2 + [((0.0, r3 / 2), 0.0)]
        a4 = a3 + [((2.0, 0.0), -r3)]
        return cls(BilliardSpec("equi_triangle", bc), [[], a2, a3, a4], "equilateral-parallelogram")

    @classmethod
    def single(cls, base: BilliardSpec) -> "CellDecomposition":
        return cls(base, [[]], "single")

    def __len__(self) -> int:
        return len(self.chains)

    def parity(self, j: int) -> float:
        return (-1.0) ** len(self.chains[j]) if self.base.bc == "D" else 1.0

    def apply(self, j: int, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.linear[j].T + self.offset[j]

    def inverse(self, j: int, z) -> np.ndarray:
        return (np.asarray(z, dtype=float) - self.offset[j]) @ self.linear[j]

    def cell_vertices(self, j: int) -> np.ndarray:
        return self.apply(j, self.base.vertices)

    def cell_index(self, z, tol: float = 1e-12) -> np.ndarray:
        """Lowest cell index containing each point, -1 outside."""
        z = np.asarray(z, dtype=float)
        out = np.full(z.shape[:-1], -1, dtype=np.int64)
        for j in range(len(self)):
            inside = self.base.contains(self.inverse(j, z), tol=tol)
            out = np.where((out < 0) & inside, j, out)
        return out

    def verify(self, tol: float = 1e-12) -> None:
        """Each map is an isometry onto its cell and cells have disjoint interiors."""
        area = 0.0
        for j in range(len(self)):
            A = self.linear[j]
            if not np.allclose(A.T @ A, np.eye(2), atol=tol):
                raise ValueError(f"cell {j} map is not orthogonal")
            back = self.inverse(j, self.cell_vertices(j))
            if np.max(np.abs(back - self.base.vertices)) > tol:
                raise ValueError(f"cell {j} round trip fails")
            v = self.cell_vertices(j)
            a, b = v[1] - v[0], v[2] - v[0]
            area += 0.5 * abs(a[0] * b[1] - a[1] * b[0])
        rng = np.random.default_rng(3)
        lo = np.min([self.cell_vertices(j).min(axis=0) for j in range(len(self))], axis=0)
        hi = np.max([self.cell_vertices(j).max(axis=0) for j in range(len(self))], axis=0)
        pts = lo + rng.random((4000, 2)) * (hi - lo)
        hits = sum(self.base.contains(self.inverse(j, pts), tol=-1e-9).astype(int) for j in range(len(self)))
        if np.any(hits > 1):
            raise ValueError("cells overlap")

    def to_json(self) -> dict:
        return {"name": self.name, "base": self.base.to_json(),
                "cells": [[{"point": list(p), "slope": "inf" if math.isinf(s) else s} for p, s in ch] for ch in self.chains]}

    @classmethod
    def from_json(cls, obj: dict) -> "CellDecomposition":
        base = BilliardSpec.from_json(obj.get("base", {"kind": "equi_triangle", "bc": "D"}))
        if obj.get("name") == "equilateral-parallelogram" and "cells" not in obj:
            return cls.equilateral_parallelogram(base.bc)
        chains = [[(tuple(r["point"]), float(r["slope"])) for r in ch] for ch in obj["cells"]]
        out = cls(base, chains, obj.get("name", "custom"))
        out.verify()
        return out


def unfold(decomp: CellDecomposition, z):
    """(cell index, local point in P, linear part, parity) for a point of the polygon."""
    z = np.asarray(z, dtype=float)
    j = int(decomp.cell_index(z))
    if j < 0:
        raise ValueError(f"point {z.tolist()} lies outside the decomposed polygon")
    return j, decomp.inverse(j, z), decomp.linear[j], decomp.parity(j)


def _composed_target(target, linear: np.ndarray, parity: float) -> BesselTranslateSum:
    """parity * phi(S v) as a translate sum in v."""
    w = _translates(target)
    return BesselTranslateSum(w.centers @ linear, parity * w.coeffs, w.d)


@dataclass
class PiecewiseField:
    """Global field z -> s_j u(A_j^{-1} z) on the cells of a decomposition."""

    decomp: CellDecomposition
    expansion: TrigExpansion

    @property
    def eigenvalue(self) -> float:
        return self.expansion.eigenvalue

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z, (0, 0))

    def derivative(self, z, alpha=(0, 0)) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        idx = self.decomp.cell_index(z, tol=1e-9)
        if np.any(idx < 0):
            raise ValueError("points outside the decomposed polygon")
        out = np.zeros(z.shape[:-1])
        order = sum(alpha)
        for j in range(len(self.decomp)):
            sel = idx == j
            if not np.any(sel):
                continue
            local = self.decomp.inverse(j, z[sel])
            s = self.decomp.parity(j)
            if order == 0:
                out[sel] = s * self.expansion(local)
            elif order == 1:
                grad = self.expansion.gradient(local) @ self.decomp.linear[j].T
                out[sel] = s * grad[:, 0 if alpha[0] else 1]
            else:
                raise NotImplementedError("cellwise derivatives up to first order")
        return out

    def cellwise(self, j: int, z) -> np.ndarray:
        """Formula of cell j evaluated at z, even outside the cell (for gluing checks)."""
        return self.decomp.parity(j) * self.expansion(self.decomp.inverse(j, z))

    def cellwise_gradient(self, j: int, z) -> np.ndarray:
        local = self.decomp.inverse(j, z)
        return self.decomp.parity(j) * (self.expansion.gradient(local) @ self.decomp.linear[j].T)


def interior_edges(decomp: CellDecomposition) -> list[tuple[int, int, np.ndarray, np.ndarray]]:
    """Shared edges (cell i, cell j, endpoint a, endpoint b)."""
    out = []
    for i in range(len(decomp)):
        vi = decomp.cell_vertices(i)
        for j in range(i + 1, len(decomp)):
            vj = decomp.cell_vertices(j)
            shared = [p for p in vi if np.min(np.linalg.norm(vj - p, axis=1)) < 1e-9]
            if len(shared) == 2:
                out.append((i, j, shared[0], shared[1]))
    return out


def gluing_residual(field_: PiecewiseField, samples: int = 100, seed: int = 9) -> tuple[float, float]:
    """(value jump, normal-derivative jump) across shared cell edges, relative to max |u|."""
    edges = interior_edges(field_.decomp)
    if not edges:
        return 0.0, 0.0
    rng = np.random.default_rng(seed)
    jump = djump = 0.0
    probe = field_.decomp.base.interior_samples(200)
    amp = max(float(np.max(np.abs(field_.expansion(probe)))), 1e-300)
    freq = math.sqrt(field_.eigenvalue)
    for n in range(samples):
        i, j, a, b = edges[n % len(edges)]
        p = a + rng.random() * (b - a)
        e = (b - a) / np.linalg.norm(b - a)
        normal = np.array([e[1], -e[0]])
        jump = max(jump, abs(float(field_.cellwise(i, p[None])[0] - field_.cellwise(j, p[None])[0])) / amp)
        gi = field_.cellwise_gradient(i, p[None])[0] @ normal
        gj = field_.cellwise_gradient(j, p[None])[0] @ normal
        djump = max(djump, abs(float(gi - gj)) / (amp * freq))
    return jump, djump


def build_on_lattice_polygon(decomp: CellDecomposition, target, mu, z0, k: int = 0,
                             roaming: bool = True) -> list[PiecewiseField]:
    """Glued fields localizing the target at a base point of the decomposed polygon.

    The roaming variant returns one field per cell, the j-th built for the
    target seen through cell j's map; the fixed-point variant (``roaming=False``)
    needs a target with the base polygon's full symmetry and returns one field.
    """
    z0 = np.asarray(z0, dtype=float)
    j, local, _, _ = unfold(decomp, z0)
    if not roaming:
        row = table_row(_table_row_name(decomp.base, "B"))
        violation = check_symmetry(target, row)
        if violation > 1e-8:
            raise SymmetryViolation(f"target violates {row} symmetry by {violation:.3g}")
        composed = _composed_target(target, decomp.linear[j], decomp.parity(j))
        e = build_localized(LocalizationJob(decomp.base, composed, mu, tuple(local)))
        return [PiecewiseField(decomp, e)]
    fields = []
    for i in range(len(decomp)):
        composed = _composed_target(target, decomp.linear[i], decomp.parity(i))
        e = build_localized(LocalizationJob(decomp.base, composed, mu, tuple(local)))
        fields.append(PiecewiseField(decomp, e))
    return fields


def piecewise_error(field_: PiecewiseField, z0, target, R: float = 4.0, h: float = MAX_STEP) -> float:
    """C^0 window error of a glued field at a base point of the decomposed polygon."""
    axis, mask = _window_axis(R, h)
    X, Y = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([X[mask], Y[mask]], axis=1)
    w = _translates(target)
    z = np.asarray(z0, dtype=float) + pts / math.sqrt(field_.eigenvalue)
    inside = field_.decomp.cell_index(z, tol=1e-9) >= 0
    if not np.all(inside):
        # the glued formula of the base point's cell extends the field past the polygon
        j = int(field_.decomp.cell_index(np.asarray(z0, dtype=float)))
        vals = np.where(inside, 0.0, field_.cellwise(j, z))
        vals[inside] = field_(z[inside])
    else:
        vals = field_(z)
    return float(np.max(np.abs(vals - w(pts))))


# ------------------------------------------------------------ job runner


@dataclass
class RunConfig:
    spec: BilliardSpec
    target: WaveSpec
    mus: list
    nx: int = 40
    ny: int = 40
    window_R: float = 4.0
    k: int = 0
    epsilon: float = 0.25
    h: float = MAX_STEP

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        grid = obj.get("z0_grid", {})
        return cls(BilliardSpec.from_json(obj["spec"]), WaveSpec.from_json(obj["target"]),
                   [int(m) for m in obj["mus"]], int(grid.get("nx", 40)), int(grid.get("ny", 40)),
                   float(obj.get("window_R", 4.0)), int(obj.get("k", 0)), float(obj.get("epsilon", 0.25)),
                   float(obj.get("h", MAX_STEP)))

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "target": self.target.to_json(), "mus": list(self.mus),
                "z0_grid": {"nx": self.nx, "ny": self.ny}, "window_R": self.window_R, "k": self.k,
                "epsilon": self.epsilon, "h": self.h}


def _chunk_errors(args) -> np.ndarray:
    config_json, mu, points = args
    config = RunConfig.from_json(config_json)
    job = LocalizationJob(config.spec, config.target, mu, None, config.window_R, config.k, config.h)
    return errors_over_grid(job, points)


def sweep_errors(config: RunConfig, mu, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Base points and localization errors for one shell; order does not depend on workers."""
    lam = shell_eigenvalue(config.spec, mu)
    pts = base_points(config.spec, config.nx, config.ny, config.window_R / math.sqrt(lam))
    if workers <= 1:
        return pts, _chunk_errors((config.to_json(), mu, pts))
    chunks = np.array_split(pts, workers * 4)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_chunk_errors, [(config.to_json(), mu, c) for c in chunks]))
    return pts, np.concatenate(parts)


def run_localization(config: RunConfig, workers: int = 1, timing: bool = False) -> dict:
    """Per-shell error quartiles and admissible fractions."""
    rows = []
    for mu in config.mus:
        start = time.perf_counter()
        _, errs = sweep_errors(config, mu, workers)
        report = AdmissibleReport(float(np.mean(errs < config.epsilon)), errs, config.epsilon).to_json()
        report["mu"] = mu
        if timing:
            report["seconds"] = round(time.perf_counter() - start, 3)
        rows.append(report)
    return {"config": config.to_json(), "shells": rows}


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=1)
