"""Exact eigenfunctions of integrable billiards and their residual checks.

Polygon and Robin-square eigenfunctions are finite trigonometric sums.  Each
term carries a nonnegative integer index ``N``, per-axis frequencies and
``2**d`` slot coefficients; slot bit ``j`` selects ``sin`` (set) or ``cos``
(clear) on axis ``j``.  Triangles are evaluated in the shifted frame
``zb1 = z1 - 1/2``, ``zb2 = sqrt(3)/2 - z2``.
"""

from __future__ import annotations

import json
import math
from itertools import product
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import sympy

from .lattice import QuadraticForm, enumerate_shell
from .waves import SymmetryGroup, bessel_j, bessel_j_derivative, bessel_plane_wave, ladder

SQRT3 = math.sqrt(3.0)
KINDS = ("rectangle", "iso_triangle", "equi_triangle", "hemi_triangle", "disk", "robin_square")
_TRIANGLE_VERTICES = {
    "iso_triangle": ((0.0, 0.0), (1.0, 0.0), (1.0, 1.0)),
    "equi_triangle": ((0.0, 0.0), (1.0, 0.0), (0.5, SQRT3 / 2)),
    "hemi_triangle": ((0.5, 0.0), (1.0, 0.0), (0.5, SQRT3 / 2)),
}


class InadmissibleIndex(ValueError):
    pass


# ------------------------------------------------------------------ geometry


def _parse_side_square(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int,)):
        return Fraction(v)
    expr = sympy.sympify(str(v))
    if expr.is_rational:
        return Fraction(str(expr))
    if not expr.is_positive:
        raise ValueError(f"side square {v!r} must be positive")
    return str(expr)


@dataclass(frozen=True)
class BilliardSpec:
    """Billiard geometry plus boundary condition.

    ``sides`` are ``l_1..l_{d-1}`` of the box ``prod (0, l_j) x (0, 1)``;
    ``side_squares`` certifies each ``l_j**2`` as an exact rational or a
    symbolic irrational such as ``"sqrt(2)"``.
    """

    kind: str
    bc: str
    d: int = 2
    side_squares: tuple = ()
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown billiard kind {self.kind!r}")
        allowed = {"rectangle": "DNP", "disk": "DN", "robin_square": "R"}.get(self.kind, "DN")
        if self.bc not in allowed:
            raise ValueError(f"boundary condition {self.bc!r} not available for {self.kind}")
        if self.kind == "rectangle":
            squares = tuple(_parse_side_square(s) for s in (self.side_squares or (1,) * (self.d - 1)))
            if len(squares) != self.d - 1:
                raise ValueError("a d-dimensional rectangle needs d-1 side lengths")
            object.__setattr__(self, "side_squares", squares)
            if any(float(sympy.sympify(str(s))) <= 0 for s in squares):
                raise ValueError("sides must be positive")
        elif self.kind != "disk" and self.d != 2:
            raise ValueError("triangles and the Robin square are planar")
        if self.kind == "robin_square" and self.sigma < 0:
            raise ValueError("Robin parameter must be nonnegative")
        if self.kind == "disk" and self.d not in (2, 3):
            raise ValueError("disk modes are implemented for d = 2 and d = 3")

    # convenient constructors
    @classmethod
    def square(cls, bc: str = "D") -> "BilliardSpec":
        return cls("rectangle", bc, 2, (1,))

    @classmethod
    def rectangle(cls, side_squares: Sequence, bc: str = "D") -> "BilliardSpec":
        return cls("rectangle", bc, len(side_squares) + 1, tuple(side_squares))

    @property
    def is_polygon(self) -> bool:
        return self.kind in ("rectangle", "iso_triangle", "equi_triangle", "hemi_triangle")

    @property
    def is_rational(self) -> bool:
        return all(isinstance(s, Fraction) for s in self.side_squares)

    @cached_property
    def side_square_values(self) -> tuple[float, ...]:
        return tuple(float(sympy.N(sympy.sympify(str(s)), 30)) for s in self.side_squares)

    @property
    def sides(self) -> tuple[float, ...]:
        return tuple(math.sqrt(v) for v in self.side_square_values)

    @property
    def lengths(self) -> np.ndarray:
        """Full box side lengths including the unit last side."""
        return np.array((*self.sides, 1.0))

    # shifted frame for triangles
    @property
    def frame_origin(self) -> np.ndarray:
        if self.kind in ("equi_triangle", "hemi_triangle"):
            return np.array([0.5, SQRT3 / 2])
        return np.zeros(self.d)

    @property
    def frame_signs(self) -> np.ndarray:
        if self.kind in ("equi_triangle", "hemi_triangle"):
            return np.array([1.0, -1.0])
        return np.ones(self.d)

    def to_frame(self, z) -> np.ndarray:
        return (np.asarray(z, dtype=float) - self.frame_origin) * self.frame_signs

    def from_frame(self, zb) -> np.ndarray:
        return np.asarray(zb, dtype=float) * self.frame_signs + self.frame_origin

    @property
    def vertices(self) -> np.ndarray:
        if self.kind in _TRIANGLE_VERTICES:
            return np.array(_TRIANGLE_VERTICES[self.kind])
        if self.kind in ("rectangle", "robin_square") and self.d == 2:
            a = self.lengths[0] if self.kind == "rectangle" else 1.0
            return np.array([(0.0, 0.0), (a, 0.0), (a, 1.0), (0.0, 1.0)])
        raise ValueError("vertices are defined for planar polygons")

    def contains(self, z, tol: float = 0.0) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.kind == "disk":
            return np.linalg.norm(z, axis=-1) <= 1.0 + tol
        if self.kind == "rectangle":
            return np.all((z >= -tol) & (z <= self.lengths + tol), axis=-1)
        if self.kind == "robin_square":
            return np.all((z >= -tol) & (z <= 1.0 + tol), axis=-1)
        v = self.vertices
        inside = np.ones(z.shape[:-1], dtype=bool)
        for i in range(len(v)):
            a, b = v[i], v[(i + 1) % len(v)]
            cross = (b[0] - a[0]) * (z[..., 1] - a[1]) - (b[1] - a[1]) * (z[..., 0] - a[0])
            inside &= cross >= -tol
        return inside

    def boundary_samples(self, count: int = 200, seed: int = 7) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic boundary points with outward unit normals (all sides covered)."""
        rng = np.random.default_rng(seed)
        if self.kind == "disk":
            v = rng.normal(size=(count, self.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return v, v.copy()
        if self.d == 2:
            verts = self.vertices
            sides = len(verts)
            pts, normals = [], []
            for i in range(count):
                a, b = verts[i % sides], verts[(i + 1) % sides]
                t = rng.random()
                pts.append(a + t * (b - a))
                e = b - a
                normals.append(np.array([e[1], -e[0]]) / np.hypot(*e))
            return np.array(pts), np.array(normals)
        L = self.lengths
        pts = rng.random((count, self.d)) * L
        normals = np.zeros_like(pts)
        for i in range(count):
            j = i % self.d
            hi = (i // self.d) % 2
            pts[i, j] = L[j] * hi
            normals[i, j] = 1.0 if hi else -1.0
        return pts, normals

    def interior_samples(self, count: int = 100, seed: int = 11) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.kind == "disk":
            v = rng.normal(size=(count, self.d))
            v /= np.linalg.norm(v, axis=1, keepdims=True)
            return v * rng.random((count, 1)) ** (1 / self.d) * 0.98
        lo, hi = self.bounding_box
        out = []
        while len(out) < count:
            p = lo + rng.random(self.d) * (hi - lo)
            if self.contains(p, tol=-1e-3):
                out.append(p)
        return np.array(out)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "disk":
            return -np.ones(self.d), np.ones(self.d)
        if self.kind == "rectangle":
            return np.zeros(self.d), self.lengths
        v = self.vertices
        return v.min(axis=0), v.max(axis=0)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "bc": self.bc, "d": self.d}
        if self.kind == "rectangle":
            out["side_squares"] = [str(s) for s in self.side_squares]
        if self.kind == "robin_square":
            out["sigma"] = self.sigma
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "BilliardSpec":
        kind = obj.get("kind")
        if kind == "square":
            return cls.square(obj.get("bc", "D"))
        return cls(kind, obj.get("bc", "D"), int(obj.get("d", 2)),
                   tuple(obj.get("side_squares", ())), float(obj.get("sigma", 0.0)))


# ------------------------------------------------------------------ lattice data


def quadratic_form(spec: BilliardSpec) -> QuadraticForm:
    if spec.kind == "rectangle":
        if not spec.is_rational:
            raise ValueError("irrational rectangles have no integral form")
        return QuadraticForm.from_sides((*spec.side_squares, Fraction(1)))
    if spec.kind == "iso_triangle":
        return QuadraticForm((1, 1))
    if spec.kind in ("equi_triangle", "hemi_triangle"):
        return QuadraticForm((1, 3))
    raise ValueError(f"{spec.kind} has no lattice form")


def shell_value(spec: BilliardSpec, mu: int) -> int:
    """Value of the integral form on the shell labelled by mu."""
    return 4 * mu if spec.kind in ("equi_triangle", "hemi_triangle") else mu


def frequency_scale(spec: BilliardSpec) -> np.ndarray:
    """Per-axis factor turning an integer index into a frame frequency."""
    if spec.kind == "rectangle":
        base = math.pi / spec.lengths
        return 2 * base if spec.bc == "P" else base
    if spec.kind == "iso_triangle":
        return np.array([math.pi, math.pi])
    if spec.kind in ("equi_triangle", "hemi_triangle"):
        return np.array([2 * math.pi / 3, 2 * math.pi * SQRT3 / 3])
    raise ValueError(f"{spec.kind} has no lattice frequencies")


def point_group(spec: BilliardSpec) -> SymmetryGroup:
    """Linear part of the reflection group at the frame origin vertex."""
    if spec.kind == "rectangle":
        if spec.bc == "P":
            return SymmetryGroup.from_generators([])
        return SymmetryGroup.coordinate_flips(spec.d)
    if spec.kind == "iso_triangle":
        return SymmetryGroup.from_slopes((0.0, 1.0))
    if spec.kind == "equi_triangle":
        return SymmetryGroup.from_slopes((SQRT3, -SQRT3))
    if spec.kind == "hemi_triangle":
        return SymmetryGroup.from_slopes((math.inf, SQRT3))
    raise ValueError(f"{spec.kind} has no point group")


def admissible_index(spec: BilliardSpec, N: Sequence[int]) -> bool:
    N = tuple(int(v) for v in N)
    if len(N) != spec.d or any(v < 0 for v in N):
        return False
    if spec.kind in ("equi_triangle", "hemi_triangle"):
        m, n = N
        if (m - n) % 2:
            return False
        if spec.kind == "equi_triangle":
            return n >= 1 if spec.bc == "D" else True
        return (m >= 1 and n >= 1) if spec.bc == "D" else True
    if spec.bc == "D":
        return all(v >= 1 for v in N)
    return True


def allowed_slots(spec: BilliardSpec) -> tuple[int, ...]:
    """Slots (bit j = sin on axis j) that the product basis uses."""
    d = spec.d
    all_sin = (1 << d) - 1
    if spec.kind in ("rectangle", "iso_triangle", "hemi_triangle"):
        if spec.bc == "P":
            return tuple(range(1 << d))
        return (all_sin,) if spec.bc == "D" else (0,)
    if spec.kind == "equi_triangle":
        # z-bar-2 factor is sin (D) or cos (N); the z-bar-1 factor carries the (c_s, c_a) pair
        return (2, 3) if spec.bc == "D" else (0, 1)
    if spec.kind == "robin_square":
        return (0, 1, 2, 3)
    raise ValueError(f"{spec.kind} has no slot structure")


def eigenvalue_of(spec: BilliardSpec, N: Sequence[int]) -> float:
    """Eigenvalue of the basis index N; raises on inadmissible indices."""
    if spec.kind == "disk":
        l, n = N[:2]
        k, _ = disk_mode(spec, int(l), int(n))
        return k * k
    if spec.kind == "robin_square":
        ks = robin_frequencies(spec.sigma, max(N))
        return float(ks[N[0]] ** 2 + ks[N[1]] ** 2)
    if not admissible_index(spec, N):
        raise InadmissibleIndex(f"index {tuple(N)} not admissible for {spec.kind}/{spec.bc}")
    w = frequency_scale(spec) * np.asarray(N, dtype=float)
    if spec.kind == "rectangle" and spec.is_rational:
        form = quadratic_form(spec)
        q = Fraction(form.value_int(N), form.scale)
        factor = 4 if spec.bc == "P" else 1
        return float(factor * math.pi**2 * q)
    return float(np.sum(w * w))


def shell_label(spec: BilliardSpec, N: Sequence[int]) -> int:
    """Exact integer label mu of the eigenvalue of N (rational polygons)."""
    form = quadratic_form(spec)
    v = form.value_int(N)
    return v // 4 if spec.kind in ("equi_triangle", "hemi_triangle") else v


def signed_shell(spec: BilliardSpec, mu) -> list[tuple[int, ...]]:
    """All signed integer vectors of the eigenvalue labelled by mu.

    For an irrational rectangle, ``mu`` is a nonnegative index tuple and the
    shell is its sign orbit (one eigenvalue per orbit).
    """
    if spec.kind == "rectangle" and not spec.is_rational:
        base = tuple(abs(int(v)) for v in mu)
        return sorted({tuple(s * v for s, v in zip(signs, base)) for signs in product((1, -1), repeat=spec.d)})
    return list(enumerate_shell(quadratic_form(spec), shell_value(spec, int(mu))).points)


def shell_eigenvalue(spec: BilliardSpec, mu) -> float:
    if spec.kind == "rectangle" and not spec.is_rational:
        w = frequency_scale(spec) * np.abs(np.asarray(mu, dtype=float))
        return float(np.sum(w * w))
    if spec.kind == "rectangle":
        factor = 4 if spec.bc == "P" else 1
        return float(factor * math.pi**2 * Fraction(int(mu), quadratic_form(spec).scale))
    if spec.kind == "iso_triangle":
        return math.pi**2 * int(mu)
    if spec.kind in ("equi_triangle", "hemi_triangle"):
        return 16 * math.pi**2 * int(mu) / 9
    raise ValueError(f"{spec.kind} has no lattice shells")


# ------------------------------------------------------------------ basis evaluation


def _axis_factor(kind_sin: bool, omega: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """d^order/dx^order of cos(omega x) or sin(omega x), exact quarter-turn shifts."""
    ang = omega * x
    shift = (order - (1 if kind_sin else 0)) % 4  # cos(t + shift*pi/2)
    base = (np.cos(ang), -np.sin(ang), -np.cos(ang), np.sin(ang))[shift]
    return base * omega**order if order else base


def basis_eval(spec: BilliardSpec, N: Sequence[int], z):
    """Product basis function u_N(z); the equilateral triangle returns (symmetric, antisymmetric)."""
    if not admissible_index(spec, N):
        raise InadmissibleIndex(f"index {tuple(N)} not admissible for {spec.kind}/{spec.bc}")
    zb = spec.to_frame(z)
    w = frequency_scale(spec) * np.asarray(N, dtype=float)

    def prod(slot: int):
        out = 1.0
        for j in range(spec.d):
            out = out * _axis_factor(bool(slot >> j & 1), w[j], zb[..., j], 0)
        return out

    slots = allowed_slots(spec)
    if spec.kind == "equi_triangle":
        return prod(slots[0]), prod(slots[1])
    if spec.bc == "P":
        raise ValueError("periodic boxes have several slots per index; use an expansion")
    return prod(slots[0])


@dataclass
class TrigExpansion:
    """Finite trigonometric eigenfunction: sum over terms and slots of products of cos/sin."""

    spec: BilliardSpec
    eigenvalue: float
    mu: object
    indices: np.ndarray
    coeffs: np.ndarray
    omegas: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.indices = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.spec.d)
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(len(self.indices), 1 << self.spec.d)
        self.omegas = np.asarray(self.omegas, dtype=float).reshape(len(self.indices), self.spec.d)

    # structural checks
    def validate(self, tol: float = 1e-12) -> None:
        spec = self.spec
        if spec.kind == "robin_square":
            return
        for N in self.indices:
            if not admissible_index(spec, N):
                raise InadmissibleIndex(f"term {tuple(N)} not admissible")
            if self.mu is not None and spec.is_polygon and (spec.kind != "rectangle" or spec.is_rational):
                if shell_label(spec, N) != self.mu:
                    raise ValueError(f"term {tuple(int(v) for v in N)} is off the shell mu={self.mu}")
        bad = [s for s in range(1 << spec.d) if s not in allowed_slots(spec)]
        if bad and np.max(np.abs(self.coeffs[:, bad]), initial=0.0) > tol * max(1.0, np.abs(self.coeffs).max(initial=0)):
            raise ValueError("coefficients populate slots outside the boundary-condition basis")

    @property
    def frequency(self) -> float:
        return math.sqrt(self.eigenvalue)

    def derivative(self, z, alpha: Sequence[int] | None = None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = self.spec.d
        alpha = tuple(alpha) if alpha is not None else (0,) * d
        zb = self.spec.to_frame(z).reshape(-1, d)
        sign = float(np.prod(self.spec.frame_signs ** np.asarray(alpha)))
        factors = []
        for j in range(d):
            xj = zb[:, j][None, :]
            wj = self.omegas[:, j][:, None]
            factors.append((_axis_factor(False, wj, xj, alpha[j]), _axis_factor(True, wj, xj, alpha[j])))
        total = np.zeros(zb.shape[0])
        for s in range(1 << d):
            c = self.coeffs[:, s]
            if not np.any(c):
                continue
            prod = factors[0][s & 1]
            for j in range(1, d):
                prod = prod * factors[j][s >> j & 1]
            total += c @ prod
        return (sign * total).reshape(z.shape[:-1])

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z)

    def laplacian(self, z) -> np.ndarray:
        d = self.spec.d
        return sum(self.derivative(z, tuple(2 if i == j else 0 for i in range(d))) for j in range(d))

    def gradient(self, z) -> np.ndarray:
        d = self.spec.d
        return np.stack([self.derivative(z, tuple(1 if i == j else 0 for i in range(d))) for j in range(d)], axis=-1)

    def eval_grid(self, xs, ys, alpha: tuple[int, int] = (0, 0)) -> np.ndarray:
        """Values on the tensor grid xs x ys via per-axis factor matrices (planar only)."""
        if self.spec.d != 2:
            raise ValueError("tensor-grid evaluation is planar")
        o, sg = self.spec.frame_origin, self.spec.frame_signs
        xb = (np.asarray(xs, dtype=float) - o[0]) * sg[0]
        yb = (np.asarray(ys, dtype=float) - o[1]) * sg[1]
        A = [_axis_factor(b, self.omegas[:, 0][None, :], xb[:, None], alpha[0]) for b in (False, True)]
        B = [_axis_factor(b, self.omegas[:, 1][None, :], yb[:, None], alpha[1]) for b in (False, True)]
        out = np.zeros((len(xb), len(yb)))
        for s in range(4):
            c = self.coeffs[:, s]
            if np.any(c):
                out += (A[s & 1] * c) @ B[s >> 1].T
        return out * float(sg[0] ** alpha[0] * sg[1] ** alpha[1])

    def scaled(self, factor: float) -> "TrigExpansion":
        return TrigExpansion(self.spec, self.eigenvalue, self.mu, self.indices.copy(),
                             self.coeffs * factor, self.omegas.copy())

    def __add__(self, other: "TrigExpansion") -> "TrigExpansion":
        if other.spec != self.spec or abs(other.eigenvalue - self.eigenvalue) > 1e-9 * self.eigenvalue:
            raise ValueError("can only add expansions of one eigenspace")
        table: dict[tuple, int] = {}
        idx, co, om = [], [], []
        for e in (self, other):
            for N, c, w in zip(e.indices, e.coeffs, e.omegas):
                key = tuple(N)
                if key in table:
                    co[table[key]] = co[table[key]] + c
                else:
                    table[key] = len(idx)
                    idx.append(N)
                    co.append(c.copy())
                    om.append(w)
        return TrigExpansion(self.spec, self.eigenvalue, self.mu, np.array(idx), np.array(co), np.array(om))

    def terms(self):
        """Nonzero (index, slot, coefficient) triples in deterministic order."""
        for N, row in zip(self.indices, self.coeffs):
            for s, c in enumerate(row):
                if c != 0:
                    yield tuple(int(v) for v in N), s, float(c)

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "eigenvalue": self.eigenvalue,
                "mu": self.mu if isinstance(self.mu, (int, type(None))) else list(self.mu),
                "terms": [{"N": list(N), "slot": s, "coeff": c} for N, s, c in self.terms()]}


def expansion_from_slots(spec: BilliardSpec, mu, slots: dict[tuple[int, ...], np.ndarray],
                         eigenvalue: float | None = None) -> TrigExpansion:
    keys = sorted(slots)
    scale = frequency_scale(spec)
    idx = np.array(keys, dtype=np.int64).reshape(-1, spec.d)
    omegas = idx * scale
    coeffs = np.array([slots[k] for k in keys]).reshape(len(keys), 1 << spec.d)
    lam = eigenvalue if eigenvalue is not None else shell_eigenvalue(spec, mu)
    return TrigExpansion(spec, lam, mu, idx, coeffs, omegas)


def _orbit_factor(spec: BilliardSpec) -> int:
    """Group order over the number of coordinate flips it contains."""
    group = point_group(spec)
    flips = sum(1 for g in group.elements if np.allclose(g, np.diag(np.diag(g))))
    return len(group) // flips


def expansion(spec: BilliardSpec, mu, coefficients: dict) -> TrigExpansion:
    """Build an expansion from ``{N: c}`` (single-slot bases) or ``{N: (c_s, c_a)}`` (equilateral).

    Triangle coefficients are completed over the reflection group, so a single
    entry ``(m, n)`` on the isosceles triangle yields ``u_mn -/+ u_nm``.
    """
    slots = allowed_slots(spec)
    table = {}
    for N, c in coefficients.items():
        N = tuple(int(v) for v in N)
        row = np.zeros(1 << spec.d)
        vals = np.atleast_1d(np.asarray(c, dtype=float))
        if len(vals) > len(slots):
            raise ValueError("too many coefficients for this basis")
        for s, v in zip(slots, vals):
            row[s] = v
        table[N] = row
    e = expansion_from_slots(spec, mu, table)
    if spec.kind in ("iso_triangle", "equi_triangle", "hemi_triangle"):
        e = project_to_eigenspace(e).scaled(_orbit_factor(spec))
    e.validate()
    return e


def eval_expansion(e, z) -> float:
    """Single-point evaluation with compensated summation over terms."""
    z = np.asarray(z, dtype=float)
    if not isinstance(e, TrigExpansion):
        return float(e(z[None, :])[0])
    zb = e.spec.to_frame(z)
    parts = []
    for N, row, w in zip(e.indices, e.coeffs, e.omegas):
        for s, c in enumerate(row):
            if c == 0:
                continue
            p = c
            for j in range(e.spec.d):
                p *= math.sin(w[j] * zb[j]) if s >> j & 1 else math.cos(w[j] * zb[j])
            parts.append(p)
    return math.fsum(parts)


# ------------------------------------------------------------------ plane waves, folding, projection


def fold_plane_waves(spec: BilliardSpec, amplitudes: dict[tuple[int, ...], complex]) -> dict[tuple[int, ...], np.ndarray]:
    """Slot coefficients of Re sum_N a_N exp(i k_N . zb) with k_N = scale * N (signed N)."""
    d = spec.d
    out: dict[tuple[int, ...], np.ndarray] = {}
    for N, a in amplitudes.items():
        key = tuple(abs(int(v)) for v in N)
        row = out.setdefault(key, np.zeros(1 << d))
        for s in range(1 << d):
            factor = complex(1.0)
            skip = False
            for j in range(d):
                if s >> j & 1:
                    if N[j] == 0:
                        skip = True
                        break
                    factor *= 1j * (1 if N[j] > 0 else -1)
            if not skip:
                row[s] += (a * factor).real
    return out


def unfold_slots(e: TrigExpansion) -> dict[tuple[int, ...], complex]:
    """Inverse of fold_plane_waves: the expansion as Re of a plane-wave sum (with conjugate pairs)."""
    d = e.spec.d
    amps: dict[tuple[int, ...], complex] = {}
    for N, row in zip(e.indices, e.coeffs):
        for s, c in enumerate(row):
            if c == 0:
                continue
            # product over axes of cos = (e+ + e-)/2, sin = (e+ - e-)/(2i)
            terms = [((), complex(c))]
            for j in range(d):
                n = int(N[j])
                nxt = []
                for signs, amp in terms:
                    if n == 0:
                        if s >> j & 1:
                            continue
                        nxt.append((signs + (0,), amp))
                        continue
                    if s >> j & 1:
                        nxt.append((signs + (n,), amp / 2j))
                        nxt.append((signs + (-n,), -amp / 2j))
                    else:
                        nxt.append((signs + (n,), amp / 2))
                        nxt.append((signs + (-n,), amp / 2))
                terms = nxt
            for key, amp in terms:
                amps[key] = amps.get(key, 0) + amp
    # the real function equals sum a e^{i k z}; Re of it is the same since amps are Hermitian
    return amps


def _group_index_maps(spec: BilliardSpec):
    """For each group element, the map on signed integer indices induced by k -> g^T k."""
    group = point_group(spec)
    scale = frequency_scale(spec)
    maps = []
    for g in group.elements:
        def f(N, g=g):
            k = g.T @ (scale * np.asarray(N, dtype=float))
            M = k / scale
            R = np.round(M)
            if np.max(np.abs(M - R)) > 1e-8:
                raise ValueError("point group does not preserve the frequency lattice")
            return tuple(int(v) for v in R)
        maps.append(f)
    return group, maps


def project_plane_waves(spec: BilliardSpec, amplitudes: dict, bc: str | None = None) -> dict:
    """Signed point-group average (1/|G|) sum_g s_g f(g zb) in plane-wave form."""
    bc = bc or spec.bc
    group, maps = _group_index_maps(spec)
    signs = group.signs(bc if bc in ("D", "N") else "N")
    out: dict = {}
    for f, s in zip(maps, signs):
        for N, a in amplitudes.items():
            M = f(N)
            out[M] = out.get(M, 0) + s * a / len(group)
    return out


def project_to_eigenspace(e: TrigExpansion) -> TrigExpansion:
    if e.spec.bc == "P":
        return e
    amps = project_plane_waves(e.spec, unfold_slots(e))
    slots = fold_plane_waves(e.spec, amps)
    slots = {k: v for k, v in slots.items() if np.any(np.abs(v) > 1e-15)}
    return expansion_from_slots(e.spec, e.mu, slots, e.eigenvalue)


def eigenspace_basis(spec: BilliardSpec, mu) -> list:
    """Orthonormal coefficient basis of the whole eigenspace labelled by mu."""
    if spec.kind == "disk":
        l, n = mu
        ms = [0] if l == 0 else ([l, -l] if spec.d == 2 else list(range(-l, l + 1)))
        return [disk_expansion(spec, l, n, {m: 1.0}) for m in ms]
    if spec.kind == "robin_square":
        return robin_eigenspace(spec.sigma, *mu)
    shell = signed_shell(spec, mu)
    lam = shell_eigenvalue(spec, mu)
    keys = sorted({tuple(abs(v) for v in N) for N in shell})
    rows = []
    for N in shell:
        for part in (1.0, -1j):
            amps = project_plane_waves(spec, {N: part})
            slots = fold_plane_waves(spec, amps)
            rows.append(np.concatenate([slots.get(k, np.zeros(1 << spec.d)) for k in keys]))
    mat = np.array(rows)
    if not np.any(mat):
        return []
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * s[0]))
    basis = []
    for r in range(rank):
        vec = vt[r].reshape(len(keys), 1 << spec.d)
        vec = np.where(np.abs(vec) < 1e-14, 0.0, vec)
        basis.append(expansion_from_slots(spec, mu, {k: v for k, v in zip(keys, vec) if np.any(v)}, lam))
    return basis


# ------------------------------------------------------------------ Robin square


def _robin_equation(k: float, sigma: float) -> float:
    return (k * k - sigma * sigma) * math.sin(k) - 2 * sigma * k * math.cos(k)


def robin_residual(k: float, sigma: float) -> float:
    """Defining equation divided by k**2 + sigma**2 (a unit-amplitude sinusoid in k)."""
    scale = k * k + sigma * sigma
    return _robin_equation(k, sigma) / scale if scale else 0.0


def robin_frequencies(sigma: float, n_max: int) -> np.ndarray:
    """k_n in (n pi, (n+1) pi) solving (k^2 - s^2) sin k = 2 s k cos k; k_0 = 0 when s = 0."""
    if sigma < 0:
        raise ValueError("Robin parameter must be nonnegative")
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        if sigma == 0:
            out[n] = n * math.pi
            continue
        if n == 0:
            # divide out the trivial root at k = 0
            f = lambda k: (k * k - sigma * sigma) * (math.sin(k) / k if k else 1.0) - 2 * sigma * math.cos(k)
        else:
            f = lambda k: robin_residual(k, sigma)
        a, b = n * math.pi, (n + 1) * math.pi
        fa = f(a) if n else -sigma * sigma - 2 * sigma
        for _ in range(200):
            m = 0.5 * (a + b)
            fm = f(m)
            if fm == 0 or b - a < 1e-15 * b:
                break
            if (fm < 0) == (fa < 0):
                a, fa = m, fm
            else:
                b = m
        k = 0.5 * (a + b)
        for _ in range(3):
            # Newton on the normalized sinusoid form sin(k - psi(k))
            h = 1e-7 * max(1.0, k)
            der = (robin_residual(k + h, sigma) - robin_residual(k - h, sigma)) / (2 * h)
            step = robin_residual(k, sigma) / der if der else 0.0
            if n * math.pi < k - step < (n + 1) * math.pi:
                k -= step
        out[n] = k
    return out


def robin_eigenspace(sigma: float, m: int, n: int) -> list[TrigExpansion]:
    """Basis {u_m (x) u_n, u_n (x) u_m} with u_k(x) = k cos(kx) + sigma sin(kx)."""
    spec = BilliardSpec("robin_square", "R", 2, sigma=sigma)
    ks = robin_frequencies(sigma, max(m, n))
    lam = float(ks[m] ** 2 + ks[n] ** 2)

    def factor(i):
        k = ks[i]
        return (1.0 if (k == 0 and sigma == 0) else k), sigma

    def term(a, b):
        ca, sa = factor(a)
        cb, sb = factor(b)
        row = np.array([ca * cb, sa * cb, ca * sb, sa * sb])
        return TrigExpansion(spec, lam, (a, b), np.array([[a, b]]), row[None, :], np.array([[ks[a], ks[b]]]))

    return [term(m, n)] if m == n else [term(m, n), term(n, m)]


def robin_eigenfunction(sigma: float, m: int, n: int, weights: Sequence[float] = (1.0, 0.0)) -> TrigExpansion:
    basis = robin_eigenspace(sigma, m, n)
    out = basis[0].scaled(weights[0])
    if len(basis) > 1 and weights[1]:
        second = basis[1].scaled(weights[1])
        out = TrigExpansion(out.spec, out.eigenvalue, (m, n), np.vstack([out.indices, second.indices]),
                            np.vstack([out.coeffs, second.coeffs]), np.vstack([out.omegas, second.omegas]))
    return out


# ------------------------------------------------------------------ disk


def _radial_order(d: int, l: int) -> float:
    return d / 2 + l - 1


def _disk_target(d: int, l: int, bc: str):
    nu = _radial_order(d, l)
    if bc == "D":
        f = lambda r: np.asarray(bessel_j(nu, r))
        df = lambda r: np.asarray(bessel_j_derivative(nu, r, 1))
    else:
        s = 1 - d / 2
        # zeros of d/dr (r^s J_nu(r)) = r^(s-1) [s J_nu + r J_nu']
        f = lambda r: s * np.asarray(bessel_j(nu, r)) + r * np.asarray(bessel_j_derivative(nu, r, 1))
        df = lambda r: (s + 1) * np.asarray(bessel_j_derivative(nu, r, 1)) + r * np.asarray(bessel_j_derivative(nu, r, 2))
    return f, df


def _nth_root(f, df, n: int, upper: float) -> float:
    grid = np.arange(0.05, upper, 0.05)
    scalar = lambda g, x: float(np.asarray(g(x), dtype=float).reshape(-1)[0])
    vals = np.asarray(f(grid), dtype=float).reshape(-1)
    hits = np.flatnonzero((vals[:-1] == 0) | (vals[:-1] * vals[1:] < 0))
    if len(hits) < n:
        raise RuntimeError(f"root bracketing failed on (0, {upper})")
    i = hits[n - 1]
    a, b = grid[i], grid[i + 1]
    fa = vals[i]
    for _ in range(60):
        m = 0.5 * (a + b)
        fm = scalar(f, m)
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    x = 0.5 * (a + b)
    for _ in range(4):
        slope = scalar(df, x)
        if slope == 0:
            break
        step = scalar(f, x) / slope
        if abs(step) > (b - a) + 1e-9:
            break
        x -= step
    return x


def disk_mode(spec: BilliardSpec, l: int, n: int, bc: str | None = None):
    """Frequency (Bessel-type zero) and radial profile rho^(1-d/2) J_{d/2+l-1}(k rho)."""
    bc = bc or spec.bc
    d = spec.d
    if l < 0 or n < 0 or (n == 0 and not (bc == "N" and l == 0)):
        raise InadmissibleIndex("need l >= 0 and n >= 1 (n = 0 only for the Neumann constant mode)")
    nu = _radial_order(d, l)
    if n == 0:
        k = 0.0
    else:
        f, df = _disk_target(d, l, bc)
        k = _nth_root(f, df, n, (n + nu / 2 + 3) * math.pi + 5)
    s = 1 - d / 2

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        if k == 0:
            return np.ones_like(rho)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = rho**s * bessel_j(nu, k * rho)
        if s == 0:
            return val
        lim = (k / 2) ** nu / math.gamma(nu + 1) if l == 0 else 0.0
        return np.where(rho > 0, val, lim)

    return k, profile


def _real_sph_harm(l: int, m: int, polar, azim) -> np.ndarray:
    from scipy.special import sph_harm_y

    if m == 0:
        return sph_harm_y(l, 0, polar, azim).real
    y = sph_harm_y(l, abs(m), polar, azim)
    return math.sqrt(2) * (-1) ** m * (y.real if m > 0 else y.imag)


@dataclass
class DiskExpansion:
    """rho^(1-d/2) J_{d/2+l-1}(k rho) times a combination of degree-l harmonics."""

    spec: BilliardSpec
    l: int
    n: int
    k: float
    harmonics: dict = field(default_factory=dict)

    @property
    def eigenvalue(self) -> float:
        return self.k * self.k

    @property
    def mu(self):
        return (self.l, self.n)

    def _angular(self, z: np.ndarray) -> np.ndarray:
        if self.spec.d == 2:
            th = np.arctan2(z[..., 1], z[..., 0])
            out = np.zeros(z.shape[:-1])
            for m, c in self.harmonics.items():
                out = out + c * (np.cos(self.l * th) if m >= 0 else np.sin(self.l * th))
            return out
        rho = np.linalg.norm(z, axis=-1)
        polar = np.arccos(np.clip(z[..., 2] / np.where(rho > 0, rho, 1.0), -1, 1))
        azim = np.arctan2(z[..., 1], z[..., 0])
        out = np.zeros(z.shape[:-1])
        for m, c in self.harmonics.items():
            out = out + c * _real_sph_harm(self.l, m, polar, azim)
        return out

    def _complex_amp(self) -> complex:
        a = 0j
        for m, c in self.harmonics.items():
            a += c if m >= 0 else -1j * c
        return a

    def radial(self, rho, order: int = 0) -> np.ndarray:
        """Derivatives of g(rho) = rho^s J_nu(k rho) from Bessel derivative identities."""
        rho = np.asarray(rho, dtype=float)
        d, k = self.spec.d, self.k
        s, nu = 1 - d / 2, _radial_order(d, self.l)
        if k == 0:
            return np.ones_like(rho) if order == 0 else np.zeros_like(rho)
        total = np.zeros_like(rho)
        # Leibniz rule for rho^s * J(k rho)
        for i in range(order + 1):
            p = order - i
            power = math.prod(s - t for t in range(p))
            if power == 0:
                continue
            Ji = bessel_j_derivative(nu, k * rho, i) if i else np.asarray(bessel_j(nu, k * rho))
            total = total + math.comb(order, i) * k**i * power * rho ** (s - p) * Ji
        return total

    def derivative(self, z, alpha=None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        d = self.spec.d
        alpha = tuple(alpha) if alpha is not None else (0,) * d
        if d == 2:
            a = self._complex_amp()
            if self.k == 0:
                return np.full(z.shape[:-1], a.real if not any(alpha) else 0.0)
            w = self.k * z
            vals = bessel_plane_wave(self.l, alpha, w)
            return (a * vals).real * self.k ** sum(alpha)
        if any(alpha):
            raise NotImplementedError("only values, gradients normal to spheres and Laplacians in d = 3")
        rho = np.linalg.norm(z, axis=-1)
        return self.radial(rho) * self._angular(z)

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z)

    def laplacian(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.spec.d == 2:
            return self.derivative(z, (2, 0)) + self.derivative(z, (0, 2))
        rho = np.linalg.norm(z, axis=-1)
        d, l = self.spec.d, self.l
        g0, g1, g2 = self.radial(rho, 0), self.radial(rho, 1), self.radial(rho, 2)
        return (g2 + (d - 1) * g1 / rho - l * (l + d - 2) * g0 / rho**2) * self._angular(z)

    def gradient(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.spec.d == 2:
            return np.stack([self.derivative(z, (1, 0)), self.derivative(z, (0, 1))], axis=-1)
        raise NotImplementedError("use normal_derivative on spheres for d = 3")

    def normal_derivative(self, z, normals) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self.spec.d == 2:
            return np.sum(self.gradient(z) * normals, axis=-1)
        rho = np.linalg.norm(z, axis=-1)
        return self.radial(rho, 1) * self._angular(z)

    def to_json(self) -> dict:
        return {"spec": self.spec.to_json(), "eigenvalue": self.eigenvalue, "l": self.l, "n": self.n,
                "harmonics": {str(m): c for m, c in sorted(self.harmonics.items())}}


def disk_expansion(spec: BilliardSpec, l: int, n: int, harmonics: dict) -> DiskExpansion:
    k, _ = disk_mode(spec, l, n)
    for m in harmonics:
        if spec.d == 2 and not (m in (l, -l) or (l == 0 and m == 0)):
            raise InadmissibleIndex("planar harmonics use m = l (cos) or m = -l (sin)")
        if spec.d == 3 and abs(m) > l:
            raise InadmissibleIndex("|m| must not exceed l")
    if spec.d == 3 and l > 10:
        raise ValueError("spherical harmonics are supported up to l = 10")
    return DiskExpansion(spec, l, n, k, dict(harmonics))


# ------------------------------------------------------------------ residuals


def analytic_pde_residual(e, points) -> float:
    """max |Delta u + lambda u| / (lambda max |u|) using exact derivatives."""
    u = e(points)
    lap = e.laplacian(points)
    scale = e.eigenvalue * max(float(np.max(np.abs(u))), 1e-300)
    return float(np.max(np.abs(lap + e.eigenvalue * u)) / scale)


def boundary_residual(e, count: int = 200, seed: int = 7) -> float:
    spec = e.spec
    pts, normals = spec.boundary_samples(count, seed)
    interior = spec.interior_samples(200, seed + 1)
    amp = max(float(np.max(np.abs(e(interior)))), 1e-300)
    freq = max(1.0, math.sqrt(e.eigenvalue))
    if spec.bc == "D":
        return float(np.max(np.abs(e(pts)))) / amp
    if spec.bc == "P":
        L = spec.lengths
        worst = 0.0
        for j in range(spec.d):
            shift = np.zeros(spec.d)
            shift[j] = L[j]
            lo = pts.copy()
            lo[:, j] = 0.0
            worst = max(worst, float(np.max(np.abs(e(lo) - e(lo + shift)))) / amp)
        return worst
    if isinstance(e, DiskExpansion):
        dn = e.normal_derivative(pts, normals)
    else:
        dn = np.sum(e.gradient(pts) * normals, axis=-1)
    if spec.bc == "N":
        return float(np.max(np.abs(dn))) / (amp * freq)
    if spec.bc == "R":
        phase = math.atan(spec.sigma)
        res = math.cos(phase) * dn + math.sin(phase) * e(pts)
        return float(np.max(np.abs(res))) / (amp * freq)
    raise ValueError(spec.bc)


def pde_and_boundary_residual(e, h: float = 1e-3, boundary_count: int = 200) -> tuple[float, float]:
    """Five-point stencil residual on interior grid nodes and the boundary functional residual."""
    spec = e.spec
    if spec.d != 2:
        raise ValueError("stencil residual is planar; use analytic_pde_residual")
    lo, hi = spec.bounding_box
    nx = int(round((hi[0] - lo[0]) / h))
    ny = int(round((hi[1] - lo[1]) / h))
    if nx < 4 or ny < 4:
        raise ValueError("degenerate grid")
    xs = lo[0] + h * np.arange(nx + 1)
    ys = lo[1] + h * np.arange(ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    P = np.stack([X, Y], axis=-1)
    U = e(P)
    inside = spec.contains(P, tol=-1e-12)
    inner = inside[1:-1, 1:-1] & inside[2:, 1:-1] & inside[:-2, 1:-1] & inside[1:-1, 2:] & inside[1:-1, :-2]
    if not np.any(inner):
        raise ValueError("degenerate grid")
    lap = (U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2] - 4 * U[1:-1, 1:-1]) / (h * h)
    res = np.abs(lap + e.eigenvalue * U[1:-1, 1:-1])[inner]
    pde = float(np.max(res) / (e.eigenvalue * max(float(np.max(np.abs(U[inside]))), 1e-300)))
    return pde, boundary_residual(e, boundary_count)


# ------------------------------------------------------------------ genus


def genus_of_polygon(angles: Sequence) -> int:
    """Genus 1 + (N/2) sum (m_i - 1)/n_i of the translation surface for angles pi m_i/n_i."""
    fr = [Fraction(a) if not isinstance(a, Fraction) else a for a in angles]
    if not fr or any(a <= 0 for a in fr):
        raise ValueError("angles must be positive rationals")
    N = math.lcm(*(a.denominator for a in fr))
    g = 1 + Fraction(N, 2) * sum(Fraction(a.numerator - 1, a.denominator) for a in fr)
    if g.denominator != 1:
        raise ValueError(f"non-integer genus {g}: inconsistent angles")
    return int(g)


# ------------------------------------------------------------------ field grids


@dataclass
class FieldGrid:
    """Scalar samples on a regular planar grid, values[i, j] at origin + (i*hx, j*hy)."""

    origin: tuple[float, float]
    steps: tuple[float, float]
    counts: tuple[int, int]
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != tuple(self.counts):
            raise ValueError("values shape does not match axis counts")
        if min(self.steps) <= 0:
            raise ValueError("steps must be positive")

    @classmethod
    def sample(cls, f, origin, steps, counts, metadata=None) -> "FieldGrid":
        xs = origin[0] + steps[0] * np.arange(counts[0])
        ys = origin[1] + steps[1] * np.arange(counts[1])
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return cls(tuple(origin), tuple(steps), tuple(counts), f(np.stack([X, Y], axis=-1)), metadata or {})

    @classmethod
    def centered(cls, f, radius: float, step: float, metadata=None) -> "FieldGrid":
        n = int(round(2 * radius / step)) + 1
        return cls.sample(f, (-radius, -radius), (step, step), (n, n), metadata)

    @property
    def xs(self) -> np.ndarray:
        return self.origin[0] + self.steps[0] * np.arange(self.counts[0])

    @property
    def ys(self) -> np.ndarray:
        return self.origin[1] + self.steps[1] * np.arange(self.counts[1])

    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def to_csv(self, path) -> None:
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        rows = np.column_stack([X.ravel(), Y.ravel(), self.values.ravel()])
        with open(path, "w") as fh:
            fh.write("x,y,value\n")
            for x, y, v in rows:
                fh.write(f"{float(x)!r},{float(y)!r},{float(v)!r}\n")

    @classmethod
    def from_csv(cls, path) -> "FieldGrid":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
        steps = (float(xs[1] - xs[0]) if len(xs) > 1 else 1.0, float(ys[1] - ys[0]) if len(ys) > 1 else 1.0)
        return cls((float(xs[0]), float(ys[0])), steps, (len(xs), len(ys)), data[:, 2].reshape(len(xs), len(ys)))

    def to_binary(self, path) -> None:
        path = Path(path)
        path.write_bytes(self.values.astype("<f8").tobytes(order="C"))
        meta = {"origin": list(self.origin), "steps": list(self.steps), "counts": list(self.counts),
                "dtype": "<f8", "order": "row-major", "metadata": self.metadata}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, sort_keys=True, indent=1))

    @classmethod
    def from_binary(cls, path) -> "FieldGrid":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
        vals = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(meta["counts"])
        return cls(tuple(meta["origin"]), tuple(meta["steps"]), tuple(meta["counts"]), vals.copy(), meta["metadata"])
