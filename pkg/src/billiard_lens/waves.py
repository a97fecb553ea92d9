"""Monochromatic waves: Bessel functions, translate sums, Herglotz densities, symmetries."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# ---------------------------------------------------------------- Bessel J

_SERIES_X = 2.0


def _series(nu: float, x: np.ndarray) -> np.ndarray:
    """Power series of J_nu; accurate when x is small compared with sqrt(nu + 1)."""
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 200):
        term = term * q / (k * (nu + k))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    with np.errstate(divide="ignore", invalid="ignore", under="ignore"):
        lead = np.exp(nu * np.log(np.where(x > 0, x / 2.0, 1.0)) - math.lgamma(nu + 1.0))
    lead = np.where(x > 0, lead, 1.0 if nu == 0 else 0.0)
    return lead * total


def _miller(nu0: float, nmax: int, x: np.ndarray) -> np.ndarray:
    """J_{nu0+n}(x), n = 0..nmax, by normalized backward recurrence (0 <= nu0 < 1, x > 0)."""
    xmax = float(np.max(x))
    start = int(max(nmax, xmax) + 30 + 12 * xmax ** (1 / 3))
    start += start % 2  # even start keeps the normalization sum aligned
    out = np.empty((nmax + 1, x.size))
    f_hi = np.zeros_like(x)
    f = np.full_like(x, 1e-280)
    norm = np.zeros_like(x)
    lg_nu0 = math.lgamma(nu0 + 1.0)
    for mu in range(start, 0, -1):
        f_lo = 2.0 * (nu0 + mu) / x * f - f_hi
        f_hi, f = f, f_lo
        n = mu - 1
        if n <= nmax:
            out[n] = f
        if n % 2 == 0:
            k = n // 2
            if k == 0:
                w = math.exp(lg_nu0)
            else:
                w = (nu0 + 2 * k) * math.exp(math.lgamma(nu0 + k) - math.lgamma(k + 1.0))
            norm = norm + w * f
        big = np.abs(f) > 1e250
        if np.any(big):
            s = np.where(big, 1e-250, 1.0)
            f, f_hi, norm = f * s, f_hi * s, norm * s
            if n <= nmax:
                out[n:] *= s
    scale = np.exp(nu0 * np.log(x / 2.0)) / norm
    return out * scale


def bessel_j_block(nu: float, count: int, x) -> np.ndarray:
    """Rows J_{nu+n}(x) for n = 0..count-1, for nu >= 0 and x >= 0."""
    if nu < 0:
        raise ValueError("bessel_j_block needs nu >= 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    flat = x.ravel()
    if np.any(flat < 0):
        raise ValueError("x must be nonnegative")
    base = math.floor(nu)
    nu0 = nu - base
    top = base + count - 1
    res = np.empty((count, flat.size))
    small = flat <= _SERIES_X
    if np.any(small):
        xs = flat[small]
        for n in range(count):
            res[n, small] = _series(nu + n, xs)
    rest = ~small
    if np.any(rest):
        xr = flat[rest]
        block = _miller(nu0, top, xr)
        res[:, rest] = block[base:base + count]
        # the recurrence loses relative accuracy deep in the monotone regime
        deep = (xr * xr) < 2.0 * (nu0 + base + np.arange(count)[:, None] + 1.0)
        if np.any(deep):
            for n in range(count):
                idx = np.nonzero(deep[n])[0]
                if idx.size:
                    cols = np.nonzero(rest)[0][idx]
                    res[n, cols] = _series(nu + n, flat[cols])
    return res.reshape((count,) + x.shape)


def bessel_j(order: float, x):
    """Bessel function of the first kind J_order(x) for order >= 0, x >= 0."""
    scalar = np.ndim(x) == 0
    out = bessel_j_block(float(order), 1, x)[0]
    return float(out.reshape(-1)[0]) if scalar else out


def bessel_j_signed(order: float, x) -> np.ndarray:
    """J of a possibly negative order: integer orders by reflection, others by recurrence."""
    x = np.asarray(x, dtype=float)
    if order >= 0:
        return bessel_j_block(order, 1, x)[0]
    if float(order).is_integer():
        n = int(-order)
        return (-1) ** n * bessel_j_block(n, 1, x)[0]
    steps = math.ceil(-order)
    top = order + steps  # in [0, 1)
    pair = bessel_j_block(top, 2, x)
    hi, cur = pair[1], pair[0]
    mu = top
    for _ in range(steps):
        hi, cur = cur, 2.0 * mu / x * cur - hi
        mu -= 1
    return cur


def bessel_j_derivative(order: float, x, k: int = 1) -> np.ndarray:
    """k-th derivative of J_order from the two-sided order recurrence."""
    x = np.asarray(x, dtype=float)
    total = np.zeros_like(x)
    for i in range(k + 1):
        total = total + (-1) ** i * math.comb(k, i) * bessel_j_signed(order - k + 2 * i, x)
    return total / 2.0**k


def radial_profile_value_at_zero(d: int) -> float:
    """Continuous extension of r**(1-d/2) J_{d/2-1}(r) at r = 0."""
    return 1.0 / (2.0 ** (d / 2 - 1) * math.gamma(d / 2))


def radial_profile(d: int, r) -> np.ndarray:
    """g_d(r) = r**(1-d/2) J_{d/2-1}(r) with its limit at the origin."""
    r = np.asarray(r, dtype=float)
    if d == 2:
        return bessel_j_block(0.0, 1, r)[0]
    nu = d / 2 - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        val = r ** (-nu) * bessel_j_block(nu, 1, r)[0]
    return np.where(r > 1e-8, val, radial_profile_value_at_zero(d) * (1 - r * r / (2 * d)))


# ------------------------------------------------ derivative ladder in the plane
#
# E_n(w) = J_n(|w|) exp(i n arg w) is smooth on R^2 and
#   d/dx E_n = (E_{n-1} - E_{n+1}) / 2,   d/dy E_n = i (E_{n-1} + E_{n+1}) / 2.


def ladder(start: int, alpha: tuple[int, int]) -> dict[int, complex]:
    coeffs = {start: 1.0 + 0j}
    for axis, count in enumerate(alpha):
        for _ in range(count):
            nxt: dict[int, complex] = {}
            for n, c in coeffs.items():
                lo, hi = (0.5 * c, -0.5 * c) if axis == 0 else (0.5j * c, 0.5j * c)
                nxt[n - 1] = nxt.get(n - 1, 0) + lo
                nxt[n + 1] = nxt.get(n + 1, 0) + hi
            coeffs = nxt
    return coeffs


def bessel_plane_wave(start: int, alpha: tuple[int, int], w: np.ndarray) -> np.ndarray:
    """Complex derivative d^alpha of E_start evaluated at points w (shape (..., 2))."""
    w = np.asarray(w, dtype=float)
    r = np.hypot(w[..., 0], w[..., 1])
    theta = np.arctan2(w[..., 1], w[..., 0])
    coeffs = ladder(start, alpha)
    nmax = max(abs(n) for n in coeffs)
    js = bessel_j_block(0.0, nmax + 1, r)
    out = np.zeros(r.shape, dtype=complex)
    for n, c in sorted(coeffs.items()):
        if c == 0:
            continue
        jn = np.reshape(js[abs(n)], r.shape) * (1.0 if n >= 0 or n % 2 == 0 else -1.0)
        out += c * jn * np.exp(1j * n * theta)
    return out


# ------------------------------------------------------------ translate sums


@dataclass(frozen=True)
class BesselTranslateSum:
    """phi(z) = sum_g c_g * g_d(|z - z_g|)."""

    centers: np.ndarray
    coeffs: np.ndarray
    d: int = 2

    def __post_init__(self) -> None:
        c = np.asarray(self.centers, dtype=float).reshape(-1, self.d)
        a = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if len(c) != len(a):
            raise ValueError("centers and coefficients differ in length")
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def single(cls, center=(0.0, 0.0), coeff: float = 1.0) -> "BesselTranslateSum":
        return cls(np.array([center], dtype=float), np.array([coeff]), d=len(center))

    @property
    def envelope_radius(self) -> float:
        return float(np.max(np.linalg.norm(self.centers, axis=1))) if len(self.coeffs) else 0.0

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z, (0,) * self.d)

    def derivative(self, z, alpha: Sequence[int]) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        out = np.zeros(z.shape[:-1])
        if self.d != 2:
            if any(alpha):
                raise NotImplementedError("derivatives of translate sums are implemented for d = 2")
            for c, a in zip(self.centers, self.coeffs):
                out = out + a * radial_profile(self.d, np.linalg.norm(z - c, axis=-1))
            return out
        alpha = tuple(int(v) for v in alpha)
        for c, a in zip(self.centers, self.coeffs):
            out = out + a * bessel_plane_wave(0, alpha, z - c).real
        return out

    def merged(self, tol: float = 1e-12) -> "BesselTranslateSum":
        """Combine coincident centers and drop cancelled terms."""
        keys: dict[tuple, int] = {}
        cs: list[np.ndarray] = []
        vals: list[float] = []
        for c, a in zip(self.centers, self.coeffs):
            key = tuple(np.round(c / tol).astype(np.int64))
            if key in keys:
                vals[keys[key]] += a
            else:
                keys[key] = len(cs)
                cs.append(c)
                vals.append(float(a))
        keep = [i for i, v in enumerate(vals) if abs(v) > 1e-15]
        return BesselTranslateSum(np.array([cs[i] for i in keep]).reshape(-1, self.d),
                                  np.array([vals[i] for i in keep]), self.d)


def eval_translate_sum(w: BesselTranslateSum, z) -> np.ndarray | float:
    z = np.asarray(z, dtype=float)
    out = w(z)
    return float(out) if np.ndim(out) == 0 else out


# ------------------------------------------------------------ Herglotz densities


@dataclass(frozen=True)
class HerglotzPolynomial:
    """Density p(theta) = sum_{k=-D}^{D} a_k e^{i k theta}; phi(z) = int e^{i z.xi} p dsigma."""

    coeffs: np.ndarray  # length 2D + 1, index k + D
    hermitian: bool = True

    def __post_init__(self) -> None:
        a = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if a.size % 2 == 0:
            raise ValueError("need an odd number of coefficients")
        object.__setattr__(self, "coeffs", a)
        if self.hermitian and not self.is_hermitian():
            raise ValueError("coefficients are not Hermitian")

    @property
    def degree(self) -> int:
        return (self.coeffs.size - 1) // 2

    def is_hermitian(self, tol: float = 1e-13) -> bool:
        D = self.degree
        k = np.arange(-D, D + 1)
        lhs = self.coeffs * (-1.0) ** k
        return bool(np.allclose(lhs, np.conj(self.coeffs[::-1]), atol=tol * max(1.0, np.abs(self.coeffs).max(initial=0))))

    def density(self, theta) -> np.ndarray:
        D = self.degree
        k = np.arange(-D, D + 1)
        return np.exp(1j * np.multiply.outer(np.asarray(theta), k)) @ self.coeffs

    def node_count(self, radius: float) -> int:
        return 4 * (self.degree + math.ceil(radius) + 16)

    def __call__(self, z) -> np.ndarray:
        return self.derivative(z, (0, 0))

    def derivative(self, z, alpha: Sequence[int]) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        pts = z.reshape(-1, 2)
        radius = float(np.max(np.linalg.norm(pts, axis=1))) if pts.size else 0.0
        nq = self.node_count(radius)
        theta = 2 * math.pi * np.arange(nq) / nq
        xi = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        weight = self.density(theta) * (2 * math.pi / nq)
        weight = weight * (1j * xi[:, 0]) ** alpha[0] * (1j * xi[:, 1]) ** alpha[1]
        vals = np.exp(1j * pts @ xi.T) @ weight
        out = vals.real if self.hermitian else vals
        return out.reshape(z.shape[:-1])


def eval_herglotz(p: HerglotzPolynomial, z, real: bool = True):
    if real and not p.hermitian and not p.is_hermitian():
        raise ValueError("a real output needs a Hermitian density")
    z = np.asarray(z, dtype=float)
    out = HerglotzPolynomial(p.coeffs, hermitian=False).derivative(z, (0, 0))
    out = out.real if real else out
    return out.item() if np.ndim(out) == 0 else out


def _jacobi_anger_degree(radius: float, tol: float) -> int:
    # |J_k(r)| <= (r/2)^k / k!, summed over both tails
    k, term = 0, 1.0
    while True:
        k += 1
        term = (radius / 2) ** k / math.factorial(k) if k < 170 else 0.0
        tail = 2 * term * (1 + radius / (k + 1))
        if k > radius and tail < tol:
            return k


def translate_to_herglotz(w: BesselTranslateSum, tol: float = 1e-12) -> HerglotzPolynomial:
    """Exact Jacobi-Anger expansion of a planar translate sum, truncated below tol."""
    if w.d != 2:
        raise ValueError("Herglotz form is planar")
    if len(w.coeffs) == 0:
        return HerglotzPolynomial(np.zeros(1))
    R = w.envelope_radius
    scale = max(1.0, float(np.sum(np.abs(w.coeffs))))
    D = _jacobi_anger_degree(R, tol / scale) if R > 0 else 0
    k = np.arange(-D, D + 1)
    a = np.zeros(2 * D + 1, dtype=complex)
    for c, coeff in zip(w.centers, w.coeffs):
        r = float(np.hypot(*c))
        psi = math.atan2(c[1], c[0])
        jk = bessel_j_block(0.0, D + 1, r)[:, 0]
        jsigned = np.array([jk[abs(n)] * ((-1) ** abs(int(n)) if n < 0 else 1) for n in k])
        a += coeff / (2 * math.pi) * (-1j) ** k * jsigned * np.exp(-1j * k * psi)
    return HerglotzPolynomial(a, hermitian=True)


# ------------------------------------------------------------ symmetry groups


def reflection_matrix(slope: float) -> np.ndarray:
    """Reflection of the plane across the line through 0 with the given slope (inf allowed)."""
    if math.isinf(slope):
        return np.array([[-1.0, 0.0], [0.0, 1.0]])
    m = float(slope)
    return np.array([[1 - m * m, 2 * m], [2 * m, m * m - 1]]) / (1 + m * m)


@dataclass(frozen=True)
class SymmetryGroup:
    """Finite group generated by linear reflections; each element keeps its determinant."""

    generators: tuple[np.ndarray, ...]
    elements: tuple[np.ndarray, ...] = field(repr=False)
    dets: tuple[int, ...] = field(repr=False)

    @classmethod
    def from_generators(cls, gens: Iterable[np.ndarray], limit: int = 48) -> "SymmetryGroup":
        gens = tuple(np.asarray(g, dtype=float) for g in gens)
        dim = gens[0].shape[0] if gens else 2
        ident = np.eye(dim)
        elements = [ident]
        dets = [1]
        seen = {_mat_key(ident)}
        frontier = [(ident, 1)]
        while frontier:
            nxt = []
            for m, det in frontier:
                for g in gens:
                    prod = g @ m
                    key = _mat_key(prod)
                    if key not in seen:
                        seen.add(key)
                        elements.append(prod)
                        dets.append(-det)
                        nxt.append((prod, -det))
                        if len(elements) > limit:
                            raise ValueError("reflection group is not finite")
            frontier = nxt
        return cls(gens, tuple(elements), tuple(dets))

    @classmethod
    def from_slopes(cls, slopes: Iterable[float]) -> "SymmetryGroup":
        return cls.from_generators(reflection_matrix(s) for s in slopes)

    @classmethod
    def coordinate_flips(cls, d: int) -> "SymmetryGroup":
        gens = []
        for j in range(d):
            g = np.eye(d)
            g[j, j] = -1.0
            gens.append(g)
        return cls.from_generators(gens)

    def __len__(self) -> int:
        return len(self.elements)

    def signs(self, bc: str) -> tuple[int, ...]:
        if bc == "N":
            return (1,) * len(self.elements)
        if bc == "D":
            return self.dets
        raise ValueError(f"boundary condition must be 'D' or 'N', got {bc!r}")


def _mat_key(m: np.ndarray) -> tuple:
    return tuple(np.round(m, 9).ravel() + 0.0)


_S3 = math.sqrt(3.0)
_TABLE_SLOPES = {
    "A": {
        "square": (0.0, math.inf),
        "iso": (0.0, math.inf, 1.0),
        "equi": (0.0,),
        "hemi": (0.0, math.inf),
    },
    "B": {
        "square": (0.0, math.inf),
        "iso": (0.0, math.inf, 1.0, -1.0),
        "equi": (0.0, _S3, -_S3),
        "hemi": (0.0, math.inf, _S3, -_S3, 1 / _S3, -1 / _S3),
    },
}
_POLYGON_ALIASES = {"rectangle": "square", "square": "square", "iso": "iso", "iso_triangle": "iso",
                    "equi": "equi", "equi_triangle": "equi", "hemi": "hemi", "hemi_triangle": "hemi"}


@dataclass(frozen=True)
class TableRow:
    table: str
    polygon: str
    bc: str

    @property
    def slopes(self) -> tuple[float, ...]:
        return _TABLE_SLOPES[self.table][self.polygon]

    @property
    def reflections(self) -> tuple[np.ndarray, ...]:
        return tuple(reflection_matrix(s) for s in self.slopes)

    def group(self) -> SymmetryGroup:
        return SymmetryGroup.from_slopes(self.slopes)

    def __str__(self) -> str:
        return f"table{self.table}:{self.polygon}:{self.bc}"


def table_row(name: str) -> TableRow:
    parts = name.split(":")
    if len(parts) != 3 or parts[0] not in ("tableA", "tableB"):
        raise ValueError(f"unknown table row {name!r}")
    table = parts[0][-1]
    polygon = _POLYGON_ALIASES.get(parts[1])
    if polygon is None or parts[2] not in ("D", "N"):
        raise ValueError(f"unknown table row {name!r}")
    return TableRow(table, polygon, parts[2])


# ------------------------------------------------------------ wave descriptors


@dataclass(frozen=True)
class WaveSpec:
    """A monochromatic wave given as translates or a Herglotz density."""

    wave: BesselTranslateSum | HerglotzPolynomial
    symmetry: str = "none"

    @property
    def kind(self) -> str:
        return "translates" if isinstance(self.wave, BesselTranslateSum) else "herglotz"

    @property
    def d(self) -> int:
        return self.wave.d if isinstance(self.wave, BesselTranslateSum) else 2

    def __call__(self, z) -> np.ndarray:
        return self.wave(z)

    def derivative(self, z, alpha) -> np.ndarray:
        return self.wave.derivative(z, alpha)

    def to_json(self) -> dict:
        out: dict = {"d": self.d, "kind": self.kind, "symmetry": self.symmetry}
        if self.kind == "translates":
            out["translates"] = [{"center": [float(v) for v in c], "coeff": float(a)}
                                 for c, a in zip(self.wave.centers, self.wave.coeffs)]
        else:
            out["herglotz"] = {"degree": self.wave.degree,
                               "coeffs": [[float(c.real), float(c.imag)] for c in self.wave.coeffs]}
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)

    @classmethod
    def from_json(cls, obj: dict) -> "WaveSpec":
        d = int(obj.get("d", 2))
        kind = obj.get("kind")
        sym = obj.get("symmetry", "none")
        if sym != "none":
            table_row(sym)
        if kind == "translates":
            items = obj.get("translates", [])
            centers = np.array([t["center"] for t in items], dtype=float).reshape(-1, d)
            coeffs = np.array([t["coeff"] for t in items], dtype=float)
            wave: BesselTranslateSum | HerglotzPolynomial = BesselTranslateSum(centers, coeffs, d)
        elif kind == "herglotz":
            h = obj["herglotz"]
            coeffs = np.array([complex(re, im) for re, im in h["coeffs"]])
            if coeffs.size != 2 * int(h["degree"]) + 1:
                raise ValueError("Herglotz coefficient count must be 2*degree+1")
            wave = HerglotzPolynomial(coeffs, hermitian=True)
        else:
            raise ValueError(f"unknown wave kind {kind!r}")
        return cls(wave, sym)


def _as_wave(w):
    return w.wave if isinstance(w, WaveSpec) else w


def symmetrize(w, group: SymmetryGroup, bc: str):
    """Signed group average (1/|G|) sum_g s_g (w o g)."""
    signs = group.signs(bc)
    inner = _as_wave(w)
    if isinstance(inner, BesselTranslateSum):
        centers, coeffs = [], []
        for g, s in zip(group.elements, signs):
            # w(g z) = sum c J(|z - g^T z_c|) for orthogonal g
            centers.append(inner.centers @ g)
            coeffs.append(s * inner.coeffs / len(group))
        out = BesselTranslateSum(np.vstack(centers), np.concatenate(coeffs), inner.d).merged()
    else:
        D = inner.degree
        k = np.arange(-D, D + 1)
        acc = np.zeros_like(inner.coeffs)
        for g, s in zip(group.elements, signs):
            angle = math.atan2(g[1, 0], g[0, 0])
            if np.linalg.det(g) > 0:
                # p(g xi): rotation of the density by the element's angle
                acc += s * inner.coeffs * np.exp(1j * k * angle)
            else:
                acc += s * inner.coeffs[::-1] * np.exp(-1j * k * angle)
        out = HerglotzPolynomial(acc / len(group), hermitian=inner.hermitian)
    return WaveSpec(out, w.symmetry) if isinstance(w, WaveSpec) else out


def sample_ball(count: int, radius: float = 3.0, seed: int = 20240607, d: int = 2) -> np.ndarray:
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.random(count) ** (1.0 / d)
    return v * r[:, None]


def check_symmetry(w, row: TableRow | str, sample_count: int = 200, seed: int = 20240607) -> float:
    """Largest violation of phi(S z) = (-1)^sigma phi(z) over the row's reflections on B_3."""
    row = table_row(row) if isinstance(row, str) else row
    z = sample_ball(sample_count, 3.0, seed)
    f = _as_wave(w)
    base = f(z)
    sigma = -1.0 if row.bc == "D" else 1.0
    worst = 0.0
    for S in row.reflections:
        worst = max(worst, float(np.max(np.abs(f(z @ S.T) - sigma * base), initial=0.0)))
    return worst


def _stencil_residual(values: np.ndarray, h: float) -> float:
    lap = (values[2:, 1:-1] + values[:-2, 1:-1] + values[1:-1, 2:] + values[1:-1, :-2]
           - 4 * values[1:-1, 1:-1]) / (h * h)
    return float(np.max(np.abs(lap + values[1:-1, 1:-1]), initial=0.0))


def helmholtz_residual(w, h: float, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """Max of |Delta_h phi + phi| over interior nodes of a square grid of step h."""
    if h <= 0:
        raise ValueError("grid step must be positive")
    n = int(round(2 * radius / h))
    if n < 4:
        raise ValueError("grid too coarse")
    t = (np.arange(n + 1) - n / 2) * h
    X, Y = np.meshgrid(center[0] + t, center[1] + t, indexing="ij")
    vals = _as_wave(w)(np.stack([X, Y], axis=-1))
    return _stencil_residual(np.asarray(vals, dtype=float), h)


def helmholtz_ratio(w, h: float, center=(0.0, 0.0), radius: float = 1.0) -> float:
    """Residual at h divided by residual at h/2; about 4 for a second-order stencil."""
    coarse = helmholtz_residual(w, h, center, radius)
    fine = helmholtz_residual(w, h / 2, center, radius)
    return coarse / fine if fine > 0 else math.inf


def decay_norm(w, radius: float = 1e3, rays: int = 16, per_ray: int = 4000) -> float:
    """Sampled sup of (1 + |z|)^(1/2) |phi(z)| on the ball of the given radius."""
    ang = 2 * math.pi * (np.arange(rays) + 0.5) / rays
    r = np.linspace(0.0, radius, per_ray)
    pts = np.stack([np.multiply.outer(r, np.cos(ang)), np.multiply.outer(r, np.sin(ang))], axis=-1)
    vals = _as_wave(w)(pts)
    return float(np.max(np.sqrt(1 + r)[:, None] * np.abs(vals)))


def required_symmetry(spec, z0, mu: int | None = None) -> tuple[str, ...]:
    """Parity classes forced on localized eigenfunctions of the unit square at z0.

    Returns labels such as ``"odd-z1"``, ``"even-z2"`` or ``"even"``/``"odd"``
    (under z -> -z), or ``("not-classified",)``.
    """
    kind = getattr(spec, "kind", None)
    bc = getattr(spec, "bc", None)
    if kind != "rectangle" or getattr(spec, "d", 2) != 2 or bc not in ("D", "N"):
        return ("not-classified",)
    if any(abs(float(v) - 1.0) > 0 for v in getattr(spec, "sides", (1.0,))):
        return ("not-classified",)
    z0 = tuple(float(v) for v in z0)
    tol = 1e-12
    classes = []
    for j, v in enumerate(z0):
        if abs(v) < tol or abs(v - 1.0) < tol:
            classes.append(("odd" if bc == "D" else "even") + f"-z{j + 1}")
    if classes:
        return tuple(classes)
    if all(abs(v - 0.5) < tol for v in z0):
        if mu is None:
            return ("even", "odd")
        return ("even",) if mu % 2 == 0 else ("odd",)
    return ("not-classified",)
