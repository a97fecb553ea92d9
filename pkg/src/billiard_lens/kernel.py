"""Shell-averaged cosine kernels, their Bessel limit, and flat-coefficient eigenfunction statistics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .billiards import BilliardSpec, TrigExpansion, expansion_from_slots, shell_eigenvalue
from .lattice import LatticeShell, QuadraticForm, enumerate_shell
from .waves import radial_profile

POLYGON_TAGS = ("square", "rectangle", "iso", "equi", "hemi")


def _directions(shell: LatticeShell, polygon: str) -> np.ndarray:
    if polygon not in POLYGON_TAGS:
        raise ValueError(f"unknown polygon tag {polygon!r}")
    if len(shell) == 0:
        raise ValueError("empty shell")
    return shell.directions()


def reproducing_kernel(shell: LatticeShell, polygon: str, w) -> np.ndarray:
    """Mean of cos(xi . w) over the shell directions; K(0) = 1."""
    dirs = _directions(shell, polygon)
    w = np.asarray(w, dtype=float)
    return np.cos(w @ dirs.T).mean(axis=-1)


def window_points(R: float, step: float, d: int = 2) -> np.ndarray:
    """Regular grid points of spacing ``step`` inside the closed ball of radius R."""
    n = int(math.floor(R / step + 1e-9))
    axis = step * np.arange(-n, n + 1)
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    return pts[np.linalg.norm(pts, axis=1) <= R + 1e-12]


def kernel_vs_bessel(shell: LatticeShell, polygon: str = "square", R: float = 4.0, step: float = 0.05) -> float:
    """sup over |w| <= R of |K(w) - g_d(|w|)| on a grid of the given spacing."""
    d = shell.form.d
    pts = window_points(R, step if d == 2 else max(step, 0.2), d)
    diff = reproducing_kernel(shell, polygon, pts) - radial_profile(d, np.linalg.norm(pts, axis=1))
    return float(np.max(np.abs(diff)))


@dataclass
class KernelProfile:
    shell: LatticeShell
    polygon: str
    radii: np.ndarray
    values: np.ndarray

    @property
    def bessel(self) -> np.ndarray:
        return radial_profile(self.shell.form.d, self.radii)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["r", "K", "J0", "diff"])
            for r, k, j in zip(self.radii, self.values, self.bessel):
                writer.writerow([repr(float(r)), repr(float(k)), repr(float(j)), repr(float(k - j))])


def kernel_profile(shell: LatticeShell, polygon: str = "square", R: float = 8.0, count: int = 161) -> KernelProfile:
    """Kernel along the first coordinate axis."""
    radii = np.linspace(0.0, R, count)
    pts = np.zeros((count, shell.form.d))
    pts[:, 0] = radii
    return KernelProfile(shell, polygon, radii, reproducing_kernel(shell, polygon, pts))


def save_heatmap(shell: LatticeShell, polygon: str, path, R: float = 8.0, count: int = 201) -> None:
    """PNG of K - J0 on [-R, R]^2 (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    axis = np.linspace(-R, R, count)
    X, Y = np.meshgrid(axis, axis, indexing="xy")
    pts = np.stack([X, Y], axis=-1)
    diff = reproducing_kernel(shell, polygon, pts) - radial_profile(2, np.hypot(X, Y))
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(diff, extent=(-R, R, -R, R), origin="lower", cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_title(f"K - J0, mu={shell.mu}")
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


# ------------------------------------------------------------ derandomized eigenfunctions


def derandomized_eigenfunction(mu: int, bc: str = "D", d: int = 2) -> TrigExpansion:
    """Flat-coefficient eigenfunction on the unit cube with unit L2 norm.

    Every nonnegative (Neumann) or positive (Dirichlet) shell index gets the
    same coefficient; a zero coordinate makes the cosine factor square-integrate
    to 1 instead of 1/2, which the normalization accounts for.
    """
    if bc not in ("D", "N"):
        raise ValueError("boundary condition must be D or N")
    spec = BilliardSpec("rectangle", bc, d, (Fraction(1),) * (d - 1))
    shell = enumerate_shell(QuadraticForm((1,) * d), mu)
    pts = shell.points_D if bc == "D" else shell.points_N
    if not pts:
        raise ValueError(f"empty {bc} shell for mu={mu}")
    weights = [math.prod(1.0 if n == 0 else 0.5 for n in N) for N in pts]
    amp = 1.0 / math.sqrt(math.fsum(weights))
    slot = (1 << d) - 1 if bc == "D" else 0
    table = {}
    for N in pts:
        row = np.zeros(1 << d)
        row[slot] = amp
        table[N] = row
    return expansion_from_slots(spec, mu, table, shell_eigenvalue(spec, mu))


def base_grid(n: int, d: int = 2) -> np.ndarray:
    """Cell-centred uniform grid of n**d points on the unit cube."""
    axis = (np.arange(n) + 0.5) / n
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def empirical_covariance(e: TrigExpansion, z0_samples, x, y) -> float:
    """Average of u(z0 + x/sqrt(lam)) u(z0 + y/sqrt(lam)) over the base points."""
    z0 = np.asarray(z0_samples, dtype=float)
    scale = 1.0 / math.sqrt(e.eigenvalue)
    ux = e(z0 + scale * np.asarray(x, dtype=float))
    uy = e(z0 + scale * np.asarray(y, dtype=float))
    return math.fsum(ux * uy) / len(z0)


def covariance_matrix(e: TrigExpansion, z0_samples, probes) -> np.ndarray:
    z0 = np.asarray(z0_samples, dtype=float)
    scale = 1.0 / math.sqrt(e.eigenvalue)
    vals = np.array([e(z0 + scale * np.asarray(p, dtype=float)) for p in probes])
    return vals @ vals.T / len(z0)


def probe_pairs(count: int = 20, radius: float = 3.0, seed: int = 20240607) -> list[tuple[np.ndarray, np.ndarray]]:
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        x = rng.uniform(-radius, radius, 2)
        y = rng.uniform(-radius, radius, 2)
        pairs.append((x, y))
    return pairs


def covariance_deviation(mu: int, bc: str = "D", grid: int = 50, pairs=None) -> dict:
    """Max |empirical covariance - J0(|x - y|)| over probe pairs on a uniform base grid."""
    e = derandomized_eigenfunction(mu, bc)
    z0 = base_grid(grid)
    pairs = probe_pairs() if pairs is None else pairs
    rows = []
    for x, y in pairs:
        emp = empirical_covariance(e, z0, x, y)
        ref = float(np.ravel(radial_profile(2, np.linalg.norm(np.asarray(x) - np.asarray(y))))[0])
        rows.append({"x": [float(v) for v in x], "y": [float(v) for v in y],
                     "empirical": emp, "bessel": ref, "deviation": abs(emp - ref)})
    return {"mu": mu, "bc": bc, "grid": grid, "max_deviation": max(r["deviation"] for r in rows), "pairs": rows}
