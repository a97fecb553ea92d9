"""Nodal lines, nodal domains, nesting trees and critical points of sampled fields."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import directed_hausdorff

from .billiards import FieldGrid

# cell edges as (axis, di, dj): axis 0 runs along x from corner (i+di, j+dj)
_BOTTOM, _RIGHT, _TOP, _LEFT = (0, 0, 0), (1, 1, 0), (0, 0, 1), (1, 0, 0)


class DegenerateField(ValueError):
    pass


def _saddle_centre(a: float, b: float, c: float, d: float) -> float:
    """Value of the bilinear interpolant at its saddle (asymptotic decider)."""
    den = a + c - b - d
    return (a * c - b * d) / den if den != 0 else 0.25 * (a + b + c + d)


@dataclass
class NodalAnalysis:
    grid: FieldGrid
    contours: list[np.ndarray]
    closed: list[bool]
    labels: np.ndarray
    borders: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def domain_count(self) -> int:
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def touches_boundary(self, k: int) -> bool:
        g = self.grid
        pts = self.contours[k]
        lo = np.array(g.origin)
        hi = lo + np.array(g.steps) * (np.array(g.counts) - 1)
        tol = 1e-12 * max(1.0, float(np.max(np.abs(hi))))
        return bool(np.any(pts <= lo + tol) or np.any(pts >= hi - tol))

    def compact_components(self) -> list[int]:
        return [k for k, c in enumerate(self.closed) if c and not self.touches_boundary(k)]

    def area(self, k: int) -> float:
        x, y = self.contours[k][:, 0], self.contours[k][:, 1]
        return 0.5 * abs(float(np.dot(x[:-1], y[1:]) - np.dot(x[1:], y[:-1])))

    def domains_inside(self, k: int) -> list[int]:
        pts = self.grid.points().reshape(-1, 2)
        flat = self.labels.ravel()
        found, first = np.unique(flat, return_index=True)
        inside = point_in_polygon(pts[first], self.contours[k])
        return [int(lab) for lab, ok in zip(found, inside) if ok and lab >= 0]

    def nesting_tree(self, k: int) -> dict:
        return nesting_tree(self, k)

    def to_geojson(self) -> dict:
        feats = []
        for k, (pts, closed) in enumerate(zip(self.contours, self.closed)):
            feats.append({"type": "Feature",
                          "geometry": {"type": "LineString", "coordinates": [[float(x), float(y)] for x, y in pts]},
                          "properties": {"id": k, "closed": closed, "compact": closed and not self.touches_boundary(k)}})
        return {"type": "FeatureCollection", "features": feats}

    def summary(self) -> dict:
        return {"contours": len(self.contours), "closed": sum(self.closed),
                "compact": len(self.compact_components()), "domains": self.domain_count}


def point_in_polygon(points, polygon) -> np.ndarray:
    """Even-odd ray casting; ``polygon`` is a closed vertex list (first == last)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    x0, y0 = polygon[:-1, 0], polygon[:-1, 1]
    x1, y1 = polygon[1:, 0], polygon[1:, 1]
    px, py = points[:, 0:1], points[:, 1:2]
    straddle = (y0 > py) != (y1 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
    hits = straddle & (px < xcross)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def _edge_point(grid: FieldGrid, v: np.ndarray, key) -> np.ndarray:
    axis, i, j = key
    a = v[i, j]
    b = v[i + 1, j] if axis == 0 else v[i, j + 1]
    t = a / (a - b)
    hx, hy = grid.steps
    x = grid.origin[0] + hx * (i + (t if axis == 0 else 0.0))
    y = grid.origin[1] + hy * (j + (t if axis == 1 else 0.0))
    return np.array([x, y])


def _cell_segments(v: np.ndarray, pos: np.ndarray):
    """Yield (edge_key, edge_key) pairs, and saddle diagonals as ((i, j), (i2, j2)) joins."""
    nx, ny = v.shape
    corner_sum = pos[:-1, :-1].astype(int) + pos[1:, :-1] + pos[1:, 1:] + pos[:-1, 1:]
    cells = np.argwhere((corner_sum > 0) & (corner_sum < 4))
    segments, joins = [], []
    for i, j in cells:
        i, j = int(i), int(j)
        sa, sb, sc, sd = pos[i, j], pos[i + 1, j], pos[i + 1, j + 1], pos[i, j + 1]

        def key(e):
            return (e[0], i + e[1], j + e[2])

        crossing = [e for e, s0, s1 in ((_BOTTOM, sa, sb), (_RIGHT, sb, sc), (_TOP, sd, sc), (_LEFT, sa, sd))
                    if s0 != s1]
        if len(crossing) == 2:
            segments.append((key(crossing[0]), key(crossing[1])))
            continue
        centre = _saddle_centre(v[i, j], v[i + 1, j], v[i + 1, j + 1], v[i, j + 1])
        size = max(abs(v[i, j]), abs(v[i + 1, j]), abs(v[i + 1, j + 1]), abs(v[i, j + 1]))
        if abs(centre) <= 1e-12 * size:
            # nodal lines cross at the centre: no diagonal is joined
            segments += [(key(_BOTTOM), key(_LEFT)), (key(_TOP), key(_RIGHT))]
        elif (centre > 0) == sa:
            # a and c joined through the centre, contours cut off b and d
            segments += [(key(_BOTTOM), key(_RIGHT)), (key(_TOP), key(_LEFT))]
            joins.append(((i, j), (i + 1, j + 1)))
        else:
            segments += [(key(_BOTTOM), key(_LEFT)), (key(_TOP), key(_RIGHT))]
            joins.append(((i + 1, j), (i, j + 1)))
    return segments, joins


def _chains(segments) -> list[tuple[list, bool]]:
    nbrs: dict = {}
    for a, b in segments:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    seen = set()
    out = []

    def walk(start):
        chain, prev, cur = [start], None, start
        seen.add(start)
        while True:
            nxt = [n for n in nbrs[cur] if n != prev and n not in seen]
            if not nxt:
                closed = len(chain) > 2 and start in nbrs[cur] and prev is not None
                return chain, closed
            prev, cur = cur, nxt[0]
            chain.append(cur)
            seen.add(cur)

    for k in sorted(k for k in nbrs if len(nbrs[k]) == 1):
        if k not in seen:
            out.append(walk(k))
    for k in sorted(nbrs):
        if k not in seen:
            out.append(walk(k))
    return out


def _snap(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values with roundoff-level entries set to zero, and the mask of those nodal nodes."""
    zero = np.abs(values) <= 1e-12 * float(np.max(np.abs(values)))
    return np.where(zero, 0.0, values), zero


def _labels(pos: np.ndarray, joins, zero: np.ndarray) -> np.ndarray:
    """4-connected sign components merged across joined saddle diagonals; nodes on the nodal set get -1."""
    four = ndimage.generate_binary_structure(2, 1)
    lab_p, n_p = ndimage.label(pos & ~zero, structure=four)
    lab_n, _ = ndimage.label(~pos & ~zero, structure=four)
    raw = np.where(zero, 0, np.where(pos, lab_p, lab_n + n_p))
    parent = list(range(int(raw.max()) + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, q in joins:
        a, b = find(int(raw[p])), find(int(raw[q]))
        if a and b and a != b:
            parent[max(a, b)] = min(a, b)
    roots = np.array([find(x) for x in range(len(parent))])[raw]
    # relabel in row-major order of first occurrence
    out = np.full(pos.shape, -1, dtype=np.int64)
    keep = roots > 0
    if keep.any():
        _, first, inv = np.unique(roots[keep], return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first))
        out[keep] = order[inv.reshape(-1)]
    return out


def extract_nodal(grid: FieldGrid) -> NodalAnalysis:
    if not np.any(grid.values):
        raise DegenerateField("field vanishes identically on the grid")
    v, zero = _snap(grid.values)
    pos = v > 0
    segments, joins = _cell_segments(v, pos)
    labels = _labels(pos, joins, zero)
    contours, closed, borders = [], [], []
    for chain, is_closed in _chains(segments):
        pts = np.array([_edge_point(grid, v, k) for k in chain])
        if is_closed:
            pts = np.vstack([pts, pts[:1]])
        contours.append(pts)
        closed.append(is_closed)
        sides = set()
        for axis, i, j in chain:
            other = (i + 1, j) if axis == 0 else (i, j + 1)
            sides.update((int(labels[i, j]), int(labels[other])))
        sides.discard(-1)
        borders.append(tuple(sorted(sides)))
    return NodalAnalysis(grid, contours, closed, labels, borders)


def count_nodal_domains(grid: FieldGrid) -> int:
    if not np.any(grid.values):
        return 1
    v, zero = _snap(grid.values)
    pos = v > 0
    _, joins = _cell_segments(v, pos)
    return max(int(_labels(pos, joins, zero).max()) + 1, 1)


def _canonical(node: int, children: dict) -> dict:
    kids = [_canonical(c, children) for c in children.get(node, [])]
    kids.sort(key=lambda t: json.dumps(t, sort_keys=True))
    return {"children": kids}


def nesting_tree(analysis: NodalAnalysis, k: int) -> dict:
    """Rooted tree of the domains enclosed by compact component k, in canonical nested form."""
    if k not in analysis.compact_components():
        raise ValueError("nesting trees need a closed component inside the window")
    inside = set(analysis.domains_inside(k))
    roots = [lab for lab in analysis.borders[k] if lab in inside]
    if len(roots) != 1:
        raise ValueError("could not identify the domain adjacent to the component")
    adj: dict = {lab: set() for lab in inside}
    for c, sides in enumerate(analysis.borders):
        if c == k or not all(s in inside for s in sides):
            continue
        for a in sides:
            for b in sides:
                if a != b:
                    adj[a].add(b)
    children, seen, frontier = {}, {roots[0]}, [roots[0]]
    while frontier:
        node = frontier.pop(0)
        for nb in sorted(adj[node]):
            if nb not in seen:
                seen.add(nb)
                children.setdefault(node, []).append(nb)
                frontier.append(nb)
    if seen != inside:
        raise ValueError("enclosed domains are not connected through nodal components")
    return {"root": _canonical(roots[0], children)}


def tree_size(tree: dict) -> int:
    def count(node):
        return 1 + sum(count(c) for c in node["children"])

    return count(tree["root"])


def path_tree(vertices: int) -> dict:
    node: dict = {"children": []}
    for _ in range(vertices - 1):
        node = {"children": [node]}
    return {"root": node}


def polish_contours(analysis: NodalAnalysis, f, grad, steps: int = 3) -> list[np.ndarray]:
    """Newton steps along the gradient moving contour vertices onto the zero set of f."""
    out = []
    for pts in analysis.contours:
        p = pts.copy()
        for _ in range(steps):
            g = grad(p)
            n2 = np.sum(g * g, axis=-1)
            step = np.where(n2 > 0, f(p) / np.where(n2 > 0, n2, 1.0), 0.0)
            p = p - step[:, None] * g
        out.append(p)
    return out


def contour_residual(analysis: NodalAnalysis, f, grad=None, steps: int = 3) -> float:
    """max |f| at contour vertices (polished when a gradient is given) over max |f| on the grid."""
    contours = polish_contours(analysis, f, grad, steps) if grad is not None else analysis.contours
    if not contours:
        return 0.0
    scale = float(np.max(np.abs(analysis.grid.values)))
    return max(float(np.max(np.abs(f(c)))) for c in contours) / scale


def stability_margin(grid: FieldGrid) -> float:
    """Smallest |f| at grid points next to a sign change."""
    v = grid.values
    pos = v > 0
    near = np.zeros_like(pos)
    dx = pos[1:, :] != pos[:-1, :]
    dy = pos[:, 1:] != pos[:, :-1]
    near[1:, :] |= dx
    near[:-1, :] |= dx
    near[:, 1:] |= dy
    near[:, :-1] |= dy
    return float(np.min(np.abs(v[near]))) if near.any() else float(np.min(np.abs(v)))


def topology_signature(grid: FieldGrid) -> dict:
    a = extract_nodal(grid)
    return {"domains": a.domain_count,
            "trees": sorted(json.dumps(a.nesting_tree(k), sort_keys=True) for k in a.compact_components())}


def perturbation_is_stable(grid: FieldGrid, fraction: float = 0.1, seed: int = 0) -> bool:
    """Topology unchanged under a random perturbation of size fraction * stability margin."""
    rng = np.random.default_rng(seed)
    delta = fraction * stability_margin(grid)
    noisy = FieldGrid(grid.origin, grid.steps, grid.counts,
                      grid.values + rng.uniform(-delta, delta, grid.values.shape), grid.metadata)
    return topology_signature(grid) == topology_signature(noisy)


def contour_distance(analysis: NodalAnalysis, reference: NodalAnalysis) -> float:
    """Symmetric Hausdorff distance between the compact nodal lines of two analyses.

    Stands in for closeness of the map carrying one nodal set onto the other,
    which a grid cannot measure directly.
    """
    def compact_points(a: NodalAnalysis) -> np.ndarray:
        parts = [a.contours[k] for k in a.compact_components()]
        if not parts:
            raise ValueError("no compact nodal component to compare")
        return np.vstack(parts)

    p, q = compact_points(analysis), compact_points(reference)
    return max(directed_hausdorff(p, q)[0], directed_hausdorff(q, p)[0])


# ------------------------------------------------------------------ critical points


@dataclass(frozen=True)
class CriticalPoint:
    point: tuple[float, float]
    local: tuple[float, float]
    value: float
    kind: str  # "max", "min", "saddle" or "degenerate"
    hessian_det: float

    def to_json(self) -> dict:
        return {"point": list(self.point), "local": list(self.local), "value": self.value, "kind": self.kind, "hessian_det": self.hessian_det}


def _local_extrema(values: np.ndarray) -> list[tuple[int, int]]:
    out = []
    nx, ny = values.shape
    for i in range(1, nx - 1):
        for j in range(1, ny - 1):
            block = values[i - 1:i + 2, j - 1:j + 2]
            v = values[i, j]
            if v >= block.max() or v <= block.min():
                out.append((i, j))
    return out


def find_critical_points(field, centre, radius: float, step: float = 0.1, seeds=None, scale: float | None = None,
                         max_iter: int = 50) -> list[CriticalPoint]:
    """Newton iteration on the gradient of f(z) = field(centre + scale z) for |z| <= radius.

    ``scale`` defaults to 1/sqrt(lam) for eigenfunctions, so the search runs
    in unit-frequency coordinates; each point is reported both in the field's
    own coordinates and in the rescaled window.
    """
    if scale is None:
        lam = getattr(field, "eigenvalue", None)
        scale = 1.0 / math.sqrt(lam) if lam else 1.0
    centre = np.asarray(centre, dtype=float)

    def d(z, alpha):
        return np.asarray(field.derivative(centre + scale * np.atleast_2d(z), alpha)) * scale ** sum(alpha)

    grid = FieldGrid.centered(lambda p: d(p.reshape(-1, 2), (0, 0)).reshape(p.shape[:-1]), radius, step)
    fscale = float(np.max(np.abs(grid.values))) or 1.0
    if seeds is None:
        pts = grid.points()
        seeds = [pts[i, j] for i, j in _local_extrema(grid.values)]
    found: list[CriticalPoint] = []
    for seed in seeds:
        z = np.asarray(seed, dtype=float)
        ok = False
        for _ in range(max_iter):
            g = np.array([d(z, (1, 0))[0], d(z, (0, 1))[0]])
            if np.linalg.norm(g) <= 1e-10 * fscale:
                ok = True
                break
            H = np.array([[d(z, (2, 0))[0], d(z, (1, 1))[0]], [d(z, (1, 1))[0], d(z, (0, 2))[0]]])
            z = z - np.linalg.lstsq(H, g, rcond=1e-12)[0]
            if np.linalg.norm(z) > radius + step:
                break
        if not ok:
            continue
        H = np.array([[d(z, (2, 0))[0], d(z, (1, 1))[0]], [d(z, (1, 1))[0], d(z, (0, 2))[0]]])
        det = float(np.linalg.det(H))
        if abs(det) < 1e-8 * fscale:
            kind = "degenerate"
        elif det < 0:
            kind = "saddle"
        else:
            kind = "max" if H[0, 0] < 0 else "min"
        if any(np.hypot(*(np.array(c.local) - z)) < 1e-6 for c in found):
            continue
        absolute = centre + scale * z
        found.append(CriticalPoint((float(absolute[0]), float(absolute[1])), (float(z[0]), float(z[1])),
                                   float(d(z, (0, 0))[0]), kind, det))
    found.sort(key=lambda c: c.local)
    return found
