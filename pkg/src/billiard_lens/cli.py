"""Command-line runner: one subcommand per experiment, JSON reports plus CSV (and optional PNG) artifacts.

Exit status is 0 on success, 2 when the request is invalid and 3 when a
computation breaks one of its numerical contracts.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import billiards, kernel, lattice, localize, nodal, obstruction
from .billiards import BilliardSpec, FieldGrid
from .waves import BesselTranslateSum, WaveSpec, symmetrize, table_row

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
DEFAULT_SEED = 20240607


class NumericContractViolation(RuntimeError):
    """A computed quantity missed a tolerance the command promises."""


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def _fractions(text) -> list[Fraction]:
    items = text if isinstance(text, (list, tuple)) else str(text).split(",")
    return [Fraction(str(v).strip()) for v in items]


def _wave(obj) -> WaveSpec:
    if obj is None:
        return WaveSpec(BesselTranslateSum(np.zeros((1, 2)), np.array([1.0]), 2))
    return WaveSpec.from_json(obj)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _monotone(values, decreasing: bool = True) -> bool:
    pairs = zip(values, values[1:])
    return all(b < a for a, b in pairs) if decreasing else all(b > a for a, b in pairs)


# ------------------------------------------------------------------ commands


def cmd_shell(p: dict, out: Path) -> dict:
    form = lattice.QuadraticForm(tuple(_ints(p.get("form", "1,1"))))
    rows, shells = [], []
    for mu in _ints(p["mus"]):
        shell = lattice.enumerate_shell(form, mu)
        shells.append({"mu": mu, "count": len(shell), "count_D": len(shell.points_D),
                       "count_N": len(shell.points_N),
                       "discrepancy": lattice.angular_discrepancy(shell) if len(shell) else None})
        rows += [(mu, *pt) for pt in shell.points]
    _write_csv(out / "shell_points.csv", ["mu"] + [f"n{i}" for i in range(form.d)], rows)
    return {"form": [str(c) for c in form.coeffs], "shells": shells}


def cmd_kernel(p: dict, out: Path) -> dict:
    mus = _ints(p.get("mus", "5,65,1105,32045"))
    R, step = float(p.get("R", 4.0)), float(p.get("step", 0.05))
    form = lattice.QuadraticForm((1, 1))
    errs = [kernel.kernel_vs_bessel(lattice.enumerate_shell(form, mu), "square", R, step) for mu in mus]
    _write_csv(out / "kernel.csv", ["mu", "sup_error"], zip(mus, errs))
    if p.get("png"):
        kernel.save_heatmap(lattice.enumerate_shell(form, mus[-1]), "square", out / "kernel.png")
    return {"mus": mus, "R": R, "step": step, "sup_errors": errs, "monotone_decrease": _monotone(errs)}


def cmd_localize(p: dict, out: Path, workers: int) -> dict:
    config = localize.RunConfig.from_json(p)
    report = localize.run_localization(config, workers)
    _write_csv(out / "localize.csv", ["mu", "fraction", "best_decile", "q1", "median", "q3"],
               [(r["mu"], r["fraction"], r["best_decile"], *r["quartiles"]) for r in report["shells"]])
    return report


def cmd_fixed(p: dict, out: Path) -> dict:
    spec = BilliardSpec.from_json(p["spec"])
    target = _wave(p.get("target")).wave
    if p.get("symmetrize", False):
        target = symmetrize(target, table_row(localize._table_row_name(spec)).group(), spec.bc)
    ratios = _fractions(p.get("ratios", "1/2,1/2"))
    rows = []
    for mu in _ints(p["mus"]):
        e = localize.build_fixed_point(spec, target, mu, ratios)
        z0 = e.meta["base_point"]
        rows.append({"mu": mu, "s": e.meta["s"], "eigenvalue": e.eigenvalue,
                     "projection_loss": e.meta["projection_loss"],
                     "parity_residual": localize.parity_residual(e, z0, 1.0),
                     "error": localize.localization_error(e, z0, target, float(p.get("window_R", 4.0)))})
    _write_csv(out / "fixed.csv", ["mu", "error", "parity_residual"],
               [(r["mu"], r["error"], r["parity_residual"]) for r in rows])
    return {"spec": spec.to_json(), "ratios": [str(r) for r in ratios], "shells": rows}


def cmd_lattice_polygon(p: dict, out: Path, rng: np.random.Generator) -> dict:
    decomp = localize.CellDecomposition.equilateral_parallelogram(p.get("bc", "D"))
    target = _wave(p.get("target")).wave
    count = int(p.get("points", 20))
    rows = []
    for mu in _ints(p.get("mus", "53599")):
        local = decomp.base.interior_samples(count, seed=int(rng.integers(2**31)))
        for i, q in enumerate(local):
            z0 = decomp.apply(i % len(decomp), q)
            fields = localize.build_on_lattice_polygon(decomp, target, mu, z0)
            best = min(localize.piecewise_error(f, z0, target) for f in fields)
            bench = localize.localization_error(
                localize.build_localized(localize.LocalizationJob(decomp.base, target, mu, tuple(q))), q, target)
            jump = max(localize.gluing_residual(f)[0] for f in fields)
            rows.append({"mu": mu, "z0": [float(v) for v in z0], "min_error": best, "benchmark": bench,
                         "gluing": jump})
    gluing = max(r["gluing"] for r in rows)
    if gluing > 1e-8:
        raise NumericContractViolation(f"cross-line continuity residual {gluing:.3g} exceeds 1e-8")
    _write_csv(out / "lattice_polygon.csv", ["mu", "x", "y", "min_error", "benchmark"],
               [(r["mu"], *r["z0"], r["min_error"], r["benchmark"]) for r in rows])
    med = float(np.median([r["min_error"] for r in rows]))
    bench = float(np.median([r["benchmark"] for r in rows]))
    return {"decomposition": decomp.to_json(), "points": rows, "median_min_error": med,
            "median_benchmark": bench, "gluing": gluing}


def cmd_obstruct_rect(p: dict, out: Path, seed: int) -> dict:
    res = obstruction.rectangle_contrast(int(p.get("count", 20)), seed)
    ceiling = float(p.get("threshold", 1e-10))
    _write_csv(out / "rect.csv", ["kind", "residual"],
               [("eigenfunction", v) for v in res["eigenfunctions"]] + [("wave", v) for v in res["waves"]])
    res["reports"] = [obstruction.report("rect-jet", v, ceiling) for v in res["eigenfunctions"] + res["waves"]]
    return res


def cmd_obstruct_disk(p: dict, out: Path, seed: int) -> dict:
    res = obstruction.disk_contrast(int(p.get("count", 10)), seed, float(p.get("R", 4.0)), int(p.get("M", 3)))
    ceiling = float(p.get("threshold", 1e-6))
    rows = [(k, v) for k in ("eigenfunctions", "profiles", "waves") for v in res[k]]
    _write_csv(out / "disk.csv", ["kind", "residual"], rows)
    res["reports"] = [obstruction.report("disk-radial", v, ceiling) for _, v in rows]
    return res


def cmd_obstruct_robin(p: dict, out: Path, seed: int, workers: int) -> dict:
    sigma = float(p.get("sigma", 0.3))
    span = obstruction.robin_span(sigma, int(p.get("count", 5)), seed, int(p.get("T", 8)))
    wave = _wave(p.get("target") or {"kind": "translates", "translates": [
        {"center": [0.0, 0.0], "coeff": 1.0}, {"center": [1.2, 0.4], "coeff": 0.7}]}).wave
    floor = obstruction.wave_floor(wave, int(p.get("T", 8)), int(p.get("restarts", 50)), seed,
                                   float(p.get("R", 8.0)), float(p.get("h", 0.35)), workers)
    ceiling = float(p.get("threshold", 1e-8))
    _write_csv(out / "robin.csv", ["m", "n", "residual"], [(r["m"], r["n"], r["residual"]) for r in span["fits"]])
    return {"eigenfunctions": span, "target_floor": floor,
            "reports": [obstruction.report("robin-span", r["residual"], ceiling) for r in span["fits"]]
            + [obstruction.report("robin-span", floor["residual"], ceiling)]}


def cmd_robin_freqs(p: dict, out: Path) -> dict:
    sigma, n_max = float(p.get("sigma", 0.5)), int(p.get("n_max", 20))
    ks = billiards.robin_frequencies(sigma, n_max)
    res = [billiards.robin_residual(float(k), sigma) for k in ks]
    _write_csv(out / "robin_freqs.csv", ["n", "k", "residual"], [(n, k, r) for n, (k, r) in enumerate(zip(ks, res))])
    return {"sigma": sigma, "frequencies": [float(k) for k in ks], "residuals": [float(r) for r in res]}


def cmd_nodal(p: dict, out: Path) -> dict:
    spec = BilliardSpec.from_json(p.get("spec", {"kind": "rectangle", "bc": "N", "side_squares": ["1"]}))
    target = _wave(p.get("target")).wave
    mu = int(p.get("mu", 32045))
    z0 = tuple(_floats(p.get("z0", "0.37,0.41")))
    radius, step = float(p.get("radius", 6.5)), float(p.get("step", 0.1))
    e = localize.build_localized(localize.LocalizationJob(spec, target, mu, z0))
    grid = FieldGrid.centered(lambda q: localize.rescaled_field(e, z0, q.reshape(-1, 2)).reshape(q.shape[:-1]),
                              radius, step)
    analysis = nodal.extract_nodal(grid)
    comps = analysis.compact_components()
    reference = nodal.extract_nodal(FieldGrid.centered(
        lambda q: target(q.reshape(-1, 2)).reshape(q.shape[:-1]), radius, step))
    (out / "nodal.geojson").write_text(json.dumps(analysis.to_geojson(), sort_keys=True) + "\n")
    grid.to_csv(out / "nodal_grid.csv")
    return {"mu": mu, "z0": list(z0), **analysis.summary(),
            "hausdorff_to_target": nodal.contour_distance(analysis, reference)
            if comps and reference.compact_components() else None,
            "components": [{"id": k, "area": analysis.area(k), "tree": analysis.nesting_tree(k)} for k in comps]}


def cmd_covariance(p: dict, out: Path, seed: int) -> dict:
    pairs = kernel.probe_pairs(int(p.get("pairs", 20)), float(p.get("radius", 3.0)), seed)
    rows = [kernel.covariance_deviation(mu, p.get("bc", "D"), int(p.get("grid", 50)), pairs)
            for mu in _ints(p.get("mus", "1105,32045"))]
    _write_csv(out / "covariance.csv", ["mu", "max_deviation"], [(r["mu"], r["max_deviation"]) for r in rows])
    return {"shells": rows, "shrinks": _monotone([r["max_deviation"] for r in rows])}


def cmd_genus(p: dict, out: Path) -> dict:
    angles = _fractions(p["angles"])
    return {"angles": [str(a) for a in angles], "genus": billiards.genus_of_polygon(angles)}


COMMANDS = {
    "shell": (cmd_shell, ()),
    "kernel": (cmd_kernel, ()),
    "localize": (cmd_localize, ("workers",)),
    "fixed": (cmd_fixed, ()),
    "lattice-polygon": (cmd_lattice_polygon, ("rng",)),
    "obstruct-rect": (cmd_obstruct_rect, ("seed",)),
    "obstruct-disk": (cmd_obstruct_disk, ("seed",)),
    "obstruct-robin": (cmd_obstruct_robin, ("seed", "workers")),
    "robin-freqs": (cmd_robin_freqs, ()),
    "nodal": (cmd_nodal, ()),
    "covariance": (cmd_covariance, ("seed",)),
    "genus": (cmd_genus, ()),
}

# per-command overrides: flag name -> help
OVERRIDES = {
    "shell": {"mus": "comma-separated shell labels", "form": "diagonal form coefficients"},
    "kernel": {"mus": "comma-separated shell labels", "R": "window radius", "step": "grid step",
               "png": "also write a heatmap"},
    "localize": {},
    "fixed": {"mus": "comma-separated shell labels", "ratios": "base point as fractions of the frame units"},
    "lattice-polygon": {"mus": "comma-separated shell labels", "points": "number of base points"},
    "obstruct-rect": {"count": "samples per family"},
    "obstruct-disk": {"count": "samples per family", "R": "segment length", "M": "blocks"},
    "obstruct-robin": {"sigma": "Robin parameter", "T": "plane waves", "restarts": "random starts"},
    "robin-freqs": {"sigma": "Robin parameter", "n_max": "largest index"},
    "nodal": {"mu": "shell label", "radius": "window radius", "step": "grid step"},
    "covariance": {"mus": "comma-separated shell labels", "grid": "base grid size", "bc": "D or N"},
    "genus": {"angles": "interior angles as multiples of pi, e.g. 1/2,1/2,1/2,1/2"},
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="billiard-lens", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file with the command's parameters")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--threads", type=int, help="worker processes (default: $BILLIARD_LENS_THREADS or 1)")
        sp.add_argument("--seed", type=int, default=DEFAULT_SEED)
        for flag, text in OVERRIDES[name].items():
            if flag == "png":
                sp.add_argument("--png", action="store_true", default=None, help=text)
            else:
                sp.add_argument(f"--{flag.replace('_', '-')}", dest=flag, help=text)
    return parser


def _threads(arg) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("BILLIARD_LENS_THREADS")
        n = int(env) if env else 1
    if n < 1:
        raise ValueError("thread count must be positive")
    return n


def _params(args) -> dict:
    params: dict = {}
    if args.config is not None:
        params = json.loads(args.config.read_text())
        if not isinstance(params, dict) or not params:
            raise ValueError("config must be a non-empty JSON object")
    for flag in OVERRIDES[args.command]:
        value = getattr(args, flag, None)
        if value is not None:
            params[flag] = value
    return params


def run(argv=None) -> tuple[int, dict]:
    args = build_parser().parse_args(argv)
    out = args.out
    try:
        params = _params(args)
        workers = _threads(args.threads)
        func, extras = COMMANDS[args.command]
        kwargs = {"workers": workers, "seed": args.seed, "rng": np.random.default_rng(args.seed)}
        out.mkdir(parents=True, exist_ok=True)
        with np.errstate(all="ignore"):
            report = func(params, out, *(kwargs[k] for k in extras))
        status = EXIT_OK
    except (NumericContractViolation, lattice.SearchExhausted, FloatingPointError, np.linalg.LinAlgError) as exc:
        report, status = {"error": "numeric", "reason": str(exc)}, EXIT_NUMERIC
    except (ValueError, KeyError, TypeError, json.JSONDecodeError, OSError, ZeroDivisionError) as exc:
        report, status = {"error": "validation", "reason": f"{type(exc).__name__}: {exc}"}, EXIT_INVALID
    report = {"command": args.command, "seed": args.seed, **report}
    if status == EXIT_OK:
        _write_json(out / f"{args.command}.json", report)
    else:
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
    return status, report


def main(argv=None) -> int:
    status, _ = run(argv)
    return status


if __name__ == "__main__":
    sys.exit(main())
