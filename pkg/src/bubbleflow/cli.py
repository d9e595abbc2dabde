"""Command line front end for the double bubble laboratory.

Subcommands:
  geometry   closed-form data of one standard bubble
  nullspace  analytic null basis on the grid + discrete residuals
  spectrum   eigenvalues of the linearized pencil -> modes.csv
  verify     sign / lemma suites -> signs.csv, exit 1 on any failure
  flow       stability experiment -> trace.csv + optional snapshots
  report     render curves_<step>.csv snapshots in out.dir to SVG

Configuration is plain key=value text (# comments) read with
--config FILE, overridden by --key value flags (CLI wins).  Keys use
dotted names (bubble.r, grid.n, flow.dt, flow.T, perturb.kind,
perturb.amplitude, seed, out.dir, snapshots.every,
verify.gamma_points, spectrum.k); short aliases cover the common
ones.  The environment variable BUBBLEFLOW_OUT overrides out.dir.
CSV output uses 17 significant digits so identical config and seed
reproduce byte-identical files.

Exit codes: 0 success, 1 suite failure (with a per-assertion table),
2 usage error, 3 invalid configuration value (naming the key).
"""

from __future__ import annotations

import math
import os
import sys
from pathlib import Path

import numpy as np

from . import flow as flow_mod
from . import geometry, lab, linops, perturbation

_COMMANDS = ("geometry", "nullspace", "spectrum", "verify", "flow", "report")

_DEFAULTS = {
    "bubble.a1": 0.0,
    "bubble.a2": 0.0,
    "bubble.r": 1.0,
    "bubble.gamma": geometry.PI / 3,
    "bubble.theta": 0.0,
    "grid.n": 64,
    "flow.dt": 1e-3,
    "flow.T": 5.0,
    "perturb.kind": "random",
    "perturb.amplitude": 1e-2,
    "perturb.width_fraction": 1.0,
    "seed": 0,
    "out.dir": "out",
    "snapshots.every": 0,
    "verify.gamma_points": 25,
    "spectrum.k": 20,
}

_ALIASES = {
    "a1": "bubble.a1",
    "a2": "bubble.a2",
    "r": "bubble.r",
    "gamma": "bubble.gamma",
    "theta": "bubble.theta",
    "n": "grid.n",
    "dt": "flow.dt",
    "T": "flow.T",
    "kind": "perturb.kind",
    "amplitude": "perturb.amplitude",
    "width-fraction": "perturb.width_fraction",
    "seed": "seed",
    "out": "out.dir",
    "every": "snapshots.every",
    "gamma-points": "verify.gamma_points",
    "k": "spectrum.k",
}

_FLOAT_KEYS = {"bubble.a1", "bubble.a2", "bubble.r", "bubble.gamma",
               "bubble.theta", "flow.dt", "flow.T", "perturb.amplitude",
               "perturb.width_fraction"}
_INT_KEYS = {"grid.n", "seed", "snapshots.every", "verify.gamma_points",
             "spectrum.k"}

_KINDS = ("random", "bump", "null1", "null2", "null3", "null4", "null5")


class _ConfigError(Exception):
    """Invalid value for a known key; carries the key name (exit 3)."""

    def __init__(self, key, message):
        super().__init__(message)
        self.key = key


class _UsageError(Exception):
    """Malformed command line (exit 2)."""


def _usage() -> str:
    return (
        "usage: bubbleflow <command> [--config FILE] [--key value ...]\n"
        "commands: " + " | ".join(_COMMANDS) + "\n"
        "keys: " + " ".join(sorted(_DEFAULTS)) + "\n"
        "aliases: " + " ".join(f"--{a}" for a in sorted(_ALIASES)) + "\n"
        "BUBBLEFLOW_OUT overrides out.dir\n"
    )


def _coerce(key: str, raw: str):
    if key in _FLOAT_KEYS:
        try:
            value = float(raw)
        except ValueError:
            raise _ConfigError(key, f"cannot parse {raw!r} as a number")
        if not math.isfinite(value):
            raise _ConfigError(key, f"value {raw!r} is not finite")
        return value
    if key in _INT_KEYS:
        try:
            return int(raw)
        except ValueError:
            raise _ConfigError(key, f"cannot parse {raw!r} as an integer")
    return raw


def _validate(cfg: dict) -> None:
    def bad(key, msg):
        raise _ConfigError(key, msg)

    if cfg["bubble.r"] <= 0:
        bad("bubble.r", "radius must be positive")
    if not (0 < cfg["bubble.gamma"] < geometry.GAMMA_MAX):
        bad("bubble.gamma", "gamma must lie in (0, 2*pi/3)")
    if cfg["grid.n"] < 16:
        bad("grid.n", "need at least 16 nodes per arc")
    if cfg["flow.dt"] <= 0:
        bad("flow.dt", "time step must be positive")
    if cfg["flow.T"] <= 0:
        bad("flow.T", "final time must be positive")
    if cfg["perturb.amplitude"] < 0:
        bad("perturb.amplitude", "amplitude must be nonnegative")
    if not (0 < cfg["perturb.width_fraction"] <= 1.0):
        bad("perturb.width_fraction", "width fraction must be in (0, 1]")
    if cfg["perturb.kind"] not in _KINDS:
        bad("perturb.kind",
            "kind must be one of " + ", ".join(_KINDS))
    if cfg["seed"] < 0:
        bad("seed", "seed must be nonnegative")
    if cfg["snapshots.every"] < 0:
        bad("snapshots.every", "snapshot stride must be nonnegative")
    if cfg["verify.gamma_points"] < 1:
        bad("verify.gamma_points", "need at least one gamma point")
    if cfg["spectrum.k"] < 6:
        bad("spectrum.k", "need at least six modes")


def _read_config_file(path: str) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise _ConfigError("config", f"cannot read {path}: {exc}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise _ConfigError(
                "config", f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _DEFAULTS:
            raise _ConfigError(key, f"{path}:{lineno}: unknown key")
        out[key] = _coerce(key, val)
    return out


def _parse_args(args) -> dict:
    """CLI pairs --key value; returns {dotted key: coerced value}."""
    pairs = {}
    i = 0
    while i < len(args):
        tok = args[i]
        if not tok.startswith("--"):
            raise _UsageError(f"unexpected argument {tok!r}")
        name = tok[2:]
        if i + 1 >= len(args):
            raise _UsageError(f"flag {tok} needs a value")
        raw = args[i + 1]
        i += 2
        if name == "config":
            pairs["config"] = raw
            continue
        key = _ALIASES.get(name, name)
        if key not in _DEFAULTS:
            raise _UsageError(f"unknown flag {tok}")
        pairs[key] = _coerce(key, raw)
    return pairs


def _resolve_config(args) -> dict:
    cli = _parse_args(args)
    cfg = dict(_DEFAULTS)
    path = cli.pop("config", None)
    if path is not None:
        cfg.update(_read_config_file(path))
    cfg.update(cli)
    env_out = os.environ.get("BUBBLEFLOW_OUT")
    if env_out:
        cfg["out.dir"] = env_out
    _validate(cfg)
    return cfg


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _bubble_of(cfg) -> geometry.StandardBubble:
    params = geometry.BubbleParams(cfg["bubble.a1"], cfg["bubble.a2"],
                                   cfg["bubble.r"], cfg["bubble.gamma"],
                                   cfg["bubble.theta"])
    return geometry.standard_bubble(params)


def _out_dir(cfg) -> Path:
    path = Path(cfg["out.dir"])
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _svg_document(curves) -> str:
    """Plain SVG 1.1, one path per arc, y axis flipped, auto-fit."""
    pts = np.vstack([np.asarray(c, dtype=float) for c in curves])
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    span = max(xmax - xmin, ymax - ymin, 1e-9)
    pad = 0.05 * span
    view = (xmin - pad, -ymax - pad,
            (xmax - xmin) + 2 * pad, (ymax - ymin) + 2 * pad)
    stroke = 0.004 * span
    colors = ("#1f6fb4", "#c23b22", "#2c8a4b")
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
           f'viewBox="{view[0]:.8g} {view[1]:.8g} {view[2]:.8g} '
           f'{view[3]:.8g}">']
    for curve, color in zip(curves, colors):
        arr = np.asarray(curve, dtype=float)
        coords = " L ".join(f"{p[0]:.8g} {-p[1]:.8g}" for p in arr)
        out.append(f'<path d="M {coords}" fill="none" stroke="{color}" '
                   f'stroke-width="{stroke:.6g}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _write_snapshot(out: Path, step: int, curves) -> None:
    rows = []
    for arc, curve in enumerate(curves, start=1):
        for p in np.asarray(curve, dtype=float):
            rows.append((str(arc), _fmt(p[0]), _fmt(p[1])))
    _write_csv(out / f"curves_{step}.csv", ("arc", "px", "py"), rows)
    with open(out / f"curves_{step}.svg", "w", newline="\n") as fh:
        fh.write(_svg_document(curves))


def _cmd_geometry(cfg) -> int:
    bubble = _bubble_of(cfg)
    p = bubble.params
    a1, a2 = geometry.enclosed_areas(bubble)

    def triple(t):
        return "(" + ", ".join(_fmt(v) for v in t) + ")"

    def point(pt):
        return "(" + ", ".join(_fmt(v) for v in pt) + ")"

    print("params =", triple(p.as_tuple()))
    print("kappa =", triple(bubble.kappa))
    print("half_len =", triple(bubble.half_len))
    print("q =", triple(bubble.q))
    for i, (center, radius) in enumerate(zip(bubble.centers, bubble.radii),
                                         start=1):
        if center is None:
            print(f"arc{i}: straight segment")
        else:
            print(f"arc{i}: center = {point(center)}, radius = {_fmt(radius)}")
    print("junction_plus =", point(bubble.junction_plus))
    print("junction_minus =", point(bubble.junction_minus))
    print("areas =", "(" + _fmt(a1) + ", " + _fmt(a2) + ")")
    print("total_length =", _fmt(geometry.total_length(bubble)))
    return 0


def _cmd_nullspace(cfg) -> int:
    bubble = _bubble_of(cfg)
    grid = perturbation.make_grid(bubble, cfg["grid.n"])
    pencil = linops.assemble_pencil(bubble, grid)
    basis = linops.null_basis(bubble, grid)
    rows = []
    for i in range(3):
        for j in range(grid.n[i]):
            rows.append((str(i + 1), _fmt(grid.x[i][j]),
                         *(_fmt(basis[k][i][j]) for k in range(5))))
    out = _out_dir(cfg)
    _write_csv(out / "nullspace.csv",
               ("arc", "x", "v1", "v2", "v3", "v4", "v5"), rows)
    print(f"wrote {out / 'nullspace.csv'}")
    for k in range(5):
        res = linops.pencil_residual(pencil, basis[k])
        print(f"v{k + 1} pencil residual = {res:.6e}")
    return 0


def _cmd_spectrum(cfg) -> int:
    bubble = _bubble_of(cfg)
    grid = perturbation.make_grid(bubble, cfg["grid.n"])
    pencil = linops.assemble_pencil(bubble, grid)
    report = linops.spectrum(pencil, k=cfg["spectrum.k"])
    rows = []
    for j, lam in enumerate(report.eigenvalues):
        vec = linops.unstack_field(grid, np.real(report.vectors[:, j]))
        c, _ = linops.c_of(bubble, grid, vec)
        rows.append((str(j), _fmt(lam.real), _fmt(lam.imag),
                     str(int(report.is_null[j])),
                     _fmt(c[0]), _fmt(c[1]), _fmt(c[2])))
    out = _out_dir(cfg)
    _write_csv(out / "modes.csv",
               ("index", "re_lambda", "im_lambda", "is_null",
                "c1", "c2", "c3"), rows)
    print(f"wrote {out / 'modes.csv'}")
    print(f"null_count = {report.null_count}")
    print(f"lambda6 = {_fmt(report.lambda6)}")
    print(f"null_tol = {_fmt(report.null_tol)}")
    return 0


def _verify_rows(cfg):
    """(name, value, passed) rows of the full lemma suite."""
    rows = []
    r = cfg["bubble.r"]
    n = cfg["grid.n"]

    gammas = np.linspace(0.1, geometry.GAMMA_MAX - 0.1,
                         cfg["verify.gamma_points"])
    sign_rows = linops.sign_suite(gammas, r=r, n=512)
    by_name = {}
    for gamma, name, value, passed in sign_rows:
        prev = by_name.get(name)
        if prev is None or (prev[2] and not passed) \
                or (prev[2] == passed and abs(value) < abs(prev[1])):
            by_name[name] = (gamma, value, passed)
    for name, _, _ in linops._SIGN_ASSERTIONS:
        gamma, value, passed = by_name[name]
        ok = all(p for g, nm, v, p in sign_rows if nm == name)
        rows.append((f"signs.{name}", value, ok))

    bubble = _bubble_of(cfg)
    l1 = bubble.half_len[0]
    ratios = tuple(l1 / li for li in bubble.half_len)
    dets = []
    for radius in (0.1, 1.0, 10.0, 100.0, 1000.0):
        for phi in np.linspace(-geometry.PI / 2, geometry.PI / 2, 10):
            lam = radius * complex(math.cos(phi), math.sin(phi))
            dets.append(abs(linops.ls_determinant(lam, ratios)))
    rows.append(("lopatinskii.min_abs_det", min(dets), min(dets) > 1e-8))

    residuals = {}
    for nn in (64, 128, 256):
        gr = perturbation.make_grid(bubble, nn)
        pen = linops.assemble_pencil(bubble, gr)
        basis = linops.null_basis(bubble, gr)
        residuals[nn] = [linops.pencil_residual(pen, v) for v in basis]
    for coarse, fine in ((64, 128), (128, 256)):
        ratio = [residuals[coarse][k] / residuals[fine][k] for k in range(5)]
        worst = min(ratio, key=lambda v: -abs(v - 4.0))
        ok = all(3.0 <= v <= 5.0 for v in ratio)
        rows.append((f"null_residual.ratio_{coarse}_{fine}", worst, ok))

    grid = perturbation.make_grid(bubble, n)
    pencil = linops.assemble_pencil(bubble, grid)
    basis = linops.null_basis(bubble, grid)
    ss = linops.semisimplicity_check(pencil, basis)
    rows.append(("semisimplicity.cluster_size", ss.null_count,
                 ss.null_count == 5))
    rows.append(("semisimplicity.gram_smin", ss.gram_smin,
                 ss.verdict == "semisimple"))
    # angle tolerance 1e-2 is calibrated at n = 128; scale as h^2
    angle_tol = 1e-2 * max(1.0, ((127.0 / (n - 1)) ** 2))
    rows.append(("semisimplicity.max_angle", ss.max_angle,
                 ss.max_angle <= angle_tol))
    return rows, sign_rows


def _cmd_verify(cfg) -> int:
    rows, sign_rows = _verify_rows(cfg)
    out = _out_dir(cfg)
    _write_csv(out / "signs.csv", ("gamma", "assertion_id", "value", "pass"),
               [(_fmt(g), name, _fmt(v), str(int(p)))
                for g, name, v, p in sign_rows])
    width = max(len(name) for name, _, _ in rows) + 2
    failures = 0
    for name, value, passed in rows:
        status = "PASS" if passed else "FAIL"
        failures += not passed
        print(f"{name:<{width}}{value:>14.6g}  {status}")
    print(f"wrote {out / 'signs.csv'}")
    if failures:
        print(f"{failures} of {len(rows)} checks failed")
        return 1
    print(f"all {len(rows)} checks passed")
    return 0


def _cmd_flow(cfg) -> int:
    out = _out_dir(cfg)
    config = lab.RunConfig(
        bubble=_bubble_of(cfg).params,
        n=cfg["grid.n"],
        dt=cfg["flow.dt"],
        t_end=cfg["flow.T"],
        kind=cfg["perturb.kind"],
        amplitude=cfg["perturb.amplitude"],
        seed=cfg["seed"],
        width_fraction=cfg["perturb.width_fraction"],
        snapshot_every=cfg["snapshots.every"],
    )

    def on_snapshot(step, _t, curves):
        _write_snapshot(out, step, curves)

    callback = on_snapshot if cfg["snapshots.every"] > 0 else None
    report = lab.stability_run(config, on_snapshot=callback)
    tr = report.trace
    rows = [
        (_fmt(tr.t[j]), _fmt(tr.length[j]), _fmt(tr.area1[j]),
         _fmt(tr.area2[j]), _fmt(tr.max_g[j]), _fmt(tr.compat[j]),
         _fmt(tr.dist_to_eq[j]))
        for j in range(tr.t.shape[0])
    ]
    _write_csv(out / "trace.csv",
               ("t", "length", "A1", "A2", "max_g", "compat", "dist_to_eq"),
               rows)
    print(f"wrote {out / 'trace.csv'}")
    print(f"lambda6 = {_fmt(report.lambda6)}")
    print(f"fitted_rate = {_fmt(report.fitted_rate)}")
    if report.lambda6 > 0:
        print(f"rate_over_lambda6 = {_fmt(report.fitted_rate / report.lambda6)}")
    lp = report.limit_params
    print("limit_params =", "(" + ", ".join(_fmt(v) for v in lp.as_tuple())
          + ")")
    print(f"area_error = {_fmt(report.area_error)}")
    print(f"length_violation = {_fmt(report.length_violation)}")
    if report.flagged:
        print("FAIL: length increased beyond tolerance during the run")
        return 1
    return 0


def _cmd_report(cfg) -> int:
    out = Path(cfg["out.dir"])
    if not out.is_dir():
        raise _ConfigError("out.dir", f"{out} is not a directory")
    count = 0
    for csv_path in sorted(out.glob("curves_*.csv")):
        arcs = {}
        lines = csv_path.read_text().splitlines()
        for line in lines[1:]:
            arc, px, py = line.split(",")
            arcs.setdefault(int(arc), []).append((float(px), float(py)))
        curves = [np.array(arcs[key]) for key in sorted(arcs)]
        svg_path = csv_path.with_suffix(".svg")
        with open(svg_path, "w", newline="\n") as fh:
            fh.write(_svg_document(curves))
        count += 1
    print(f"rendered {count} snapshot(s) in {out}")
    return 0


_HANDLERS = {
    "geometry": _cmd_geometry,
    "nullspace": _cmd_nullspace,
    "spectrum": _cmd_spectrum,
    "verify": _cmd_verify,
    "flow": _cmd_flow,
    "report": _cmd_report,
}


def dispatch(argv) -> int:
    """Run one subcommand; returns the process exit code."""
    if not argv:
        sys.stderr.write(_usage())
        return 2
    command = argv[0]
    if command in ("-h", "--help", "help"):
        sys.stdout.write(_usage())
        return 0
    if command not in _COMMANDS:
        sys.stderr.write(f"unknown command {command!r}\n" + _usage())
        return 2
    try:
        cfg = _resolve_config(argv[1:])
        return _HANDLERS[command](cfg)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n" + _usage())
        return 2
    except _ConfigError as exc:
        sys.stderr.write(f"error: key {exc.key}: {exc}\n")
        return 3
    except (geometry.ConvergenceError, perturbation.FoldOverError,
            flow_mod.RegimeError, flow_mod.AdmissibilityError,
            lab.ChartDomainError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
