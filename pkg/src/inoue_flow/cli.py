"""Batch command-line front end.

Every subcommand reads one JSON configuration, writes its artifacts into the
output directory and exits with 0 on success, 2 on construction or
validation errors, 3 on flow failures and 4 when the obstruction test fails.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, InoueError, ObstructionViolated
from .flow import ncrf_run
from .metrics import (
    HermitianMetricField,
    gauduchon_defect,
    kernel_test_functions,
    metric_from_potential,
    nonconstant_r_metric,
    obstruction_pairing,
    random_potential,
    seam_window,
    tv_metric,
)
from .slf import slf_pipeline
from .surfaces import build_sm, build_splus, domain_grid, seam_residual_sm, surface_report

COMPANION = [[0, 1, 0], [0, 0, 1], [1, 1, 0]]


@dataclass
class RunConfig:
    """Structured run configuration (JSON keys are the field names)."""

    family: str = "SM"
    matrix: list = field(default_factory=lambda: [row[:] for row in COMPANION])
    p: int = 0
    q: int = 0
    r: int = 1
    t_param: list = field(default_factory=lambda: [0.0, 0.0])
    n_torus: int = 16
    n_y2: int = 17
    K: int = None
    gauduchon_tol: float = 1e-6
    solver_tol: float = 1e-8
    t_end: float = 5.0
    dt: float = 1e-3
    sample_every: int = None
    metric: dict = field(default_factory=lambda: {"recipe": "tv"})
    out_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        if self.family not in ("SM", "SPlus"):
            raise ConfigError(f"family must be SM or SPlus, not {self.family!r}")
        for name in ("gauduchon_tol", "solver_tol", "t_end", "dt"):
            if not float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be positive")
        n = int(self.n_torus)
        if n < 1 or n & (n - 1):
            raise ConfigError("n_torus must be a power of two")
        m = int(self.n_y2) - 1
        if m < 2 or m & (m - 1):
            raise ConfigError("n_y2 must be 2^k + 1 with k >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        recipe = self.metric.get("recipe")
        if recipe not in ("tv", "tv_plus_potential", "nonconstant_r", "custom"):
            raise ConfigError(f"unknown metric recipe {recipe!r}")


def load_config(path=None, overrides=None):
    data = {}
    if path:
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, val in (overrides or {}).items():
        if val is not None:
            data[key] = val
    try:
        return RunConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


# ----------------------------------------------------------------------------
# building blocks


def build_surface(cfg):
    if cfg.family == "SM":
        return build_sm(np.asarray(cfg.matrix))
    t = cfg.t_param
    t = complex(t[0], t[1]) if isinstance(t, (list, tuple)) else complex(t)
    return build_splus(np.asarray(cfg.matrix), cfg.p, cfg.q, cfg.r, t)


def build_grid(cfg, surface):
    return domain_grid(surface, int(cfg.n_torus), int(cfg.n_y2))


_SAFE = {name: getattr(np, name) for name in ("sin", "cos", "exp", "log", "sqrt", "tanh", "cosh",
                                              "sinh", "abs")}
_SAFE["pi"] = np.pi


def _custom_metric(cfg, surface, grid):
    x1, y1, x2, y2 = grid.points
    names = dict(_SAFE, x1=x1, y1=y1, x2=x2, y2=y2, logy2=np.log(y2))
    if surface.family == "SM":
        names.update(t1=grid.t[0][..., None], t2=grid.t[1][..., None], t3=grid.t[2][..., None])
    comps = []
    for key, default in (("r", "1"), ("s", "1"), ("u", "0")):
        expr = str(cfg.metric.get(key, default))
        try:
            val = eval(expr, {"__builtins__": {}}, names)  # noqa: S307 - restricted namespace
        except Exception as exc:
            raise ConfigError(f"cannot evaluate metric component {key} = {expr!r}: {exc}") from exc
        comps.append(np.broadcast_to(val, grid.shape))
    return HermitianMetricField(*comps, grid)


def _mode_potential(cfg, surface, grid):
    modes = cfg.metric.get("modes")
    rng = np.random.default_rng(cfg.seed)
    if not modes:
        amp = float(cfg.metric.get("amplitude", 0.1))
        return random_potential(surface, grid, rng, amplitude=amp)
    field_ = np.zeros(grid.n_torus)
    for mode in modes:
        k = np.asarray(mode["k"], dtype=float)
        phase = 2 * np.pi * np.einsum("i,i...->...", k, grid.t) + float(mode.get("phase", 0.0))
        field_ += float(mode["amp"]) * np.cos(phase)
    return field_[..., None] * seam_window(grid.s, grid.L)


def build_metric(cfg, surface, grid):
    recipe = cfg.metric["recipe"]
    if recipe == "tv":
        return tv_metric(grid)
    if recipe == "custom":
        return _custom_metric(cfg, surface, grid)
    if surface.family != "SM":
        raise ConfigError(f"recipe {recipe!r} is available on S_M only")
    if recipe == "nonconstant_r":
        return nonconstant_r_metric(grid)
    return metric_from_potential(surface, grid, _mode_potential(cfg, surface, grid))


def _write(out_dir, name, text):
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _obstruction(cfg, surface, omega):
    tests = kernel_test_functions(omega.grid)
    rep = gauduchon_defect(surface, omega, cfg.gauduchon_tol, tests)
    # pairing against the fiber profile of r itself: the sign-definite witness
    profile = np.asarray(omega.r).mean(axis=(0, 1, 2))
    rep.pairings["r_profile"] = obstruction_pairing(surface, omega, profile)
    return rep


# ----------------------------------------------------------------------------
# subcommands


def cmd_surface(cfg, log=print):
    surface = build_surface(cfg)
    text = surface_report(surface)
    _write(cfg.out_dir, "surface_report.txt", text)
    log(text.rstrip())
    return {"surface_report": text}


def cmd_check_gauduchon(cfg, log=print):
    surface = build_surface(cfg)
    grid = build_grid(cfg, surface)
    omega = build_metric(cfg, surface, grid)
    rep = _obstruction(cfg, surface, omega)
    _write(cfg.out_dir, "obstruction.csv", rep.to_csv())
    _write(cfg.out_dir, "obstruction.txt", rep.to_text())
    log(rep.to_text().rstrip())
    if rep.verdict != "pass":
        raise ObstructionViolated(f"obstruction test failed (R spread {rep.R_spread:.3e})",
                                  pairing=rep.pairings["r_profile"])
    return {"obstruction_report": rep.to_text()}


def cmd_solve_slf(cfg, log=print):
    surface = build_surface(cfg)
    grid = build_grid(cfg, surface)
    omega = build_metric(cfg, surface, grid)
    rep = _obstruction(cfg, surface, omega)
    _write(cfg.out_dir, "obstruction.csv", rep.to_csv())
    if rep.verdict != "pass":
        pairing = rep.pairings["r_profile"]
        raise ObstructionViolated(f"refusing to solve: obstruction pairing {pairing:.6e} "
                                  f"(R spread {rep.R_spread:.3e})", pairing=pairing)
    if surface.family != "SM":
        r = np.asarray(omega.r)
        if np.ptp(r) > cfg.solver_tol:
            raise ConfigError("solve-slf on S+ is limited to metrics with constant r here; "
                              "use inoue_flow.slf.solve_splus directly")
        text = "family = SPlus\nrhs = 0\nslf_defect = 0\n"
        np.save(os.path.join(cfg.out_dir, "potential.npy"), np.zeros(grid.shape))
        _write(cfg.out_dir, "solver_report.txt", text)
        log(text.rstrip())
        return {"solver_report": text, "slf_defect": 0.0}
    pot, srep, omega_u, defect = slf_pipeline(surface, omega, tol=cfg.solver_tol)
    if cfg.K is not None:
        srep.K = int(cfg.K)
    os.makedirs(cfg.out_dir, exist_ok=True)
    np.save(os.path.join(cfg.out_dir, "potential.npy"), pot.u)
    text = srep.to_text() + f"seam_residual = {pot.seam_residual:.6e}\nslf_defect = {defect:.6e}\n"
    _write(cfg.out_dir, "solver_report.txt", text)
    _write(cfg.out_dir, "coefficients.csv", srep.decay_csv())
    log(text.rstrip())
    return {"solver_report": text, "slf_defect": defect, "seam_residual": pot.seam_residual}


def cmd_flow(cfg, log=print):
    surface = build_surface(cfg)
    grid = build_grid(cfg, surface)
    omega = build_metric(cfg, surface, grid)
    trace = ncrf_run(surface, omega, cfg.t_end, cfg.dt, sample_every=cfg.sample_every)
    _write(cfg.out_dir, "flow_trace.csv", trace.to_csv())
    t = trace.t
    for name in trace.COLUMNS[1:]:
        col = trace.column(name)
        lines = "\n".join(f"{a:.17g} {b:.17g}" for a, b in zip(t, col)) + "\n"
        _write(os.path.join(cfg.out_dir, "plot_data"), f"{name}.dat", lines)
    summary = trace.summary()
    text = "\n".join(f"{k} = {v}" for k, v in summary.items()) + "\n"
    _write(cfg.out_dir, "flow_summary.txt", text)
    log(text.rstrip())
    return {"flow_summary": summary}


def _checks(results):
    checks = {}
    if "surface_report" in results:
        for line in results["surface_report"].splitlines():
            if line.startswith("kernel_residual"):
                checks["kernel_residual <= 1e-10"] = float(line.split("=")[1]) <= 1e-10
    if "slf_defect" in results:
        checks["slf_defect <= 1e-6"] = results["slf_defect"] <= 1e-6
    if "seam_residual" in results:
        checks["seam_residual <= 1e-8"] = results["seam_residual"] <= 1e-8
    if "flow_summary" in results:
        fs = results["flow_summary"]
        rate = fs["decay_rate_fit"]
        checks["decay_rate_fit in [0.8, 1.2]"] = bool(0.8 <= rate <= 1.2)
        ratio = fs["curvature_ratio_t_ge_0.5"]
        if np.isfinite(ratio):
            checks["curvature max/min <= 10"] = bool(ratio <= 10)
    return checks


def cmd_report(cfg, log=print):
    """Run every phase and write ``run_report.txt``."""
    results, timings, errors = {}, {}, {}
    phases = (("surface", cmd_surface), ("check-gauduchon", cmd_check_gauduchon),
              ("solve-slf", cmd_solve_slf), ("flow", cmd_flow))
    first_error = None
    for name, fn in phases:
        t0 = time.perf_counter()
        try:
            results.update(fn(cfg, log=lambda *a: None))
        except InoueError as exc:
            errors[name] = f"{type(exc).__name__}: {exc}"
            first_error = first_error or exc
        timings[name] = time.perf_counter() - t0
    lines = ["[config]", json.dumps(asdict(cfg), sort_keys=True)]
    for key in ("surface_report", "obstruction_report", "solver_report"):
        if key in results:
            lines += [f"[{key}]", results[key].rstrip()]
    if "slf_defect" in results:
        lines += ["[slf_defect]", f"{results['slf_defect']:.6e}"]
    if "flow_summary" in results:
        lines += ["[flow_summary]"] + [f"{k} = {v}" for k, v in results["flow_summary"].items()]
    lines += ["[timings_seconds]"] + [f"{k} = {v:.3f}" for k, v in timings.items()]
    if errors:
        lines += ["[errors]"] + [f"{k} = {v}" for k, v in errors.items()]
    lines += ["[checks]"] + [f"{k}: {'PASS' if v else 'FAIL'}" for k, v in _checks(results).items()]
    text = "\n".join(lines) + "\n"
    _write(cfg.out_dir, "run_report.txt", text)
    log(text.rstrip())
    if first_error is not None:
        raise first_error
    return results


COMMANDS = {
    "surface": cmd_surface,
    "check-gauduchon": cmd_check_gauduchon,
    "solve-slf": cmd_solve_slf,
    "flow": cmd_flow,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="inoue-flow", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="random seed (overrides seed)")
    parser.add_argument("--resolution", type=int,
                        help="torus resolution n; sets n_torus = n and n_y2 = n + 1")
    parser.add_argument("--tmax", type=float, help="final flow time (overrides t_end)")
    parser.add_argument("--dt", type=float, help="flow time step (overrides dt)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, {"out_dir": args.out, "seed": args.seed,
                                        "n_torus": args.resolution,
                                        "n_y2": args.resolution + 1 if args.resolution else None,
                                        "t_end": args.tmax,
                                        "dt": args.dt})
        COMMANDS[args.command](cfg)
    except InoueError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, ObstructionViolated) and exc.pairing is not None:
            print(f"pairing = {exc.pairing:.6e}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
