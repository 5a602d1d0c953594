"""Command-line front end.

    transmission <mode> --config <path> [--out <dir>] [--seed <u64>] [--jobs <k>]

Modes: simulate, spectrum, constants, classify, sweep, pairs.  Any config
key can be overridden through the environment as TRANSMISSION_SECTION__KEY.
Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 blow-up
detected by a simulate run.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .assembly import (
    AssemblyError,
    BetaCoefficient,
    DiffusionTensor,
    KernelSpec,
    build_operator,
)
from .config import ConfigError, SimConfig, parse_config, serialize_config
from .constants import compute_constants_report, save_constants
from .diagnostics import export_trajectory_csv, squeezing_check
from .dynamics import Nonlinearity, StepControl, integrate
from .geometry import (
    GeometryError,
    KochPrefractal,
    Segment,
    build_interface_measure,
    build_square_mesh,
    export_measure_csv,
    export_mesh_csv,
)
from .operators import (
    NumericError,
    export_spectrum_csv,
    spectrum,
)
from .regimes import classify, save_verdict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_BLOWUP = 0, 2, 3, 4


def build_problem(cfg: SimConfig):
    g, ph = cfg.geometry, cfg.physics
    if g.interface == "segment":
        spec = Segment(g.y0)
    else:
        spec = KochPrefractal(level=g.koch_level, y0=g.y0)
    mesh = build_square_mesh(g.n, spec, dirichlet_side=g.dirichlet_side)
    measure = build_interface_measure(mesh, total_mass=g.total_mass)
    D = DiffusionTensor.constant(mesh, ph.d11, ph.d12, ph.d22, d0=ph.d0)
    beta = BetaCoefficient(np.full(len(measure.weights), ph.beta), beta0=ph.beta0)
    kernel = KernelSpec(s=ph.s, dim_d=measure.dim_d, c0=ph.c0, c1=ph.c1)
    op = build_operator(mesh, measure, D, beta, kernel, delta=ph.delta)
    f = Nonlinearity(terms=tuple(cfg.bulk_nonlinearity.pairs()),
                     constant=cfg.bulk_nonlinearity.constant)
    h = Nonlinearity(terms=tuple(cfg.interface_nonlinearity.pairs()),
                     constant=cfg.interface_nonlinearity.constant)
    return mesh, measure, op, f, h


def initial_state(cfg: SimConfig, op) -> np.ndarray:
    ini = cfg.initial
    if ini.kind == "eigenvector":
        spec = spectrum(op, k=min(ini.index, op.n_free))
        return ini.scale * spec.eigenvectors[:, ini.index - 1]
    if ini.kind == "expression":
        x = op.mesh.vertices[:, 0]
        y = op.mesh.vertices[:, 1]
        env = {
            "x": x, "y": y, "pi": np.pi,
            "sin": np.sin, "cos": np.cos, "exp": np.exp, "sqrt": np.sqrt,
            "abs": np.abs, "tanh": np.tanh,
        }
        full = np.broadcast_to(
            np.asarray(eval(ini.expression, {"__builtins__": {}}, env), dtype=float),
            x.shape,
        ).copy()
        return ini.scale * full[op.free_dofs]
    if ini.kind == "file":
        data = np.loadtxt(ini.path, delimiter=",", skiprows=1)
        full = np.zeros(len(op.mesh.vertices))
        full[data[:, 0].astype(int)] = data[:, 1]
        return ini.scale * full[op.free_dofs]
    raise ConfigError([f"initial.kind = {ini.kind!r} not supported"])


def _step_control(cfg: SimConfig) -> StepControl:
    t = cfg.time
    return StepControl(dt0=t.dt0, dt_min=t.dt_min, dt_max=t.dt_max,
                       growth_cap=t.growth_cap,
                       blow_up_threshold=t.blow_up_threshold)


def _auto(value: str) -> float | None:
    return None if value == "auto" else float(value)


def _log_line(out: Path, message: str) -> None:
    with open(out / "run.log", "a") as fh:
        fh.write(f"{time.strftime('%Y-%m-%d %H:%M:%S')} {message}\n")


def run_spectrum(cfg: SimConfig, out: Path) -> int:
    _, _, op, _, _ = build_problem(cfg)
    spec = spectrum(op, k=min(cfg.run.spectrum_count, op.n_free))
    export_spectrum_csv(spec, out / "spectrum.csv")
    print(f"wrote {out / 'spectrum.csv'} with {spec.count} eigenvalues")
    if cfg.run.ultra_fit:
        from .operators import export_ultracontractivity_csv, ultracontractivity_fit

        full = spec if spec.count == op.n_free else spectrum(op)
        fit = ultracontractivity_fit(full, np.geomspace(3e-4, 3e-2, 12))
        export_ultracontractivity_csv(fit, out / "ultracontractivity.csv")
        print(f"smoothing fit slope {fit['slope']:.3f} (r2={fit['r2']:.3f})")
    return EXIT_OK


def run_constants(cfg: SimConfig, out: Path) -> int:
    _, _, op, _, _ = build_problem(cfg)
    report = compute_constants_report(
        op, eps=_auto(cfg.run.eps), safety_factor=cfg.run.safety_factor,
        seed=cfg.run.seed,
    )
    save_constants(report, out / "constants.txt")
    print(f"wrote {out / 'constants.txt'}")
    return EXIT_OK


def run_classify(cfg: SimConfig, out: Path) -> int:
    _, _, op, f, h = build_problem(cfg)
    report = compute_constants_report(
        op, eps=_auto(cfg.run.eps), safety_factor=cfg.run.safety_factor,
        seed=cfg.run.seed,
    )
    save_constants(report, out / "constants.txt")
    U0 = initial_state(cfg, op)
    verdict = classify(f, h, op, report, U0, alpha=_auto(cfg.run.alpha),
                       eps=_auto(cfg.run.eps))
    save_verdict(verdict, out / "verdict.txt")
    print(f"VERDICT,{verdict.verdict},{verdict.rule}")
    return EXIT_OK


def run_simulate(cfg: SimConfig, out: Path) -> int:
    mesh, measure, op, f, h = build_problem(cfg)
    export_mesh_csv(mesh, out / "mesh")
    export_measure_csv(mesh, measure, out / "mesh" / "interface_measure.csv")
    U0 = initial_state(cfg, op)
    traj = integrate(op, U0, f, h, cfg.time.horizon, _step_control(cfg))
    snap = cfg.run.snapshot_stride
    export_trajectory_csv(traj, op, f, h, out / "trajectory.csv",
                          snapshot_stride=snap,
                          snapshot_dir=(out / "snapshots") if snap else None)
    _write_fit_summaries(traj, op, f, h, out / "diagnostics.txt")
    outcome = {"completed": "Completed", "blowup": "BlowUp",
               "stalled": "StalledStep"}[traj.outcome]
    print(f"OUTCOME,{outcome},{traj.outcome_time!r}")
    return EXIT_BLOWUP if traj.outcome == "blowup" else EXIT_OK


def _write_fit_summaries(traj, op, f, h, path) -> None:
    from .diagnostics import (
        energy_inequality_residual,
        holder_time_modulus,
        moser_domination_check,
    )

    lines = [f"outcome={traj.outcome}", f"outcome_time={traj.outcome_time!r}"]
    res = energy_inequality_residual(traj, op, f, h)
    lines.append(f"energy_inequality_max_residual={res['max_residual']!r}")
    lines.append(f"e0={res['e0']!r}")
    if traj.outcome == "completed":
        try:
            hm = holder_time_modulus(traj)
            lines.append(f"holder_rho={hm['rho']!r}")
            lines.append(f"holder_degenerate={int(hm['degenerate'])}")
        except ValueError:
            lines.append("holder_rho=unavailable")
        lines.append(f"moser_ratio={moser_domination_check(traj, op)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cell_nonlinearities(cell: dict) -> tuple[Nonlinearity, Nonlinearity]:
    f = Nonlinearity.power(cell["c_f"], cell["q"])
    h = Nonlinearity.power(cell["c_h"], cell["p"])
    return f, h


def _cell_hash(cfg_text: str, cell: dict) -> str:
    payload = cfg_text + "|" + ",".join(f"{k}={cell[k]!r}" for k in sorted(cell))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


_WORKER_CACHE: dict = {}


def _sweep_cell(args: tuple) -> tuple[str, str]:
    cfg_text, cell, do_simulate = args
    key = hashlib.sha256(cfg_text.encode()).hexdigest()
    if key not in _WORKER_CACHE:
        from .config import parse_config_text

        cfg = parse_config_text(cfg_text)
        _, _, op, _, _ = build_problem(cfg)
        report = compute_constants_report(
            op, eps=_auto(cfg.run.eps), safety_factor=cfg.run.safety_factor,
            seed=cfg.run.seed,
        )
        lam1 = float(spectrum(op, k=1).eigenvalues[0])
        _WORKER_CACHE[key] = (cfg, op, report, lam1)
    cfg, op, report, lam1 = _WORKER_CACHE[key]
    f, h = _cell_nonlinearities(cell)
    U0 = initial_state(cfg, op)
    verdict = classify(f, h, op, report, U0, lam1=lam1,
                       alpha=_auto(cfg.run.alpha), eps=_auto(cfg.run.eps))
    row = (f"{cell['p']!r},{cell['q']!r},{cell['c_f']!r},{cell['c_h']!r},"
           f"{verdict.verdict},{verdict.rule}")
    outcome = ""
    if do_simulate:
        traj = integrate(op, U0, f, h, cfg.time.horizon, _step_control(cfg))
        outcome = traj.outcome
    return row, outcome


def run_sweep(cfg: SimConfig, out: Path) -> int:
    import copy

    cells = cfg.sweep.grid()
    # content-address cells by the problem, not by where results land
    cfg_for_hash = copy.deepcopy(cfg)
    cfg_for_hash.run.out = ""
    cfg_for_hash.run.jobs = 1
    cfg_text = serialize_config(cfg_for_hash)
    cells_dir = out / "cells"
    cells_dir.mkdir(parents=True, exist_ok=True)
    pending = []
    for idx, cell in enumerate(cells):
        marker = cells_dir / f"{_cell_hash(cfg_text, cell)}.csv"
        if not marker.exists():
            pending.append((idx, cell, marker))
    tasks = [(cfg_text, cell, cfg.sweep.simulate) for _, cell, _ in pending]
    if cfg.run.jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=cfg.run.jobs) as pool:
            results = list(pool.map(_sweep_cell, tasks))
    else:
        results = [_sweep_cell(t) for t in tasks]
    for (idx, cell, marker), (row, outcome) in zip(pending, results):
        marker.write_text(row + "\n" + (f"#outcome={outcome}\n" if outcome else ""))

    rows, mismatches = [], []
    for cell in cells:
        marker = cells_dir / f"{_cell_hash(cfg_text, cell)}.csv"
        text = marker.read_text().strip().splitlines()
        rows.append(text[0])
        if len(text) > 1 and text[1].startswith("#outcome="):
            outcome = text[1].split("=", 1)[1]
            verdict = text[0].split(",")[4]
            if (verdict == "BlowUpPredicted" and outcome != "blowup") or \
               (verdict == "GlobalBounded" and outcome == "blowup"):
                mismatches.append(text[0] + f",{outcome}")
    diagram = out / "regime_diagram.csv"
    with open(diagram, "w") as fh:
        fh.write("p,q,c_f,c_h,verdict,rule\n")
        fh.write("\n".join(rows) + "\n")
    if mismatches:
        with open(out / "counterexamples.csv", "w") as fh:
            fh.write("p,q,c_f,c_h,verdict,rule,outcome\n")
            fh.write("\n".join(mismatches) + "\n")
        print(f"WARNING: {len(mismatches)} verdict/simulation mismatches recorded")
    print(f"wrote {diagram} with {len(rows)} cells")
    return EXIT_OK


def run_pairs(cfg: SimConfig, out: Path) -> int:
    _, _, op, f, h = build_problem(cfg)
    U0a = initial_state(cfg, op)
    rng = np.random.default_rng(cfg.run.seed)
    pert = rng.standard_normal(op.n_free)
    pert /= op.pair_norm(pert)
    U0b = U0a + cfg.pairs.perturbation * pert
    rep = squeezing_check(op, U0a, U0b, f, h, cfg.pairs.horizon,
                          _step_control(cfg))
    with open(out / "pairs.txt", "w") as fh:
        for key in ("omega", "m_factor", "k_factor", "terminal_distance", "r2"):
            fh.write(f"{key}={rep[key]!r}\n")
    with open(out / "pair_distance.csv", "w") as fh:
        fh.write("t,dist2\n")
        for t, d2 in zip(rep["times"], rep["dist2"]):
            fh.write(f"{float(t)!r},{float(d2)!r}\n")
    print(f"wrote {out / 'pairs.txt'} (omega={rep['omega']!r})")
    return EXIT_OK


_RUNNERS = {
    "spectrum": run_spectrum,
    "constants": run_constants,
    "classify": run_classify,
    "simulate": run_simulate,
    "sweep": run_sweep,
    "pairs": run_pairs,
}


def run(cfg: SimConfig) -> int:
    out = Path(cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    _log_line(out, f"mode={cfg.run.mode} seed={cfg.run.seed}")
    return _RUNNERS[cfg.run.mode](cfg, out)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="transmission",
        description="Simulate and classify semilinear transmission dynamics "
                    "with nonlocal dynamic interface conditions.",
    )
    parser.add_argument("mode", choices=sorted(_RUNNERS))
    parser.add_argument("--config", required=True, help="path to the config file")
    parser.add_argument("--out", help="output directory (overrides run.out)")
    parser.add_argument("--seed", type=int, help="override run.seed")
    parser.add_argument("--jobs", type=int, help="override run.jobs")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, use_env=True)
    except FileNotFoundError:
        print(f"config file not found: {args.config}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.run.mode = args.mode
    if args.out is not None:
        cfg.run.out = args.out
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.jobs is not None:
        cfg.run.jobs = args.jobs

    try:
        return run(cfg)
    except (GeometryError, AssemblyError) as exc:
        # the mesh or coefficients reject the configured problem
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
