"""Command-line entry point: ``bundlerqm <subcommand> [config.ini] [section.key=value ...]``.

Exit codes: 0 success / all checks pass, 1 check or runtime failure,
2 usage or configuration error.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import io
from .bundle import EvolutionTransport, Lifting, Path, TransportCoefficients
from .config import ConfigError, RunConfig, build_equation, load_config
from .evolution import Propagator, propagate
from .harness import (Check, Report, all_mode_oracles, bundle_residual, convergence_study,
                      expected_spectrum, gaussian_packet, random_state, run_invariant_suite)
from .lattice import curl_op
from .models import build_model, kg_equation, spin1_block
from .reduction import companion_system

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def build_hamiltonian(cfg: RunConfig):
    m = cfg.model
    grid = cfg.grid.build()
    if m.name == "equation":
        return companion_system(build_equation(cfg), "equation")
    if m.name == "spin1":
        return spin1_block(grid, m.params, m.build_potentials(), m.reduction)
    return build_model(m.name, grid, m.params, m.build_potentials())


def initial_state(cfg: RunConfig, H) -> np.ndarray:
    ev = cfg.evolution
    grid, f = H.grid, H.fibre_dim
    spinor = np.eye(f)[0] if not ev.spinor else np.asarray(ev.spinor, dtype=complex)
    if spinor.shape != (f,):
        raise ConfigError(f"[evolution] spinor needs {f} entries, got {len(spinor)}")
    if ev.initial == "snapshot":
        state, _, g, fibre = io.read_snapshot(ev.snapshot_in)
        if g != grid or fibre != f:
            raise ConfigError("[evolution] snapshot does not match the model's grid and fibre")
        return state
    if ev.initial == "random":
        return random_state(H.dim, ev.seed)
    if ev.initial == "divergence_free":
        if H.fibre_dim != 6:
            raise ConfigError("[evolution] divergence_free initial data needs the maxwell model")
        rng = np.random.default_rng(ev.seed)
        curl = curl_op(grid).sparse()
        psi = np.concatenate([curl @ rng.standard_normal(3 * grid.n_sites) for _ in range(2)])
        return psi.astype(complex) / np.linalg.norm(psi)
    if ev.initial == "plane_wave":
        mode = tuple(ev.mode) + (0,) * (grid.dim - len(ev.mode))
        psi = np.kron(spinor, grid.plane_wave(mode[:grid.dim]))
        return psi / np.linalg.norm(psi)
    momentum = tuple(ev.momentum) + (0.0,) * (grid.dim - len(ev.momentum))
    return gaussian_packet(grid, f, width=ev.width, momentum=momentum[:grid.dim], spinor=spinor)


def _report_json(report: Report, timings: bool) -> str:
    if not timings:
        report = Report([Check(c.name, c.measured, c.tolerance, c.passed, 0.0, c.note)
                         for c in report.checks])
    return report.to_json() + "\n"


# subcommands --------------------------------------------------------------

def cmd_reduce(cfg: RunConfig) -> int:
    m = cfg.model
    t = cfg.evolution.t_start
    if m.name == "equation":
        spec = build_equation(cfg)
    elif m.name in ("kg_canonical", "spin1"):
        spec = kg_equation(cfg.grid.build(), m.params, m.build_potentials())
    else:
        spec = None
    if spec is not None:
        H = companion_system(spec, m.name)
        desc = {"order": spec.order, "component_dim": spec.component_dim,
                "block_size": spec.block_size, "coefficients": list(spec.names),
                "companion": "none" if spec.order == 1 else "block"}
    else:
        H = build_hamiltonian(cfg)
        desc = {"order": 1, "component_dim": H.fibre_dim, "block_size": H.dim,
                "coefficients": [], "companion": "none"}
    mat = H.evaluate(t).sparse().tocoo()
    order = np.lexsort((mat.col, mat.row))
    lines = ["# row col re im"]
    lines += [f"{r} {c} {io.fmt(v.real)} {io.fmt(v.imag)}"
              for r, c, v in zip(mat.row[order], mat.col[order], mat.data[order])]
    io.write_text(cfg.output.path("_hamiltonian.txt"), "\n".join(lines) + "\n")
    grid = cfg.grid.build()
    desc.update({"model": m.name, "dim": H.dim, "fibre_dim": H.fibre_dim, "hbar": H.hbar,
                 "time": t, "nnz": int(mat.nnz), "time_dependent": H.time_dependent,
                 "grid": {"shape": list(grid.shape), "lengths": list(grid.lengths)}})
    io.write_text(cfg.output.path("_system.json"), json.dumps(desc, indent=2) + "\n")
    print(f"wrote {cfg.output.path('_hamiltonian.txt')} ({mat.nnz} entries)")
    return EXIT_OK


def cmd_evolve(cfg: RunConfig) -> int:
    H = build_hamiltonian(cfg)
    ev = cfg.evolution
    psi0 = initial_state(cfg, H)
    traj = propagate(H, psi0, ev.t_start, ev.t_end, ev.steps, ev.method, ev.keep_every)
    kept = sorted(set(range(0, ev.steps + 1, ev.keep_every)) | {ev.steps})
    diag = {k: v[kept] for k, v in traj.diagnostics.items() if k != "step_times"}
    header, rows = io.trajectory_rows(traj.times, traj.states, diag,
                                      components=cfg.output.components)
    io.write_csv(cfg.output.path("_trajectory.csv"), header, rows)
    io.write_snapshot(cfg.output.path("_final.snap"), traj.final, float(traj.times[-1]),
                      H.grid, H.fibre_dim)
    norms = traj.diagnostics["norm"]
    print(f"{H.name}: {ev.steps} steps, max |norm drift| = {np.max(np.abs(norms - norms[0])):.3e}")
    return EXIT_OK


def cmd_transport(cfg: RunConfig) -> int:
    H = build_hamiltonian(cfg)
    ev, b = cfg.evolution, cfg.bundle
    frames = b.frames(H.dim, H.fibre_dim)
    prop = Propagator.uniform(H, ev.t_start, ev.t_end, ev.steps, ev.method)
    traj = propagate(H, initial_state(cfg, H), ev.t_start, ev.t_end, ev.steps, ev.method)
    path = Path(ev.t_start, ev.t_end)
    lifting = Lifting.from_states(frames, path, traj.times, traj.states)
    dt = (ev.t_end - ev.t_start) / ev.steps
    lag = max(1, int(round(b.eps / dt)))
    idx = np.unique(np.linspace(0, ev.steps - lag, b.samples).round().astype(int))
    times = traj.times[idx]
    coeffs = TransportCoefficients.from_hamiltonian(frames, H, times)
    coeffs.write_csv(cfg.output.path("_gamma.csv"), b.threshold)
    rows = [(float(s), bundle_residual(H, frames, lifting, float(s), lag * dt)) for s in times]
    io.write_csv(cfg.output.path("_residual.csv"), ["t", "relative_residual"], rows)

    transport = EvolutionTransport(frames, prop)
    v = random_state(H.dim, b.seed)
    t1, t2, t3 = (traj.times[i] for i in (0, ev.steps // 3, ev.steps))
    scale = np.linalg.norm(v)
    report = Report()
    ident = np.linalg.norm(transport.apply(v, t2, t2) - v) / scale
    report.add(Check("transport.identity", float(ident), 1e-12, ident <= 1e-12))
    comp = np.linalg.norm(transport.apply(v, t3, t1)
                          - transport.apply(transport.apply(v, t2, t1), t3, t2)) / scale
    report.add(Check("transport.composition", float(comp), 1e-10, comp <= 1e-10))
    io.write_text(cfg.output.path("_transport_report.json"), _report_json(report, cfg.output.timings))
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(cfg: RunConfig) -> int:
    report = run_invariant_suite(cfg.verify.suite(cfg.model.params))
    io.write_text(cfg.output.path("_verify.json"), _report_json(report, cfg.output.timings))
    io.write_text(cfg.output.path("_verify.txt"), report.to_text() + "\n")
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_oracle(cfg: RunConfig) -> int:
    H = build_hamiltonian(cfg)
    params = cfg.model.params
    grid = H.grid
    rows = []
    closed = cfg.model.name in ("dirac", "kg_canonical", "kg_feshbach_villars",
                                "kg_five_component", "maxwell", "spin1")
    for o in all_mode_oracles(H, params):
        kt = grid.discrete_momentum(o.mode)
        ref = expected_spectrum(cfg.model.name, params, grid, o.mode) if closed else None
        for j, w in enumerate(o.sorted_energies()):
            row = list(o.mode) + [float(x) for x in kt] + [j, float(np.real(w)), float(np.imag(w))]
            row += [float(ref[j]) if ref is not None else math.nan, int(o.defective)]
            rows.append(row)
    header = ([f"m{a}" for a in range(grid.dim)] + [f"ktilde{a}" for a in range(grid.dim)]
              + ["index", "re", "im", "closed_form", "defective"])
    io.write_csv(cfg.output.path("_spectra.csv"), header, rows)
    print(f"wrote {len(rows)} eigenvalues for {grid.n_sites} modes")
    return EXIT_OK


def cmd_convergence(cfg: RunConfig) -> int:
    cv = cfg.convergence
    kwargs = {"params": cfg.model.params, "order_window": (cv.order_min, cv.order_max)}
    if cv.model != "harmonic":
        kwargs["grid"] = cfg.grid.build()
    if cv.t_final > 0:
        kwargs["t_final"] = cv.t_final
    try:
        report, data = convergence_study(cv.model, cv.dt, cv.method, **kwargs)
    except ValueError as exc:
        raise ConfigError(f"[convergence] {exc}") from None
    rows = list(zip(data["dt"], data["error"], data["norm_drift"]))
    io.write_csv(cfg.output.path("_convergence.csv"), ["dt", "error", "norm_drift"], rows)
    io.write_text(cfg.output.path("_convergence.json"), _report_json(report, cfg.output.timings))
    print(report.to_text())
    return EXIT_OK if report.passed else EXIT_FAIL


COMMANDS = {"reduce": cmd_reduce, "evolve": cmd_evolve, "transport": cmd_transport,
            "verify": cmd_verify, "oracle": cmd_oracle, "convergence": cmd_convergence}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bundlerqm", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("config", nargs="?", help="INI file; omitted means all defaults")
    parser.add_argument("overrides", nargs="*", help="section.key=value")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    config, overrides = args.config, list(args.overrides)
    if config is not None and "=" in config:
        config, overrides = None, [config] + overrides
    try:
        cfg = load_config(config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
