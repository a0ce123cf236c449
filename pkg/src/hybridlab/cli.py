"""Command-line entry point: ``hybridlab <command> [config] [out]``.

Exit codes: 0 success (a rejected candidate is a result, not a failure),
2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import load_config, to_text
from .errors import ConfigError, HybridLabError
from .phasespace import gaussian_state, liouville_evolve
from .quantum import pure_state, von_neumann_evolve
from .scenario import ScenarioReport, run_scenario, entropy_arrow
from .hybrid import (
    Candidate,
    collapse_map,
    default_width,
    event_probability,
    evolve_hybrid_grid,
    smoothed_candidate,
)

COMMANDS = ("scenario", "evolve-classical", "evolve-quantum", "evolve-hybrid", "diagnose")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def fmt(x):
    """17 significant digits; ``nan`` for undefined values."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": _jsonable(obj.real), "im": _jsonable(obj.imag)}
    return obj


def timeseries_header(dim):
    return ["t", "candidate", "residual", "purity_defect", "min_eigenvalue", "entropy"] + [
        f"prob_outcome_{k}" for k in range(1, dim + 1)]


def emit_timeseries(report, dim=None):
    """CSV text of a report: one row per (candidate, time), candidates in fixed order."""
    dim = report.config.spec.dim if dim is None else dim
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(timeseries_header(dim))
    for kind in Candidate:
        for s in report.series.get(kind.value, []):
            writer.writerow([fmt(s.t), kind.value, fmt(s.residual), fmt(s.purity_defect),
                             fmt(s.min_eigenvalue), fmt(s.entropy)] + [fmt(x) for x in s.probabilities])
    return buf.getvalue()


def emit_report(report, run_cfg=None):
    """JSON text of a report: verdict, diagnostics summary, config echo and version."""
    cfg = report.config
    final = {}
    for kind, samples in report.series.items():
        if samples:
            s = samples[-1]
            final[kind] = {"t": s.t, "residual": s.residual, "purity_defect": s.purity_defect,
                           "min_eigenvalue": s.min_eigenvalue, "entropy": s.entropy,
                           "probabilities": list(s.probabilities), "pointer_mean": list(s.pointer_mean)}
    doc = {
        "tool": "hybridlab",
        "version": __version__,
        "verdict": list(report.verdict),
        "flags": report.flags,
        "errors": report.errors,
        "warnings": report.warnings,
        "final": final,
        "engine": {"mode": cfg.mode, "compared_with": report.engine["target"],
                   "samples": [{"t": t, "relative_distance": d, "trace": tr}
                               for t, d, tr in report.engine["samples"]]},
        "thresholds": {"residual": cfg.residual_threshold,
                       "min_eigenvalue": cfg.positivity_floor,
                       "probability": cfg.probability_tolerance},
        "config": to_text(run_cfg) if run_cfg is not None else None,
    }
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path, text):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def _table(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(x) if not isinstance(x, str) else x for x in row])
    return buf.getvalue()


def _write_plotdata(out, report):
    grid = report.config.grid
    for kind, samples in report.series.items():
        for axis, nodes in (("q", grid.q_nodes()), ("p", grid.p_nodes())):
            header = [axis] + [f"t={fmt(s.t)}" for s in samples]
            cols = [getattr(s, f"{axis}_marginal") for s in samples]
            rows = [[x] + [c[k] for c in cols] for k, x in enumerate(nodes)]
            _write(out / "plotdata" / f"{kind}_{axis}_marginal.csv", _table(header, rows))
    _write(out / "plotdata" / "engine.csv",
           _table(["t", "relative_distance", "trace"], report.engine["samples"]))


def cmd_scenario(run_cfg, out):
    cfg = run_cfg.scenario()
    report = run_scenario(cfg)
    _write(out / "timeseries.csv", emit_timeseries(report))
    _write(out / "report.json", emit_report(report, run_cfg))
    if run_cfg.plotdata:
        _write_plotdata(out, report)
        if cfg.mode == "collapse":
            _write(out / "plotdata" / "entropy.csv", _table(["t", "entropy"], entropy_arrow(cfg)))
    print("verdict: " + (", ".join(report.verdict) or "none"))
    for kind, msg in report.errors.items():
        print(f"candidate {kind} errored: {msg}", file=sys.stderr)
    return report


def _steps(span, dt):
    return max(1, math.ceil(span / dt - 1e-9))


def cmd_evolve_classical(run_cfg, out):
    """Pointer density under ``H_cm`` alone, sampled at the run times."""
    cfg = run_cfg.scenario()
    grid = cfg.grid
    width = cfg.smoothing_width or default_width(grid)
    rho = gaussian_state(grid, cfg.pointer, width)
    rows, t_prev = [], 0.0
    for t in cfg.times():
        if t > t_prev:
            rho = liouville_evolve(cfg.spec.H_cm, rho, t - t_prev, _steps(t - t_prev, cfg.dt), cfg.scheme)
        q, p = grid.mesh()
        dens = np.real(np.asarray(rho.diag))
        mass = dens.sum() * grid.cell
        rows.append([t, mass, np.sum(q * dens) * grid.cell / mass, np.sum(p * dens) * grid.cell / mass])
        t_prev = t
    _write(out / "classical.csv", _table(["t", "trace", "mean_q", "mean_p"], rows))
    if run_cfg.plotdata:
        q, p = grid.mesh()
        _write(out / "plotdata" / "classical_final.csv",
               _table(["q", "p", "density"], zip(q.ravel(), p.ravel(), np.real(rho.diag).ravel())))


def cmd_evolve_quantum(run_cfg, out):
    """Quantum state under ``H_qm`` alone."""
    cfg = run_cfg.scenario()
    spec = cfg.spec
    rho0 = pure_state(cfg.amplitudes)
    n = spec.dim
    header = ["t"] + [f"{part}_{i + 1}{j + 1}" for i in range(n) for j in range(n) for part in ("re", "im")]
    rows = []
    for t in cfg.times():
        rho = von_neumann_evolve(spec.h_qm, rho0, t, hbar=spec.hbar)
        rows.append([t] + [x for z in rho.ravel() for x in (z.real, z.imag)])
    _write(out / "quantum.csv", _table(header, rows))


def cmd_evolve_hybrid(run_cfg, out):
    """Grid engine from the smoothed product state (collapsed first in collapse mode)."""
    cfg = run_cfg.scenario()
    spec = cfg.spec
    state = smoothed_candidate(Candidate.EIGHT, spec, cfg.amplitudes, cfg.pointer, 0.0, cfg.grid,
                               cfg.smoothing_width)
    if cfg.mode == "collapse":
        state = collapse_map(state, spec.v)
    rows, t_prev = [], 0.0
    for t in cfg.times():
        if t > t_prev:
            state = evolve_hybrid_grid(spec, state, t - t_prev, _steps(t - t_prev, cfg.dt), cfg.scheme)
        probs = []
        for i in range(spec.dim):
            proj = np.zeros((spec.dim, spec.dim))
            proj[i, i] = 1.0
            probs.append(event_probability(state, (proj, None)))
        rows.append([t, np.real(state.trace()), state.frobenius()] + probs)
        t_prev = t
    header = ["t", "trace", "frobenius"] + [f"prob_outcome_{k}" for k in range(1, spec.dim + 1)]
    _write(out / "hybrid.csv", _table(header, rows))


def cmd_diagnose(run_cfg, out):
    """Candidate diagnostics only, without the engine comparison."""
    cfg = run_cfg.scenario()
    from .scenario import _sample, _decide

    series = {kind.value: [_sample(cfg, kind, t) for t in cfg.times()] for kind in Candidate}
    report = ScenarioReport(cfg, series, {}, {"target": None, "samples": []}, _decide(cfg, series, {}), [])
    _write(out / "timeseries.csv", emit_timeseries(report))
    _write(out / "report.json", emit_report(report, run_cfg))
    for kind in Candidate:
        s = series[kind.value][-1]
        print(f"{kind.value:>5}  t={s.t:.6g}  residual={fmt(s.residual)}  purity_defect={fmt(s.purity_defect)}  "
              f"min_eigenvalue={fmt(s.min_eigenvalue)}  entropy={fmt(s.entropy)}")


HANDLERS = {
    "scenario": cmd_scenario,
    "evolve-classical": cmd_evolve_classical,
    "evolve-quantum": cmd_evolve_quantum,
    "evolve-hybrid": cmd_evolve_hybrid,
    "diagnose": cmd_diagnose,
}


def _grid_arg(text):
    try:
        n_q, n_p = (int(x) for x in text.lower().split("x"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected NxM, got {text!r}") from exc
    return n_q, n_p


def build_parser():
    ap = argparse.ArgumentParser(prog="hybridlab", description="Hybrid quantum-classical measurement simulator")
    ap.add_argument("--version", action="version", version=f"hybridlab {__version__}")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config_pos", nargs="?", metavar="config")
    ap.add_argument("out_pos", nargs="?", metavar="out")
    ap.add_argument("--config", help="run configuration file")
    ap.add_argument("--out", help="output directory (default: out)")
    ap.add_argument("--mode", choices=("linear", "collapse", "trial"))
    ap.add_argument("--grid", type=_grid_arg, metavar="NxM", help="override grid node counts")
    ap.add_argument("--dt", type=float, help="override the time step")
    ap.add_argument("--seed", type=int, help="reserved; the dynamics is deterministic")
    return ap


def run(command, config_path, out_dir, mode=None, grid=None, dt=None):
    """Execute one command; returns the process exit code."""
    try:
        run_cfg = load_config(config_path)
        n_q, n_p = grid if grid is not None else (None, None)
        run_cfg = run_cfg.with_overrides(mode=mode, n_q=n_q, n_p=n_p, dt=dt)
        HANDLERS[command](run_cfg, Path(out_dir))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HybridLabError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    config = args.config or args.config_pos
    out = args.out or args.out_pos or "out"
    if config is None:
        print("config error: no config file given", file=sys.stderr)
        return EXIT_CONFIG
    return run(args.command, config, out, args.mode, args.grid, args.dt)


if __name__ == "__main__":
    sys.exit(main())
