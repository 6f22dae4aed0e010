"""Command-line front end: ``capflow <mode> --config scenario.json --out dir``."""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .closed_form import analytic_steady_state
from .config import EXAMPLES, MODES, ScenarioConfig, apply_overrides, initial_pdf, load_config
from .distribution import Metric, Relation, build_grid, check_fosd, distance, from_pdf, summary, write_csv
from .dynamics import compare_trajectories, run, write_trajectory
from .endogenous import classify_endo, fitted_pareto_index, pareto_index, simulate_endo
from .errors import CapflowError, NoFixedPoint
from .functions import find_fixed_points, from_json as function_from_json
from .scenarios import POWER_START, example, mixture_pdf
from .steady import VerdictKind, classify_longrun, condition_report, fitted_tail_exponent

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE = 0, 1, 2


# -- output helpers ---------------------------------------------------------------------

def _dump(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(v):
    if hasattr(v, "to_json"):
        return v.to_json()
    if hasattr(v, "value"):
        return v.value
    if hasattr(v, "item"):
        return v.item()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _clean(obj):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _write_dist(path: Path, d) -> Path:
    with path.open("w", newline="") as fh:
        write_csv(d, fh)
    return path


def emit_figure_data(traj, analytic, out) -> list:
    """Long-format ``figure_long.csv`` and, with a closed form, ``overlay.csv``."""
    out = Path(out)
    if not traj.snapshots:
        raise ValueError("trajectory has no snapshots")
    path = out / "figure_long.csv"
    with path.open("w", newline="") as fh:
        fh.write("t,x,density,kind\n")
        for t, d in traj.snapshots:
            for x, f in zip(d.grid.nodes.tolist(), d.density.tolist()):
                fh.write(f"{t},{x!r},{f!r},density\n")
            for loc, mass in d.atoms:
                fh.write(f"{t},{loc!r},{mass!r},atom\n")
    paths = [path]
    if analytic is not None:
        nodes = traj.final.grid.nodes
        path = out / "overlay.csv"
        with path.open("w", newline="") as fh:
            fh.write("x,density\n")
            for x, f in zip(nodes.tolist(), analytic.pdf(nodes).tolist()):
                fh.write(f"{x!r},{float(f)!r}\n")
        paths.append(path)
    return paths


def _fixed_points(tau, space):
    try:
        return tuple(find_fixed_points(tau, space).locations)
    except NoFixedPoint:
        return ()


def _verdict_code(verdicts) -> int:
    return EXIT_INCONCLUSIVE if any(v.kind is VerdictKind.INCONCLUSIVE for v in verdicts) else EXIT_OK


# -- modes ---------------------------------------------------------------------------------

def _primitives(cfg: ScenarioConfig):
    n, tau = cfg.fertility_fn(), cfg.transmission_fn()
    space = (float(cfg.space["lo"]), float(cfg.space["hi"]))
    grid = cfg.grid(_fixed_points(tau, space))
    return n, tau, space, grid


def _run_kw(cfg: ScenarioConfig):
    return dict(max_gen=cfg.max_generations, tol=cfg.tol, metric=cfg.metric, interp=cfg.interp,
                snapshot=cfg.snapshot)


def _simulate(cfg, out):
    n, tau, _, grid = _primitives(cfg)
    traj = run(cfg.initial_on(grid), n, tau, **_run_kw(cfg))
    files = write_trajectory(traj, out)
    files += emit_figure_data(traj, None, out)
    files.append(_dump(out / "summary.json", _clean({"mode": "simulate", **traj.summary(),
                                                     "final": summary(traj.final)})))
    return files, []


def _classify(cfg, out):
    n, tau, space, grid = _primitives(cfg)
    v = classify_longrun(n, tau, space, grid=grid)
    files = []
    if v.kind is VerdictKind.ATOMLESS:
        files.append(_write_dist(out / "steady_state.csv", v.density))
    report = v.report.to_json() if v.report is not None else condition_report(n, tau, space).to_json()
    files.append(_dump(out / "summary.json", _clean({"mode": "classify", "verdict": v.to_json(),
                                                     "conditions": report})))
    return files, [v]


def _steady(cfg, out):
    n, tau, space, grid = _primitives(cfg)
    v = classify_longrun(n, tau, space, grid=grid)
    info = {"mode": "steady", "verdict": v.to_json()}
    files = []
    if v.kind is VerdictKind.ATOMLESS:
        files.append(_write_dist(out / "steady_state.csv", v.density))
        info["steady_state"] = summary(v.density)
        info["growth_factor"] = float(n(v.location) / tau.deriv(v.location))
    files.append(_dump(out / "summary.json", _clean(info)))
    return files, [v]


def _compare(cfg, out):
    n, tau, space, grid = _primitives(cfg)
    blk = cfg.compare
    f0 = cfg.initial_on(grid)
    n_b, f0_b = n, f0
    if "fertility_b" in blk:
        n_b = function_from_json(blk["fertility_b"])
    else:
        f0_b = cfg.initial_on(grid, blk["initial_b"])
    kw = _run_kw(cfg)
    # the first run is the candidate dominating one
    with ThreadPoolExecutor(max_workers=2) as pool:
        fut_a = pool.submit(run, f0_b, n_b, tau, **kw)
        fut_b = pool.submit(run, f0, n, tau, **kw)
        traj_a, traj_b = fut_a.result(), fut_b.result()
    files = write_trajectory(traj_a, out / "a") + write_trajectory(traj_b, out / "b")
    rows = []
    gens = [t for t, _ in traj_a.snapshots]
    if gens == [t for t, _ in traj_b.snapshots] and traj_a.final.grid.same_as(traj_b.final.grid):
        rows = list(zip(gens, compare_trajectories(traj_a, traj_b)))
    path = out / "compare.csv"
    with path.open("w", newline="") as fh:
        fh.write("t,relation,witness,margin\n")
        for t, ov in rows:
            w = "" if ov.witness is None else repr(float(ov.witness))
            fh.write(f"{t},{ov.relation.value},{w},{float(ov.margin)!r}\n")
    files.append(path)
    va = classify_longrun(n_b, tau, space, grid=grid)
    vb = classify_longrun(n, tau, space, grid=grid)
    info = {"mode": "compare", "a": traj_a.summary(), "b": traj_b.summary(),
            "verdict_a": va.to_json(), "verdict_b": vb.to_json(),
            # equal laws (the shared start, say) do not break dominance
            "dominance_at_every_snapshot": bool(rows) and all(ov.relation is not Relation.NEITHER
                                                              for _, ov in rows)}
    if va.density is not None and vb.density is not None:
        ov = check_fosd(va.density, vb.density)
        info["steady_state_relation"] = ov.relation.value
    files.append(_dump(out / "summary.json", _clean(info)))
    return files, [va, vb]


def _endogenous(cfg, out):
    p = cfg.endo_params()
    blk = cfg.endogenous
    if "lo" in cfg.space:
        grid = cfg.grid((1.0,))
    else:
        ref = analytic_steady_state("Endo", alpha=p.alpha, beta=p.beta) if p.returns > 1 else None
        grid = build_grid((1.0, math.inf), int(cfg.space.get("grid_points", 1024)), "LogSpaced",
                          reference=ref, tail_mass_tol=1e-9, breakpoints=(1.0,))
    f0 = from_pdf(grid, initial_pdf(cfg.initial) if cfg.initial else mixture_pdf(POWER_START))
    res = simulate_endo(p, f0, cfg.max_generations, float(blk.get("z_lo0", 1.0)), cfg.tol, cfg.metric,
                        cfg.interp)
    traj = res.trajectory
    v = classify_endo(p)
    analytic = None
    info = {"mode": "endogenous", "params": p.to_json(), "verdict": v.to_json(), **traj.summary()}
    if v.kind is VerdictKind.ATOMLESS:
        analytic = analytic_steady_state("Endo", alpha=p.alpha, beta=p.beta)
        fin = traj.final
        info["pareto_index"] = pareto_index(p)
        info["fitted_pareto_index"] = fitted_pareto_index(fin)
        info["final_kolmogorov_to_pareto"] = distance(fin, from_pdf(fin.grid, analytic.pdf))
    files = write_trajectory(traj, out)
    files += emit_figure_data(traj, analytic, out)
    files.append(res.write_state(out / "endo_state.csv"))
    files.append(_dump(out / "summary.json", _clean(info)))
    return files, [v]


def _example(cfg, out):
    ex = cfg.example
    n_nodes = int(cfg.space.get("grid_points", 1024))
    sc = example(str(ex["name"]), ex.get("case"), n_nodes, **ex.get("params", {}))
    traj = run(sc.f0, sc.n, sc.tau, cfg.max_generations, cfg.tol, cfg.metric, interp=sc.interp,
               snapshot=cfg.snapshot)
    v = classify_longrun(sc.n, sc.tau, sc.space, grid=sc.grid)
    info = {"mode": "example", "example": sc.name, "verdict": v.to_json(), **traj.summary(),
            "final": summary(traj.final)}
    fin = traj.final
    if sc.analytic is not None:
        info["analytic"] = sc.analytic.to_json()
        info["final_kolmogorov_to_analytic"] = distance(fin, from_pdf(fin.grid, sc.analytic.pdf),
                                                        Metric.KOLMOGOROV)
    files = write_trajectory(traj, out)
    files += emit_figure_data(traj, sc.analytic, out)
    if v.kind is VerdictKind.ATOMLESS:
        files.append(_write_dist(out / "steady_state.csv", v.density))
        if sc.space[1] == math.inf and sc.space[0] > 0:
            info["fitted_tail_exponent"] = fitted_tail_exponent(v.density, 10.0, 500.0)
    files.append(_dump(out / "summary.json", _clean(info)))
    return files, [v]


RUNNERS = {"simulate": _simulate, "classify": _classify, "steady": _steady, "compare": _compare,
           "endogenous": _endogenous, "example": _example}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_scenario(cfg: ScenarioConfig, out_dir) -> tuple:
    """Execute ``cfg`` into ``out_dir``; returns ``(manifest, exit_code)``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    files, verdicts = RUNNERS[cfg.mode](cfg, out)
    elapsed = time.perf_counter() - start
    listed = sorted({Path(p) for p in files if Path(p).name != "manifest.json"})
    manifest = {
        "engine": "capflow",
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.to_json(),
        "wall_clock_seconds": round(elapsed, 3),
        "verdicts": [{"kind": v.kind.value, "location": v.location} for v in verdicts],
        "files": [{"path": p.relative_to(out).as_posix(), "sha256": _sha256(p), "bytes": p.stat().st_size}
                  for p in listed],
    }
    _dump(out / "manifest.json", _clean(manifest))
    return manifest, _verdict_code(verdicts)


# -- entry point -----------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="capflow", description="Capital distribution dynamics under "
                                     "differential fertility.")
    parser.add_argument("--version", action="version", version=f"capflow {__version__}")
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        p = sub.add_parser(mode)
        if mode == "example":
            p.add_argument("name", nargs="?", choices=EXAMPLES, help="example to run without a config")
            p.add_argument("--case", default=None, help="example B case: a, b or c")
        p.add_argument("--config", type=Path, required=mode != "example")
        p.add_argument("--out", type=Path, required=True)
        p.add_argument("--grid-points", type=int, default=None)
        p.add_argument("--max-gen", type=int, default=None)
        p.add_argument("--quiet", action="store_true")
    return parser


def _quick_example(args) -> ScenarioConfig:
    ex = {"name": args.name}
    if args.case:
        ex["case"] = args.case
    return ScenarioConfig("example", {}, run={"max_generations": 200, "tol": 1e-8}, example=ex)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = load_config(args.config, args.mode)
        elif args.mode == "example" and args.name:
            cfg = _quick_example(args)
        else:
            raise CapflowError("example needs a name or --config")
        cfg = apply_overrides(cfg, args.grid_points, args.max_gen)
        manifest, code = run_scenario(cfg, args.out)
    except (CapflowError, OSError) as exc:
        print(f"capflow: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not args.quiet:
        for v in manifest["verdicts"]:
            loc = "" if v["location"] is None else f" at {v['location']:g}"
            print(f"verdict: {v['kind']}{loc}")
        print(f"wrote {len(manifest['files'])} files to {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
