"""Command-line front end: ``gen``, ``synth``, ``eval`` and ``oracle``."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import graph as graphs
from . import strategy as strategies
from .evaluator import SolverError, attacker_best_response, evaluate, solve_hitting
from .gradient import forward, loss_breakdown
from .optimizer import OptimizerConfig, synthesize, trace_csv
from .oracle import (
    InstanceTooLarge,
    enumerate_deterministic,
    monte_carlo_damage,
    value_iteration_hitting,
)

log = logging.getLogger("patrolsynth")

ROLE_KEYS = {"default", "targets", "halls", "nontargets"}


def parse_memory(spec: str, g: graphs.PatrollingGraph) -> dict[str, int]:
    """Parse ``default=6`` / ``targets=1,halls=4`` / ``v=2`` style memory specs.

    Role keys apply first (``default``, then ``targets`` and ``halls`` (alias
    ``nontargets``)); any other key names a single vertex and wins.
    """
    items: dict[str, int] = {}
    for part in filter(None, (p.strip() for p in spec.split(","))):
        key, sep, value = part.partition("=")
        if not sep:
            raise ValueError(f"memory entry {part!r} must look like key=count")
        try:
            items[key.strip()] = int(value)
        except ValueError:
            raise ValueError(f"memory count in {part!r} is not an integer") from None
    mem = {v: items.get("default", 1) for v in g.vertices}
    for v in g.vertices:
        if g.is_target(v) and "targets" in items:
            mem[v] = items["targets"]
        if not g.is_target(v):
            for key in ("halls", "nontargets"):
                if key in items:
                    mem[v] = items[key]
    for key, k in items.items():
        if key in ROLE_KEYS:
            continue
        if key not in mem:
            raise ValueError(f"memory given for unknown vertex {key!r}")
        mem[key] = k
    return strategies.check_memory(g, mem)


def _num(x: float):
    return "inf" if math.isinf(x) else float(x)


def _write_json(obj, path: Path | None) -> None:
    text = json.dumps(obj, indent=2)
    if path is None:
        print(text)
    else:
        path.write_text(text + "\n")


# gen

def cmd_gen(args) -> int:
    if args.kind == "grid":
        g = graphs.gen_grid(args.n, args.seed)
    else:
        if args.gates:
            counts = [int(x) for x in args.gates.split(",")]
        elif args.total_gates:
            counts = graphs.random_gate_counts(args.total_gates, args.seed, args.terminals)
        else:
            raise ValueError("airport needs --gates or --total-gates")
        g = graphs.gen_airport(counts)
    graphs.validate(g).raise_if_failed()
    if args.out:
        graphs.save(g, args.out)
        log.info("wrote %s (%d vertices, %d targets)", args.out, len(g.vertices), len(g.targets))
    else:
        _write_json(graphs.to_dict(g), None)
    return 0


# synth

def config_from_args(args) -> OptimizerConfig:
    return OptimizerConfig(
        steps=args.steps,
        eps=args.eps,
        beta=args.beta,
        learning_rate=args.lr,
        cutoff_threshold=args.cutoff,
        rounding_threshold=args.rounding,
        noise_std0=args.noise_std0,
        noise_decay=args.noise_decay,
        seed=args.seed,
    )


def _run_trial(job: tuple) -> dict:
    graph_data, mem, cfg_dict, trial = job
    g = graphs.from_dict(graph_data)
    cfg = OptimizerConfig(**cfg_dict)
    try:
        res = synthesize(g, mem, cfg)
    except (SolverError, ValueError) as exc:
        return {"trial": trial, "seed": cfg.seed, "error": str(exc)}
    return {
        "trial": trial,
        "seed": cfg.seed,
        "best_value": res.best_value,
        "best_step": res.best_step,
        "mean_step_seconds": res.mean_step_seconds,
        "trace_csv": trace_csv(res.trace),
        "strategy": strategies.to_dict(res.best_strategy),
        "loss": _final_loss(g, mem, cfg, res),
    }


def _final_loss(g, mem, cfg, res) -> dict:
    lay = res.final_coefficients.layout
    probs = strategies.softmax_values(lay, res.final_coefficients.values)
    return loss_breakdown(lay, probs, forward(lay, probs).damages, cfg.eps, cfg.beta).to_dict()


def _baseline(spec: str | None, g: graphs.PatrollingGraph) -> float | None:
    if spec is None:
        return None
    if spec == "airport":
        return float(graphs.airport_baseline(g))
    return float(spec)


def cmd_synth(args) -> int:
    if args.manifest:
        manifest = json.loads(Path(args.manifest).read_text())
        graph_path = Path(manifest["graph"])
        mem_spec = manifest["memory_spec"]
        cfg_base = manifest["config"]
        seeds = manifest["seeds"]
        baseline_spec = manifest.get("baseline")
        jobs = args.jobs
        out = Path(args.out) if args.out else Path(manifest["output_dir"])
    else:
        if not args.graph:
            raise ValueError("synth needs a graph file (or --manifest)")
        graph_path = Path(args.graph)
        mem_spec = args.mem
        cfg_base = config_from_args(args).to_dict()
        seeds = (
            [int(s) for s in args.seeds.split(",")]
            if args.seeds
            else [args.seed + i for i in range(args.trials)]
        )
        baseline_spec = args.baseline
        jobs = args.jobs
        out = Path(args.out)
    g = graphs.load(graph_path)
    mem = parse_memory(mem_spec, g)
    baseline = _baseline(baseline_spec, g)
    out.mkdir(parents=True, exist_ok=True)
    started = dt.datetime.now(dt.timezone.utc).isoformat()

    work = [(graphs.to_dict(g), mem, {**cfg_base, "seed": s}, i) for i, s in enumerate(seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, work))
    else:
        results = [_run_trial(w) for w in work]

    files, failures, best = [], 0, None
    summary_rows = []
    for r in results:
        if "error" in r:
            failures += 1
            log.error("trial %d (seed %d) failed: %s", r["trial"], r["seed"], r["error"])
            continue
        trace_path = out / f"trace_{r['trial']:03d}.csv"
        trace_path.write_text(r["trace_csv"])
        files.append(trace_path.name)
        if args.dump_loss:
            p = out / f"loss_{r['trial']:03d}.json"
            _write_json(r["loss"], p)
            files.append(p.name)
        row = [r["trial"], _num(r["best_value"]), r["best_step"], r["mean_step_seconds"]]
        if baseline:
            row.append(_num(r["best_value"] / baseline))
        summary_rows.append(row)
        if best is None or r["best_value"] < best["best_value"]:
            best = r

    header = ["trial", "best_value", "best_step", "mean_step_seconds"]
    if baseline:
        header.append("normalized_value")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(summary_rows)
    files.append("summary.csv")
    if best is not None:
        _write_json(best["strategy"], out / "best_strategy.json")
        files.append("best_strategy.json")

    manifest_out = {
        "command": "synth",
        "graph": str(graph_path.resolve()),
        "memory_spec": mem_spec,
        "config": {k: v for k, v in cfg_base.items() if k != "seed"},
        "seeds": seeds,
        "baseline": baseline_spec,
        "output_dir": str(out.resolve()),
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "trials": [
            {"trial": r["trial"], "seed": r["seed"], **(
                {"error": r["error"]} if "error" in r
                else {"best_value": _num(r["best_value"]), "best_step": r["best_step"]}
            )}
            for r in results
        ],
        "files": files + ["manifest.json"],
    }
    _write_json(manifest_out, out / "manifest.json")
    if best is not None:
        print(f"best value {best['best_value']:.6g} (trial {best['trial']}, step {best['best_step']})")
    return 1 if failures else 0


# eval

def cmd_eval(args) -> int:
    g = graphs.load(args.graph)
    sigma = strategies.load(g, args.strategy)
    report = evaluate(sigma)
    data = report.to_dict()
    data["attacks"] = [
        {**a, "edge": [list(a["edge"][0]), list(a["edge"][1])], "damage": _num(a["damage"])}
        for a in attacker_best_response(report)
    ]
    _write_json(data, Path(args.out) if args.out else None)
    return 0


# oracle

def cmd_oracle(args) -> int:
    g = graphs.load(args.graph)
    out: dict = {}
    ok = True
    if args.strategy:
        sigma = strategies.load(g, args.strategy)
        report = evaluate(sigma)
        out["value"] = _num(report.value)
        diffs = []
        for ci, comp in enumerate(report.components):
            for t in g.targets:
                direct = solve_hitting(comp, t, sigma)
                if direct.infinite:
                    continue
                vi = value_iteration_hitting(sigma, comp, t, tol=args.tol)
                diffs.append(float(np.max(np.abs(direct.values - vi.values))))
        out["value_iteration_max_diff"] = max(diffs, default=0.0)
        ok &= out["value_iteration_max_diff"] <= 1e-8
        mc = []
        for w in report.witness:
            if not w.reachable:
                mc.append({"component": w.component, "target": w.target, "unreachable": True})
                continue
            est = monte_carlo_damage(sigma, w.edge, w.target, args.samples, seed=args.seed)
            z = abs(est.mean - w.damage) / est.std_error if est.std_error > 0 else (
                0.0 if abs(est.mean - w.damage) < 1e-9 else math.inf)
            ok &= z <= 3.0
            mc.append({
                "component": w.component,
                "target": w.target,
                "edge": [list(w.edge[0]), list(w.edge[1])],
                "evaluator": w.damage,
                "monte_carlo": est.mean,
                "std_error": est.std_error,
                "samples": est.samples,
                "truncated": est.truncated,
                "within_3se": z <= 3.0,
            })
        out["monte_carlo"] = mc
    if args.enumerate:
        mem = parse_memory(args.mem, g) if args.mem else (
            dict(sigma.memory) if args.strategy else parse_memory("default=1", g))
        det_value, _ = enumerate_deterministic(g, mem)
        out["deterministic_best"] = _num(det_value)
        if args.synth_steps:
            cfg = OptimizerConfig(steps=args.synth_steps, seed=args.seed)
            synth_best = min(
                synthesize(g, mem, OptimizerConfig(**{**cfg.to_dict(), "seed": args.seed + i})).best_value
                for i in range(args.synth_trials)
            )
            out["synthesized_best"] = _num(synth_best)
            out["deterministic_not_better"] = det_value >= synth_best - 1e-9
    out["ok"] = bool(ok)
    _write_json(out, Path(args.out) if args.out else None)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patrolsynth", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a benchmark graph")
    gen.add_argument("kind", choices=["grid", "airport"])
    gen.add_argument("--n", type=int, default=10, help="grid size / number of vertices")
    gen.add_argument("--gates", help="comma-separated even gate counts per terminal")
    gen.add_argument("--total-gates", type=int, help="random split of this many gates")
    gen.add_argument("--terminals", type=int, default=3)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out")
    gen.set_defaults(func=cmd_gen)

    syn = sub.add_parser("synth", help="synthesize strategies")
    syn.add_argument("graph", nargs="?")
    syn.add_argument("--mem", default="default=1")
    d = OptimizerConfig()
    syn.add_argument("--steps", type=int, default=d.steps)
    syn.add_argument("--eps", type=float, default=d.eps)
    syn.add_argument("--beta", type=float, default=d.beta)
    syn.add_argument("--lr", type=float, default=d.learning_rate)
    syn.add_argument("--cutoff", type=float, default=d.cutoff_threshold)
    syn.add_argument("--rounding", type=float, default=d.rounding_threshold)
    syn.add_argument("--noise-std0", type=float, default=d.noise_std0)
    syn.add_argument("--noise-decay", type=float, default=d.noise_decay)
    syn.add_argument("--trials", type=int, default=1)
    syn.add_argument("--seed", type=int, default=0, help="seed of trial 0; trial i uses seed+i")
    syn.add_argument("--seeds", help="explicit comma-separated seeds (overrides --trials)")
    syn.add_argument("--jobs", type=int, default=1)
    syn.add_argument("--baseline", help="'airport' or a number; adds normalized_value")
    syn.add_argument("--dump-loss", action="store_true", help="write final loss breakdown JSON")
    syn.add_argument("--manifest", help="replay a previous run from its manifest.json")
    syn.add_argument("--out", default="synth-out")
    syn.set_defaults(func=cmd_synth)

    ev = sub.add_parser("eval", help="evaluate a strategy")
    ev.add_argument("graph")
    ev.add_argument("strategy")
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    orc = sub.add_parser("oracle", help="cross-check a strategy with independent methods")
    orc.add_argument("graph")
    orc.add_argument("strategy", nargs="?")
    orc.add_argument("--samples", type=int, default=100_000)
    orc.add_argument("--seed", type=int, default=0)
    orc.add_argument("--tol", type=float, default=1e-10)
    orc.add_argument("--enumerate", action="store_true", help="brute-force deterministic strategies")
    orc.add_argument("--mem", help="memory spec for --enumerate (default: the strategy's)")
    orc.add_argument("--synth-steps", type=int, default=0)
    orc.add_argument("--synth-trials", type=int, default=1)
    orc.add_argument("--out")
    orc.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (graphs.GraphError, strategies.StrategyError, InstanceTooLarge, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
