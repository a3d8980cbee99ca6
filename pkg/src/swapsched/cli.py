"""Command-line interface: swapsched generate | solve | exact | grid | sweep | fit."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import driver, dual, report
from .exact import SizeGuardError, solve_exact, solve_exact_blocks
from .instance import (InstanceError, InstanceParseError, check_feasible, evaluate_objective,
                       generate_instance, load_instance, price_profile, save_instance)

EXIT_INFEASIBLE = 3
EXIT_NO_INCUMBENT = 4


def _int_list(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            a, b = part.split("-")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    return out


def _read_instance(path: str):
    try:
        return load_instance(Path(path).read_text())
    except InstanceParseError as e:
        raise click.UsageError(f"{path}: {e}")
    except InstanceError as e:
        click.echo(f"invalid instance {path}: {e}", err=True)
        sys.exit(EXIT_INFEASIBLE)


def _write(path, text):
    if path in (None, "-"):
        click.echo(text, nl=False)
    else:
        Path(path).write_text(text)


@click.group()
def main():
    """Battery swapping-station charging schedules."""


@main.command()
@click.option("--B", "B", type=int, required=True, help="number of batteries")
@click.option("--N", "N", type=int, required=True, help="number of charging ports")
@click.option("--gamma", type=int, required=True, help="switch cap per period boundary")
@click.option("--T", "T", type=int, default=24, show_default=True)
@click.option("--L", "L", type=int, default=3, show_default=True)
@click.option("--profile", default="base", show_default=True,
              help="base, extended, plan1, plan2, or comma-separated prices")
@click.option("--alpha", type=float, default=0.8, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", default="-", help="output file (default stdout)")
def generate(B, N, gamma, T, L, profile, alpha, seed, output):
    """Generate a random instance document."""
    prof = profile if profile in ("base", "extended", "plan1", "plan2") else \
        [float(v) for v in profile.split(",")]
    try:
        inst = generate_instance(B, N, gamma, T, L, prof, seed=seed, alpha=alpha)
    except (ValueError, InstanceError) as e:
        raise click.UsageError(str(e))
    _write(output, save_instance(inst) + "\n")


def _config(variation, budget, iterations, **kw):
    if iterations is not None and budget is None:
        total = None
    else:
        total = 60.0 if budget is None else budget
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return driver.SolverConfig.from_variation(variation, total_budget=total,
                                                  max_iterations=iterations, **kw)
    except ValueError as e:
        raise click.UsageError(str(e))


_solver_options = [
    click.option("--variation", type=click.IntRange(1, 16), default=13, show_default=True),
    click.option("--budget", type=float, default=None, help="wall-clock seconds (default 60)"),
    click.option("--iterations", type=int, default=None,
                 help="iteration budget; alone it makes the run repeatable"),
    click.option("--beta", type=float, default=None),
    click.option("--sigma", type=int, default=None),
    click.option("--a", "a", type=float, default=None),
    click.option("--heu", type=int, default=None),
    click.option("--seed", type=int, default=None),
    click.option("--backend", default=None, help="MILP backend: highs (default) or bundled"),
    click.option("--warm-start", "warm_start", default=None,
                 help="packaged (default), cold, or a fit file"),
]


def solver_options(f):
    for opt in reversed(_solver_options):
        f = opt(f)
    return f


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@solver_options
@click.option("--summary", "summary_path", default="-", help="summary JSON (default stdout)")
@click.option("--trace", "trace_path", default=None, help="trace CSV")
@click.option("--schedule", "schedule_path", default=None, help="schedule CSV")
@click.option("--gantt", "gantt_path", default=None, help="Gantt chart SVG")
def solve(instance, variation, budget, iterations, beta, sigma, a, heu, seed, backend,
          warm_start, summary_path, trace_path, schedule_path, gantt_path):
    """Run the Lagrangian solver on an instance."""
    inst = _read_instance(instance)
    cfg = _config(variation, budget, iterations, beta=beta, sigma=sigma, a=a, heu=heu,
                  seed=seed, backend=backend, warm_start=warm_start)
    try:
        res = driver.run(inst, cfg)
    except driver.InfeasibleInstanceError as e:
        click.echo(f"infeasible instance: {e}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    doc = res.summary()
    if res.schedule is not None:
        ov = evaluate_objective(inst, res.schedule)
        doc.update(electricity_cost=ov.electricity_cost, scalarized=ov.scalarized)
    _write(summary_path, report.summary_json(doc) + "\n")
    if trace_path:
        _write(trace_path, res.trace.to_csv())
    if res.schedule is not None:
        if schedule_path:
            _write(schedule_path, report.schedule_to_csv(inst, res.schedule))
        if gantt_path:
            _write(gantt_path, report.gantt_svg(inst, res.schedule))
    else:
        click.echo("no feasible schedule found within the budget", err=True)
        sys.exit(EXIT_NO_INCUMBENT)


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--budget", type=float, default=60.0, show_default=True)
@click.option("--backend", default=None, help="registered MILP backend (e.g. highs)")
@click.option("--formulation", type=click.Choice(["blocks", "full"]), default="blocks",
              show_default=True, help="port-free interval model or the full x/y model")
@click.option("--schedule", "schedule_path", default=None)
def exact(instance, budget, backend, formulation, schedule_path):
    """Solve the full model exactly (small instances, or with a backend)."""
    inst = _read_instance(instance)
    fn = solve_exact_blocks if formulation == "blocks" else solve_exact
    try:
        res = fn(inst, budget=budget, backend=backend)
    except SizeGuardError as e:
        click.echo(f"refusing: {e}", err=True)
        sys.exit(2)
    doc = {"status": res.status, "z_upper": None if res.schedule is None else res.value,
           "z_lower": res.lower_bound if math.isfinite(res.lower_bound) else None,
           "time_s": round(res.elapsed, 3), "gap": res.gap}
    click.echo(report.summary_json(doc))
    if res.status == "infeasible":
        sys.exit(EXIT_INFEASIBLE)
    if res.schedule is None:
        sys.exit(EXIT_NO_INCUMBENT)
    if schedule_path:
        _write(schedule_path, report.schedule_to_csv(inst, res.schedule))


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--variations", default="1-16", show_default=True)
@solver_options
@click.option("-o", "--output", default="-")
def grid(instance, variations, variation, budget, iterations, beta, sigma, a, heu, seed,
         backend, warm_start, output):
    """Run several algorithm variations and tabulate bounds."""
    inst = _read_instance(instance)
    vs = _int_list(variations)
    if not vs or any(not 1 <= v <= 16 for v in vs):
        raise click.UsageError("variations must be ids in 1..16")
    cfg = _config(variation, budget, iterations, beta=beta, sigma=sigma, a=a, heu=heu,
                  seed=seed, backend=backend, warm_start=warm_start)
    try:
        rows = driver.run_variation_grid(inst, cfg, vs)
    except driver.InfeasibleInstanceError as e:
        click.echo(f"infeasible instance: {e}", err=True)
        sys.exit(EXIT_INFEASIBLE)
    _write(output, driver.grid_to_csv(rows))


@main.command()
@click.argument("instance", type=click.Path(exists=True, dir_okay=False))
@click.option("--gammas", default=None, help="comma-separated switch caps")
@click.option("--ports", default=None, help="comma-separated port counts")
@click.option("--plans", default=None, help="comma-separated price plans")
@solver_options
@click.option("-o", "--output", default="-")
def sweep(instance, gammas, ports, plans, variation, budget, iterations, beta, sigma, a, heu,
          seed, backend, warm_start, output):
    """Sensitivity table over gamma, port count and price plan."""
    inst = _read_instance(instance)
    gl = _int_list(gammas) if gammas else []
    nl = _int_list(ports) if ports else []
    pl = [p.strip() for p in plans.split(",") if p.strip()] if plans else []
    if not (gl or nl or pl):
        raise click.UsageError("empty grid: give --gammas, --ports and/or --plans")
    cfg = _config(variation, budget, iterations, beta=beta, sigma=sigma, a=a, heu=heu,
                  seed=seed, backend=backend, warm_start=warm_start)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["gamma", "N", "plan", "electricity_cost", "switch_count", "scalarized",
                "h_lower", "gap", "status"])
    for g in gl or [inst.gamma]:
        for n in nl or [inst.num_ports]:
            for plan in pl or ["instance"]:
                try:
                    price = inst.price if plan == "instance" else price_profile(plan, inst.num_periods)
                    cell = replace(inst, gamma=g, num_ports=n, price=price)
                    res = driver.run(cell, cfg)
                except (driver.InfeasibleInstanceError, InstanceError, ValueError) as e:
                    w.writerow([g, n, plan, "", "", "", "", "", f"infeasible: {e}"])
                    continue
                if res.schedule is None:
                    w.writerow([g, n, plan, "", "", "", f"{res.lower:.6f}", "1.0",
                                "no_feasible"])
                    continue
                ov = evaluate_objective(cell, res.schedule)
                w.writerow([g, n, plan, f"{ov.electricity_cost:.6f}", ov.switch_count,
                            f"{ov.scalarized:.6f}", f"{res.lower:.6f}", f"{res.gap:.6f}",
                            res.reason])
    _write(output, buf.getvalue())


@main.command()
@click.option("--seeds", default="100-104", show_default=True, help="generator seeds to learn from")
@click.option("--B", "B", type=int, default=20, show_default=True)
@click.option("--N", "N", type=int, default=10, show_default=True)
@click.option("--gamma", type=int, default=2, show_default=True)
@click.option("--profile", default="base", show_default=True)
@click.option("--iterations", type=int, default=300, show_default=True)
@click.option("--variation", type=click.IntRange(1, 16), default=2, show_default=True)
@click.option("-o", "--output", default="-")
def fit(seeds, B, N, gamma, profile, iterations, variation, output):
    """Learn warm-start regression coefficients from cold-started runs."""
    pairs = []
    seed_list = _int_list(seeds)
    if not seed_list:
        raise click.UsageError("no seeds given")
    for s in seed_list:
        inst = generate_instance(B, N, gamma, 24, 3, profile, seed=s)
        cfg = driver.SolverConfig.from_variation(variation, warm_start="cold", total_budget=None,
                                                 max_iterations=iterations)
        res = driver.run(inst, cfg)
        pairs.append((res.best_mu, inst))
    f = dual.fit_regression_pooled(pairs)
    f = replace(f, provenance={"B": B, "N": N, "gamma": gamma, "profile": profile,
                               "seeds": seed_list, "iterations": iterations,
                               "variation": variation})
    _write(output, f.to_json() + "\n")


if __name__ == "__main__":
    main()
