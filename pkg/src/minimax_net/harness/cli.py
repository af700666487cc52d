"""``minimax-net`` command line: run, sweep, verify, report."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from .. import __version__
from ..algorithms import DivergenceError, run
from ..metrics import averaged_metric, format_value, min_metric, trace_to_csv
from ..stepsize import check_constraints
from ..verify import check_all, fd_grad_phi, grid_best_response
from .config import (
    SWEEP_AXES,
    ConfigError,
    ExperimentConfig,
    apply_axis,
    build_experiment,
    load_config,
    parse_axis_value,
)

EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

SUMMARY_HEADER = ("axis", "value", "status", "min_grad_phi_norm_sq", "avg_grad_phi_norm_sq", "final_phi", "samples", "comms")


def _load(config_path: str, seed: int | None, strict: bool) -> ExperimentConfig:
    cfg = load_config(config_path)
    if seed is not None:
        cfg.seed = seed
    if strict:
        cfg.record_every = 1
    return cfg


def execute(cfg: ExperimentConfig, out_dir: Path, stem: str = "trace") -> dict:
    """Run one configured experiment and write ``<stem>.csv`` plus ``<stem>.meta.json``."""
    exp = build_experiment(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "version": __version__,
        "config": cfg.to_dict(),
        "problem": exp.problem.describe(),
        "topology": {
            "kind": exp.W.graph.kind,
            "scheme": exp.W.scheme,
            "n": exp.W.n,
            "links": exp.W.edge_count(),
            "lambda": exp.W.lam,
            "spectral_gap": exp.W.spectral_gap,
        },
        "stepsize": exp.plan.as_dict(),
        "warnings": exp.warnings,
    }
    for w in exp.warnings:
        click.echo(f"warning: {w}", err=True)
    t0 = time.perf_counter()
    status = "ok"
    trace = []
    try:
        trace = run(
            cfg.algorithm, exp.target, exp.W, exp.plan, cfg.T, exp.x0, exp.y0,
            record_every=cfg.record_every, K_inner=int(cfg.gtda.get("K_inner", 3)),
        )
    except DivergenceError as exc:
        status = "diverged"
        meta["divergence"] = {"quantity": exc.quantity, "t": exc.t, "message": str(exc)}
    meta["wall_time_s"] = time.perf_counter() - t0
    meta["status"] = status
    (out_dir / f"{stem}.csv").write_text(trace_to_csv(trace))
    (out_dir / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2, default=float) + "\n")
    summary = {"status": status, "samples": None, "comms": None,
               "min_grad_phi_norm_sq": None, "avg_grad_phi_norm_sq": None, "final_phi": None}
    if trace:
        summary.update(
            samples=trace[-1].sample_count,
            comms=trace[-1].comm_count,
            min_grad_phi_norm_sq=min_metric(trace),
            avg_grad_phi_norm_sq=averaged_metric(trace),
            final_phi=trace[-1].phi_value,
        )
    return summary


def _sweep_point(args):
    cfg, axis, value, out_dir = args
    point = apply_axis(cfg, axis, value)
    stem = f"{axis}_{value}".replace("/", "_")
    return value, execute(point, Path(out_dir), stem)


def _thread_cap() -> int:
    raw = os.environ.get("MINIMAX_NET_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        return max(1, int(raw))
    except ValueError:
        raise click.UsageError(f"MINIMAX_NET_THREADS must be an integer, got {raw!r}")


@click.group()
@click.version_option(__version__, prog_name="minimax-net")
def cli():
    """Decentralized min-max experiments over simulated networks."""


def _common(f):
    f = click.option("--strict-metrics", is_flag=True, help="Record every iteration.")(f)
    f = click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory.")(f)
    f = click.option("--seed", type=click.IntRange(min=0), default=None, help="Override the config seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)(f)
    return f


def _out_dir(cfg: ExperimentConfig, out: str | None) -> Path:
    if out is not None:
        return Path(out)
    if cfg.out:
        p = Path(cfg.out)
        return p if p.is_absolute() else Path(cfg.base_dir) / p
    return Path("runs")


def _fail_config(exc: ConfigError):
    click.echo(f"config error: {exc}", err=True)
    sys.exit(EXIT_CONFIG)


@cli.command("run")
@_common
def run_cmd(config_path, seed, out, strict_metrics):
    """Run one experiment and write its trace CSV and metadata."""
    try:
        cfg = _load(config_path, seed, strict_metrics)
        out_dir = _out_dir(cfg, out)
        summary = execute(cfg, out_dir)
    except ConfigError as exc:
        _fail_config(exc)
    if summary["status"] == "diverged":
        meta = json.loads((out_dir / "trace.meta.json").read_text())
        click.echo(f"diverged: {meta['divergence']['message']}", err=True)
        sys.exit(EXIT_DIVERGED)
    click.echo(
        f"wrote {out_dir / 'trace.csv'}: min |grad Phi|^2 = {format_value(summary['min_grad_phi_norm_sq'])}, "
        f"samples = {summary['samples']}, comms = {summary['comms']}"
    )


@cli.command("sweep")
@_common
@click.option("--axis", type=click.Choice(SWEEP_AXES), required=True)
@click.option("--values", "values_text", required=True, help="Comma-separated values for the axis.")
def sweep_cmd(config_path, seed, out, strict_metrics, axis, values_text):
    """Run the base config once per axis value and write a summary CSV."""
    try:
        cfg = _load(config_path, seed, strict_metrics)
        items = [v for v in values_text.split(",") if v.strip()]
        if not items:
            raise ConfigError("values", "sweep needs at least one value")
        values = [parse_axis_value(axis, v) for v in items]
        for v in values:
            apply_axis(cfg, axis, v)
    except ConfigError as exc:
        _fail_config(exc)
    out_dir = _out_dir(cfg, out)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg, axis, v, str(out_dir)) for v in values]
    workers = min(_thread_cap(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for value, s in results:
        w.writerow([axis, value, s["status"], format_value(s["min_grad_phi_norm_sq"]),
                    format_value(s["avg_grad_phi_norm_sq"]), format_value(s["final_phi"]),
                    format_value(s["samples"]), format_value(s["comms"])])
    (out_dir / "summary.csv").write_text(buf.getvalue())
    click.echo(f"wrote {len(results)} traces and {out_dir / 'summary.csv'}")
    if any(s["status"] != "ok" for _, s in results):
        sys.exit(EXIT_DIVERGED)


def verify_suite(cfg: ExperimentConfig, T: int = 500, points: int = 5) -> list[tuple[str, bool, str]]:
    """Deterministic run with per-step records, inequality checks, slack and oracle comparisons."""
    det = cfg.with_updates(
        algorithm="dgta" if cfg.algorithm in ("dgta", "dsgta", "gtda") else "gda",
        T=min(cfg.T, T),
        record_every=1,
        noise={"sigma": 0.0, "b": 1},
    )
    if det.stepsize.get("regime") == "corollary2_b1":
        det.stepsize = {"regime": "corollary1"}
    exp = build_experiment(det)
    lines: list[tuple[str, bool, str]] = []
    for con in check_constraints(exp.plan, exp.constants):
        lines.append((f"stepsize {con.name}", con.satisfied, f"margin={con.margin:.3e}"))
    try:
        trace = run(det.algorithm, exp.problem, exp.W, exp.plan, det.T, exp.x0, exp.y0, record_every=1)
    except DivergenceError as exc:
        lines.append(("run", False, str(exc)))
        return lines
    for rep in check_all(trace, exp.plan, exp.problem, exp.W.lam):
        lines.append((f"inequality {rep.name}", rep.passed, f"min_margin={rep.min_margin:.3e}"))

    rng = np.random.default_rng(det.seed)
    p = exp.problem
    worst = 0.0
    for _ in range(points):
        x = rng.standard_normal(p.d)
        _, g = p.phi_and_grad(x)
        fd = fd_grad_phi(p, x, 1e-5)
        worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)))
    lines.append(("oracle danskin_vs_finite_difference", worst <= 1e-5, f"max_rel_err={worst:.3e}"))

    if all(c.size <= 3 for i in range(p.n) for _, c, _ in p.ball_blocks(i)):
        res = 2e-3
        worst_br, allowed = 0.0, 0.0
        for _ in range(points):
            i = int(rng.integers(p.n))
            x = rng.standard_normal(p.d)
            err = float(np.linalg.norm(grid_best_response(p, i, x, res) - p.best_response(i, x)))
            worst_br = max(worst_br, err)
            allowed = res * math.sqrt(p.dims[i])
        lines.append(("oracle grid_best_response", worst_br <= allowed, f"max_err={worst_br:.3e} allowed={allowed:.3e}"))
    return lines


@cli.command("verify")
@_common
@click.option("--steps", type=click.IntRange(min=2), default=500, show_default=True, help="Length of the check run.")
def verify_cmd(config_path, seed, out, strict_metrics, steps):
    """Check per-step inequalities, stepsize slack and oracles; nonzero exit on any failure."""
    try:
        cfg = _load(config_path, seed, strict_metrics)
        lines = verify_suite(cfg, T=steps)
    except ConfigError as exc:
        _fail_config(exc)
    for name, ok, detail in lines:
        click.echo(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "verify.txt").write_text(
            "".join(f"{'PASS' if ok else 'FAIL'} {n} {d}\n" for n, ok, d in lines)
        )
    if not all(ok for _, ok, _ in lines):
        sys.exit(EXIT_FAIL)


@cli.command("report")
@click.argument("summaries", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out", type=click.Path(dir_okay=False), default=None, help="Output CSV (stdout if omitted).")
def report_cmd(summaries, out):
    """Merge sweep summary CSVs into one long-format CSV (source, axis, value, metric, measurement)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("source", "axis", "value", "metric", "measurement"))
    for path in summaries:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != SUMMARY_HEADER:
                click.echo(f"{path}: not a sweep summary", err=True)
                sys.exit(EXIT_CONFIG)
            for row in reader:
                for metric in SUMMARY_HEADER[3:]:
                    w.writerow((path, row["axis"], row["value"], metric, row[metric]))
    if out is None:
        click.echo(buf.getvalue(), nl=False)
    else:
        Path(out).write_text(buf.getvalue())


def main():
    cli()


if __name__ == "__main__":
    main()
