"""
Command-line driver: ``bregflow {flow,invariance,oracle-compare,selftest}``.

Outputs (all in ``--out``, default from the config):

``trajectory.csv``       per-step moments of a flow run
``final_particles.csv``  final positions and normalised log-weights
``invariance.csv``       one row per (beta, c)
``oracle_compare.csv``   particle vs exact Fisher-Rao moments
``summary.json``         final results, wall time, seed and the full config echo
``*.svg``                optional moment plots

Exit status: 0 success, 1 configuration error, 2 runtime/numerical error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bregman import GridDensity
from .config import ConfigError, RunConfig, load
from .flows import (
    FlowConfig,
    GaussianLaw,
    NumericalError,
    exact_fr_gaussian,
    run_flow as _run_particles,
)
from .invariance import scan
from .plotting import line_plot
from .targets import to_grid

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) if v != "" else math.nan for v in r] for r in body], dtype=float)
    return header, data.reshape(len(body), len(header))


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n", encoding="utf-8")


def _summary(cfg: RunConfig, wall: float, **extra) -> dict:
    return {
        "version": __version__,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "target_scale": cfg.target.scale,
        **extra,
        "wall_time_s": wall,
        "config": cfg.to_dict(),
    }


# experiments -------------------------------------------------------------


def run_flow(cfg: RunConfig, out: Path, log=print) -> dict:
    """Run a particle flow, emitting per-step CSV rows and a JSON summary."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    target = cfg.target.build()
    fc = cfg.flow_config()
    final, records = _run_particles(target, fc, cfg.init.build())
    d = final.dim
    with_acc = fc.metropolis and fc.metric in ("wasserstein", "wfr") and fc.beta == 1.0
    header = ["step", "time", "ess"] + [f"mean_{i}" for i in range(d)] + [f"var_{i}" for i in range(d)]
    header += ["acceptance_rate"] if with_acc else []
    rows = []
    for r in records:
        row = [r.step, r.time, r.ess, *r.mean, *r.var]
        if with_acc:
            row.append(r.acceptance_rate)
        rows.append(row)
    write_csv(out / "trajectory.csv", header, rows)
    write_csv(
        out / "final_particles.csv",
        [f"x_{i}" for i in range(d)] + ["log_weight"],
        (list(x) + [lw] for x, lw in zip(final.positions, final.log_weights)),
    )
    files = ["trajectory.csv", "final_particles.csv", "summary.json"]
    if cfg.output.plot:
        times = [r.time for r in records]
        series = {f"mean_{i}": [r.mean[i] for r in records] for i in range(d)}
        series.update({f"var_{i}": [r.var[i] for r in records] for i in range(d)})
        (out / "moments.svg").write_text(
            line_plot(times, series, "time", "moment", f"{fc.metric} flow, beta={fc.beta}"),
            encoding="utf-8",
        )
        files.append("moments.svg")
    last = records[-1]
    summary = _summary(
        cfg,
        time.perf_counter() - t0,
        final={
            "step": last.step,
            "time": last.time,
            "ess": last.ess,
            "mean": last.mean,
            "var": last.var,
        },
        n_resampled=sum(r.resampled for r in records),
        files=files,
    )
    write_json(out / "summary.json", summary)
    log(f"flow: {fc.metric} beta={fc.beta} steps={fc.n_steps} final mean={last.mean.tolist()}")
    return summary


def _grid_gaussian(mean: float, var: float, lo: float, hi: float, n: int) -> GridDensity:
    x = np.linspace(lo, hi, n)
    vals = np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    return GridDensity(lo, hi, vals, mass=1.0)


INVARIANCE_COLUMNS = [
    "beta",
    "c",
    "constancy_defect",
    "mean_shift",
    "divergence_shift",
    "divergence_shift_spread",
]


def run_invariance(cfg: RunConfig, out: Path, log=print) -> dict:
    """Tabulate first-variation and divergence shifts for every (beta, c)."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    inv = cfg.invariance
    g = inv.grid
    target = cfg.target.build()
    # pi is the normalised target: the scan scales it by c itself
    pi = to_grid(getattr(target, "base", target), g.lo, g.hi, int(g.n), normalised=True)
    mus = [_grid_gaussian(m["mean"], m["var"], g.lo, g.hi, int(g.n)) for m in inv.mus]
    reports = scan(inv.betas, inv.cs, pi, mus)
    write_csv(
        out / "invariance.csv",
        INVARIANCE_COLUMNS,
        ([getattr(r, k) for k in INVARIANCE_COLUMNS] for r in reports),
    )
    summary = _summary(
        cfg,
        time.perf_counter() - t0,
        reports=[r.as_dict() for r in reports],
        files=["invariance.csv", "summary.json"],
    )
    write_json(out / "summary.json", summary)
    for r in reports:
        log(f"beta={r.beta:g} c={r.c:g} defect={r.constancy_defect:.3e} "
            f"mean_shift={r.mean_shift:.6f} divergence_shift={r.divergence_shift:.6f}")
    return summary


ORACLE_COLUMNS = [
    "time",
    "particle_mean",
    "particle_var",
    "oracle_mean",
    "oracle_var",
    "abs_err_mean",
    "abs_err_var",
]


def run_oracle_compare(cfg: RunConfig, out: Path, log=print) -> dict:
    """Particle Fisher-Rao KL flow against the exact Gaussian solution.

    The flow section's metric and beta are ignored; the particle system is
    always the KL reweighting flow.
    """
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    target = cfg.target.build()
    mu0 = cfg.init.build()
    pi = GaussianLaw(cfg.target.mean, cfg.target.cov)
    fc = dataclasses.replace(cfg.flow_config(), metric="fisher_rao", beta=1.0)
    times = sorted(float(t) for t in cfg.oracle.times)
    steps = [int(round(t / fc.gamma)) for t in times]
    fc = dataclasses.replace(fc, n_steps=max(steps) if steps else 0)
    final, records = _run_particles(target, fc, mu0)
    rows = []
    for t, k in zip(times, steps):
        rec = records[k]
        ex = exact_fr_gaussian(mu0, pi, t)
        pm, pv = float(rec.mean[0]), float(rec.var[0])
        om, ov = float(ex.mean[0]), float(ex.cov[0, 0])
        rows.append([t, pm, pv, om, ov, abs(pm - om), abs(pv - ov)])
    write_csv(out / "oracle_compare.csv", ORACLE_COLUMNS, rows)
    init = records[0]
    summary = _summary(
        cfg,
        time.perf_counter() - t0,
        initial_mc_error={
            "mean": float(abs(init.mean[0] - mu0.mean[0])),
            "var": float(abs(init.var[0] - mu0.cov[0, 0])),
        },
        rows=[dict(zip(ORACLE_COLUMNS, r)) for r in rows],
        files=["oracle_compare.csv", "summary.json"]
        + (["oracle_compare.svg"] if cfg.output.plot else []),
    )
    if cfg.output.plot:
        series = {
            "particle mean": [r[1] for r in rows],
            "exact mean": [r[3] for r in rows],
            "particle var": [r[2] for r in rows],
            "exact var": [r[4] for r in rows],
        }
        (out / "oracle_compare.svg").write_text(
            line_plot(times, series, "time", "moment", "Fisher-Rao KL flow vs exact"),
            encoding="utf-8",
        )
    write_json(out / "summary.json", summary)
    for r in rows:
        log(f"t={r[0]:g} mean {r[1]:.4f} vs {r[3]:.4f}  var {r[2]:.4f} vs {r[4]:.4f}")
    return summary


def paired_diff(dir_a, dir_b) -> dict:
    """Compare the final particles of two flow runs (e.g. target vs scaled target)."""
    ha, a = read_csv(Path(dir_a) / "final_particles.csv")
    hb, b = read_csv(Path(dir_b) / "final_particles.csv")
    if ha != hb or a.shape != b.shape:
        raise ValueError("runs are not comparable")
    return {
        "max_abs_position_diff": float(np.max(np.abs(a[:, :-1] - b[:, :-1]))),
        "max_abs_log_weight_diff": float(np.max(np.abs(a[:, -1] - b[:, -1]))),
    }


def selftest(log=print) -> bool:
    """Fast end-to-end checks of the scale-invariance results."""
    from .bregman import BetaGenerator
    from .invariance import constancy_defect, divergence_shift, first_variation_shift
    from .targets import gaussian_target, scaled

    ok = True

    def check(name, cond):
        nonlocal ok
        ok &= bool(cond)
        log(f"{'PASS' if cond else 'FAIL'}  {name}")

    pi = _grid_gaussian(0.0, 1.0, -5.0, 5.0, 1001)
    for c in (0.5, 2.0, 10.0):
        d = first_variation_shift(BetaGenerator(1.0), c, pi)
        check(f"KL shift constant, c={c}", constancy_defect(d) <= 1e-10)
    for beta in (0.0, 0.5, 2.0, 3.0):
        d = first_variation_shift(BetaGenerator(beta), 2.0, pi)
        check(f"beta={beta} shift not constant", constancy_defect(d) >= 0.01)
    wide = _grid_gaussian(0.0, 1.0, -10.0, 10.0, 4001)
    shifts = [
        divergence_shift(BetaGenerator(1.0), 2.0, _grid_gaussian(m, 1.0, -10.0, 10.0, 4001), wide)
        for m in (0.0, 1.0)
    ]
    check("KL divergence shift = c - 1 - log c", all(abs(s - (1.0 - math.log(2.0))) <= 1e-5 for s in shifts))
    base = gaussian_target([2.0], [[1.0]])
    for metric in ("wasserstein", "fisher_rao", "wfr", "stein"):
        fc = FlowConfig(metric=metric, beta=1.0, gamma=0.05, n_steps=10, n_particles=200, seed=7)
        init = GaussianLaw([0.0], [[1.0]])
        a, _ = _run_particles(base, fc, init)
        b, _ = _run_particles(scaled(base, 10.0), fc, init)
        same = np.array_equal(a.positions, b.positions) and np.max(
            np.abs(a.log_weights - b.log_weights)
        ) <= 1e-12
        check(f"KL {metric} flow unchanged by target scale", same)
    return ok


# entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bregflow", description=__doc__.splitlines()[1])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("flow", "invariance", "oracle-compare"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="YAML (or JSON summary) config file")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--quiet", action="store_true")
    st = sub.add_parser("selftest")
    st.add_argument("--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda *a, **k: None) if args.quiet else print
    if args.command == "selftest":
        return EXIT_OK if selftest(log) else EXIT_RUNTIME
    try:
        cfg = load(args.config) if args.config else RunConfig()
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must lie in [0, 2**64)")
            cfg.seed = args.seed
        if cfg.experiment != args.command:
            cfg.experiment = args.command
            cfg = RunConfig.from_dict(cfg.to_dict())
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.output.dir)
    runner = {"flow": run_flow, "invariance": run_invariance, "oracle-compare": run_oracle_compare}
    try:
        runner[args.command](cfg, out, log)
    except (NumericalError, FloatingPointError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
