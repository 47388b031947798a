"""Command-line driver.

Subcommands: evaluate, optimize, sweep, table1, bound, maximin. Exit codes:
0 success, 2 invalid input, 3 I/O failure, 4 optimizer non-convergence (the
best result found is still printed).
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import adiabatic, antiadiabatic
from .dp_exact import DEFAULT_GRID, GridSpec, build_tables, optimize_dp
from .errors import ConvergenceError, InvalidInputError
from .lz_core import as_coupling, lz_probability
from .objective import (
    MAX_MEASUREMENTS,
    MeasurementSchedule,
    OptimizationResult,
    bloch_angle,
    transition_probability,
    upper_bound,
)
from .svg import line_plot

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NONCONVERGED = 0, 2, 3, 4
METHODS = ("dp", "antiadiabatic", "adiabatic", "auto")
AUTO_SWITCH_GAMMA = 0.5
SWEEP_MAX_N = 15
CSV_HEADER = ("gamma", "n", "method", "probability", "bound", "instants", "wall_time_ms")


class UsageError(InvalidInputError):
    pass


def resolve_method(method: str, gamma: float) -> str:
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    if method != "auto":
        return method
    return "antiadiabatic" if gamma <= AUTO_SWITCH_GAMMA else "adiabatic"


def run_optimizer(gamma: float, n: int, method: str, rng_seed: int = 0, grid: GridSpec = DEFAULT_GRID, table=None):
    """One optimisation; ``n = 0`` returns the bare crossing."""
    c = as_coupling(gamma)
    used = resolve_method(method, c.gamma)
    if n == 0:
        return OptimizationResult(MeasurementSchedule(c, ()), lz_probability(c), "lz", upper_bound(0, bloch_angle(c)))
    if used == "dp":
        return optimize_dp(c, n, grid, table=table)
    if used == "antiadiabatic":
        return antiadiabatic.optimize_antiadiabatic(c, n)
    return adiabatic.optimize_adiabatic(c, n, rng_seed=rng_seed)


# -- sweep rows ----------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    gamma: float
    n: int
    method: str
    probability: float
    bound: float
    instants: tuple[float, ...]
    wall_time_ms: float = 0.0

    def __post_init__(self):
        # the CSV keeps six decimals; rounding here makes emit/parse lossless
        object.__setattr__(self, "instants", tuple(round(float(t), 6) for t in self.instants))
        object.__setattr__(self, "wall_time_ms", round(float(self.wall_time_ms), 3))

    def cells(self) -> list[str]:
        return [
            repr(float(self.gamma)),
            str(self.n),
            self.method,
            repr(float(self.probability)),
            repr(float(self.bound)),
            ";".join(f"{t:.6f}" for t in self.instants),
            f"{self.wall_time_ms:.3f}",
        ]


def emit_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def parse_csv(text: str) -> list[SweepRow]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_HEADER:
        raise InvalidInputError(f"unexpected CSV header {reader.fieldnames}")
    return [
        SweepRow(
            gamma=float(d["gamma"]),
            n=int(d["n"]),
            method=d["method"],
            probability=float(d["probability"]),
            bound=float(d["bound"]),
            instants=tuple(float(t) for t in d["instants"].split(";") if t),
            wall_time_ms=float(d["wall_time_ms"]),
        )
        for d in reader
    ]


def _sweep_gamma(task):
    gamma, ns, method, rng_seed, grid = task
    used = resolve_method(method, gamma)
    table = None
    if used == "dp" and any(n > 0 for n in ns):
        table = build_tables(gamma, max(ns), grid)
    rows = []
    for n in ns:
        start = time.perf_counter()
        r = run_optimizer(gamma, n, method, rng_seed, grid, table)
        rows.append(
            SweepRow(gamma, n, r.method, r.probability, r.bound, r.instants, 1000 * (time.perf_counter() - start))
        )
    return rows


def run_sweep(gammas, ns, method="auto", rng_seed=0, grid: GridSpec = DEFAULT_GRID, workers=None) -> list[SweepRow]:
    """All ``(gamma, n)`` cells, ordered by gamma then n as given."""
    if not gammas or not ns:
        raise InvalidInputError("sweep needs at least one gamma and one n")
    if any(g <= 0 for g in gammas):
        raise InvalidInputError("sweep gammas must be positive")
    if any(n < 0 for n in ns):
        raise InvalidInputError("n must be non-negative")
    for g in gammas:
        resolve_method(method, g)
    tasks = [(float(g), tuple(ns), method, rng_seed, grid) for g in gammas]
    workers = workers or os.cpu_count() or 1
    if workers == 1 or len(tasks) == 1:
        chunks = [_sweep_gamma(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
            chunks = list(pool.map(_sweep_gamma, tasks))
    return [row for chunk in chunks for row in chunk]


def sweep_plots(rows: Sequence[SweepRow]) -> dict[str, str]:
    """Probability against n per gamma, and against gamma per n."""
    by_gamma: dict[float, list[SweepRow]] = {}
    by_n: dict[int, list[SweepRow]] = {}
    for r in rows:
        by_gamma.setdefault(r.gamma, []).append(r)
        by_n.setdefault(r.n, []).append(r)
    vs_n = {
        f"gamma={g:g}": ([r.n for r in rs], [r.probability for r in rs])
        for g, rs in by_gamma.items()
    }
    vs_gamma = {
        f"N={n}": ([r.gamma for r in sorted(rs, key=lambda r: r.gamma)], [r.probability for r in sorted(rs, key=lambda r: r.gamma)])
        for n, rs in sorted(by_n.items())
    }
    return {
        "vs_n": line_plot(vs_n, "Maximal transition probability", "number of measurements N", "probability"),
        "vs_gamma": line_plot(vs_gamma, "Maximal transition probability", "gamma", "probability"),
    }


# -- argument handling -----------------------------------------------------------


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _counts(text: str) -> list[int]:
    out = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                out.extend(range(int(a), int(b) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of counts: {text!r}") from None
    return out


def read_config(path: str) -> dict[str, str]:
    """Plain ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidInputError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lzmeasure",
        description="Landau-Zener transition probability under nonselective measurements.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--config", help="key=value file of defaults; command-line flags take precedence")
    sub = p.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    def grid_flags(sp):
        sp.add_argument("--grid-min", type=float, default=DEFAULT_GRID.t_min, help="DP grid start")
        sp.add_argument("--grid-max", type=float, default=DEFAULT_GRID.t_max, help="DP grid end")
        sp.add_argument("--grid-step", type=float, default=DEFAULT_GRID.step, help="DP grid step")

    ev = sub.add_parser("evaluate", help="exact probability for given instants", formatter_class=fmt)
    ev.add_argument("--gamma", type=float, required=True)
    ev.add_argument("--times", type=_floats, default=[], help="comma-separated measurement instants; write --times=-1,2 when the list starts with a minus")

    op = sub.add_parser("optimize", help="optimise n measurement instants", formatter_class=fmt)
    op.add_argument("--gamma", type=float, required=True)
    op.add_argument("--n", type=int, required=True)
    op.add_argument("--method", choices=METHODS, default="auto", help="auto: antiadiabatic for gamma <= 0.5, else adiabatic")
    op.add_argument("--seed", type=int, default=0, help="RNG seed for differential evolution")
    op.add_argument("--max-n", type=int, default=MAX_MEASUREMENTS)
    grid_flags(op)

    sw = sub.add_parser("sweep", help="optimise over a gamma x n grid and write CSV", formatter_class=fmt)
    sw.add_argument("--gamma", type=_floats, required=True, help="comma-separated gammas")
    sw.add_argument("--n", type=_counts, default=list(range(0, SWEEP_MAX_N + 1)), help="counts, e.g. 0-15 or 1,2,5")
    sw.add_argument("--method", choices=METHODS, default="auto")
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--max-n", type=int, default=SWEEP_MAX_N)
    sw.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    sw.add_argument("--out", default="-", help="CSV path, - for stdout")
    sw.add_argument("--svg", help="prefix for <prefix>_vs_n.svg and <prefix>_vs_gamma.svg")
    grid_flags(sw)

    tb = sub.add_parser("table1", help="first-order optimal schedules for N = 1..15", formatter_class=fmt)
    tb.add_argument("--n", type=int, default=15, help="largest N")
    tb.add_argument("--out", default="-")

    bd = sub.add_parser("bound", help="upper bound for n freely chosen measurements", formatter_class=fmt)
    bd.add_argument("--n", type=int, required=True)
    bd.add_argument("--gamma", type=float, help="use the gamma-dependent angle instead of pi")

    mm = sub.add_parser("maximin", help="worst-phase optimum for large gamma", formatter_class=fmt)
    mm.add_argument("--n", type=int, required=True)
    mm.add_argument("--verify", action="store_true", help="brute-force angle grid (step pi/12), n <= 4")
    return p


def _parse(argv):
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    if known.config and known.command in COMMANDS:
        try:
            cfg = read_config(known.config)
        except OSError as e:
            raise OSError(f"cannot read config {known.config}: {e}") from e
        sub = parser._subparsers._group_actions[0].choices[known.command]
        actions = {a.dest: a for a in sub._actions}
        unknown = set(cfg) - set(actions)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, action in actions.items():
            if key not in cfg:
                continue
            action.required = False
            if isinstance(action, argparse._StoreTrueAction):
                cfg[key] = cfg[key].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**cfg)
    return parser.parse_args(argv)


def _grid(args) -> GridSpec:
    return GridSpec(args.grid_min, args.grid_max, args.grid_step)


def _write(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _fmt_times(ts) -> str:
    return ", ".join(f"{t:.4f}" for t in ts) if len(ts) else "(none)"


def cmd_evaluate(args) -> int:
    times = list(args.times)
    if times != sorted(times):
        print("warning: instants were not sorted; sorting", file=sys.stderr)
        times.sort()
    s = MeasurementSchedule(as_coupling(args.gamma), tuple(times))
    print(f"{transition_probability(s):.6f}")
    return EXIT_OK


def cmd_optimize(args) -> int:
    if not 0 <= args.n <= args.max_n:
        raise UsageError(f"n must lie in 0..{args.max_n}")
    r = run_optimizer(args.gamma, args.n, args.method, args.seed, _grid(args))
    print(f"method: {r.method}")
    print(f"gamma: {args.gamma:g}")
    print(f"n: {args.n}")
    print(f"instants: {_fmt_times(r.instants)}")
    print(f"probability: {r.probability:.6f}")
    print(f"bound: {r.bound:.6f}")
    if r.diagnostics.get("converged") is False:
        print("warning: local refinement hit its iteration cap", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_sweep(args) -> int:
    if any(n > args.max_n for n in args.n):
        raise UsageError(f"n above --max-n={args.max_n}")
    rows = run_sweep(args.gamma, args.n, args.method, args.seed, _grid(args), args.workers)
    _write(args.out, emit_csv(rows))
    if args.svg:
        for name, doc in sweep_plots(rows).items():
            Path(f"{args.svg}_{name}.svg").write_text(doc)
    return EXIT_OK


def cmd_table1(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "f", "reported_value", "instants", "value_deviation", "instant_deviation", "symmetric", "note"])
    for row in antiadiabatic.table1(args.n):
        dv, dt = antiadiabatic.table1_deviation(row)
        w.writerow([
            row.n,
            f"{row.f_value:.4f}",
            f"{row.reported_value:.4f}",
            ";".join(f"{t:.2f}" for t in row.instants),
            f"{dv:+.4f}",
            f"{dt:.4f}",
            str(row.symmetric).lower(),
            antiadiabatic.TABLE1_ERRATA.get(row.n, ""),
        ])
    _write(args.out, buf.getvalue())
    return EXIT_OK


def cmd_bound(args) -> int:
    angle = math.pi if args.gamma is None else bloch_angle(args.gamma)
    print(f"{upper_bound(args.n, angle):.6f}")
    return EXIT_OK


def cmd_maximin(args) -> int:
    value, canonical = adiabatic.maximin_solve(args.n)
    print(f"value: {value}")
    print("canonical angles: " + ", ".join(f"{a:.6f}" for a in canonical.alphas))
    print("a single measurement at t = 0; the remaining ones are no-ops at t = +inf")
    if args.verify:
        if args.n > 4:
            raise UsageError("--verify supports n <= 4")
        rep = adiabatic.maximin_grid_search(args.n)
        if rep.best_value <= 0.5 + 1e-9:
            print(f"no grid point exceeds 0.5 ({rep.schedules} schedules, step pi/12)")
        else:
            print(f"grid point exceeds 0.5: {rep.best_angles} -> {rep.best_value}")
        print(f"classifier disagreements: {len(rep.mismatches)}")
    return EXIT_OK


COMMANDS = {
    "evaluate": cmd_evaluate,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "table1": cmd_table1,
    "bound": cmd_bound,
    "maximin": cmd_maximin,
}


def main(argv=None) -> int:
    try:
        args = _parse(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except InvalidInputError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except ConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (InvalidInputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
