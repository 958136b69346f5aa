"""Command-line surface emitting machine-readable sweep and table files.

Output is comma-separated text with a ``#``-prefixed header block that
echoes the tool version and the fully resolved configuration.  dB values
are converted to linear SNR here and nowhere else.  Exit codes: 0 on
success, 2 on invalid configuration, 3 on numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import tempfile
from datetime import datetime, timezone

from . import __version__
from .analytic import _ber_approx, _ber_exact, DEFAULT_PRONY
from .errors import BitarqError, NumericFailureError
from .feedback import (
    expected_idle_periods,
    mean_report_delay,
    optimal_c1,
    simulate_permutation_search,
    throughput_one_retx,
)
from .fusion import (
    TECHNOLOGIES,
    SegmentedDesign,
    feasible,
    required_snr,
    schedule_uplink,
    segment_feasibility,
    serialize_plan,
)
from .mc import simulate
from .model import (
    FixedRate,
    FixedThreshold,
    FixedWindow,
    LinkModel,
    ProtocolConfig,
    fixed_rate_window,
)
from .optimize import (
    equal_probability_thresholds,
    fixed_threshold_rate,
    fixed_threshold_windows,
    optimize_rate,
    optimize_threshold,
    optimize_window,
)

_THREADS_ENV = "BITARQ_THREADS"


def _db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _n_jobs() -> int:
    try:
        return max(1, int(os.environ.get(_THREADS_ENV, "1")))
    except ValueError:
        return 1


def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"{text} is not positive")
        return value

    return parse


def _non_negative(kind):
    def parse(text: str):
        value = kind(text)
        if value < 0:
            raise argparse.ArgumentTypeError(f"{text} is negative")
        return value

    return parse


class _Output:
    """Collects header comments and rows; atomic file replacement on write."""

    def __init__(self, command: str, reproducible: bool):
        self.lines: list[str] = [f"# tool: bitarq {__version__}", f"# command: {command}"]
        if not reproducible:
            self.lines.append(f"# timestamp: {datetime.now(timezone.utc).isoformat()}")

    def config(self, **items) -> None:
        resolved = " ".join(f"{k}={v}" for k, v in sorted(items.items()))
        self.lines.append(f"# config: {resolved}")

    def comment(self, text: str) -> None:
        self.lines.append(f"# {text}")

    def row(self, *cells) -> None:
        self.lines.append(",".join("" if c is None else str(c) for c in cells))

    def raw(self, text: str) -> None:
        if text:
            self.lines.extend(text.split("\n"))

    def write(self, path: str | None) -> None:
        body = "\n".join(self.lines) + "\n"
        if path is None:
            sys.stdout.write(body)
            return
        directory = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".bitarq-")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(body)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _fmt(x: float) -> str:
    return f"{x:.10e}"


# ---------------------------------------------------------------------------
# sweep commands
# ---------------------------------------------------------------------------


def _sweep_grid(kind: str, points: int, n: int, d: int, u_max: float):
    if kind == "rate":
        lo, hi = 1.0 / (1.0 + d), n / (d + n)
        return [lo + (hi - lo) * (i + 1) / points for i in range(points)]
    if kind == "window":
        return [(i + 1) / points for i in range(points)]
    return [u_max * (i + 1) / points for i in range(points)]


def _sweep_point(kind: str, x: float, n: int, d: int, base_snr: float):
    """Resolve one sweep cell to (thresholds, effective snr)."""
    link = LinkModel(base_snr)
    if kind == "rate":
        p = min(1.0, (1.0 / x - 1.0) / d)
        snr_eff = base_snr * x
        return equal_probability_thresholds(d, p, link.with_snr(snr_eff)), snr_eff
    if kind == "window":
        rate = 1.0 / (1.0 + d * x)
        snr_eff = base_snr * rate
        return equal_probability_thresholds(d, x, link.with_snr(snr_eff)), snr_eff
    rate, snr_eff = fixed_threshold_rate(n, d, x, base_snr)
    return (x,) * d, snr_eff


def _run_sweep(kind: str, args) -> _Output:
    out = _Output(f"sweep-{kind}", args.reproducible)
    base_snr = _db_to_linear(args.snr_db)
    u_max = args.u_max if kind == "threshold" else 0.0
    if kind == "threshold" and u_max is None:
        u_max = math.sqrt(2.0 * base_snr) + 4.0
    out.config(
        snr_db=args.snr_db, n=args.n, d=args.d, points=args.points,
        bits=args.bits, seed=args.seed,
        **({"u_max": round(u_max, 6)} if kind == "threshold" else {}),
    )
    name = {"rate": "rf", "window": "w_over_n", "threshold": "u_norm"}[kind]
    out.row(name, "ber_approx", "ber_exact", "ber_mc", "mc_stderr")
    jobs = _n_jobs()
    for x in _sweep_grid(kind, args.points, args.n, args.d, u_max):
        us, snr_eff = _sweep_point(kind, x, args.n, args.d, base_snr)
        approx = _ber_approx(snr_eff, us, DEFAULT_PRONY)
        exact = _ber_exact(snr_eff, us)
        mc = stderr = None
        if args.bits:
            cfg = ProtocolConfig(args.n, args.d, thresholds=us)
            rep = simulate(
                cfg, LinkModel(snr_eff), "preassigned", args.bits, args.seed,
                n_jobs=jobs,
            )
            mc, stderr = _fmt(rep.ber), _fmt(rep.stderr)
        out.row(f"{x:.8f}", _fmt(approx), _fmt(exact), mc, stderr)
    return out


# ---------------------------------------------------------------------------
# subcommand runners
# ---------------------------------------------------------------------------


def _run_optimize(args) -> _Output:
    out = _Output("optimize", args.reproducible)
    base = LinkModel(_db_to_linear(args.snr_db))
    out.config(strategy=args.strategy, snr_db=args.snr_db, n=args.n, d=args.d, points=args.points)
    runner = {"rate": optimize_rate, "window": optimize_window, "threshold": optimize_threshold}
    res = runner[args.strategy](args.n, args.d, base, points=args.points)
    out.row(
        "strategy", "minimizer", "min_ber_approx", "min_ber_exact",
        "forward_rate", "boundary", "refined", "unimodal",
    )
    out.row(
        args.strategy, f"{res.minimizer:.8f}", _fmt(res.min_ber), _fmt(res.min_ber_exact),
        f"{res.forward_rate:.8f}", res.boundary, res.refined, res.unimodal,
    )
    return out


def _build_sim_config(args, base_snr: float) -> tuple[ProtocolConfig, float]:
    n, d = args.n, args.d
    if args.scheme == "full_repetition" or d == 0:
        return ProtocolConfig(n, d), base_snr / (1.0 + d)
    given = [v is not None for v in (args.rate, args.window, args.threshold)]
    if sum(given) != 1:
        raise BitarqError("give exactly one of --rate, --window, --threshold")
    if args.threshold is not None:
        us = (args.threshold,) * d
        rate, snr_eff = fixed_threshold_rate(n, d, args.threshold, base_snr)
        windows = fixed_threshold_windows(n, d, args.threshold, snr_eff)
        windows = tuple(max(1, w) for w in windows)
        cfg = ProtocolConfig(
            n, d, strategy=FixedThreshold(args.threshold), thresholds=us, windows=windows
        )
        return cfg, snr_eff
    if args.rate is not None:
        w = fixed_rate_window(n, d, args.rate)
        strategy = FixedRate(args.rate)
        rate = n / (n + d * w)
    else:
        w = max(1, min(n, round(args.window * n)))
        strategy = FixedWindow(args.window)
        rate = 1.0 / (1.0 + d * w / n)
    snr_eff = base_snr * rate
    us = equal_probability_thresholds(d, w / n, LinkModel(snr_eff))
    cfg = ProtocolConfig(n, d, strategy=strategy, thresholds=us, windows=(w,) * d)
    return cfg, snr_eff


def _run_simulate(args) -> _Output:
    out = _Output("simulate", args.reproducible)
    base_snr = _db_to_linear(args.snr_db)
    cfg, snr_eff = _build_sim_config(args, base_snr)
    out.config(
        scheme=args.scheme, snr_db=args.snr_db, n=args.n, d=args.d, bits=args.bits,
        seed=args.seed, rate=args.rate, window=args.window, threshold=args.threshold,
        equalized_snr=f"{snr_eff:.10g}",
    )
    link = LinkModel(snr_eff) if args.equalize_energy else LinkModel(base_snr)
    rep = simulate(cfg, link, args.scheme, args.bits, args.seed, n_jobs=_n_jobs())
    out.row("scheme", "bits", "errors", "ber", "stderr", "rate_realized", "retransmitted")
    out.row(
        args.scheme, rep.bits_simulated, rep.bit_errors, _fmt(rep.ber), _fmt(rep.stderr),
        f"{rep.forward_rate_realized:.8f}", ";".join(map(str, rep.retransmitted_bits)),
    )
    return out


def _run_feedback_sim(args) -> _Output:
    out = _Output("feedback-sim", args.reproducible)
    c1 = args.c1 if args.c1 is not None else optimal_c1(args.n, args.w)
    out.config(n=args.n, w=args.w, c1=c1, trials=args.trials, seed=args.seed)
    ks, idles = simulate_permutation_search(args.n, args.w, c1, args.trials, args.seed)
    mean_k = float(ks.mean())
    mean_idle = float(idles.mean())
    delay = mean_idle + 1.0 + c1
    out.row(
        "trials", "c1", "c1_opt", "mean_k", "expected_k", "mean_idle",
        "expected_idle", "mean_delay", "throughput",
    )
    out.row(
        args.trials, c1, optimal_c1(args.n, args.w), f"{mean_k:.4f}",
        math.comb(args.n, args.w), f"{mean_idle:.6f}",
        f"{expected_idle_periods(args.n, args.w, c1):.6f}", f"{delay:.6f}",
        f"{throughput_one_retx(args.n, delay):.6f}",
    )
    return out


def _tech(name: str):
    if name not in TECHNOLOGIES:
        raise BitarqError(f"unknown technology {name!r} (choose from {sorted(TECHNOLOGIES)})")
    return TECHNOLOGIES[name]


def _run_fusion_plan(args) -> _Output:
    out = _Output("fusion-plan", args.reproducible)
    n = args.n if args.n is not None else _tech(args.tech).packet_bits
    block_bits = args.block_bits if args.block_bits is not None else n
    out.config(tech=args.tech, n=n, w=args.w, d=args.d, blocks=args.blocks, block_bits=block_bits)
    plan = schedule_uplink(n, args.w, args.d, args.blocks, block_bits)
    out.raw(serialize_plan(plan))
    return out


def _run_fusion_feasibility(args) -> _Output:
    out = _Output("fusion-feasibility", args.reproducible)
    tech = _tech(args.tech)
    design = SegmentedDesign(tech, args.pf, args.pr, args.nseg, args.wseg)
    out.config(tech=args.tech, pf=args.pf, pr=args.pr, nseg=args.nseg, wseg=args.wseg)
    ppf, ppr = segment_feasibility(design)
    verdict = feasible(design)
    out.row("tech", "p_f", "p_r", "n_seg", "w_seg", "c_tot", "ppf", "ppr", "feasible", "reasons")
    out.row(
        args.tech, args.pf, args.pr, args.nseg, args.wseg, design.c_tot,
        f"{ppf:.6f}", f"{ppr:.6e}", verdict.feasible, ";".join(verdict.reasons),
    )
    return out


def _run_fit_check(args) -> _Output:
    out = _Output("fit-check", args.reproducible)
    tech = _tech(args.tech)
    out.config(tech=args.tech, ber=args.ber)
    out.row("tech", "target_ber", "snr_db")
    out.row(args.tech, args.ber, f"{required_snr(tech, args.ber):.2f}")
    return out


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    p.add_argument(
        "--reproducible", action="store_true",
        help="suppress the timestamp header for byte-identical reruns",
    )


def _add_sweep(sub, kind: str) -> None:
    p = sub.add_parser(f"sweep-{kind}", help=f"BER sweep over the {kind} parameter")
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--n", type=_positive(int), default=1024)
    p.add_argument("--d", type=_positive(int), required=True)
    p.add_argument("--points", type=_positive(int), default=64)
    p.add_argument("--bits", type=_non_negative(int), default=0,
                   help="Monte Carlo bits per grid point (0 = analytic only)")
    p.add_argument("--seed", type=_non_negative(int), default=0)
    if kind == "threshold":
        p.add_argument("--u-max", type=_positive(float), default=None)
    _add_common(p)
    p.set_defaults(func=lambda a: _run_sweep(kind, a))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitarq",
        description="Bitwise selective-retransmission analysis, simulation and design",
    )
    parser.add_argument("--version", action="version", version=f"bitarq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for kind in ("rate", "window", "threshold"):
        _add_sweep(sub, kind)

    p = sub.add_parser("optimize", help="minimize BER over one strategy parameter")
    p.add_argument("--strategy", choices=("rate", "window", "threshold"), required=True)
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--n", type=_positive(int), default=1024)
    p.add_argument("--d", type=_positive(int), required=True)
    p.add_argument("--points", type=_positive(int), default=64)
    _add_common(p)
    p.set_defaults(func=_run_optimize)

    p = sub.add_parser("simulate", help="Monte Carlo link simulation")
    p.add_argument("--scheme", choices=("sequential", "preassigned", "full_repetition"),
                   default="sequential")
    p.add_argument("--snr-db", type=float, required=True)
    p.add_argument("--n", type=_positive(int), default=1024)
    p.add_argument("--d", type=_non_negative(int), required=True)
    p.add_argument("--bits", type=_positive(int), required=True)
    p.add_argument("--seed", type=_non_negative(int), default=0)
    p.add_argument("--rate", type=_positive(float), default=None)
    p.add_argument("--window", type=_positive(float), default=None,
                   help="window fraction W/N in (0, 1]")
    p.add_argument("--threshold", type=_positive(float), default=None,
                   help="shared normalized reliability threshold")
    p.add_argument("--equalize-energy", action="store_true",
                   help="scale the symbol SNR by the forward rate")
    _add_common(p)
    p.set_defaults(func=_run_simulate)

    p = sub.add_parser("feedback-sim", help="synchronized-permutation search statistics")
    p.add_argument("--n", type=_positive(int), required=True)
    p.add_argument("--w", type=_positive(int), required=True)
    p.add_argument("--c1", type=_positive(int), default=None)
    p.add_argument("--trials", type=_positive(int), default=10000)
    p.add_argument("--seed", type=_non_negative(int), default=0)
    _add_common(p)
    p.set_defaults(func=_run_feedback_sim)

    p = sub.add_parser("fusion-plan", help="uplink packet-content schedule")
    p.add_argument("--tech", default="zigbee")
    p.add_argument("--n", type=_positive(int), default=None)
    p.add_argument("--w", type=_positive(int), required=True)
    p.add_argument("--d", type=_non_negative(int), required=True)
    p.add_argument("--blocks", type=_non_negative(int), required=True)
    p.add_argument("--block-bits", type=_positive(int), default=None)
    _add_common(p)
    p.set_defaults(func=_run_fusion_plan)

    p = sub.add_parser("fusion-feasibility", help="segmented-design feasibility probabilities")
    p.add_argument("--tech", required=True)
    p.add_argument("--pf", type=_positive(float), required=True)
    p.add_argument("--pr", type=_positive(float), required=True)
    p.add_argument("--nseg", type=_positive(int), required=True)
    p.add_argument("--wseg", type=_positive(int), required=True)
    _add_common(p)
    p.set_defaults(func=_run_fusion_feasibility)

    p = sub.add_parser("fit-check", help="SNR required for a target technology BER")
    p.add_argument("--tech", required=True)
    p.add_argument("--ber", type=_positive(float), required=True)
    _add_common(p)
    p.set_defaults(func=_run_fit_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out = args.func(args)
        out.write(args.output)
    except NumericFailureError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return 3
    except BitarqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
