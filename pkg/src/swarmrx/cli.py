"""Command line front end: `run`, `node`, and `report` subcommands.

Exit codes are stable: 0 success, 2 scenario/config problem, 3 I/O failure,
4 swarm lost, 1 anything unexpected. Diagnostics go to stderr; results and
summaries to stdout.
"""

from __future__ import annotations

import argparse
import csv
import math
import signal
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SWARM_LOST = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmrx", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario on the in-process transport")
    p_run.add_argument("scenario", help="scenario config file")
    p_run.add_argument("-o", "--output", default="trace.csv", help="trace CSV path")
    p_run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p_run.add_argument("--pgm-dir", default=None, help="directory for reconstructed images")
    p_run.add_argument("-q", "--quiet", action="store_true", help="suppress the summary table")

    p_node = sub.add_parser("node", help="run one swarm node over TCP until interrupted")
    p_node.add_argument("index", type=int, help="node index in [0, n_receivers)")
    p_node.add_argument("scenario", help="scenario config file")
    p_node.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p_node.add_argument("--peers", default=None, help="comma-separated peer hosts (one per node)")
    p_node.add_argument("--base-port", type=int, default=None)
    p_node.add_argument("--decision-log", default=None, help="file receiving one line per decision")
    p_node.add_argument("--max-cycles", type=int, default=None, help="exit after this many decisions")

    p_rep = sub.add_parser("report", help="summarize a trace CSV")
    p_rep.add_argument("trace", help="trace CSV produced by `run`")
    p_rep.add_argument("--window", type=int, default=500, help="cycles per averaging window")
    p_rep.add_argument("-o", "--output", default=None, help="windowed-average CSV path")
    return parser


def decision_line(decision, leader: int) -> str:
    participants = ",".join(str(p) for p in decision.participants)
    return (
        f"cycle={decision.cycle} leader={leader} algorithm={decision.algorithm.name} "
        f"n_s={decision.n_s} participants={participants} "
        f"combined_ber={decision.combined_ber:.6f} combined_rate={decision.data_rate:.6f}"
    )


def _cmd_run(args) -> int:
    from .scenario import load_scenario, reconstruct_segment_images, run_scenario, write_pgm, write_trace
    from .scenario.config import ScenarioConfigError
    from .swarm.node import SwarmLostError

    try:
        cfg = load_scenario(args.scenario, overrides=args.overrides)
    except ScenarioConfigError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        result = run_scenario(cfg)
    except SwarmLostError as exc:
        print(f"swarm lost: {exc}", file=sys.stderr)
        return EXIT_SWARM_LOST

    try:
        write_trace(result.records, args.output, n_receivers=cfg.n_receivers)
        if cfg.payload_source == "image":
            out = Path(args.output)
            pgm_dir = Path(args.pgm_dir) if args.pgm_dir else out.parent / (out.stem + "_images")
            pgm_dir.mkdir(parents=True, exist_ok=True)
            for seg in range(cfg.n_segments):
                combined, branches = reconstruct_segment_images(cfg, result, seg)
                write_pgm(combined, pgm_dir / f"seg{seg}_combined.pgm")
                for b, img in branches.items():
                    write_pgm(img, pgm_dir / f"seg{seg}_branch{b}.pgm")
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO

    if not args.quiet:
        _print_run_summary(cfg, result)
    return EXIT_OK


def _print_run_summary(cfg, result) -> None:
    print(f"completed {len(result.records)} cycles over {cfg.n_segments} segment(s)")
    print(f"{'seg':>3} {'cycles':>7} {'algorithms':<24} {'combined_rate':>14} {'best_branch':>12}")
    for seg in range(cfg.n_segments):
        recs = result.segment_records(seg)
        if not recs:
            continue
        algos = sorted({r.algorithm.name for r in recs})
        mean_combined = float(np.mean([r.combined_rate for r in recs]))
        mean_best = float(np.mean([max(r.per_branch_rate.values()) for r in recs]))
        print(
            f"{seg:>3} {len(recs):>7} {'/'.join(algos):<24} {mean_combined:>14.1f} {mean_best:>12.1f}"
        )


def _cmd_node(args) -> int:
    from .scenario import cycle_context, load_scenario, observe_branch
    from .scenario.config import ScenarioConfigError
    from .selfheal import HealConfig
    from .swarm.node import NodeTimeouts, SwarmNode, run_node
    from .swarm.tcp import TcpTransport

    try:
        cfg = load_scenario(args.scenario, overrides=args.overrides)
    except ScenarioConfigError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not 0 <= args.index < cfg.n_receivers:
        print(f"node index {args.index} outside [0, {cfg.n_receivers})", file=sys.stderr)
        return EXIT_CONFIG

    hosts = (args.peers.split(",") if args.peers else None) or list(cfg.peers) or ["127.0.0.1"] * cfg.n_receivers
    if len(hosts) != cfg.n_receivers:
        print(f"need {cfg.n_receivers} peer hosts, got {len(hosts)}", file=sys.stderr)
        return EXIT_CONFIG
    base_port = args.base_port if args.base_port is not None else cfg.base_port
    addresses = [(host.strip(), base_port + i) for i, host in enumerate(hosts)]

    log_file = open(args.decision_log, "w", buffering=1) if args.decision_log else None
    stop = {"flag": False}
    decided = {"count": 0}

    def on_decision(decision, leader: int) -> None:
        line = decision_line(decision, leader)
        print(line, flush=True)
        if log_file:
            log_file.write(line + "\n")
        decided["count"] += 1
        if args.max_cycles is not None and decided["count"] >= args.max_cycles:
            stop["flag"] = True

    def on_signal(signum, frame) -> None:
        stop["flag"] = True

    signal.signal(signal.SIGINT, on_signal)
    signal.signal(signal.SIGTERM, on_signal)

    import time

    class _WallClock:
        @staticmethod
        def now() -> float:
            return time.monotonic()

    try:
        transport = TcpTransport(args.index, addresses)
    except OSError as exc:
        print(f"io error: cannot listen on {addresses[args.index]}: {exc}", file=sys.stderr)
        return EXIT_IO

    # Startup barrier: wait until the peers are reachable (bounded) so cycle 0
    # starts against live connections instead of exclusion timeouts.
    from .swarm.codec import MsgType, SwarmMessage

    warmup_deadline = time.monotonic() + max(cfg.t_report_s, 3.0)
    for peer in range(cfg.n_receivers):
        if peer != args.index:
            transport.send(peer, SwarmMessage(msg_type=MsgType.HELLO, sender=args.index, cycle=0))
    while time.monotonic() < warmup_deadline and not stop["flag"]:
        if len(transport.connected_peers()) >= cfg.n_receivers - 1:
            break
        transport.retry_now()
        time.sleep(0.05)

    t_start = time.monotonic()
    node = SwarmNode(
        node_id=args.index,
        n_total=cfg.n_receivers,
        observer=lambda cycle: observe_branch(cfg, cycle, args.index),
        context=lambda cycle: cycle_context(cfg, cycle),
        transport=transport,
        clock=_WallClock(),
        heal=HealConfig(ber_threshold=cfg.ber_threshold, n_total=cfg.n_receivers),
        timeouts=NodeTimeouts(t_report=cfg.t_report_s, t_heartbeat=cfg.t_heartbeat_s),
        on_decision=on_decision,
        on_event=lambda text: print(
            f"# [{time.monotonic() - t_start:8.3f}] {text}", file=sys.stderr, flush=True
        ),
    )
    print(f"# node {args.index} listening on {addresses[args.index]}", file=sys.stderr, flush=True)
    try:
        run_node(node, stop_check=lambda: stop["flag"])
    finally:
        if log_file:
            log_file.close()
    return EXIT_OK


def _cmd_report(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        print(f"trace not found: {path}", file=sys.stderr)
        return EXIT_IO
    if args.window < 1:
        print(f"window must be >= 1, got {args.window}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, csv.Error) as exc:
        print(f"cannot parse trace: {exc}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        print("trace has no records", file=sys.stderr)
        return EXIT_IO

    rate_cols = sorted(
        (c for c in rows[0] if c.startswith("rate_")), key=lambda c: int(c.split("_")[1])
    )
    required = {"cycle", "algorithm", "combined_rate"}
    if not required <= set(rows[0]) or not rate_cols:
        missing = sorted(required - set(rows[0]))
        print(f"trace missing columns: {missing or 'rate_*'}", file=sys.stderr)
        return EXIT_IO

    try:
        algo_counts: dict[str, int] = {}
        combined = []
        branch_rates = {c: [] for c in rate_cols}
        violations = 0
        for row in rows:
            algo_counts[row["algorithm"]] = algo_counts.get(row["algorithm"], 0) + 1
            c_rate = float(row["combined_rate"])
            combined.append(c_rate)
            best = -math.inf
            for col in rate_cols:
                v = float(row[col])
                branch_rates[col].append(v)
                if not math.isnan(v):
                    best = max(best, v)
            if best > -math.inf and c_rate < 0.98 * best:
                violations += 1
    except (ValueError, KeyError) as exc:
        print(f"cannot parse trace: bad value ({exc})", file=sys.stderr)
        return EXIT_IO

    total = len(rows)
    print(f"cycles: {total}")
    for name in sorted(algo_counts):
        n = algo_counts[name]
        print(f"  {name}: {n} cycles ({100.0 * n / total:.1f}%)")
    print(f"mean combined rate: {np.mean(combined):.1f} b/s")
    for col in rate_cols:
        vals = [v for v in branch_rates[col] if not math.isnan(v)]
        mean = np.mean(vals) if vals else math.nan
        print(f"  mean {col}: {mean:.1f} b/s")
    print(f"dominance violations (combined < 98% of best branch): {violations}")

    if args.output:
        lines = ["window_start,combined_rate," + ",".join(rate_cols)]
        for start in range(0, total, args.window):
            block = slice(start, start + args.window)
            cells = [rows[start]["cycle"], f"{np.mean(combined[block]):.6f}"]
            for col in rate_cols:
                vals = [v for v in branch_rates[col][block] if not math.isnan(v)]
                cells.append(f"{np.mean(vals):.6f}" if vals else "nan")
            lines.append(",".join(cells))
        try:
            Path(args.output).write_text("\n".join(lines) + "\n")
        except OSError as exc:
            print(f"io error: {exc}", file=sys.stderr)
            return EXIT_IO
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "node":
            return _cmd_node(args)
        return _cmd_report(args)
    except KeyboardInterrupt:
        return EXIT_OK
    except Exception as exc:  # last-resort diagnostic, still a stable code
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
