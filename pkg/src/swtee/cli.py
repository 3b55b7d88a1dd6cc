"""Command-line entry point. Exit codes: 0 success, 1 verification failure, 2 usage error."""

from __future__ import annotations

import argparse
import asyncio
import logging
import os
import sys
import time
from pathlib import Path

from .crypto import AlgId
from .crypto.kat import run_kat_dir

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _device_secret(arg: str | None) -> bytes:
    secret = arg or os.environ.get("SWTEE_DEVICE_SECRET", "")
    if not secret:
        raise UsageError("a device secret is required (--device-secret or SWTEE_DEVICE_SECRET)")
    return secret.encode()


def cmd_gateway_run(args) -> int:
    from .gateway import GatewayConfig
    from .netrun import GatewayServer

    config = GatewayConfig.load(args.config) if args.config else GatewayConfig()
    server = GatewayServer(config, _device_secret(args.device_secret))
    try:
        asyncio.run(server.serve())
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_agent_run(args) -> int:
    from .gateway import AgentConfig
    from .netrun import run_agent

    config = AgentConfig.load(args.config)
    if not config.node_id:
        raise UsageError("agent config needs node_id")
    try:
        asyncio.run(run_agent(config))
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def _control(args, req: dict) -> dict:
    from .netrun import control_request

    try:
        return asyncio.run(control_request(args.control, req))
    except OSError as exc:
        raise UsageError(f"cannot reach gateway control port {args.control}: {exc}") from None


def cmd_deploy(args) -> int:
    code = Path(args.code).read_bytes()
    reply = _control(args, {"cmd": "deploy", "node": args.node, "code": code.hex()})
    print("deploy started" if reply["ok"] else f"deploy failed: {reply['error']}")
    return EXIT_OK if reply["ok"] else EXIT_FAIL


def cmd_attest(args) -> int:
    before = _control(args, {"cmd": "status", "node": args.node})
    if not before["ok"]:
        print(before["error"])
        return EXIT_FAIL
    reply = _control(args, {"cmd": "attest", "node": args.node})
    if not reply["ok"]:
        print(f"attest failed: {reply['error']}")
        return EXIT_FAIL
    deadline = time.monotonic() + args.timeout
    while time.monotonic() < deadline:
        now = _control(args, {"cmd": "status", "node": args.node})
        if len(now["verdicts"]) > len(before["verdicts"]):
            verdict = now["verdicts"][-1]
            print(f"verdict {verdict}")
            return EXIT_OK if verdict == "Ok" else EXIT_FAIL
        time.sleep(0.1)
    print("no verdict before timeout")
    return EXIT_FAIL


def cmd_scenario_run(args) -> int:
    from .errors import ScriptError
    from .gateway import GatewayConfig
    from .harness import run_scenario

    try:
        script = Path(args.script).read_text()
    except OSError as exc:
        raise UsageError(str(exc)) from None
    config = GatewayConfig(alg=args.alg, arena_size_bytes=256 * 1024)
    try:
        report = run_scenario(script, args.seed, config)
    except ScriptError as exc:
        raise UsageError(f"{args.script}: {exc}") from None
    if args.events:
        Path(args.events).write_text("\n".join(report.events) + "\n")
    print(report.render())
    print(f"{'PASSED' if report.passed else 'FAILED'}: {sum(c.passed for c in report.checks)}/{len(report.checks)} checks")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(args) -> int:
    from .harness.bench import (
        bench_emit, bench_run, monotonic_violations, ordering_ok, parse_sizes, peak_memory, ratios,
    )

    try:
        algs = [AlgId.parse(a) for a in args.algs.split(",")]
        sizes = parse_sizes(args.sizes)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.iters < 30:
        raise UsageError("--iters must be at least 30")
    rows = bench_run(algs, sizes, args.iters, seed=args.seed, progress=lambda m: print(m, file=sys.stderr))
    bench_emit(rows, "csv", args.out)
    if args.svg:
        bench_emit(rows, "svg", args.svg)
    for r in rows:
        flag = "  NOISY" if r.noisy else ""
        print(f"{r.alg:8s} {r.size_bytes:>7d} {r.op:8s} {r.mean_us:>12.1f} us  sd {r.stddev_us:>10.1f}{flag}")
    for alg in algs:
        print(f"peak heap {alg.label} {max(sizes)} bytes: {peak_memory(alg, max(sizes))} bytes")
    status = EXIT_OK
    if {AlgId.XOODYAK, AlgId.ISAP} <= set(algs):
        r = ratios(rows)
        print(f"isap/xoodyak time ratio: min {min(r.values()):.2f}, max {max(r.values()):.2f}")
        if args.check and (ordering_ok(rows) or min(r.values()) < 5):
            status = EXIT_FAIL
    bad = monotonic_violations(rows)
    for b in bad:
        print(f"non-monotonic: {b}")
    noisy = [r for r in rows if r.noisy]
    if noisy:
        print(f"{len(noisy)} rows flagged: stddev above 50% of mean")
    if args.check and bad:
        status = EXIT_FAIL
    return status


def cmd_logs_verify(args) -> int:
    from .gateway.logger import read_log

    path = Path(args.log_path)
    if not path.exists():
        raise UsageError(f"no such log: {path}")
    entries, verdict = read_log(path)
    if verdict:
        print(f"OK: {verdict.count} entries, chain intact")
        return EXIT_OK
    print(f"BROKEN at entry {verdict.index} ({len(entries)} entries parsed)")
    return EXIT_FAIL


def cmd_logs_show(args) -> int:
    from .gateway.logger import read_log

    entries, verdict = read_log(args.log_path)
    for e in entries:
        print(e.render())
    return EXIT_OK if verdict else EXIT_FAIL


def cmd_kat_run(args) -> int:
    if not Path(args.dir).is_dir():
        raise UsageError(f"not a directory: {args.dir}")
    results = run_kat_dir(args.dir)
    if not results:
        raise UsageError(f"no known KAT files in {args.dir}")
    for r in results:
        print(f"{'PASS' if r.ok else 'FAIL'} {Path(r.path).name}: {r.passed}/{r.total}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swtee", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gateway", help="gateway process").add_subparsers(dest="sub", required=True)
    gr = g.add_parser("run")
    gr.add_argument("--config")
    gr.add_argument("--device-secret")
    gr.set_defaults(func=cmd_gateway_run)

    a = sub.add_parser("agent", help="agent process").add_subparsers(dest="sub", required=True)
    ar = a.add_parser("run")
    ar.add_argument("--config", required=True)
    ar.set_defaults(func=cmd_agent_run)

    for name, func in (("deploy", cmd_deploy), ("attest", cmd_attest)):
        c = sub.add_parser(name)
        c.add_argument("--node", required=True)
        c.add_argument("--control", default="127.0.0.1:47621", help="gateway control address")
        if name == "deploy":
            c.add_argument("--code", required=True)
        else:
            c.add_argument("--timeout", type=float, default=20.0)
        c.set_defaults(func=func)

    s = sub.add_parser("scenario").add_subparsers(dest="sub", required=True)
    sr = s.add_parser("run")
    sr.add_argument("script")
    sr.add_argument("--seed", type=int, default=0)
    sr.add_argument("--alg", default="xoodyak", choices=["xoodyak", "isap"])
    sr.add_argument("--events", help="write the event log here")
    sr.set_defaults(func=cmd_scenario_run)

    b = sub.add_parser("bench")
    b.add_argument("--algs", default="xoodyak,isap")
    b.add_argument("--sizes", default="1k..65k")
    b.add_argument("--iters", type=int, default=30)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="bench.csv")
    b.add_argument("--svg")
    b.add_argument("--check", action="store_true", help="exit 1 if ordering, ratio or monotonicity fail")
    b.set_defaults(func=cmd_bench)

    lg = sub.add_parser("logs").add_subparsers(dest="sub", required=True)
    lv = lg.add_parser("verify")
    lv.add_argument("log_path")
    lv.set_defaults(func=cmd_logs_verify)
    ls = lg.add_parser("show")
    ls.add_argument("log_path")
    ls.set_defaults(func=cmd_logs_show)

    k = sub.add_parser("kat").add_subparsers(dest="sub", required=True)
    kr = k.add_parser("run")
    kr.add_argument("dir")
    kr.set_defaults(func=cmd_kat_run)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
