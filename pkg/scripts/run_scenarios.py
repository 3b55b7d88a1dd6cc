#!/usr/bin/env python3
"""Run every scenario script under several seeds and both AEAD choices.

Event logs go to ``<out>/<scenario>.<alg>.<seed>.events``; a summary table is
printed and the exit status is 1 if any run fails.
"""

import argparse
import sys
import time
from pathlib import Path

from swtee.gateway import GatewayConfig
from swtee.harness import run_scenario

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dir", default=str(ROOT / "scenarios"))
    ap.add_argument("--seeds", default="1,2,3")
    ap.add_argument("--algs", default="xoodyak,isap")
    ap.add_argument("--out", default="results/scenarios")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [int(s) for s in args.seeds.split(",")]
    failures = 0
    for path in sorted(Path(args.dir).glob("*.scn")):
        for alg in args.algs.split(","):
            for seed in seeds:
                t0 = time.perf_counter()
                report = run_scenario(path.read_text(), seed, GatewayConfig(alg=alg, arena_size_bytes=256 * 1024))
                elapsed = time.perf_counter() - t0
                (out / f"{path.stem}.{alg}.{seed}.events").write_text("\n".join(report.events) + "\n")
                passed = sum(c.passed for c in report.checks)
                status = "ok" if report.passed else "FAIL"
                print(f"{path.stem:<20} {alg:<8} seed {seed:<3} {passed:>2}/{len(report.checks):<2} {status:<4} {elapsed:5.1f}s")
                if not report.passed:
                    failures += 1
                    print("\n".join("    " + c.render() for c in report.checks if not c.passed))
    print(f"{failures} failing runs")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
