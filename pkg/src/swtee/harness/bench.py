"""AEAD timing benchmark with CSV and SVG output.

Every iteration visits all sizes and algorithms in turn, so slow drift of
the machine (frequency scaling, other load) hits every data point alike, and
the garbage collector is paused while timing.
"""

from __future__ import annotations

import csv
import gc
import io
import random
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from ..crypto import KEY_BYTES, NONCE_BYTES, AlgId, aead_decrypt, aead_encrypt

DEFAULT_SIZES_KB = (1, 2, 4, 8, 16, 32, 64, 65)
DEFAULT_SIZES = tuple(kb * 1024 for kb in DEFAULT_SIZES_KB)
CSV_HEADER = ("alg", "size_bytes", "op", "mean_us", "stddev_us", "iterations")
NOISE_FLAG_RATIO = 0.5
OPS = ("encrypt", "decrypt")


@dataclass(frozen=True)
class BenchRow:
    alg: str
    size_bytes: int
    op: str
    mean_us: float
    stddev_us: float
    iterations: int

    @property
    def noisy(self) -> bool:
        return self.stddev_us > NOISE_FLAG_RATIO * self.mean_us


def parse_size(text: str) -> int:
    t = text.strip().lower()
    if t.endswith("k"):
        return int(float(t[:-1]) * 1024)
    return int(t)


def parse_sizes(text: str) -> list[int]:
    """``1k..65k`` (powers of two plus the endpoint) or a comma list like ``1k,4k,100``."""
    if ".." in text:
        lo, hi = (parse_size(p) for p in text.split("..", 1))
        if lo <= 0 or hi < lo:
            raise ValueError(f"bad size range {text!r}")
        sizes, s = [], lo
        while s <= hi:
            sizes.append(s)
            s *= 2
        if sizes[-1] != hi:
            sizes.append(hi)
        return sizes
    sizes = [parse_size(p) for p in text.split(",") if p.strip()]
    if not sizes or min(sizes) <= 0:
        raise ValueError(f"bad size list {text!r}")
    return sizes


def bench_run(
    algs: Sequence[AlgId],
    sizes: Sequence[int],
    iterations: int = 30,
    *,
    warmup: int = 2,
    seed: int = 0,
    progress: Callable[[str], None] | None = None,
) -> list[BenchRow]:
    if not sizes:
        raise ValueError("need at least one size")
    if iterations < 30:
        raise ValueError("at least 30 iterations are required")
    rng = random.Random(seed)
    key, nonce = rng.randbytes(KEY_BYTES), rng.randbytes(NONCE_BYTES)
    ad = b""
    samples: dict[tuple[AlgId, int, str], list[float]] = {}
    clock = time.perf_counter_ns
    gc_was_enabled = gc.isenabled()
    gc.disable()
    plaintexts = {size: rng.randbytes(size) for size in sizes}
    try:
        for it in range(warmup + iterations):
            for size in sizes:
                pt = plaintexts[size]
                for alg in algs:
                    t0 = clock()
                    ct, tag = aead_encrypt(alg, key, nonce, ad, pt)
                    t1 = clock()
                    out = aead_decrypt(alg, key, nonce, ad, ct, tag)
                    t2 = clock()
                    if out != pt or len(ct) != size:
                        raise AssertionError(f"{alg.label} round trip failed at {size} bytes")
                    if it >= warmup:
                        samples.setdefault((alg, size, "encrypt"), []).append((t1 - t0) / 1000)
                        samples.setdefault((alg, size, "decrypt"), []).append((t2 - t1) / 1000)
            if progress:
                progress(f"iteration {it + 1 - warmup}/{iterations}" if it >= warmup else "warmup")
    finally:
        if gc_was_enabled:
            gc.enable()
    rows = []
    for alg in algs:
        for size in sizes:
            for op in OPS:
                xs = samples[(alg, size, op)]
                rows.append(BenchRow(alg.label, size, op, statistics.fmean(xs), statistics.stdev(xs), len(xs)))
    return rows


def peak_memory(alg: AlgId, size: int, seed: int = 0) -> int:
    """Peak Python heap allocation (bytes) for one encrypt+decrypt; informational only."""
    rng = random.Random(seed)
    key, nonce, pt = rng.randbytes(KEY_BYTES), rng.randbytes(NONCE_BYTES), rng.randbytes(size)
    tracemalloc.start()
    try:
        ct, tag = aead_encrypt(alg, key, nonce, b"", pt)
        aead_decrypt(alg, key, nonce, b"", ct, tag)
        return tracemalloc.get_traced_memory()[1]
    finally:
        tracemalloc.stop()


# -- output ---------------------------------------------------------------------


def rows_to_csv(rows: Iterable[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([r.alg, r.size_bytes, r.op, f"{r.mean_us:.3f}", f"{r.stddev_us:.3f}", r.iterations])
    return buf.getvalue()


def read_csv(path: str | Path) -> list[BenchRow]:
    with open(path, newline="") as fh:
        return [
            BenchRow(d["alg"], int(d["size_bytes"]), d["op"], float(d["mean_us"]), float(d["stddev_us"]), int(d["iterations"]))
            for d in csv.DictReader(fh)
        ]


_COLORS = {("xoodyak", "encrypt"): "#1f77b4", ("xoodyak", "decrypt"): "#6baed6",
           ("isap", "encrypt"): "#d62728", ("isap", "decrypt"): "#ff9896"}


def rows_to_svg(rows: Sequence[BenchRow], width: int = 720, height: int = 440) -> str:
    """Time versus size, one polyline per (alg, op), log-scaled time axis."""
    import math

    left, right, top, bottom = 80, 170, 30, 60
    pw, ph = width - left - right, height - top - bottom
    series: dict[tuple[str, str], list[BenchRow]] = {}
    for r in rows:
        series.setdefault((r.alg, r.op), []).append(r)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + pw / 2}" y="18" text-anchor="middle" font-size="14">AEAD time vs. message size</text>',
    ]
    if rows:
        xs = [r.size_bytes for r in rows]
        ys = [max(r.mean_us, 1e-3) for r in rows]
        x0, x1 = min(xs), max(xs)
        y0, y1 = math.log10(min(ys)), math.log10(max(ys))
        if x1 == x0:
            x1 = x0 + 1
        if y1 - y0 < 1e-9:
            y1 = y0 + 1

        def px(x: float) -> float:
            return left + (x - x0) / (x1 - x0) * pw

        def py(y: float) -> float:
            return top + ph - (math.log10(max(y, 1e-3)) - y0) / (y1 - y0) * ph

        parts.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>')
        for s in sorted(set(xs)):
            parts.append(f'<text x="{px(s):.1f}" y="{top + ph + 16}" text-anchor="middle">{s // 1024 if s >= 1024 else s}{"k" if s >= 1024 else ""}</text>')
        for e in range(math.floor(y0), math.ceil(y1) + 1):
            if y0 - 1e-9 <= e <= y1 + 1e-9:
                y = py(10 ** e)
                parts.append(f'<line x1="{left}" x2="{left + pw}" y1="{y:.1f}" y2="{y:.1f}" stroke="#ddd"/>')
                parts.append(f'<text x="{left - 6}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
        parts.append(f'<text x="{left + pw / 2}" y="{height - 18}" text-anchor="middle">message size (bytes)</text>')
        parts.append(f'<text x="18" y="{top + ph / 2}" text-anchor="middle" transform="rotate(-90 18 {top + ph / 2})">mean time (µs, log scale)</text>')
        for i, ((alg, op), pts) in enumerate(sorted(series.items())):
            pts = sorted(pts, key=lambda r: r.size_bytes)
            color = _COLORS.get((alg, op), "#555")
            coords = " ".join(f"{px(r.size_bytes):.1f},{py(r.mean_us):.1f}" for r in pts)
            parts.append(f'<polyline data-series="{alg}-{op}" fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>')
            ly = top + 14 + 18 * i
            parts.append(f'<line x1="{left + pw + 12}" x2="{left + pw + 36}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
            parts.append(f'<text x="{left + pw + 42}" y="{ly + 4}">{alg} {op}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bench_emit(rows: Sequence[BenchRow], fmt: str, path: str | Path) -> Path:
    if fmt not in ("csv", "svg"):
        raise ValueError("format must be csv or svg")
    path = Path(path)
    path.write_text(rows_to_csv(rows) if fmt == "csv" else rows_to_svg(rows))
    return path


# -- shape checks -------------------------------------------------------------------


def ordering_ok(rows: Sequence[BenchRow], fast: str = "xoodyak", slow: str = "isap") -> list[str]:
    """Violations of ``fast`` being quicker than ``slow`` at every (size, op)."""
    by = {(r.alg, r.size_bytes, r.op): r.mean_us for r in rows}
    return [
        f"{op} {size}: {fast} {by[(fast, size, op)]:.0f}us vs {slow} {by[(slow, size, op)]:.0f}us"
        for (alg, size, op) in by if alg == fast and (slow, size, op) in by
        if by[(fast, size, op)] >= by[(slow, size, op)]
    ]


def ratios(rows: Sequence[BenchRow], fast: str = "xoodyak", slow: str = "isap") -> dict[tuple[int, str], float]:
    by = {(r.alg, r.size_bytes, r.op): r.mean_us for r in rows}
    return {
        (size, op): by[(slow, size, op)] / by[(fast, size, op)]
        for (alg, size, op) in by if alg == fast and (slow, size, op) in by
    }


def monotonic_violations(rows: Sequence[BenchRow], slack: float = 0.05) -> list[str]:
    out = []
    series: dict[tuple[str, str], list[BenchRow]] = {}
    for r in rows:
        series.setdefault((r.alg, r.op), []).append(r)
    for (alg, op), pts in sorted(series.items()):
        pts.sort(key=lambda r: r.size_bytes)
        for a, b in zip(pts, pts[1:]):
            if b.mean_us < a.mean_us * (1 - slack):
                out.append(f"{alg} {op}: {b.size_bytes} bytes {b.mean_us:.0f}us < {a.size_bytes} bytes {a.mean_us:.0f}us")
    return out
