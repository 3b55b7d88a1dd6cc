import csv
import io
import random
import xml.etree.ElementTree as ET

import pytest

from swtee.cli import main
from swtee.crypto import AlgId
from swtee.errors import ScriptError
from swtee.gateway import GatewayConfig
from swtee.harness import run_scenario
from swtee.harness.bench import (
    BenchRow, bench_emit, bench_run, monotonic_violations, ordering_ok, parse_sizes, ratios, read_csv,
    rows_to_csv, rows_to_svg,
)
from swtee.harness.scenario import parse_script
from swtee.harness.simlink import GATEWAY, Action, Rule, SimLink
from swtee.wire import MsgType

from conftest import SCENARIOS

CORPUS = sorted(SCENARIOS.glob("*.scn"))
ISAP_SUBSET = ["attestation.scn", "code_tamper.scn", "renewal.scn", "relay.scn"]


def cfg(alg="xoodyak"):
    return GatewayConfig(alg=alg, arena_size_bytes=256 * 1024)


class TestCorpus:
    def test_corpus_present(self):
        assert len(CORPUS) >= 10

    @pytest.mark.parametrize("path", CORPUS, ids=lambda p: p.stem)
    def test_scenario_passes(self, path):
        report = run_scenario(path.read_text(), seed=1, config=cfg())
        assert report.passed, report.render()

    @pytest.mark.parametrize("name", ISAP_SUBSET)
    def test_scenario_passes_with_isap(self, name):
        report = run_scenario((SCENARIOS / name).read_text(), seed=2, config=cfg("isap"))
        assert report.passed, report.render()

    def test_same_seed_same_event_log(self):
        script = (SCENARIOS / "replay.scn").read_text()
        a = run_scenario(script, seed=9, config=cfg())
        b = run_scenario(script, seed=9, config=cfg())
        assert a.events == b.events

    def test_failing_expectation_reported(self):
        report = run_scenario("0 n1 join\n500 expect status n1 Active\n", config=cfg())
        assert not report.passed
        assert "observed Registered" in report.render()


class TestScriptErrors:
    @pytest.mark.parametrize("script,line", [
        ("0 n1 join\nfoo n1 join\n", 2),
        ("0 n1 fly\n", 1),
        ("0 gateway explode n1\n", 1),
        ("# c\n\n10 adv rule teleport\n", 3),
        ("0 n1\n", 1),
        ("-5 n1 join\n", 1),
        ("0 n1 join\n10 expect status n1 Dancing\n", 2),
        ("0 n1 join\n10 adv replay type=NOPE\n", 2),
        ("0 this-name-is-far-too-long join\n", 1),
        ("0 gateway attest n1\n", 1),
        ("0 n1 join\n5 expect cells n1 ~3\n", 2),
    ])
    def test_reports_line(self, script, line):
        with pytest.raises(ScriptError) as info:
            run_scenario(script, config=cfg())
        assert info.value.line == line

    def test_events_sorted_stably(self):
        events = parse_script("20 n1 join\n10 n2 join\n10 n3 join # comment\n")
        assert [(e.time, e.actor) for e in events] == [(10, "n2"), (10, "n3"), (20, "n1")]


class TestSimLink:
    def link(self):
        link = SimLink(random.Random(0))
        link.node_ids = {"a": b"a" * 16, "b": b"b" * 16}
        return link

    def frame(self, node=b"a" * 16, mtype=8):
        return b"SB4N" + bytes([1, mtype]) + node + bytes(16) + bytes(16)

    def test_default_delivers(self):
        link = self.link()
        link.send("a", GATEWAY, self.frame(), 0)
        (p,) = link.due(0)
        assert not p.adversarial and p.direction == "up" and p.node == "a"

    def test_drop_with_count(self):
        link = self.link()
        link.add_rule(Rule(Action.DROP, node="a", count=1))
        link.send("a", GATEWAY, self.frame(), 0)
        link.send("a", GATEWAY, self.frame(), 0)
        assert len(link.due(0)) == 1 and link.journal[0].action == "drop"

    def test_corrupt_flags(self):
        link = self.link()
        link.add_rule(Rule(Action.CORRUPT, offset=40, xor=0xFF))
        raw = self.frame()
        link.send("a", GATEWAY, raw, 0)
        (p,) = link.due(0)
        assert p.adversarial and p.raw[40] == raw[40] ^ 0xFF

    def test_delay(self):
        link = self.link()
        link.add_rule(Rule(Action.DELAY, steps=3))
        link.send(GATEWAY, "a", self.frame(), 0)
        assert link.due(200) == [] and len(link.due(300)) == 1

    def test_relay_rewrites_node(self):
        link = self.link()
        link.add_rule(Rule(Action.RELAY, node="a", target="b"))
        link.send("a", GATEWAY, self.frame(), 0)
        (p,) = link.due(0)
        assert p.raw[6:22] == b"b" * 16 and p.adversarial

    def test_replay_needs_capture(self):
        link = self.link()
        assert link.replay(0, node="a") is False
        link.send("a", GATEWAY, self.frame(), 0)
        link.due(0)
        assert link.replay(5, node="a") is True
        assert link.due(5)[0].note == "replayed"

    def test_msg_type_filter(self):
        link = self.link()
        link.add_rule(Rule(Action.DROP, msg_type=MsgType.ACK))
        link.send("a", GATEWAY, self.frame(mtype=MsgType.DATA), 0)
        link.send("a", GATEWAY, self.frame(mtype=MsgType.ACK), 0)
        assert [p.msg_type for p in link.due(0)] == [MsgType.DATA]


class TestBench:
    def test_sizes(self):
        assert parse_sizes("1k..65k") == [1024, 2048, 4096, 8192, 16384, 32768, 65536, 66560]
        assert parse_sizes("1k,100") == [1024, 100]
        for bad in ("", "0", "8k..1k"):
            with pytest.raises(ValueError):
                parse_sizes(bad)

    def test_minimum_iterations(self):
        with pytest.raises(ValueError):
            bench_run([AlgId.XOODYAK], [64], iterations=5)

    def test_small_run_and_outputs(self, tmp_path):
        rows = bench_run([AlgId.XOODYAK, AlgId.ISAP], [64, 512], iterations=30)
        assert {(r.alg, r.size_bytes, r.op) for r in rows} == {
            (a, s, o) for a in ("xoodyak", "isap") for s in (64, 512) for o in ("encrypt", "decrypt")
        }
        assert all(r.iterations == 30 and r.mean_us > 0 for r in rows)
        path = bench_emit(rows, "csv", tmp_path / "b.csv")
        back = read_csv(path)
        assert [(r.alg, r.size_bytes, r.op, r.iterations) for r in back] == [
            (r.alg, r.size_bytes, r.op, r.iterations) for r in rows]
        assert all(b.mean_us == pytest.approx(r.mean_us, abs=1e-3) for b, r in zip(back, rows))
        header = next(csv.reader(io.StringIO(path.read_text())))
        assert header == ["alg", "size_bytes", "op", "mean_us", "stddev_us", "iterations"]
        svg = ET.fromstring(rows_to_svg(rows))
        series = {el.get("data-series") for el in svg.iter() if el.tag.endswith("polyline")}
        assert series == {"xoodyak-encrypt", "xoodyak-decrypt", "isap-encrypt", "isap-decrypt"}

    def test_checks_on_synthetic_rows(self):
        rows = [BenchRow("xoodyak", s, "encrypt", s / 10, 1, 30) for s in (1024, 2048)]
        rows += [BenchRow("isap", s, "encrypt", s / 1.5, 1, 30) for s in (1024, 2048)]
        assert ordering_ok(rows) == []
        assert min(ratios(rows).values()) == pytest.approx(10 / 1.5)
        assert monotonic_violations(rows) == []
        rows.append(BenchRow("isap", 4096, "encrypt", 1.0, 1, 30))
        assert monotonic_violations(rows)
        assert BenchRow("x", 1, "encrypt", 10, 6, 30).noisy

    def test_csv_text(self):
        text = rows_to_csv([BenchRow("isap", 1024, "decrypt", 12.5, 0.25, 30)])
        assert text.splitlines()[1].startswith("isap,1024,decrypt,12.5")


class TestCli:
    def test_usage_errors_exit_2(self, tmp_path):
        assert main([]) == 2
        assert main(["bench", "--iters", "3"]) == 2
        assert main(["logs", "verify", str(tmp_path / "missing.log")]) == 2
        assert main(["kat", "run", str(tmp_path / "nope")]) == 2
        bad = tmp_path / "bad.scn"
        bad.write_text("0 n1 fly\n")
        assert main(["scenario", "run", str(bad)]) == 2

    def test_kat_run(self, kat_dir, capsys):
        assert main(["kat", "run", str(kat_dir)]) == 0
        assert capsys.readouterr().out.count("PASS") == 3

    def test_scenario_run(self, tmp_path, capsys):
        events = tmp_path / "events.txt"
        assert main(["scenario", "run", str(SCENARIOS / "baseline.scn"), "--seed", "1", "--events", str(events)]) == 0
        assert "PASSED" in capsys.readouterr().out and events.read_text()
        failing = tmp_path / "fail.scn"
        failing.write_text("0 n1 join\n100 expect status n1 Lost\n")
        assert main(["scenario", "run", str(failing)]) == 1

    def test_logs_verify(self, tmp_path, capsys):
        from swtee.gateway import Category, Logger

        p = tmp_path / "events.log"
        log = Logger(p)
        for i in range(5):
            log.append(Category.NODE_LIFECYCLE, f"e{i}", i)
        assert main(["logs", "verify", str(p)]) == 0
        assert main(["logs", "show", str(p)]) == 0
        raw = bytearray(p.read_bytes())
        raw[-1] ^= 1
        p.write_bytes(bytes(raw))
        assert main(["logs", "verify", str(p)]) == 1
        assert "BROKEN at entry 4" in capsys.readouterr().out
