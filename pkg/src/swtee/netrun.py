"""Real-socket mode: gateway listener, operator control port, and agent client.

This path exists for integration smoke tests. It wraps the same state
machines the simulator drives, with wall-clock milliseconds as ``now``.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import time
from pathlib import Path

from .agent import Agent
from .crypto import AlgId
from .errors import MalformedFrame, SwteeError, UnsealFailure
from .gateway import AgentConfig, Gateway, GatewayConfig, Logger
from .gateway.config import parse_addr
from .gateway.core import node_label
from .keymgr import seal_keystore, unseal_keystore
from .wire import FrameReader

log = logging.getLogger("swtee")
TICK_S = 0.1


def parse_node_id(text: str) -> bytes:
    """32 hex digits, or a short name padded with zero bytes."""
    try:
        raw = bytes.fromhex(text)
        if len(raw) == 16:
            return raw
    except ValueError:
        pass
    raw = text.encode()
    if not 0 < len(raw) <= 16:
        raise ValueError("node id must be 32 hex digits or a name of at most 16 bytes")
    return raw.ljust(16, b"\x00")


def _now_ms(start: float) -> int:
    return int((time.monotonic() - start) * 1000)


class GatewayServer:
    def __init__(self, config: GatewayConfig, device_secret: bytes):
        self.config = config
        self.device_secret = device_secret
        ks_path = Path(config.keystore_path)
        mem_key = None
        if ks_path.exists():
            try:
                mem_key = unseal_keystore(ks_path.read_bytes(), device_secret).secrets.get("k_mem")
            except UnsealFailure:
                log.error("cannot unseal %s; starting with a fresh memory key", ks_path)
        self.gateway = Gateway(config, logger=Logger(config.log_path), mem_key=mem_key)
        self.writers: dict[bytes, asyncio.StreamWriter] = {}
        self.start = time.monotonic()

    def now(self) -> int:
        return _now_ms(self.start)

    def _save_keystore(self) -> None:
        blob = seal_keystore(self.gateway.keystore(), self.device_secret)
        Path(self.config.keystore_path).write_bytes(blob)

    async def _flush(self) -> None:
        for node_id, raw in self.gateway.drain():
            w = self.writers.get(node_id)
            if w is not None and not w.is_closing():
                w.write(raw)
                await w.drain()

    async def _handle_agent(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        splitter = FrameReader()
        try:
            while data := await reader.read(65536):
                try:
                    frames = splitter.feed(data)
                except MalformedFrame as exc:
                    log.warning("closing connection: %s", exc)
                    break
                for raw in frames:
                    self.writers.setdefault(raw[6:22], writer)
                    self.gateway.receive(raw, self.now())
                    await self._flush()
                self._save_keystore()
        finally:
            for k, w in list(self.writers.items()):
                if w is writer:
                    del self.writers[k]
            writer.close()

    async def _handle_control(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        while line := await reader.readline():
            try:
                reply = self.control(json.loads(line))
            except (SwteeError, ValueError, KeyError) as exc:
                reply = {"ok": False, "error": f"{type(exc).__name__}: {exc}"}
            await self._flush()
            writer.write(json.dumps(reply).encode() + b"\n")
            await writer.drain()
        writer.close()

    def control(self, req: dict) -> dict:
        cmd = req["cmd"]
        gw, now = self.gateway, self.now()
        if cmd == "status":
            node = gw.node(parse_node_id(req["node"]))
            verdicts = [v.value for _, n, v in gw.verdicts if n == node.node_id]
            return {"ok": True, "status": node.status.value, "epoch": node.channel.epoch,
                    "app_version": node.app_version, "verdicts": verdicts}
        if cmd == "nodes":
            return {"ok": True, "nodes": {node_label(n): r.status.value for n, r in gw.nodes.items()}}
        node_id = parse_node_id(req["node"])
        if cmd == "deploy":
            gw.deploy(node_id, bytes.fromhex(req["code"]), now)
        elif cmd == "attest":
            gw.attest(node_id, now)
        else:
            raise ValueError(f"unknown command {cmd!r}")
        return {"ok": True}

    async def _ticker(self) -> None:
        while True:
            await asyncio.sleep(TICK_S)
            self.gateway.tick(self.now())
            await self._flush()

    async def serve(self) -> None:
        host, port = parse_addr(self.config.listen_addr)
        chost, cport = parse_addr(self.config.control_addr)
        agents = await asyncio.start_server(self._handle_agent, host, port)
        control = await asyncio.start_server(self._handle_control, chost, cport)
        log.info("gateway listening on %s, control on %s", self.config.listen_addr, self.config.control_addr)
        async with agents, control:
            await asyncio.gather(agents.serve_forever(), control.serve_forever(), self._ticker())


async def run_agent(config: AgentConfig) -> None:
    secret = config.device_secret.encode() or os.urandom(16)
    agent = Agent(config.node_id_bytes, alg=AlgId.parse(config.alg), device_secret=secret,
                  keystore_path=config.keystore_path)
    host, port = parse_addr(config.gateway_addr)
    reader, writer = await asyncio.open_connection(host, port)
    start = time.monotonic()
    writer.write(agent.hello())
    await writer.drain()

    async def app_loop() -> None:
        step = 0
        while True:
            await asyncio.sleep(config.step_ms / 1000)
            raw = agent.run_app_step(step)
            step += 1
            if raw is not None:
                writer.write(raw)
                await writer.drain()

    task = asyncio.create_task(app_loop())
    splitter = FrameReader()
    try:
        while data := await reader.read(65536):
            for raw in splitter.feed(data):
                for reply in agent.handle_frame(raw, _now_ms(start)):
                    writer.write(reply)
                await writer.drain()
    finally:
        task.cancel()
        writer.close()


async def control_request(addr: str, req: dict, timeout: float = 5.0) -> dict:
    host, port = parse_addr(addr)
    reader, writer = await asyncio.wait_for(asyncio.open_connection(host, port), timeout)
    writer.write(json.dumps(req).encode() + b"\n")
    await writer.drain()
    line = await asyncio.wait_for(reader.readline(), timeout)
    writer.close()
    return json.loads(line)
