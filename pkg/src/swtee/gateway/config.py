"""``key = value`` configuration files for the gateway and agent processes."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path

from ..crypto import AlgId

_SECTION = "swtee"


def _read_pairs(path: str | os.PathLike) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.read_string(f"[{_SECTION}]\n" + Path(path).read_text())
    return dict(parser[_SECTION])


def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"address must be host:port, got {addr!r}")
    return host, int(port)


def _coerce(cls, pairs: dict[str, str]):
    known = {f.name: f for f in fields(cls)}
    unknown = set(pairs) - set(known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, raw in pairs.items():
        default = getattr(cls, key)
        kwargs[key] = int(raw, 0) if isinstance(default, int) else raw.strip()
    return cls(**kwargs)


@dataclass
class GatewayConfig:
    attest_interval_ms: int = 30_000
    attest_timeout_ms: int = 5_000
    attest_retries: int = 2
    renewal_interval_s: int = 24 * 3600
    audit_interval_ms: int = 10_000
    arena_size_bytes: int = 1 << 20
    alg: str = "xoodyak"
    listen_addr: str = "127.0.0.1:47620"
    control_addr: str = "127.0.0.1:47621"
    log_path: str = "gateway.log"
    keystore_path: str = "gateway.keystore"

    def __post_init__(self) -> None:
        AlgId.parse(self.alg)
        if self.attest_retries < 0 or self.attest_timeout_ms <= 0 or self.attest_interval_ms <= 0:
            raise ValueError("attestation timing values must be positive")

    @property
    def alg_id(self) -> AlgId:
        return AlgId.parse(self.alg)

    @property
    def update_timeout_ms(self) -> int:
        return self.attest_timeout_ms * (self.attest_retries + 1)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GatewayConfig":
        return _coerce(cls, _read_pairs(path))


@dataclass
class AgentConfig:
    node_id: str = ""
    gateway_addr: str = "127.0.0.1:47620"
    device_secret: str = ""
    keystore_path: str = "agent.keystore"
    alg: str = "xoodyak"
    step_ms: int = 1_000

    @property
    def node_id_bytes(self) -> bytes:
        raw = bytes.fromhex(self.node_id)
        if len(raw) != 16:
            raise ValueError("node_id must be 32 hex characters")
        return raw

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AgentConfig":
        cfg = _coerce(cls, _read_pairs(path))
        if not cfg.device_secret:
            cfg.device_secret = os.environ.get("SWTEE_DEVICE_SECRET", "")
        return cfg
