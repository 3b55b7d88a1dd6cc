"""Gateway side: node registry, app manager, integrity checker and event log."""

from .config import AgentConfig, GatewayConfig
from .core import Gateway, NodeRecord, NodeStatus, node_label
from .logger import BrokenAt, Category, ChainOk, LogEntry, Logger, verify_log_chain

__all__ = [
    "AgentConfig", "BrokenAt", "Category", "ChainOk", "Gateway", "GatewayConfig", "LogEntry",
    "Logger", "NodeRecord", "NodeStatus", "node_label", "verify_log_chain",
]
