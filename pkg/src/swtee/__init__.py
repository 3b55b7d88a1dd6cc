"""Software trusted-execution toolkit for gateway-managed embedded nodes."""

__version__ = "0.1.0"
