"""sflx-bridge: wrap a model behind line-delimited JSON on stdin/stdout.

The parent process writes one request object per line and reads one
response per line, matched by id; this package supplies the serving loop
and small built-in models for protocol conformance testing. Adapters for
real models implement ``BridgeModel`` and call ``serve``.
"""

from .models import BridgeModel, constant_model, kofs_model
from .protocol import PROTOCOL_NAME, PROTOCOL_VERSION, serve

__version__ = "0.1.0"

__all__ = [
    "BridgeModel",
    "constant_model",
    "kofs_model",
    "serve",
    "PROTOCOL_NAME",
    "PROTOCOL_VERSION",
]
