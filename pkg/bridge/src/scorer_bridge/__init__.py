"""Reference out-of-process scorer speaking the wire protocol (v1)."""

from .conformance import ConformanceReport, run_conformance
from .ngram import NgramBackend
from .server import BridgeConfig, handle_line, load_custom_backend, serve

__version__ = "0.1.0"
