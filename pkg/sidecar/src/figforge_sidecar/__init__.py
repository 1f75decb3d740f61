"""Reference inference service speaking the figforge sidecar protocol."""

__version__ = "0.1.0"
