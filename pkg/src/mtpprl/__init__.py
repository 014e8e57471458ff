"""Policy-gradient learning of marked temporal point process policies."""

__version__ = "0.1.0"
