"""Configuration parsing, dispatch and serialisation."""

from .config import RunConfig, emit_config, parse_config
from .main import dispatch, main

__all__ = ["RunConfig", "dispatch", "emit_config", "main", "parse_config"]
