"""Utility modules."""

from action_signal.utils.logger import setup_logger, logger
from action_signal.utils.hashing import canonical_json, sha256_bytes, sha256_file

__all__ = [
    "setup_logger",
    "logger",
    "canonical_json",
    "sha256_bytes",
    "sha256_file",
]
