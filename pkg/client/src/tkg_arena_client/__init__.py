"""Thin client SDK over the tkg-arena /v1 HTTP API."""

from .client import (
    ArenaApiError,
    ArenaClient,
    ArenaClientError,
    ClientSession,
    EpisodeResult,
    format_turn,
    transcript_text,
)

__version__ = "0.1.0"

__all__ = [
    "ArenaApiError",
    "ArenaClient",
    "ArenaClientError",
    "ClientSession",
    "EpisodeResult",
    "format_turn",
    "transcript_text",
]
