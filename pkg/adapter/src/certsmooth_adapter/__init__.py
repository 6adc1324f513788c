"""Reference stdin/stdout classifier server for the certsmooth protocol."""

from .server import LinearModel, main, read_weights, serve

__all__ = ["LinearModel", "main", "read_weights", "serve"]
