"""Legal case and statute retrieval with lexical/semantic score fusion."""

__version__ = "0.1.0"
