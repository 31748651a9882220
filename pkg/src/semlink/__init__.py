"""Error-resilient digital semantic-communication link simulator."""

__version__ = "0.1.0"
