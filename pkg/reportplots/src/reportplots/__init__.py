"""reportplots: static figures for serverprof CSV artifacts."""

__version__ = "0.1.0"
