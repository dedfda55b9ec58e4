"""serverprof: server behavior profiling from audit event logs."""

__version__ = "0.1.0"
