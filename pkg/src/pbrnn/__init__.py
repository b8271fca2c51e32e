"""Parallel-branch recurrent networks with linear structures for day-ahead price forecasting."""

__version__ = "0.1.0"
