"""Benchmark harness: experiment configs, trial runner, CSV I/O and CLI."""
