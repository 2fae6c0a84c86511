"""Persistence layer: instance/solution I/O and report writers."""
