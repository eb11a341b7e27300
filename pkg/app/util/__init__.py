"""Deterministic random streams."""
