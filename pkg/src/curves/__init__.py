"""Deterministic term structures and CDS hazard bootstrap."""
