"""Backward-induction pricing of deterministic schedules."""
