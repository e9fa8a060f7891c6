"""Regression-based portfolio valuation and CVA."""
