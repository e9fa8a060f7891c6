"""Counterparty credit risk valuation engine."""
