"""Metrics, trend experiments and the oracle verification suite."""
