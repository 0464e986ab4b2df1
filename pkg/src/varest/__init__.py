"""Variance estimation with auxiliary information."""
