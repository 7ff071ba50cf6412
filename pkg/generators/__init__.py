"""Synthetic scenario and report generation package."""
