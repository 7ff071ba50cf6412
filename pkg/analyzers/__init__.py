"""Similarity measures, registration, evaluation metrics and invariant suites."""
