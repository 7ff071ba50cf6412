"""Shared error types and timing helpers."""
