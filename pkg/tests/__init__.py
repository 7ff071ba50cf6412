"""Tests package for CodeGuru India."""
