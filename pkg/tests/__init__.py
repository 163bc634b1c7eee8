"""Test package for otlex."""
