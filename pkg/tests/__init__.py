"""Unit test package for fastscan."""
