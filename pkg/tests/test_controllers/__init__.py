"""Tests for controller components."""
