"""Integration tests for the toneleak command line and full-protocol runs."""
