"""Resilient fixed-time cooperative output regulation under DoS attacks."""

__version__ = "0.1.0"
