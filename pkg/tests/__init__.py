"""Tests for locc-marker."""
