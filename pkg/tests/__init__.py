"""Tests for Heatmap Endpoints."""
