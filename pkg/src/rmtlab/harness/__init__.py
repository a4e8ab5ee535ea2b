"""Experiment configuration, parallel execution, persistence and CLI."""
