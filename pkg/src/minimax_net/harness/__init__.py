"""Experiment configuration and command-line interface."""
