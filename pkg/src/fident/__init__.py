"""Causal effect identification with functional dependencies."""
