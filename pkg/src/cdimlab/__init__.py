"""Combinatorial modulus and conformal-dimension laboratory."""
