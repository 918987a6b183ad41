"""Quantum instrument numerics: measurement uncertainty, WAY bounds and gate audits."""
