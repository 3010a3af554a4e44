"""
Deterministic SVG figures.
"""
