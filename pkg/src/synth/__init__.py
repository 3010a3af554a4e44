"""Synthetic cohort generator with planted effects and raw-table I/O."""
