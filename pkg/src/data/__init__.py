"""Shared data model: feature catalog, case matrix, severity bands and splitting."""
