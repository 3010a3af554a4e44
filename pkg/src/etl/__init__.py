"""Preprocessing rules and case construction."""
