"""Gradient-boosted regression trees: training, prediction, metrics and tuning."""
