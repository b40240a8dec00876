"""Traffic generation, splits, grid search and evaluation."""
