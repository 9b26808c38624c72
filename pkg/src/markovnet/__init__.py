"""Cost-sensitive pairwise Markov networks for imbalanced classification."""
