"""Double-sampling bandits with Thompson sampling and Bayes-UCB baselines."""

__version__ = "0.1.0"
