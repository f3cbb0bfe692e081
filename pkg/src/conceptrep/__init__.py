"""Unsupervised image representations for multi-label concept detection.

Bag-of-visual-words (ORB or SIFT) and dense autoencoder features, a per-concept
FTRL logistic bank and a boolean-sum k-NN on top, and the evaluation and
projection tools to compare them.
"""

__version__ = "0.1.0"
