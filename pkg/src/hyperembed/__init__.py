"""Embeddings of hierarchical symbol sets in the Poincare ball.

Trains embeddings with Riemannian SGD under a softmax ranking loss or a
Fermi-Dirac edge model, alongside Euclidean and translational baselines,
and evaluates them by reconstruction/link-prediction ranking and graded
entailment scoring. The ``hyperembed`` CLI wires the pieces into
reproducible runs.
"""

__version__ = "0.1.0"
