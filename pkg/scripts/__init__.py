"""
Planning toolkit for hierarchical split federated learning.

Computes round delay and communication overhead for (aggregator layer, cut
layer, client-to-aggregator assignment) configurations, selects admissible cut
layers from accuracy profiles and searches for low-delay configurations.
"""

__version__ = "1.0.0"
