"""Toy-scale visual tracker built on a minimal autodiff tensor engine.

The stack: a float64 tape-gradient tensor core, cross-frame attention over
concatenated target/previous/search token grids with untied absolute and
region-partitioned relative positional biases, a small hierarchical
backbone and neck, IoU-aware classification and box-regression heads, an
online template-update policy with confidence-history thresholds, and a
synthetic-sequence harness with a CLI.
"""

__version__ = "0.1.0"
