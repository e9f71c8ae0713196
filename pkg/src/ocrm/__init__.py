"""Desk-scale lab for off-policy corrected reward modeling.

Implements iterative importance-weighted retraining of a pairwise-preference
reward model inside a KL-regularized policy-gradient loop, together with small
synthetic tasks on which its consistency behavior can be checked exactly.
"""

__version__ = "0.1.0"
