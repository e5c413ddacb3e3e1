"""
Ternary SVD toolkit: addition-only matrix and convolution factorizations.
"""
__version__ = "1.0.0"
