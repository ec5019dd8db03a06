"""Survival modelling on generator latent embeddings.

Cox and deep survival models fitted on latent vectors, censored-data metrics,
latent projection by gradient descent, and attribute directions for latent
manipulation.
"""

__version__ = "0.1.0"
