"""Closed-loop feedback sampling for autoregressive latent-diffusion video, with evaluation and curation tools."""

__version__ = "0.1.0"
