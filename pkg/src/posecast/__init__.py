"""Stochastic human motion prediction via conditional diffusion.

Subpackages cover the full desk-scale pipeline: a float64 autodiff tensor
engine, variance schedules, orthonormal DCT transforms, the transformer +
GCN motion generator, min-k diffusion training, reverse-chain sampling, the
stochastic-forecasting metric suite, synthetic multimodal skeleton data, and
a command-line front end.
"""

__version__ = "0.1.0"
