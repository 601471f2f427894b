"""Orthonormal DCT pair along the temporal axis.

Trajectories live as [frames x channels] arrays; the forward transform
projects frames onto the first K cosine basis rows, the inverse is the
transpose. Both run through the autodiff tensor ops so gradients flow
through the refinement stages. N stays small at desk scale, so a direct
matrix product beats any FFT plumbing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

__all__ = ["DctBasis", "build_basis", "dct_forward", "dct_inverse"]


@dataclass(frozen=True)
class DctBasis:
    """Orthonormal type-II DCT basis of length N, rows ordered by frequency."""

    N: int
    K: int
    matrix: np.ndarray = field(repr=False)  # [N x N]; row 0 is the DC row

    def forward_tensor(self):
        return Tensor(self.matrix[: self.K])

    def inverse_tensor(self):
        return Tensor(self.matrix[: self.K].T)


def build_basis(N, K=None):
    """DCT-II basis with orthonormal scaling; K truncates to the lowest rows."""
    if N < 1:
        raise ValueError(f"basis length must be >= 1, got {N}")
    K = N if K is None else K
    if not 1 <= K <= N:
        raise ValueError(f"truncation K={K} outside [1, {N}]")
    i = np.arange(N, dtype=np.float64)
    k = i[:, None]
    mat = np.cos(np.pi * (i[None, :] + 0.5) * k / N)
    mat *= np.sqrt(2.0 / N)
    mat[0] *= np.sqrt(0.5)
    mat.flags.writeable = False
    return DctBasis(N=N, K=K, matrix=mat)


def dct_forward(traj, basis):
    """Project [N x D] trajectory onto the first K basis rows -> [K x D]."""
    traj = traj if isinstance(traj, Tensor) else Tensor(traj)
    if traj.shape[0] != basis.N:
        raise ValueError(
            f"trajectory length {traj.shape[0]} does not match basis length {basis.N}"
        )
    return T.matmul(basis.forward_tensor(), traj)


def dct_inverse(coeffs, basis):
    """Reconstruct [N x D] trajectory from [K x D] coefficients."""
    coeffs = coeffs if isinstance(coeffs, Tensor) else Tensor(coeffs)
    if coeffs.shape[0] != basis.K:
        raise ValueError(
            f"coefficient count {coeffs.shape[0]} does not match basis truncation {basis.K}"
        )
    return T.matmul(basis.inverse_tensor(), coeffs)
