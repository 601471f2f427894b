import numpy as np
import pytest
import scipy.fft

from posecast import tensor as T
from posecast.dct import build_basis, dct_forward, dct_inverse
from posecast.tensor import Tensor

from helpers import grad_agreement


@pytest.mark.parametrize("N", [4, 16, 64])
def test_orthonormality(N):
    m = build_basis(N).matrix
    assert np.max(np.abs(m @ m.T - np.eye(N))) < 1e-10


def test_matches_scipy_ortho_dct():
    # independent oracle: scipy's orthonormal DCT-II of the identity
    for N in (5, 12):
        m = build_basis(N).matrix
        ref = scipy.fft.dct(np.eye(N), type=2, norm="ortho", axis=0)
        assert np.max(np.abs(m - ref)) < 1e-12


def test_dc_row_is_constant_and_frequencies_increase(N=16):
    m = build_basis(N).matrix
    assert np.allclose(m[0], m[0][0])
    # zero crossings count strictly increases with row index
    crossings = [(np.diff(np.sign(row)) != 0).sum() for row in m]
    assert crossings == sorted(crossings)


def test_constant_trajectory_hits_dc_only():
    basis = build_basis(8)
    traj = np.full((8, 3), 2.0)
    coeffs = dct_forward(traj, basis).data
    assert np.max(np.abs(coeffs[1:])) < 1e-12
    assert np.all(coeffs[0] != 0.0)


def test_zero_trajectory_zero_coeffs_and_back():
    basis = build_basis(6)
    assert np.array_equal(dct_forward(np.zeros((6, 2)), basis).data, np.zeros((6, 2)))
    assert np.array_equal(dct_inverse(np.zeros((6, 2)), basis).data, np.zeros((6, 2)))


def test_basis_row_gives_unit_coefficient():
    basis = build_basis(10)
    for k in (0, 3, 9):
        traj = basis.matrix[k][:, None]
        coeffs = dct_forward(traj, basis).data[:, 0]
        want = np.zeros(10)
        want[k] = 1.0
        assert np.max(np.abs(coeffs - want)) < 1e-10


def test_round_trip_full_K():
    rng = np.random.default_rng(0)
    traj = rng.normal(size=(16, 6))
    basis = build_basis(16)
    back = dct_inverse(dct_forward(traj, basis), basis).data
    assert np.max(np.abs(back - traj)) < 1e-9


def test_truncated_round_trip_is_projection():
    rng = np.random.default_rng(1)
    N, K = 12, 5
    traj = rng.normal(size=(N, 4))
    basis = build_basis(N, K)
    back = dct_inverse(dct_forward(traj, basis), basis).data
    # least-squares projection oracle onto the first K rows
    B = build_basis(N).matrix[:K].T  # [N x K] column basis
    proj = B @ np.linalg.lstsq(B, traj, rcond=None)[0]
    assert np.max(np.abs(back - proj)) < 1e-9


def test_parseval():
    rng = np.random.default_rng(2)
    traj = rng.normal(size=(32, 5))
    basis = build_basis(32)
    coeffs = dct_forward(traj, basis).data
    a, b = np.sum(traj**2), np.sum(coeffs**2)
    assert abs(a - b) / a < 1e-9


def test_linearity():
    rng = np.random.default_rng(3)
    basis = build_basis(9)
    u, v = rng.normal(size=(9, 2)), rng.normal(size=(9, 2))
    lhs = dct_forward(2.5 * u - 1.25 * v, basis).data
    rhs = 2.5 * dct_forward(u, basis).data - 1.25 * dct_forward(v, basis).data
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_length_mismatch_rejected():
    basis = build_basis(8)
    with pytest.raises(ValueError):
        dct_forward(np.zeros((7, 3)), basis)
    with pytest.raises(ValueError):
        dct_inverse(np.zeros((9, 3)), basis)
    with pytest.raises(ValueError):
        build_basis(8, K=9)


def test_gradients_flow_through_transforms():
    rng = np.random.default_rng(4)
    basis = build_basis(7, K=5)
    x = Tensor(rng.normal(size=(7, 3)), requires_grad=True)
    w = Tensor(rng.normal(size=(7, 3)))

    def forward():
        return (dct_inverse(dct_forward(x, basis), basis) * w).sum()

    assert grad_agreement(forward, [x]) < 1e-6
    T.tape().clear()
