"""Two-mode eigenstructure shared by the impact matrix and the noise covariance.

Every matrix in the model has the exchangeable form a*I + b*J (J = all-ones):
the impact matrix, the innovation covariance and all return covariances.
They share eigenvectors: the uniform "market" direction u = 1/sqrt(M) and
an (M-1)-dimensional "idiosyncratic" complement. All covariance algebra in
the package reduces to two scalar recursions along these modes.
"""
from __future__ import annotations

import numpy as np


def mode_coefficients(phi: float, beta: float, M: int) -> tuple[float, float]:
    """(market, idio) eigenvalues of the matrix with diag phi, offdiag beta."""
    if M == 1:
        return phi, phi
    return phi + (M - 1) * beta, phi - beta


def entries_from_modes(market: float, idio: float, M: int) -> tuple[float, float]:
    """(diag, offdiag) entries of the exchangeable matrix with given mode values."""
    if M == 1:
        return market, 0.0
    off = (market - idio) / M
    return idio + off, off


def modes_from_entries(diag: float, offdiag: float, M: int) -> tuple[float, float]:
    """(market, idio) mode values of the exchangeable matrix with given entries."""
    if M == 1:
        return diag, diag
    return diag + (M - 1) * offdiag, diag - offdiag


def mode_basis(M: int) -> np.ndarray:
    """Orthogonal basis with the market direction in column 0 (Helmert-style).

    Columns 1..M-1 span the idiosyncratic complement; Q.T @ Q = I.
    """
    Q = np.empty((M, M))
    Q[:, 0] = 1.0 / np.sqrt(M)
    for j in range(1, M):
        col = np.zeros(M)
        col[:j] = 1.0
        col[j] = -j
        Q[:, j] = col / np.sqrt(j * (j + 1.0))
    return Q
