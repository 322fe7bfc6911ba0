"""Periodic spatial lattice shared by the kinetic solver and the limit solvers.

Fields live as flat arrays of Fourier coefficients c_k with the convention
f(x) = sum_k c_k exp(i k.x), matching numpy's norm="forward" transforms.  The
flat mode ordering is the C-order raveling of the fftn layout, fixed once so
every consumer sums in the same order.
"""

from __future__ import annotations

import numpy as np


class SpatialModes:
    """Fourier modes of the periodic box [0, L)^d."""

    def __init__(self, d: int, n: int, length: float = 2.0 * np.pi):
        if n % 2 != 0:
            raise ValueError("n_modes must be even")
        self.d = d
        self.n = n
        self.length = length
        idx = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        if d == 1:
            self.k_index = idx[:, None]
        else:
            I, J = np.meshgrid(idx, idx, indexing="ij")
            self.k_index = np.column_stack([I.ravel(), J.ravel()])
        self.k = (2.0 * np.pi / length) * self.k_index.astype(float)
        self.k_norm = np.sqrt(np.sum(self.k**2, axis=1))
        self.n_modes = self.k.shape[0]
        ax = length * np.arange(n) / n
        if d == 1:
            self.x = ax[:, None]
        else:
            X1, X2 = np.meshgrid(ax, ax, indexing="ij")
            self.x = np.column_stack([X1.ravel(), X2.ravel()])

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    def to_values(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients (n_modes, ...) -> complex values on the lattice (n_modes, ...)."""
        extra = coeffs.shape[1:]
        c = coeffs.reshape(self.shape + extra)
        vals = np.fft.ifftn(c, axes=tuple(range(self.d)), norm="forward")
        return vals.reshape((self.n_modes,) + extra)

    def to_coeffs(self, values: np.ndarray) -> np.ndarray:
        extra = values.shape[1:]
        v = values.reshape(self.shape + extra)
        c = np.fft.fftn(v, axes=tuple(range(self.d)), norm="forward")
        return c.reshape((self.n_modes,) + extra)

    def real_values(self, coeffs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
        vals = self.to_values(coeffs)
        scale = np.max(np.abs(vals)) or 1.0
        if np.max(np.abs(vals.imag)) > tol * scale:
            raise ValueError("coefficients do not describe a real field")
        return vals.real

    def l2x_norm(self, coeffs: np.ndarray) -> float:
        """L^2([0,L)^d) norm via Parseval; coefficient axes beyond 0 are summed too."""
        return float(np.sqrt(self.length**self.d * np.sum(np.abs(coeffs) ** 2)))

    def conjugate_index(self) -> np.ndarray:
        """Index of mode -k for every mode k (for reality checks)."""
        n = self.n
        idx = (-self.k_index) % n
        if self.d == 1:
            return idx[:, 0]
        return idx[:, 0] * n + idx[:, 1]

    def divergence(self, vec_coeffs: np.ndarray) -> np.ndarray:
        """Spectral divergence of a vector field given as (n_modes, d) coefficients."""
        return 1j * np.sum(self.k * vec_coeffs, axis=1)
