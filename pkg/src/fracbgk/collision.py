"""Linear BGK collision operator L f = nu (K f - f) with exact discrete conservation.

K projects onto the conserved moments through the nu-weighted moment vector
U_nu defined by  A U_nu = quad(nu phi f),  A = quad(nu phi (x) phi M).  Because
A is assembled with the same quadrature used for every later moment
extraction, quad(phi L f) = 0 holds to roundoff for arbitrary f.

Two moment vectors appear side by side: phi = (1, v, (|v|^2-d)/2) enters the
operator, zeta = (1, v, (|v|^2-d)/d) defines the reported macroscopic moments
(they differ only by the normalisation of the last component).  With only
mass and momentum conserved both reduce to (1, v).

All operations extend entrywise to complex node-vectors so the spectral
solver can reuse them per Fourier mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import SingularA
from .params import ENERGY, ModelParams, eval_collision_freq, eval_equilibrium
from .vgrid import VelocityGrid


def moment_vectors(params: ModelParams, nodes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tables of phi and zeta on arbitrary nodes, shape (N, p)."""
    d = params.d
    r2 = np.sum(nodes**2, axis=-1)
    cols = [np.ones_like(r2)] + [nodes[:, a] for a in range(d)]
    if params.conservation == ENERGY:
        phi = np.column_stack(cols + [(r2 - d) / 2.0])
        zeta = np.column_stack(cols + [(r2 - d) / d])
    else:
        phi = np.column_stack(cols)
        zeta = phi.copy()
    return phi, zeta


@dataclass
class CollisionData:
    params: ModelParams
    grid: VelocityGrid
    M_tab: np.ndarray
    nu_tab: np.ndarray
    phi_tab: np.ndarray       # (N, p)
    zeta_tab: np.ndarray      # (N, p)
    A: np.ndarray             # (p, p)
    A_inv: np.ndarray
    _cho: tuple = field(repr=False, default=None)

    @property
    def p(self) -> int:
        return self.phi_tab.shape[1]

    def solve_A(self, rhs: np.ndarray) -> np.ndarray:
        return scipy.linalg.cho_solve(self._cho, rhs)


def assemble(params: ModelParams, grid: VelocityGrid) -> CollisionData:
    """Tabulate M, nu, phi, zeta and factorise A = quad(nu phi (x) phi M)."""
    M = eval_equilibrium(params, grid.nodes)
    nu = eval_collision_freq(params, grid.nodes)
    phi, zeta = moment_vectors(params, grid.nodes)
    A = grid.quad((nu * M)[:, None, None] * phi[:, :, None] * phi[:, None, :])
    A = 0.5 * (A + A.T)
    if np.linalg.cond(A) > 1e12:
        raise SingularA(f"moment matrix A badly conditioned: cond={np.linalg.cond(A):.3e}")
    cho = scipy.linalg.cho_factor(A)
    A_inv = scipy.linalg.cho_solve(cho, np.eye(A.shape[0]))
    return CollisionData(params, grid, M, nu, phi, zeta, A, A_inv, cho)


def moments(f: np.ndarray, cd: CollisionData) -> np.ndarray:
    """Macroscopic moments U = quad(zeta f): (rho, m, theta) or (rho, m)."""
    return cd.grid.quad(cd.zeta_tab * f[:, None])


def moments_nu(f: np.ndarray, cd: CollisionData) -> np.ndarray:
    """nu-weighted moments: solves A U_nu = quad(nu phi f)."""
    rhs = cd.grid.quad((cd.nu_tab * f)[:, None] * cd.phi_tab)
    return cd.solve_A(rhs)


def apply_K(f: np.ndarray, cd: CollisionData) -> np.ndarray:
    """K f = M phi . U_nu, the local-equilibrium projection of f."""
    return cd.M_tab * (cd.phi_tab @ moments_nu(f, cd))


def apply_L(f: np.ndarray, cd: CollisionData) -> np.ndarray:
    """L f = nu (K f - f)."""
    return cd.nu_tab * (apply_K(f, cd) - f)


def dissipation(f: np.ndarray, cd: CollisionData) -> tuple[complex, float]:
    """(quad(L f conj(f)/M), quad(nu |f - K f|^2 / M)); the first equals minus the second."""
    Lf = apply_L(f, cd)
    lhs = cd.grid.quad(Lf * np.conj(f) / cd.M_tab)
    g = f - apply_K(f, cd)
    rhs = cd.grid.quad(cd.nu_tab * np.abs(g) ** 2 / cd.M_tab)
    return complex(lhs), float(rhs)


def continuity_constant(cd: CollisionData) -> float:
    """Computable C with ||nu K f||_{L2(1/M)} <= C ||f||_{L2(1/M)} on the grid."""
    B = cd.grid.quad((cd.nu_tab**2 * cd.M_tab)[:, None, None]
                     * cd.phi_tab[:, :, None] * cd.phi_tab[:, None, :])
    lam_max = float(np.max(scipy.linalg.eigvalsh(B)))
    s = float(np.sum(np.diag(B)))  # sum_j quad(nu^2 phi_j^2 M)
    return np.sqrt(lam_max) * float(np.linalg.norm(cd.A_inv, 2)) * np.sqrt(s)
