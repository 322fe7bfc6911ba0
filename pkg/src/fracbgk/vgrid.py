"""Velocity-space quadrature grids.

Tensor-product rules that are exactly point-symmetric (every node v has a
partner -v with the same weight), so any integrand odd in a coordinate
integrates to exactly zero by pairing.  Two mappings: a truncated composite
Gauss-Legendre rule for Gaussian-decay integrands, and an algebraically
mapped rule v = L*u/(1-u^2) on (-1,1) that integrates power-law tails
without truncation bias.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, NonFiniteIntegrand

TRUNCATED = "truncated"
ALGEBRAIC = "algebraic"


@dataclass(frozen=True)
class GridSpec:
    """Per-axis rule: node count, mapping, and R (truncated) or L (algebraic)."""

    n_per_axis: int
    mapping: str = ALGEBRAIC
    scale: float = 2.0

    def refined(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.n_per_axis * factor, self.mapping, self.scale)


def _axis_rule(spec: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric 1-d nodes/weights; built from a half rule so pairing is exact."""
    n = spec.n_per_axis
    if n % 2 != 0:
        raise InvalidSpec(f"n_per_axis must be even, got {n}")
    if n < 8:
        raise InvalidSpec(f"n_per_axis must be >= 8, got {n}")
    if spec.mapping == ALGEBRAIC:
        u, wu = np.polynomial.legendre.leggauss(n)
        # mirror the positive half so u -> -u is exact in floating point
        half = u > 0
        up, wp = u[half], wu[half]
        x_half = spec.scale * up / (1.0 - up**2)
        w_half = wp * spec.scale * (1.0 + up**2) / (1.0 - up**2) ** 2
    elif spec.mapping == TRUNCATED:
        # composite Gauss-Legendre cells on [0, R], mirrored; a cell edge sits
        # at v = 0 so nodes cluster near the degeneracy without touching it
        q = 8 if n % 8 == 0 else (4 if n % 4 == 0 else 2)
        ncell = n // (2 * q)
        if ncell < 1:
            raise InvalidSpec(f"n_per_axis={n} too small for composite rule")
        g, gw = np.polynomial.legendre.leggauss(q)
        edges = np.linspace(0.0, spec.scale, ncell + 1)
        lo, hi = edges[:-1, None], edges[1:, None]
        x_half = (0.5 * (lo + hi) + 0.5 * (hi - lo) * g).ravel()
        w_half = (0.5 * (hi - lo) * gw + 0.0 * lo).ravel()
    else:
        raise InvalidSpec(f"unknown mapping {spec.mapping!r}")
    order = np.argsort(x_half)
    x_half, w_half = x_half[order], w_half[order]
    x = np.concatenate([-x_half[::-1], x_half])
    w = np.concatenate([w_half[::-1], w_half])
    return x, w


class VelocityGrid:
    """Point-symmetric quadrature nodes/weights on R^d (d = 1 or 2)."""

    def __init__(self, d: int, nodes: np.ndarray, weights: np.ndarray,
                 orbit: np.ndarray, spec: GridSpec):
        self.d = d
        self.nodes = nodes
        self.weights = weights
        self.spec = spec
        # orbit[g, m]: node index of the g-th sign flip of representative m;
        # orbit[0] are the representatives (all-positive quadrant)
        self._orbit = orbit
        self._w_orbit = weights[orbit[0]]
        self.pair_partner = _full_flip(orbit)
        self.radius = np.sqrt(np.sum(nodes**2, axis=1))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def quad(self, values) -> np.ndarray:
        """Weighted sum over nodes (axis 0).

        Sums each {+-1}^d sign-flip orbit first, so any integrand odd in any
        coordinate integrates to exactly zero.  `values` may be an array of
        shape (N, ...) or a callable evaluated on the nodes.  Raises
        NonFiniteIntegrand on any NaN/inf node value.
        """
        if callable(values):
            values = values(self.nodes)
        values = np.asarray(values)
        if values.shape[0] != self.n_nodes:
            raise ValueError("integrand values do not match grid size")
        if not np.all(np.isfinite(values)):
            raise NonFiniteIntegrand("integrand is not finite on the grid")
        # pairwise tree over the sign-flip group: exact cancellation at each level
        acc = values[self._orbit]
        while acc.shape[0] > 1:
            acc = acc[0::2] + acc[1::2]
        w = self._w_orbit.reshape((-1,) + (1,) * (values.ndim - 1))
        return np.sum(w * acc[0], axis=0)


def _full_flip(orbit: np.ndarray) -> np.ndarray:
    """Map node index -> index of -v, reconstructed from the orbit table."""
    n = orbit.size
    partner = np.empty(n, dtype=orbit.dtype)
    last = orbit.shape[0] - 1  # the all-coordinates flip
    for g in range(orbit.shape[0]):
        partner[orbit[g]] = orbit[last - g]
    return partner


def build_grid(d: int, spec: GridSpec) -> VelocityGrid:
    """Tensor-product symmetric grid for d in {1, 2}."""
    if d not in (1, 2):
        raise InvalidSpec(f"dimension d={d} not supported (use 1 or 2)")
    x, w = _axis_rule(spec)
    n = x.size
    rev = np.arange(n - 1, -1, -1)
    pos = np.arange(n // 2, n)  # positive half, ascending
    if d == 1:
        nodes = x[:, None]
        weights = w.copy()
        orbit = np.stack([pos, rev[pos]])
    else:
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        nodes = np.column_stack([X1.ravel(), X2.ravel()])
        weights = np.outer(w, w).ravel()
        I, J = np.meshgrid(pos, pos, indexing="ij")
        I, J = I.ravel(), J.ravel()
        orbit = np.stack([
            I * n + J,
            rev[I] * n + J,
            I * n + rev[J],
            rev[I] * n + rev[J],
        ])
    return VelocityGrid(d, nodes, weights, orbit, spec)


def stable_quad(d: int, spec: GridSpec, integrand, rel_tol: float = 0.01,
                name: str = "integrand") -> float:
    """Quadrature with a two-grid refinement check.

    Returns the fine-grid value; raises MomentDiverged when refinement moves
    the value by more than `rel_tol` relative, which is how non-integrable
    moments announce themselves on these grids.
    """
    from .errors import MomentDiverged

    coarse = float(build_grid(d, spec).quad(integrand))
    fine = float(build_grid(d, spec.refined()).quad(integrand))
    denom = max(abs(fine), abs(coarse), 1e-300)
    if abs(fine - coarse) > rel_tol * denom:
        raise MomentDiverged(name, coarse, fine)
    return fine
