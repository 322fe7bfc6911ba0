"""Equilibrium families, collision frequencies, regime validation, moment calibration.

Two admissible families:

* ``gaussian`` -- M(v) = (2 pi)^(-d/2) exp(-|v|^2/2) with a collision
  frequency degenerate at the origin, nu(v) = |v|^beta for small |v|.
* ``heavy_tail`` -- M(v) = c0 |v|^(-alpha-d) for |v| >= tail_radius, with a
  smooth positive even-polynomial interior, and nu(v) = |v|^beta at infinity.

The anomalous exponent gamma in (1,2) is derived from (alpha, beta, d) and
never user-set.  Calibration solves for (c0, interior coefficients) so the
discrete quadrature of M reproduces the moments (1, d, d(d+2)) -- or (1, d)
when only mass and momentum are conserved -- to near machine precision on the
same grid the solver uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    CalibrationInfeasible,
    NumericalError,
    RegimeViolation,
    SingularCalibration,
    UnsupportedCombination,
    ValidationError,
)
from .vgrid import ALGEBRAIC, TRUNCATED, GridSpec, VelocityGrid, build_grid, stable_quad

GAUSSIAN = "gaussian"
HEAVY_TAIL = "heavy_tail"
ENERGY = "mass_momentum_energy"
MASS_MOMENTUM = "mass_momentum"

# collision-frequency blend zone: C1 cubic between the power law and 1
NU_BLEND_LO = 0.9
NU_BLEND_HI = 1.1


@dataclass(frozen=True)
class ModelParams:
    family: str
    conservation: str
    d: int
    alpha: float = 0.0            # tail exponent of M (heavy tail only)
    beta: float = 0.0             # nu exponent: tail (heavy) or degeneracy (gaussian)
    c0: float = 1.0               # tail amplitude of M (heavy tail only)
    tail_radius: float = 2.0      # radius where the exact power-law tail starts
    interior_coeffs: tuple[float, ...] | None = None   # even polynomial in |v|^2
    gamma: float | None = None    # derived rescaling exponent; never user-set

    @property
    def p(self) -> int:
        """Number of conserved moments: d+2 with energy, d+1 without."""
        return self.d + 2 if self.conservation == ENERGY else self.d + 1

    @property
    def moment_targets(self) -> tuple[float, ...]:
        if self.conservation == ENERGY:
            return (1.0, float(self.d), float(self.d * (self.d + 2)))
        return (1.0, float(self.d))


def validate_assumptions(raw: ModelParams) -> ModelParams:
    """Check the admissible-regime inequalities and fill in gamma.

    Raises RegimeViolation naming the first failed condition, or
    UnsupportedCombination for gaussian + mass-momentum (the degenerate
    frequency puts the fractional term on the density, and without the
    energy equation no Boussinesq relation can absorb it).
    """
    if raw.gamma is not None:
        raise ValidationError("gamma is derived from (alpha, beta, d); it must be unset")
    if raw.d not in (1, 2):
        raise UnsupportedCombination(f"dimension d={raw.d} not supported (use 1 or 2)")
    if raw.family not in (GAUSSIAN, HEAVY_TAIL):
        raise ValidationError(f"unknown family {raw.family!r}")
    if raw.conservation not in (ENERGY, MASS_MOMENTUM):
        raise ValidationError(f"unknown conservation set {raw.conservation!r}")

    if raw.family == GAUSSIAN:
        if raw.conservation == MASS_MOMENTUM:
            raise UnsupportedCombination(
                "gaussian family requires the energy equation: the fractional term "
                "arises on the density and needs the Boussinesq relation"
            )
        d, beta = raw.d, raw.beta
        if not d + 2 < beta:
            raise RegimeViolation("beta>d+2")
        if not beta < d + 3:
            raise RegimeViolation("beta<d+3")
        gamma = (beta + d) / (beta - 1.0)
    else:
        a, b = raw.alpha, raw.beta
        if raw.c0 <= 0:
            raise RegimeViolation("c0>0")
        if raw.tail_radius < 1.0:
            raise RegimeViolation("tail_radius>=1")
        if not b < 1.0:
            raise RegimeViolation("beta<1")
        if raw.conservation == ENERGY:
            if not a > 5.0:
                raise RegimeViolation("alpha>5")
            if not 5.0 < a + b:
                raise RegimeViolation("alpha+beta>5")
            if not a + b < 6.0:
                raise RegimeViolation("alpha+beta<6")
            if not b < (a - 4.0) / 2.0:
                raise RegimeViolation("beta<(alpha-4)/2")
            gamma = (a - b - 4.0) / (1.0 - b)
        else:
            if not a > 3.0:
                raise RegimeViolation("alpha>3")
            if not 3.0 < a + b:
                raise RegimeViolation("alpha+beta>3")
            if not a + b < 4.0:
                raise RegimeViolation("alpha+beta<4")
            if not b < (a - 2.0) / 2.0:
                raise RegimeViolation("beta<(alpha-2)/2")
            gamma = (a - b - 2.0) / (1.0 - b)

    if not 1.0 < gamma < 2.0:
        raise RegimeViolation("gamma in (1,2)", f"derived gamma={gamma:.6g} not in (1,2)")
    _check_nu_positive(replace(raw, gamma=gamma))
    return replace(raw, gamma=gamma)


def classical_control(d: int) -> ModelParams:
    """Gaussian equilibrium with nu == 1: the gamma = 2 classical-diffusion control.

    Bypasses validate_assumptions on purpose -- this configuration sits outside
    the fractional regimes and exists to cross-check the symbol fit against the
    classical transport coefficients.
    """
    return ModelParams(family=GAUSSIAN, conservation=ENERGY, d=d, beta=0.0, gamma=2.0)


def _hermite_blend(r: np.ndarray, x0: float, x1: float,
                   f0: float, df0: float, f1: float, df1: float) -> np.ndarray:
    t = (r - x0) / (x1 - x0)
    h = x1 - x0
    h00 = (1 + 2 * t) * (1 - t) ** 2
    h10 = t * (1 - t) ** 2
    h01 = t**2 * (3 - 2 * t)
    h11 = t**2 * (t - 1)
    return f0 * h00 + df0 * h * h10 + f1 * h01 + df1 * h * h11


def _nu_radial(params: ModelParams, r: np.ndarray) -> np.ndarray:
    """nu(|v|): exact power law on the regime-relevant side, blended to 1."""
    beta = params.beta
    r = np.asarray(r, dtype=float)
    if beta == 0.0:
        return np.ones_like(r)
    out = np.empty_like(r)
    lo, hi = NU_BLEND_LO, NU_BLEND_HI
    if params.family == GAUSSIAN:
        # power law for small |v| (the degeneracy), constant 1 far out
        inner = r <= lo
        outer = r >= hi
        out[inner] = r[inner] ** beta
        out[outer] = 1.0
        mid = ~(inner | outer)
        out[mid] = _hermite_blend(r[mid], lo, hi,
                                  lo**beta, beta * lo ** (beta - 1.0), 1.0, 0.0)
    else:
        # constant 1 near the origin, power law at infinity
        inner = r <= lo
        outer = r >= hi
        out[inner] = 1.0
        out[outer] = r[outer] ** beta
        mid = ~(inner | outer)
        out[mid] = _hermite_blend(r[mid], lo, hi,
                                  1.0, 0.0, hi**beta, beta * hi ** (beta - 1.0))
    return out


def _check_nu_positive(params: ModelParams) -> None:
    r = np.linspace(1e-6, 3.0, 2001)
    if np.min(_nu_radial(params, r)) <= 0:
        raise RegimeViolation("nu>0", "collision-frequency blend dips below zero")


def eval_collision_freq(params: ModelParams, v) -> np.ndarray:
    """nu(v); zero only at v = 0 for the gaussian family."""
    v = np.asarray(v, dtype=float)
    if params.d == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        r = np.abs(v)
    else:
        r = np.sqrt(np.sum(v**2, axis=-1))
    return _nu_radial(params, np.asarray(r, dtype=float))


def _equilibrium_radial(params: ModelParams, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if params.family == GAUSSIAN:
        return (2.0 * np.pi) ** (-params.d / 2.0) * np.exp(-0.5 * r**2)
    if params.interior_coeffs is None:
        raise NumericalError("heavy-tail equilibrium requires calibrate_moments first")
    out = np.empty_like(r)
    tail = r >= params.tail_radius
    out[tail] = params.c0 * r[tail] ** (-(params.alpha + params.d))
    coeffs = np.asarray(params.interior_coeffs)
    out[~tail] = np.polynomial.polynomial.polyval(r[~tail] ** 2, coeffs)
    return out


def eval_equilibrium(params: ModelParams, v) -> np.ndarray:
    """Equilibrium density M(v) >= 0 (radial)."""
    v = np.asarray(v, dtype=float)
    if params.d == 1 and (v.ndim == 0 or v.shape[-1] != 1):
        r = np.abs(v)
    else:
        r = np.sqrt(np.sum(v**2, axis=-1))
    return _equilibrium_radial(params, np.asarray(r, dtype=float))


def _interior_basis_size(params: ModelParams) -> int:
    # moment conditions + 2 matching conditions must balance (c0 + coefficients)
    return len(params.moment_targets) + 1


def calibrate_moments(params: ModelParams, grid: VelocityGrid) -> ModelParams:
    """Solve for (c0, interior coefficients) so the discrete moments hit the targets.

    Gaussian family: nothing to calibrate; the analytic moments are verified on
    the supplied grid and the params are returned unchanged.
    """
    if params.gamma is None:
        raise ValidationError("validate_assumptions must run before calibration")
    r = grid.radius
    targets = params.moment_targets
    if params.family == GAUSSIAN:
        M = _equilibrium_radial(params, r)
        for k, target in zip((0, 2, 4), targets):
            got = float(grid.quad(r**k * M))
            if abs(got - target) > 1e-8 * max(1.0, abs(target)):
                raise CalibrationInfeasible(
                    f"gaussian moment |v|^{k} quadrature {got!r} misses {target}; "
                    "grid too coarse or too small"
                )
        return params

    r0 = params.tail_radius
    nb = _interior_basis_size(params)
    tail = (r >= r0).astype(float) * r ** (-(params.alpha + params.d))
    interior = [(r < r0).astype(float) * r ** (2 * j) for j in range(nb)]
    n_unknowns = nb + 1
    A = np.zeros((n_unknowns, n_unknowns))
    b = np.zeros(n_unknowns)
    for row, (k, target) in enumerate(zip((0, 2, 4), targets)):
        A[row, 0] = float(grid.quad(r**k * tail))
        for j in range(nb):
            A[row, 1 + j] = float(grid.quad(r**k * interior[j]))
        b[row] = target
    # C1 matching of the interior polynomial to the tail at r0
    row = len(targets)
    A[row, 0] = r0 ** (-(params.alpha + params.d))
    A[row, 1:] = [-(r0 ** (2 * j)) for j in range(nb)]
    A[row + 1, 0] = -(params.alpha + params.d) * r0 ** (-(params.alpha + params.d) - 1)
    A[row + 1, 1:] = [-(2 * j) * r0 ** (2 * j - 1) for j in range(nb)]

    if np.linalg.cond(A) > 1e12:
        raise SingularCalibration("calibration system is rank-deficient")
    x = np.linalg.solve(A, b)
    c0, coeffs = float(x[0]), tuple(float(c) for c in x[1:])
    if c0 <= 0:
        raise CalibrationInfeasible(f"calibrated tail amplitude c0={c0:.6g} <= 0")
    rr = np.linspace(0.0, r0, 4001)
    if np.min(np.polynomial.polynomial.polyval(rr**2, np.asarray(coeffs))) <= 0:
        raise CalibrationInfeasible(
            "calibrated interior dips below zero; increase tail_radius"
        )
    calibrated = replace(params, c0=c0, interior_coeffs=coeffs)
    M = _equilibrium_radial(calibrated, r)
    for k, target in zip((0, 2, 4), targets):
        got = float(grid.quad(r**k * M))
        if abs(got - target) > 1e-10 * max(1.0, abs(target)):
            raise SingularCalibration(
                f"calibration verification failed: |v|^{k} moment {got!r} vs {target}"
            )
    return calibrated


def moment_over_nu(params: ModelParams, spec: GridSpec, k: int,
                   rel_tol: float = 0.01) -> float:
    """Grid-stable quadrature of |v|^k M / nu; raises MomentDiverged otherwise."""

    def integrand(v):
        r = np.sqrt(np.sum(v**2, axis=-1))
        return r**k * _equilibrium_radial(params, r) / _nu_radial(params, r)

    return stable_quad(params.d, spec, integrand, rel_tol=rel_tol,
                       name=f"|v|^{k} M/nu")


def default_grid_spec(params: ModelParams, fine: bool = False) -> GridSpec:
    """Mapping matched to the decay class of M (design default)."""
    if params.family == GAUSSIAN:
        n = (512 if fine else 256) if params.d == 1 else 64
        return GridSpec(n, TRUNCATED, 8.0 * math.sqrt(params.d))
    n = (512 if fine else 256) if params.d == 1 else 32
    return GridSpec(n, ALGEBRAIC, 2.0)
