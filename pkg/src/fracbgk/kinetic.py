"""Rescaled kinetic Cauchy problem, spectral in x, implicit in t.

Per spatial Fourier mode k the evolution is the stiff linear ODE

    eps^gamma d/dt fhat = -(i eps v.k + nu) fhat + nu M phi . U_nu[fhat],

stepped by implicit Euler (default) through a p x p reduction: with
tau = dt/eps^gamma and the diagonal D = 1 + tau (nu + i eps v.k), the update
solves  A_red Uhat = A^-1 quad(nu phi D^-1 fhat)  with
A_red = I - A^-1 quad(nu phi (x) (tau nu D^-1 M phi)),  then
fhat' = D^-1 (fhat + tau nu M phi . Uhat).  Cost O(N_v p) per mode-step, and
the discrete L2(1/M) norm is non-increasing for every dt, eps, k.

slow_spectrum extracts the p hydrodynamic eigenvalues of the per-wavenumber
generator G_k = -i diag(v.k) + L (the branches that vanish as k -> 0), whose
small-k decay rates encode the anomalous diffusion exponent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .collision import CollisionData
from .errors import (
    EigSolveFailure,
    IllPrepared,
    InvalidSpec,
    ReducedSystemSingular,
)
from .params import ENERGY, GAUSSIAN
from .spectral import SpatialModes

IMPLICIT_EULER = "implicit_euler"
CRANK_NICOLSON = "crank_nicolson"


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float
    dt: float
    t_final: float
    n_modes: int
    domain_length: float = 2.0 * np.pi
    scheme: str = IMPLICIT_EULER

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise InvalidSpec(f"epsilon={self.epsilon} not in (0, 1]")
        if self.dt <= 0 or self.t_final <= 0:
            raise InvalidSpec("dt and t_final must be positive")
        if self.n_modes % 2 != 0:
            raise InvalidSpec("n_modes must be even")
        if self.scheme not in (IMPLICIT_EULER, CRANK_NICOLSON):
            raise InvalidSpec(f"unknown scheme {self.scheme!r}")


@dataclass
class InitialData:
    """Moment fields as Fourier coefficients (n_modes, p), plus the theorem regime."""

    U_hat: np.ndarray
    modes: SpatialModes
    well_prepared: str = "stokes_fourier"   # or "stokes"


def theta_cosine_data(modes: SpatialModes, amplitudes: dict[int, float],
                      p: int) -> InitialData:
    """Well-prepared Stokes-Fourier data: theta = sum a_j cos(j x1), rho = -theta, m = 0."""
    U = np.zeros((modes.n_modes, p), dtype=complex)
    n = modes.n
    for j, a in amplitudes.items():
        for sign in (+1, -1):
            sel = np.all(modes.k_index == np.array([sign * j] + [0] * (modes.d - 1)), axis=1)
            U[sel, p - 1] += a / 2.0
            U[sel, 0] -= a / 2.0
    return InitialData(U, modes, "stokes_fourier")


def stream_function_data(modes: SpatialModes, psi_hat: np.ndarray,
                         p: int) -> InitialData:
    """Divergence-free momentum from a stream function: m = (-d_y psi, d_x psi)."""
    if modes.d != 2:
        raise InvalidSpec("stream-function data requires d = 2")
    U = np.zeros((modes.n_modes, p), dtype=complex)
    U[:, 1] = -1j * modes.k[:, 1] * psi_hat
    U[:, 2] = 1j * modes.k[:, 0] * psi_hat
    return InitialData(U, modes, "stokes")


def lift_initial(init: InitialData, cd: CollisionData) -> np.ndarray:
    """Well-prepared lift fhat(k, v) = M(v) phi(v) . Uhat(k); checks the constraints."""
    p = cd.p
    d = cd.params.d
    U = init.U_hat
    if U.shape != (init.modes.n_modes, p):
        raise InvalidSpec("initial moment array has wrong shape")
    scale = np.max(np.abs(U)) or 1.0
    m_hat = U[:, 1:1 + d]
    div = np.sum(init.modes.k * m_hat, axis=1)
    if np.max(np.abs(div)) > 1e-12 * scale:
        raise IllPrepared("initial momentum is not divergence-free")
    if init.well_prepared == "stokes_fourier":
        if cd.params.conservation != ENERGY:
            raise IllPrepared("stokes_fourier data requires the energy conservation set")
        bous = U[:, 0] + U[:, -1]
        if np.max(np.abs(bous)) > 1e-12 * scale:
            raise IllPrepared("initial data violates the Boussinesq relation rho + theta = 0")
    return (U @ cd.phi_tab.T) * cd.M_tab[None, :]


class StepOperator:
    """Precomputed implicit step for a fixed (cfg, cd, mode set)."""

    def __init__(self, cfg: SolverConfig, cd: CollisionData, modes: SpatialModes):
        gamma = cd.params.gamma
        if gamma is None:
            raise InvalidSpec("params must be validated (gamma set) before stepping")
        self.cfg = cfg
        self.cd = cd
        self.modes = modes
        v = cd.grid.nodes
        nu = cd.nu_tab
        self.tau = cfg.dt / cfg.epsilon**gamma
        vk = modes.k @ v.T                       # (n_modes, N_v)
        if cfg.scheme == IMPLICIT_EULER:
            D = 1.0 + self.tau * (nu[None, :] + 1j * cfg.epsilon * vk)
            self._rhs_factor = None
        else:
            # trapezoidal transport, implicit collision
            D = 1.0 + self.tau * (nu[None, :] + 0.5j * cfg.epsilon * vk)
            self._rhs_factor = 1.0 - 0.5j * self.tau * cfg.epsilon * vk
        self.Dinv = 1.0 / D
        phi = cd.phi_tab
        w = cd.grid.weights
        self.w_nu_phi = (w * nu)[:, None] * phi            # quad(nu phi .) weights
        self.nu_M_phi = (nu * cd.M_tab)[:, None] * phi
        p = cd.p
        S = self.tau * np.einsum("nj,mn,nl->mjl", self.w_nu_phi, self.Dinv,
                                 (nu * cd.M_tab)[:, None] * phi, optimize=True)
        A_red = np.eye(p)[None, :, :] - np.einsum("jl,mlk->mjk", cd.A_inv, S)
        try:
            self.A_red_inv = np.linalg.inv(A_red)
        except np.linalg.LinAlgError as exc:
            raise ReducedSystemSingular(str(exc)) from None
        self.A_inv = cd.A_inv

    def apply(self, fhat: np.ndarray) -> np.ndarray:
        """One implicit step for all modes; fhat shape (n_modes, N_v)."""
        rhs = fhat if self._rhs_factor is None else self._rhs_factor * fhat
        g = rhs * self.Dinv
        q = g @ self.w_nu_phi                      # (n_modes, p)
        u = np.einsum("mjl,ml->mj", self.A_red_inv, q @ self.A_inv.T)
        return self.Dinv * (rhs + self.tau * (u @ self.nu_M_phi.T))


def step_mode(fhat: np.ndarray, k: np.ndarray, cfg: SolverConfig,
              cd: CollisionData) -> np.ndarray:
    """Single-mode implicit step (same kernel the batched evolve uses)."""
    modes = _SingleMode(np.atleast_1d(np.asarray(k, dtype=float)))
    op = StepOperator(cfg, cd, modes)
    return op.apply(fhat[None, :])[0]


class _SingleMode:
    def __init__(self, k: np.ndarray):
        self.k = k[None, :]
        self.n_modes = 1


@dataclass
class Trajectory:
    """Evolution record: per-step norms plus moment fields at requested times."""

    cfg: SolverConfig
    record_times: list[float]
    step_times: np.ndarray
    f_norm: np.ndarray                 # ||f||_{L2_{x,v}(1/M)} after every step
    g_nu_accum: np.ndarray             # sqrt(sum dt ||g_nu||^2_{L2(nu/M)}) running
    U_records: list[np.ndarray]        # (p, n, [n]) real fields per record time
    U_nu_records: list[np.ndarray]
    final_fhat: np.ndarray
    modes: SpatialModes = field(repr=False, default=None)


def _xv_norm_sq(fhat: np.ndarray, weights_v: np.ndarray, length: float, d: int) -> float:
    # Parseval in x, quadrature in v
    return float(length**d * np.sum((np.abs(fhat) ** 2) @ weights_v))


def evolve(fhat0: np.ndarray, cfg: SolverConfig, cd: CollisionData,
           modes: SpatialModes, record: list[float]) -> Trajectory:
    """Step all modes to t_final, recording moments at the requested times.

    Record times must be (near) multiples of dt and <= t_final.
    """
    n_steps = int(round(cfg.t_final / cfg.dt))
    if abs(n_steps * cfg.dt - cfg.t_final) > 1e-9 * cfg.t_final:
        raise InvalidSpec("t_final must be a multiple of dt")
    record_steps = {}
    for t in record:
        s = int(round(t / cfg.dt))
        if s > n_steps or abs(s * cfg.dt - t) > 1e-9 * max(t, cfg.dt):
            raise InvalidSpec(f"record time {t} is not a multiple of dt below t_final")
        record_steps[s] = t

    op = StepOperator(cfg, cd, modes)
    grid, params = cd.grid, cd.params
    w_minv = grid.weights / cd.M_tab
    w_nu_minv = grid.weights * cd.nu_tab / cd.M_tab
    L, d = cfg.domain_length, params.d

    fhat = fhat0.copy()
    f_norm = np.empty(n_steps + 1)
    g_acc = np.empty(n_steps + 1)
    f_norm[0] = np.sqrt(_xv_norm_sq(fhat, w_minv, L, d))
    g_acc[0] = 0.0
    acc = 0.0
    U_records, U_nu_records = [], []
    times = sorted(record_steps)

    def snapshot():
        U = grid.quad(cd.zeta_tab[:, None, :] * fhat.T[:, :, None])        # (m, p)
        rhs = grid.quad((cd.nu_tab[:, None] * fhat.T)[:, :, None] * cd.phi_tab[:, None, :])
        U_nu = cd.solve_A(rhs.T).T
        U_records.append(np.stack([modes.real_values(U[:, j]).reshape(modes.shape)
                                   for j in range(cd.p)]))
        U_nu_records.append(np.stack([modes.real_values(U_nu[:, j]).reshape(modes.shape)
                                      for j in range(cd.p)]))

    if 0 in record_steps:
        snapshot()
    for s in range(1, n_steps + 1):
        fhat = op.apply(fhat)
        f_norm[s] = np.sqrt(_xv_norm_sq(fhat, w_minv, L, d))
        U_nu_all = cd.solve_A((fhat @ op.w_nu_phi).T).T
        g_nu = fhat - (U_nu_all @ cd.phi_tab.T) * cd.M_tab[None, :]
        acc += cfg.dt * _xv_norm_sq(g_nu, w_nu_minv, L, d)
        g_acc[s] = np.sqrt(acc)
        if s in record_steps:
            snapshot()
    return Trajectory(cfg, [record_steps[s] for s in times], cfg.dt * np.arange(n_steps + 1),
                      f_norm, g_acc, U_records, U_nu_records, fhat, modes)


# ---------------------------------------------------------------------------
# hydrodynamic spectrum of G_k = -i diag(v.k) + L

def _generator_parts(kvec: np.ndarray, cd: CollisionData):
    v = cd.grid.nodes
    nu = cd.nu_tab
    diag = -(nu + 1j * (v @ kvec))
    U_low = (nu * cd.M_tab)[:, None] * cd.phi_tab              # (N, p)
    V_low = (cd.grid.weights * nu)[:, None] * cd.phi_tab @ cd.A_inv.T
    return diag, U_low, V_low


def _hydro_scores(vecs: np.ndarray, cd: CollisionData) -> np.ndarray:
    """|U_nu[f]| / ||f||_{L2(1/M)}: O(1) for hydrodynamic modes, tiny for node modes."""
    _, U_low, V_low = _generator_parts(np.zeros(cd.params.d), cd)
    U = V_low.T @ vecs                                          # (p, n_vecs)
    denom = np.sqrt((cd.grid.weights / cd.M_tab) @ (np.abs(vecs) ** 2))
    return np.linalg.norm(U, axis=0) / np.maximum(denom, 1e-300)


def _dense_spectrum(kvec: np.ndarray, cd: CollisionData):
    n = cd.grid.n_nodes
    if n > 4096:
        raise EigSolveFailure(f"dense eigensolve refused for N_v={n} > 4096")
    diag, U_low, V_low = _generator_parts(kvec, cd)
    G = np.diag(diag) + U_low @ V_low.T
    vals, vecs = scipy.linalg.eig(G)
    return vals, vecs


def _shift_invert_spectrum(kvec: np.ndarray, cd: CollisionData, n_want: int,
                           max_iter: int = 200, tol: float = 1e-11):
    """Subspace iteration with the Woodbury-factored inverse of G_k."""
    diag, U_low, V_low = _generator_parts(kvec, cd)
    p = U_low.shape[1]
    m = n_want + 5
    dinv = 1.0 / diag
    DU = dinv[:, None] * U_low
    core = np.linalg.inv(np.eye(p) + V_low.T @ DU)

    def ginv(x):
        y = dinv[:, None] * x
        return y - DU @ (core @ (V_low.T @ y))

    def gapply(x):
        return diag[:, None] * x + U_low @ (V_low.T @ x)

    rng = np.random.default_rng(1234)
    X = np.concatenate([cd.M_tab[:, None] * cd.phi_tab,
                        rng.standard_normal((diag.size, m - p))
                        + 1j * rng.standard_normal((diag.size, m - p))], axis=1)
    X, _ = np.linalg.qr(X)
    lam_prev = None
    for _ in range(max_iter):
        X, _ = np.linalg.qr(ginv(X))
        H = X.conj().T @ gapply(X)
        lam, W = np.linalg.eig(H)
        order = np.argsort(np.abs(lam))
        lam, W = lam[order], W[:, order]
        if lam_prev is not None and np.allclose(lam[:n_want], lam_prev, rtol=tol, atol=1e-14):
            vecs = X @ W
            res = np.linalg.norm(gapply(vecs) - vecs * lam[None, :], axis=0)
            if np.all(res[:n_want] <= 1e-8 * (1.0 + np.abs(lam[:n_want]))):
                return lam, vecs
        lam_prev = lam[:n_want].copy()
    raise EigSolveFailure("subspace iteration stagnated")


def slow_spectrum(kvec: np.ndarray, cd: CollisionData, method: str = "auto",
                  return_vectors: bool = False):
    """The p hydrodynamic eigenvalues of G_k, sorted by |Re|, smallest first.

    Candidates come from a shift-invert subspace iteration at shift 0 (or a
    dense solve; the gaussian family goes dense directly because its
    degenerate frequency scatters discrete near-zero node modes around the
    hydrodynamic branch).  Hydrodynamic modes are identified by their moment
    content |U_nu[f]| / ||f||, which is O(1) on the slow branch and vanishes
    on discretised continuous-spectrum modes.
    """
    kvec = np.asarray(kvec, dtype=float).reshape(cd.params.d)
    if np.linalg.norm(kvec) == 0.0:
        raise InvalidSpec("slow_spectrum requires |k| > 0")
    p = cd.p
    if method == "auto":
        method = "dense" if cd.params.family == GAUSSIAN else "shift_invert"
    if method == "shift_invert":
        try:
            vals, vecs = _shift_invert_spectrum(kvec, cd, p)
        except EigSolveFailure:
            vals, vecs = _dense_spectrum(kvec, cd)
    elif method == "dense":
        vals, vecs = _dense_spectrum(kvec, cd)
    else:
        raise InvalidSpec(f"unknown method {method!r}")
    scores = _hydro_scores(vecs, cd)
    pick = np.argsort(scores)[::-1][:p]
    pick = pick[np.argsort(np.abs(vals[pick].real))]
    if return_vectors:
        return vals[pick], vecs[:, pick]
    return vals[pick]
