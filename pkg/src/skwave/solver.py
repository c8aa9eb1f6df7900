"""Exponential-Euler time stepping of the truncated mild equations.

Heat:  u_{n+1} = e^{-alpha dt} (u_n + dt B_n + N_n)
Wave:  z_{n+1} = S_mu(dt) (z_n + I_mu (dt B_n + N_n)),   I_mu w = (0, w / mu)

where ``B_n`` and ``N_n`` are the mode projections of the drift and of
``G(t_n, u_n) Q dw`` frozen at the left endpoint (Ito). The linear part is
propagated exactly, so with b = g = 0 both schemes reproduce the semigroups
for any step size. Paths are simulated in batches; the noise of every path
depends only on ``(seed, path_id)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import Coefficients, drift_modes, noise_modes, pair_norm
from .noise import CovarianceQ, NoiseIncrement, path_gaussians
from .semigroup import propagator
from .spectrum import SpectralDomain

EQUATIONS = ("heat", "wave")


class PathAborted(RuntimeError):
    def __init__(self, step, path_ids, message="non-finite state"):
        super().__init__(f"{message} at step {step} (paths {list(path_ids)})")
        self.step = step
        self.path_ids = list(path_ids)


@dataclass(frozen=True, eq=False)
class SimConfig:
    domain: SpectralDomain
    coefficients: Coefficients
    covariance: CovarianceQ
    t_final: float = 1.0
    n_steps: int = 256
    mu: float | None = None
    initial_u: np.ndarray | None = None
    initial_v: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        K = self.domain.truncation
        if K < 1:
            raise ValueError("need at least one mode")
        if not (self.t_final > 0):
            raise ValueError("t_final must be positive")
        if int(self.n_steps) < 1:
            raise ValueError("n_steps must be positive")
        if self.mu is not None and not (self.mu > 0):
            raise ValueError("mu must be positive")
        if len(self.covariance.eigenvalues) != K:
            raise ValueError("covariance is not aligned with the domain modes")
        u0 = np.zeros(K) if self.initial_u is None else np.asarray(self.initial_u, float)
        v0 = np.zeros(K) if self.initial_v is None else np.asarray(self.initial_v, float)
        if u0.shape != (K,) or v0.shape != (K,):
            raise ValueError(f"initial data must have {K} coefficients")
        object.__setattr__(self, "initial_u", u0)
        object.__setattr__(self, "initial_v", v0)
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.t_final / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.n_steps + 1)

    def replace(self, **changes) -> "SimConfig":
        params = {k: getattr(self, k) for k in self.__dataclass_fields__}
        params.update(changes)
        return SimConfig(**params)

    def describe(self):
        return {
            "dimension": self.domain.dimension,
            "side_lengths": list(self.domain.side_lengths),
            "truncation": self.domain.truncation,
            "grid_res": self.domain.grid_points_per_axis,
            "t_final": self.t_final,
            "n_steps": self.n_steps,
            "mu": self.mu,
            "seed": self.seed,
            "initial_u": self.initial_u.tolist(),
            "initial_v": self.initial_v.tolist(),
            "coefficients": self.coefficients.describe(),
            "covariance": self.covariance.describe(),
        }


@dataclass(eq=False)
class Trajectory:
    """Mode coefficients on the uniform time grid.

    ``u`` has shape (n_steps + 1, K), or (n_steps + 1, P, K) for a batch of P
    paths; ``v`` is None for heat runs. When only the endpoint was recorded
    the leading axis has length 1.
    """

    equation: str
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray | None
    sup_H_norm: np.ndarray | float
    path_ids: list = field(default_factory=list)

    @property
    def final_u(self):
        return self.u[-1]

    @property
    def final_v(self):
        return None if self.v is None else self.v[-1]

    def path(self, i) -> "Trajectory":
        """Single-path view of a batched trajectory."""
        return Trajectory(
            self.equation, self.times, self.u[:, i],
            None if self.v is None else self.v[:, i],
            float(np.asarray(self.sup_H_norm)[i]), [self.path_ids[i]],
        )


class _Scheme:
    """Per-step constants for one configuration."""

    def __init__(self, config: SimConfig, equation: str):
        if equation not in EQUATIONS:
            raise ValueError(f"equation must be one of {EQUATIONS}")
        if equation == "wave" and config.mu is None:
            raise ValueError("wave runs need mu > 0")
        self.config = config
        self.equation = equation
        alpha = config.domain.eigenvalues
        dt = config.dt
        self.heat = np.exp(-alpha * dt)
        if equation == "wave":
            mu = config.mu
            a, b, da, db = propagator(mu, alpha, dt)
            self.a, self.b, self.da, self.db = a, b, da, db
            self.kick_u = b / mu
            self.kick_v = db / mu

    def forcing(self, t, u, xi):
        cfg = self.config
        kicks = cfg.covariance.eigenvalues * math.sqrt(cfg.dt) * xi
        force = noise_modes(cfg.domain, cfg.coefficients, t, u, kicks)
        if not cfg.coefficients.drift_free:
            force = force + cfg.dt * drift_modes(cfg.domain, cfg.coefficients, t, u)
        return force

    def step(self, t, u, v, xi):
        f = self.forcing(t, u, xi)
        if self.equation == "heat":
            return self.heat * (u + f), None
        un = self.a * u + self.b * v + self.kick_u * f
        vn = self.da * u + self.db * v + self.kick_v * f
        return un, vn

    def propagate(self, u, v, f):
        """One step driven by an externally supplied forcing (Picard, convolutions)."""
        if self.equation == "heat":
            return self.heat * (u + f), None
        return (self.a * u + self.b * v + self.kick_u * f,
                self.da * u + self.db * v + self.kick_v * f)


def _norm(domain, equation, u, v):
    if equation == "heat":
        return np.sqrt(np.sum(u * u, axis=-1))
    return pair_norm(domain, u, v)


def _as_gaussians(increments):
    if isinstance(increments, NoiseIncrement):
        return increments.gaussians
    return np.asarray(increments, float)


def step_heat(config: SimConfig, u, t, increments):
    """One exponential-Euler heat step; ``increments`` holds the standard normals."""
    u_new, _ = _Scheme(config, "heat").step(t, np.asarray(u, float), None, _as_gaussians(increments))
    if not np.all(np.isfinite(u_new)):
        raise PathAborted(int(round(t / config.dt)), [])
    return u_new


def step_wave(config: SimConfig, state, t, increments):
    """One exponential-Euler wave step on (u, v); returns the new pair."""
    u, v = state if isinstance(state, tuple) else (state.u_coeffs, state.v_coeffs)
    un, vn = _Scheme(config, "wave").step(t, np.asarray(u, float), np.asarray(v, float),
                                         _as_gaussians(increments))
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(vn))):
        raise PathAborted(int(round(t / config.dt)), [])
    return un, vn


def batch_gaussians(config: SimConfig, path_ids) -> np.ndarray:
    """Standard normals of shape (n_steps, P, K) for the given paths."""
    K = config.domain.truncation
    return np.stack([path_gaussians(config.seed, int(p), config.n_steps, K) for p in path_ids], axis=1)


def run_paths(config: SimConfig, equation: str, path_ids, record="full", gaussians=None) -> Trajectory:
    """Simulate a batch of paths. ``record`` is ``"full"`` or ``"final"``."""
    path_ids = [int(p) for p in path_ids]
    scheme = _Scheme(config, equation)
    xi = batch_gaussians(config, path_ids) if gaussians is None else gaussians
    P, K, n = len(path_ids), config.domain.truncation, config.n_steps
    dt = config.dt
    u = np.broadcast_to(config.initial_u, (P, K)).copy()
    v = np.broadcast_to(config.initial_v, (P, K)).copy() if equation == "wave" else None
    full = record == "full"
    if full:
        us = np.empty((n + 1, P, K))
        us[0] = u
        vs = np.empty((n + 1, P, K)) if v is not None else None
        if vs is not None:
            vs[0] = v
    sup = _norm(config.domain, equation, u, v)
    for m in range(n):
        u, v = scheme.step(m * dt, u, v, xi[m])
        bad = ~np.isfinite(u).all(axis=-1)
        if v is not None:
            bad |= ~np.isfinite(v).all(axis=-1)
        if bad.any():
            raise PathAborted(m + 1, [p for p, b in zip(path_ids, bad) if b])
        sup = np.maximum(sup, _norm(config.domain, equation, u, v))
        if full:
            us[m + 1] = u
            if vs is not None:
                vs[m + 1] = v
    if not full:
        us = u[None]
        vs = None if v is None else v[None]
    return Trajectory(equation, config.times, us, vs, sup, path_ids)


def run_path(config: SimConfig, equation: str, path_id: int = 0) -> Trajectory:
    """Deterministic function of (config, path_id); heat and wave share the noise."""
    return run_paths(config, equation, [path_id]).path(0)


# --------------------------------------------------------------- Picard


@dataclass(eq=False)
class PicardResult:
    trajectory: Trajectory
    differences: list  # sup_t |phi^{n+1} - phi^n|
    ratios: list
    converged_after: int | None
    diverged: bool
    run_path_gap: float  # sup_t distance of the fixed point to run_path on the same noise
    truncation_estimate: float  # sup over shared times of |run_path(dt) - run_path(dt/2)|

    @property
    def max_ratio(self) -> float:
        r = [x for x in self.ratios if np.isfinite(x)]
        return max(r) if r else 0.0


def _apply_K(scheme: _Scheme, config: SimConfig, phi_u, xi):
    """Discretized mild map: linear propagation driven by forcing evaluated on phi."""
    n = config.n_steps
    dt = config.dt
    K = config.domain.truncation
    u = config.initial_u.copy()
    v = config.initial_v.copy() if scheme.equation == "wave" else None
    us = np.empty((n + 1, K))
    vs = np.empty((n + 1, K)) if v is not None else None
    us[0] = u
    if vs is not None:
        vs[0] = v
    for m in range(n):
        f = scheme.forcing(m * dt, phi_u[m], xi[m])
        u, v = scheme.propagate(u, v, f)
        us[m + 1] = u
        if vs is not None:
            vs[m + 1] = v
    return us, vs


def picard_solve(config: SimConfig, equation: str, n_iterations: int = 30, path_id: int = 0,
                 tol: float = 1e-13) -> PicardResult:
    """Iterate the mild map on a frozen noise path starting from the initial data.

    Stops once successive iterates differ by at most ``tol`` times the scale of
    the iterate. Divergence is flagged when the contraction ratio stays >= 1
    for three consecutive iterations.
    """
    scheme = _Scheme(config, equation)
    domain = config.domain
    K, n = domain.truncation, config.n_steps
    xi = path_gaussians(config.seed, path_id, n, K)
    phi_u = np.broadcast_to(config.initial_u, (n + 1, K)).copy()
    phi_v = np.broadcast_to(config.initial_v, (n + 1, K)).copy() if equation == "wave" else None

    diffs, ratios = [], []
    converged_after = None
    diverged = False
    streak = 0
    for it in range(1, n_iterations + 1):
        new_u, new_v = _apply_K(scheme, config, phi_u, xi)
        du = new_u - phi_u
        dv = None if new_v is None else new_v - phi_v
        d = float(np.max(_norm(domain, equation, du, dv)))
        scale = float(np.max(_norm(domain, equation, new_u, new_v)))
        diffs.append(d)
        if len(diffs) > 1:
            r = d / diffs[-2] if diffs[-2] > 0 else 0.0
            ratios.append(r)
            streak = streak + 1 if r >= 1.0 else 0
            if streak >= 3:
                diverged = True
        phi_u, phi_v = new_u, new_v
        if not (np.all(np.isfinite(phi_u)) and (phi_v is None or np.all(np.isfinite(phi_v)))):
            diverged = True
        if diverged:
            break
        if d <= tol * max(scale, 1.0):
            # the iterate that produced no change was already the fixed point
            converged_after = it - 1 if it > 1 else 0
            break

    traj = Trajectory(equation, config.times, phi_u, phi_v,
                      float(np.max(_norm(domain, equation, phi_u, phi_v))), [path_id])
    ref = run_path(config, equation, path_id)
    gap = float(np.max(_norm(domain, equation, phi_u - ref.u,
                             None if phi_v is None else phi_v - ref.v)))
    fine = run_path(config.replace(n_steps=2 * n), equation, path_id)
    coarse_u, coarse_v = _coarse_from_fine(config, equation, path_id)
    lte = float(np.max(_norm(domain, equation, fine.u[::2] - coarse_u,
                             None if coarse_v is None else fine.v[::2] - coarse_v)))
    return PicardResult(traj, diffs, ratios, converged_after, diverged, gap, lte)


def _coarse_from_fine(config: SimConfig, equation: str, path_id: int):
    """Coarse-step run driven by the Brownian increments of the 2x finer run."""
    K, n = config.domain.truncation, config.n_steps
    xi_fine = path_gaussians(config.seed, path_id, 2 * n, K)
    xi = (xi_fine[0::2] + xi_fine[1::2]) / math.sqrt(2.0)
    traj = run_paths(config, equation, [path_id], gaussians=xi[:, None, :])
    return traj.u[:, 0], None if traj.v is None else traj.v[:, 0]


def coupled_increments(config: SimConfig, path_id: int, refine: int = 1) -> np.ndarray:
    """Normals for ``config.n_steps`` steps built from a ``refine``-times finer path.

    The returned draws are the scaled sums of ``refine`` consecutive fine
    normals, so runs at different step sizes see the same Brownian path.
    """
    K, n = config.domain.truncation, config.n_steps
    fine = path_gaussians(config.seed, path_id, refine * n, K)
    return fine.reshape(n, refine, K).sum(axis=1) / math.sqrt(refine)


__all__ = [
    "SimConfig", "Trajectory", "PathAborted", "PicardResult",
    "step_heat", "step_wave", "run_path", "run_paths", "picard_solve",
    "batch_gaussians", "coupled_increments",
]
