"""Coupled Monte Carlo mu-sweeps comparing the damped wave and heat solutions.

Every path is simulated for the heat equation and for each mass mu on the
same Gaussian draws. The difference u - u^mu is split into five terms

    J1  initial data:          S(t) u0 - Pi_1 S_mu(t)(u0, v0)
    J2  drift, kernel gap:     heat vs wave convolution of dt B(u)
    J3  drift, state gap:      wave convolution of dt (B(u) - B(u^mu))
    J4  noise, kernel gap:     heat vs wave convolution of G(u) Q dw
    J5  noise, state gap:      wave convolution of (G(u) - G(u^mu)) Q dw

Each term is run through the same discrete recursions as the solvers, so the
five terms add up to u - u^mu to rounding on every path.

Paths are processed in fixed-size chunks keyed by path id and the per-path
values are reduced in path order, so the reports do not depend on the number
of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .analysis import PhiPath, heat_convolution_paths, quadratic_variation_gap, wave_convolution_paths
from .fields import drift_modes, noise_modes
from .semigroup import propagator
from .solver import PathAborted, SimConfig, batch_gaussians, run_paths
from .spectrum import SpectralDomain

N_TERMS = 5


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    base: SimConfig
    mu_grid: tuple
    n_paths: int = 64
    p_moment: float = 2.0
    workers: int = 1
    chunk_size: int = 16
    separation_se: float = 1.0  # required gap between levels, in standard errors
    final_fraction: float = 0.1  # smallest-mu estimate must be below this times the largest
    max_abort_fraction: float = 0.01

    def __post_init__(self):
        grid = tuple(float(m) for m in self.mu_grid)
        if any(not (0 < m < 1) for m in grid):
            raise ValueError("every mu must lie in (0, 1)")
        if any(b >= a for a, b in zip(grid, grid[1:])):
            raise ValueError("mu grid must be strictly decreasing")
        object.__setattr__(self, "mu_grid", grid)
        if int(self.n_paths) < 2:
            raise ValueError("need at least two paths")
        if self.p_moment < 2:
            raise ValueError("moment order must be >= 2")
        if int(self.workers) < 1 or int(self.chunk_size) < 1:
            raise ValueError("workers and chunk_size must be positive")
        object.__setattr__(self, "n_paths", int(self.n_paths))

    def describe(self):
        return {
            "mu_grid": list(self.mu_grid),
            "n_paths": self.n_paths,
            "p_moment": self.p_moment,
            "chunk_size": self.chunk_size,
            "separation_se": self.separation_se,
            "final_fraction": self.final_fraction,
            "base": self.base.describe(),
        }


@dataclass
class MuLevel:
    mu: float
    estimate: float
    std_error: float
    j_terms: list  # path means of sup_t |J_k(t)|_H
    n_paths: int
    n_aborted: int
    domination_excess: float  # max over paths and t of |u - u^mu| - sum_k |J_k|
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ConvergenceReport:
    per_mu: list
    trend: float
    passed: bool
    config: dict = field(default_factory=dict)

    def as_dict(self):
        return {"per_mu": [m.as_dict() for m in self.per_mu], "trend": self.trend,
                "passed": self.passed, "config": self.config}


def _trend(mus, est):
    mus = np.asarray(mus, float)
    est = np.asarray(est, float)
    keep = np.isfinite(est) & (est > 0)
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(mus[keep]), np.log(est[keep]), 1)[0])


def _decreasing(est, se, separation):
    ok = True
    for i in range(len(est) - 1):
        gap = separation * max(se[i], se[i + 1])
        ok &= bool(est[i] - est[i + 1] >= gap and est[i + 1] < est[i])
    return ok


# --------------------------------------------------------- J decomposition


def _split_forcing(config: SimConfig, t, u, xi):
    """Drift and noise parts of the frozen forcing at one step."""
    cfg = config
    kicks = cfg.covariance.eigenvalues * math.sqrt(cfg.dt) * xi
    noise = noise_modes(cfg.domain, cfg.coefficients, t, u, kicks)
    if cfg.coefficients.drift_free:
        drift = np.zeros_like(noise)
    else:
        drift = cfg.dt * drift_modes(cfg.domain, cfg.coefficients, t, u)
    return drift, noise


def j_terms_batch(config: SimConfig, heat_u, wave_u, xi):
    """Time series of |J_k|_H and of |u - u^mu|_H for a batch.

    ``heat_u`` and ``wave_u`` are (n+1, P, K) full trajectories driven by
    ``xi`` (n, P, K); ``config.mu`` is the mass. Returns ``(J, diff)`` with
    shapes (n+1, P, 5) and (n+1, P).
    """
    mu = config.mu
    alpha = config.domain.eigenvalues
    dt = config.dt
    n = config.n_steps
    heat = np.exp(-alpha * dt)
    a, b, da, db = propagator(mu, alpha, dt)
    ku, kv = b / mu, db / mu
    P = heat_u.shape[1]
    K = config.domain.truncation

    def wave_step(z, f):
        u, v = z
        return (a * u + b * v + ku * f, da * u + db * v + kv * f)

    # state: heat conv parts and wave conv parts
    init_h = np.broadcast_to(config.initial_u, (P, K)).copy()
    init_w = (init_h.copy(), np.broadcast_to(config.initial_v, (P, K)).copy())
    h_drift = np.zeros((P, K))
    w_drift = (np.zeros((P, K)), np.zeros((P, K)))
    w_drift_gap = (np.zeros((P, K)), np.zeros((P, K)))
    h_noise = np.zeros((P, K))
    w_noise = (np.zeros((P, K)), np.zeros((P, K)))
    w_noise_gap = (np.zeros((P, K)), np.zeros((P, K)))

    J = np.zeros((n + 1, P, N_TERMS))
    J[0, :, 0] = np.sqrt(np.sum((init_h - init_w[0]) ** 2, axis=-1))
    diff = np.zeros((n + 1, P))
    diff[0] = np.sqrt(np.sum((heat_u[0] - wave_u[0]) ** 2, axis=-1))
    for m in range(n):
        t = m * dt
        fb_h, fn_h = _split_forcing(config, t, heat_u[m], xi[m])
        fb_w, fn_w = _split_forcing(config, t, wave_u[m], xi[m])
        init_h = heat * init_h
        init_w = wave_step(init_w, 0.0)
        h_drift = heat * (h_drift + fb_h)
        w_drift = wave_step(w_drift, fb_h)
        w_drift_gap = wave_step(w_drift_gap, fb_h - fb_w)
        h_noise = heat * (h_noise + fn_h)
        w_noise = wave_step(w_noise, fn_h)
        w_noise_gap = wave_step(w_noise_gap, fn_h - fn_w)
        terms = (init_h - init_w[0], h_drift - w_drift[0], w_drift_gap[0],
                 h_noise - w_noise[0], w_noise_gap[0])
        for k, term in enumerate(terms):
            J[m + 1, :, k] = np.sqrt(np.sum(term * term, axis=-1))
        d = heat_u[m + 1] - wave_u[m + 1]
        diff[m + 1] = np.sqrt(np.sum(d * d, axis=-1))
    return J, diff


@dataclass
class JDecomposition:
    sup_terms: list  # sup_t |J_k(t)|_H, k = 1..5
    sup_difference: float  # sup_t |u(t) - u^mu(t)|_H
    domination_excess: float  # max_t (|u - u^mu| - sum_k |J_k|), <= 0 up to rounding

    @property
    def dominated(self) -> bool:
        return self.domination_excess <= 1e-10 * max(1.0, self.sup_difference)

    def as_dict(self):
        d = dict(self.__dict__)
        d["dominated"] = self.dominated
        return d


def j_decomposition(config: SimConfig, mu, path_id=0) -> JDecomposition:
    """Sup-norms of the five difference terms on one coupled path."""
    cfg = config.replace(mu=mu)
    xi = batch_gaussians(cfg, [path_id])
    heat = run_paths(cfg, "heat", [path_id], gaussians=xi)
    wave = run_paths(cfg, "wave", [path_id], gaussians=xi)
    J, diff = j_terms_batch(cfg, heat.u, wave.u, xi)
    excess = float(np.max(diff[:, 0] - J[:, 0].sum(axis=-1)))
    return JDecomposition([float(x) for x in J[:, 0].max(axis=0)], float(diff[:, 0].max()), excess)


# ---------------------------------------------------------------- sweep


def _chunk_job(args):
    """Per-path functionals for one chunk of path ids.

    Returns a dict of arrays indexed (mu level, path): ``sup_p``, ``J``
    (with a trailing axis of 5), ``excess`` and ``aborted``.
    """
    config, path_ids = args
    base = config.base
    L = len(config.mu_grid)
    P = len(path_ids)
    out = {
        "sup_p": np.full((L, P), np.nan),
        "J": np.full((L, P, N_TERMS), np.nan),
        "excess": np.full((L, P), np.nan),
        "aborted": np.zeros((L, P), bool),
    }
    try:
        xi = batch_gaussians(base, path_ids)
        heat = run_paths(base, "heat", path_ids, gaussians=xi)
    except PathAborted:
        if P == 1:
            out["aborted"][:] = True
            return out
        return _split_job(config, path_ids)
    for i, mu in enumerate(config.mu_grid):
        cfg = base.replace(mu=mu)
        try:
            wave = run_paths(cfg, "wave", path_ids, gaussians=xi)
        except PathAborted:
            if P == 1:
                out["aborted"][i] = True
                continue
            sub = _split_job(config, path_ids)
            for key in out:
                out[key][i] = sub[key][i]
            continue
        J, diff = j_terms_batch(cfg, heat.u, wave.u, xi)
        out["sup_p"][i] = diff.max(axis=0) ** config.p_moment
        out["J"][i] = J.max(axis=0)
        out["excess"][i] = np.max(diff - J.sum(axis=-1), axis=0)
    return out


def _split_job(config, path_ids):
    parts = [_chunk_job((config, [p])) for p in path_ids]
    return {key: np.concatenate([p[key] for p in parts], axis=1) for key in parts[0]}


def _chunks(n_paths, size):
    return [list(range(s, min(s + size, n_paths))) for s in range(0, n_paths, size)]


def _collect(config: ExperimentConfig):
    jobs = [(config, ids) for ids in _chunks(config.n_paths, config.chunk_size)]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(_chunk_job, jobs))
    else:
        parts = [_chunk_job(job) for job in jobs]
    return {key: np.concatenate([p[key] for p in parts], axis=1) for key in parts[0]}


def run_sk_sweep(config: ExperimentConfig) -> ConvergenceReport:
    """E sup_t |u^mu - u|_H^p for each mu on coupled paths, with J-term diagnostics."""
    data = _collect(config)
    levels = []
    for i, mu in enumerate(config.mu_grid):
        aborted = data["aborted"][i]
        ok = ~aborted
        n_ok = int(ok.sum())
        vals = data["sup_p"][i][ok]
        est = float(np.mean(vals)) if n_ok else math.nan
        se = float(np.std(vals, ddof=1) / math.sqrt(n_ok)) if n_ok > 1 else math.nan
        jm = [float(x) for x in np.mean(data["J"][i][ok], axis=0)] if n_ok else [math.nan] * N_TERMS
        excess = float(np.max(data["excess"][i][ok])) if n_ok else math.nan
        level_ok = bool(int(aborted.sum()) <= config.max_abort_fraction * config.n_paths and n_ok > 1)
        levels.append(MuLevel(float(mu), est, se, jm, n_ok, int(aborted.sum()), excess, level_ok))
    est = [m.estimate for m in levels]
    se = [m.std_error for m in levels]
    trend = _trend(config.mu_grid, est)
    passed = all(m.passed for m in levels) and all(np.isfinite(est))
    if len(levels) > 1 and passed:
        passed = _decreasing(est, se, config.separation_se) and est[-1] < config.final_fraction * est[0]
    return ConvergenceReport(levels, trend, bool(passed), config.describe())


# ------------------------------------------------ deterministic convolution gap


def _kernel_gap_primitive(mu, alpha, lag):
    """int_0^lag (e^{-alpha s} - f(s; 0, 1/mu)) ds, exactly.

    For the mode equation, int_0^L f(s; 0, 1/mu) ds = (1 - a(L)) / alpha where
    a(L) = f(L; 1, 0), so the primitive is (a(L) - e^{-alpha L}) / alpha.
    """
    a, _, _, _ = propagator(mu, alpha, lag)
    return (a - np.exp(-alpha * lag)) / alpha


def lebesgue_convolution_gap(domain: SpectralDomain, mu, phi_coeffs, times, return_series=False):
    """sup_m |int_0^{t_m} (S(t_m - s) - Pi_1 S_mu(t_m - s) I_mu) phi(s) ds|_H.

    ``phi_coeffs`` (n+1, K) holds the mode coefficients of phi, taken constant
    on each step [t_i, t_{i+1}); the integrals are exact for that path.
    """
    times = np.asarray(times, float)
    phi = np.asarray(phi_coeffs, float)
    alpha = domain.eigenvalues
    n = len(times) - 1
    series = np.zeros(n + 1)
    for m in range(1, n + 1):
        lag_hi = times[m] - times[:m]
        lag_lo = times[m] - times[1 : m + 1]
        w = _kernel_gap_primitive(mu, alpha, lag_hi[:, None]) - _kernel_gap_primitive(mu, alpha, lag_lo[:, None])
        gap = np.sum(w * phi[:m], axis=0)
        series[m] = math.sqrt(float(np.sum(gap * gap)))
    return series if return_series else float(series.max())


def lebesgue_split_bound(domain: SpectralDomain, mu, phi_coeffs, times, n_low, n_quad=20001):
    """Split estimate for the convolution gap at cut-off ``n_low``.

    (int_0^T max_{k <= N} |e^{-alpha_k s} - f_k(s; 0, 1/mu)| ds) sup_t |phi|_H
    + 5 int_0^T |(I - P_N) phi(s)|_H ds.
    """
    times = np.asarray(times, float)
    phi = np.asarray(phi_coeffs, float)
    T = times[-1]
    alpha = domain.eigenvalues[:n_low]
    s = np.unique(np.concatenate([np.linspace(0, T, n_quad), np.geomspace(min(mu, T) * 1e-4, T, 2001)]))
    _, b, _, _ = propagator(mu, alpha[None, :], s[:, None])
    gap = np.abs(np.exp(-alpha[None, :] * s[:, None]) - b / mu).max(axis=1) if n_low > 0 else np.zeros_like(s)
    low = trapezoid(gap, s) * float(np.sqrt(np.sum(phi * phi, axis=-1)).max())
    tail = np.sqrt(np.sum(phi[:-1, n_low:] ** 2, axis=-1))
    high = 5.0 * float(np.sum(tail * np.diff(times)))
    return low + high


# -------------------------------------------------------- Gamma gap


@dataclass
class GammaGapReport:
    mu_grid: list
    estimate: list  # E sup_t |Pi_1 Gamma^mu - Gamma|_H^2
    std_error: list
    final_variance: list  # MC E |Pi_1 Gamma^mu(T) - Gamma(T)|^2
    final_variance_se: list
    isometry: list  # Ito isometry value of the same quantity
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def frozen_phi(config: SimConfig) -> PhiPath:
    """Phi(s) = G(s, u(s)) along the noise-free heat solution from the initial data."""
    cfg = config
    times = cfg.times
    if cfg.coefficients.additive:
        return PhiPath.additive(cfg.domain, times, cfg.coefficients.g.value)
    quiet = cfg.replace(covariance=type(cfg.covariance)(np.zeros(cfg.domain.truncation),
                                                        cfg.covariance.q_exponent,
                                                        cfg.covariance.decay_law,
                                                        cfg.covariance.dimension))
    u = run_paths(quiet, "heat", [0]).u[:, 0]
    return PhiPath.from_states(cfg.domain, cfg.coefficients, times, u)


def gamma_gap_check(config: ExperimentConfig, mu_grid=None, phi: PhiPath | None = None,
                    isometry=True) -> GammaGapReport:
    """Coupled Monte Carlo of sup_t |Pi_1 Gamma^mu(t) - Gamma(t)|^2 over a mu grid.

    ``isometry`` is the continuous-time value of E|Pi_1 Gamma^mu(T) - Gamma(T)|^2.
    The simulated ``final_variance`` approaches it only once dt << mu; for
    coarser steps the scheme cannot see the initial layer of width ~mu.
    """
    base = config.base
    mus = list(config.mu_grid if mu_grid is None else mu_grid)
    phi = frozen_phi(base) if phi is None else phi
    dom, cov = base.domain, base.covariance
    n = config.n_paths
    est, se, fv, fse, iso = [], [], [], [], []
    chunks = _chunks(n, config.chunk_size)
    for mu in mus:
        sups, finals = [], []
        for ids in chunks:
            g = heat_convolution_paths(dom, cov, phi, base.seed, ids)
            gu, _ = wave_convolution_paths(dom, cov, mu, phi, base.seed, ids)
            d2 = np.sum((gu - g) ** 2, axis=-1)
            sups.append(d2.max(axis=0))
            finals.append(d2[-1])
        sups = np.concatenate(sups)
        finals = np.concatenate(finals)
        est.append(float(np.mean(sups)))
        se.append(float(np.std(sups, ddof=1) / math.sqrt(n)))
        fv.append(float(np.mean(finals)))
        fse.append(float(np.std(finals, ddof=1) / math.sqrt(n)))
        iso.append(quadratic_variation_gap(dom, cov, mu, 0.0, phi.times[-1], phi) if isometry else math.nan)
    passed = all(b <= a + max(sa, sb) for a, b, sa, sb in zip(est, est[1:], se, se[1:]))
    return GammaGapReport(mus, est, se, fv, fse, iso, bool(passed))


def phi_from_trajectory(config: SimConfig, u_path) -> PhiPath:
    """PhiPath for G along a stored single-path coefficient trajectory."""
    return PhiPath.from_states(config.domain, config.coefficients, config.times, u_path)


__all__ = [
    "ConvergenceReport", "ExperimentConfig", "GammaGapReport", "JDecomposition", "MuLevel",
    "frozen_phi", "gamma_gap_check", "j_decomposition", "j_terms_batch", "lebesgue_convolution_gap",
    "lebesgue_split_bound", "phi_from_trajectory", "run_sk_sweep",
]
