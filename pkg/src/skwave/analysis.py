"""Stochastic convolutions, their factorized versions and quadratic variations.

For a frozen noise amplitude Phi (mode matrices <Phi(s) e_j, e_k> held
constant on each step of a time grid), every quadratic variation used in the
moment bounds has the form

    sum_i sum_k W_ik * sum_j lambda_j^2 <Phi(s_i) e_j, e_k>^2,
    W_ik = int over step i of (t - s)^(-2 alpha) kernel_k(t - s)^2 ds,

with a per-mode kernel built from the wave or heat propagators. The weights
are integrated with Gauss-Legendre after the substitution r = lag^(1 - 2 alpha),
which removes the endpoint singularity, on panels graded geometrically in the
lag and refined where the wave modes oscillate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import roots_jacobi

from .fields import Coefficients, multiplication_matrix, operator_norm_Linf_to_H
from .noise import CovarianceQ, path_gaussians
from .semigroup import n_mu, propagator
from .spectrum import SpectralDomain, synthesize


@dataclass(frozen=True)
class AnalysisConfig:
    alpha: float
    p_moment: float = 2.0
    q_exponent: float = math.inf
    dimension: int = 1

    def __post_init__(self):
        if not (0 < self.alpha < 0.5):
            raise ValueError("factorization exponent must lie in (0, 1/2)")
        if not 2 * self.alpha < self.window:
            raise ValueError(
                f"2*alpha={2 * self.alpha} violates 2 alpha < 1 - d(q-2)/(2q) = {self.window}"
            )
        if self.p_moment < 2:
            raise ValueError("moment order must be >= 2")

    @property
    def window(self) -> float:
        q, d = self.q_exponent, self.dimension
        ratio = 1.0 if math.isinf(q) else (q - 2.0) / q
        return 1.0 - d * ratio / 2.0

    @property
    def factorization_ok(self) -> bool:
        """p > 1/alpha, needed for the sup-norm bounds."""
        return self.p_moment > 1.0 / self.alpha


@dataclass(frozen=True, eq=False)
class PhiPath:
    """Mode matrices <Phi(s) e_j, e_k> (rows k, columns j) on a time grid.

    ``matrices[i]`` is used on [times[i], times[i+1]); ``linf_norms[i]`` is
    ||Phi(times[i])||_{L(L^inf, H)}.
    """

    times: np.ndarray
    matrices: np.ndarray
    linf_norms: np.ndarray

    @property
    def sup_norm(self) -> float:
        return float(np.max(self.linf_norms))

    @property
    def n_modes(self) -> int:
        return self.matrices.shape[-1]

    def scaled(self, c) -> "PhiPath":
        return PhiPath(self.times, c * self.matrices, abs(c) * self.linf_norms)

    @classmethod
    def additive(cls, domain: SpectralDomain, times, value=1.0) -> "PhiPath":
        """Phi = multiplication by the constant ``value``."""
        times = np.asarray(times, float)
        K = domain.truncation
        mats = np.broadcast_to(value * np.eye(K), (len(times), K, K))
        norms = np.full(len(times), abs(value) * math.sqrt(domain.volume))
        return cls(times, mats, norms)

    @classmethod
    def from_states(cls, domain: SpectralDomain, coeffs: Coefficients, times, u_states) -> "PhiPath":
        """Phi(s) = G(s, u(s)) along a stored coefficient path."""
        times = np.asarray(times, float)
        mats = np.stack([multiplication_matrix(domain, coeffs, t, u) for t, u in zip(times, u_states)])
        norms = np.array([
            operator_norm_Linf_to_H(domain, coeffs, t, synthesize(domain, u)) for t, u in zip(times, u_states)
        ])
        return cls(times, mats, norms)

    @classmethod
    def zero(cls, domain: SpectralDomain, times) -> "PhiPath":
        times = np.asarray(times, float)
        K = domain.truncation
        return cls(times, np.zeros((len(times), K, K)), np.zeros(len(times)))


# --------------------------------------------------------- lag quadrature

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _panel_edges(t, mu, alpha_modes, base_edges):
    """Sub-panel edges in the lag variable covering [0, t]."""
    amax = float(np.max(alpha_modes))
    scales = [1.0 / amax]
    if mu is not None:
        scales.append(mu)
    h0 = min(scales) / 256.0
    geo = h0 * 2.0 ** np.arange(0, 200)
    geo = geo[geo < t]
    edges = [np.array([0.0, t]), geo, np.asarray(base_edges, float)]
    if mu is not None:
        disc = 1.0 - 4.0 * mu * alpha_modes
        osc = disc < 0
        if osc.any():
            omega = float(np.max(np.sqrt(-disc[osc]))) / (2.0 * mu)
            h = min(mu, 0.25 * math.pi / omega)
            stop = min(t, 60.0 * mu)
            edges.append(np.arange(0.0, stop, h))
        # fast transient of the overdamped modes
        stop = min(t, 60.0 * mu)
        edges.append(np.linspace(0.0, stop, 65))
    e = np.unique(np.concatenate(edges))
    return e[(e >= 0) & (e <= t)]


def lag_weights(t, times, kernel, alpha_exp, mu=None, alpha_modes=None):
    """W[i, k] = int_{s in [times[i], times[i+1]] cap [0,t]} (t-s)^(-2 alpha_exp) kernel(t-s)[k] ds.

    ``kernel(lags)`` must return an array of shape lags.shape + (K,). Rows for
    steps starting at or after ``t`` are zero.
    """
    times = np.asarray(times, float)
    n = len(times) - 1
    lag_edges = np.clip(t - times, 0.0, None)  # decreasing
    edges = _panel_edges(t, mu, np.asarray(alpha_modes, float), lag_edges)
    lo, hi = edges[:-1], edges[1:]
    beta = 1.0 - 2.0 * alpha_exp
    rlo, rhi = lo**beta, hi**beta
    r = 0.5 * (rhi - rlo)[:, None] * _GL_X[None, :] + 0.5 * (rhi + rlo)[:, None]
    lags = r ** (1.0 / beta)
    vals = kernel(lags)  # (P, n_gl, K)
    panel = (0.5 * (rhi - rlo) / beta)[:, None] * np.einsum("g,pgk->pk", _GL_W, vals)
    # step index of each panel: lag midpoint m lies in step i with t - times[i+1] <= m < t - times[i]
    mid = 0.5 * (lo + hi)
    s_mid = t - mid
    idx = np.searchsorted(times, s_mid, side="right") - 1
    idx = np.clip(idx, 0, n - 1)
    W = np.zeros((n, vals.shape[-1]))
    np.add.at(W, idx, panel)
    return W


def _wave_kernel(mu, alpha_modes, which):
    alpha_modes = np.asarray(alpha_modes, float)

    def kernel(lags):
        _, b, _, db = propagator(mu, alpha_modes, lags[..., None])
        if which == "position":
            return (b / mu) ** 2
        if which == "velocity":
            return (db / mu) ** 2
        if which == "velocity_dual":
            return (db / mu) ** 2 / alpha_modes
        if which == "gap":
            return (np.exp(-alpha_modes * lags[..., None]) - b / mu) ** 2
        raise ValueError(which)

    return kernel


def _heat_kernel(alpha_modes):
    alpha_modes = np.asarray(alpha_modes, float)

    def kernel(lags):
        return np.exp(-2.0 * alpha_modes * lags[..., None])

    return kernel


def _phi_energy(covariance: CovarianceQ, phi: PhiPath):
    """sum_j lambda_j^2 <Phi_i e_j, e_k>^2, shape (n_times, K)."""
    lam2 = covariance.eigenvalues**2
    return np.einsum("ikj,j->ik", phi.matrices**2, lam2)


def _check_t(phi: PhiPath, t):
    if t < 0 or t > phi.times[-1] + 1e-12:
        raise ValueError("t must lie in the span of the Phi path")


def quadratic_variation_wave(domain: SpectralDomain, covariance: CovarianceQ, mu, alpha, t,
                             phi: PhiPath, component="position", modes=None) -> float:
    """Quadratic variation of the factorized wave convolution at time ``t``.

    ``component`` selects ``position`` (Pi_1, H norm), ``velocity`` (Pi_2, H
    norm) or ``velocity_dual`` (Pi_2, H^-1 norm); ``modes`` optionally restricts
    the k-sum (e.g. ``slice(0, N_mu)``).
    """
    if not (0 <= alpha < 0.5):
        raise ValueError("factorization exponent must lie in [0, 1/2)")
    _check_t(phi, t)
    if t == 0:
        return 0.0
    energy = _phi_energy(covariance, phi)[:-1]
    W = lag_weights(t, phi.times, _wave_kernel(mu, domain.eigenvalues, component), alpha,
                    mu=mu, alpha_modes=domain.eigenvalues)
    total = W * energy
    if modes is not None:
        total = total[:, modes]
    return float(np.sum(total))


def quadratic_variation_heat(domain: SpectralDomain, covariance: CovarianceQ, alpha, t,
                             phi: PhiPath, modes=None) -> float:
    """E|P Gamma_alpha(t)|^2 for deterministic Phi (Ito isometry)."""
    if not (0 <= alpha < 0.5):
        raise ValueError("factorization exponent must lie in [0, 1/2)")
    _check_t(phi, t)
    if t == 0:
        return 0.0
    energy = _phi_energy(covariance, phi)[:-1]
    W = lag_weights(t, phi.times, _heat_kernel(domain.eigenvalues), alpha,
                    alpha_modes=domain.eigenvalues)
    total = W * energy
    if modes is not None:
        total = total[:, modes]
    return float(np.sum(total))


def quadratic_variation_gap(domain: SpectralDomain, covariance: CovarianceQ, mu, alpha, t,
                            phi: PhiPath) -> float:
    """Quadratic variation of Pi_1 Gamma^mu_alpha(t) - Gamma_alpha(t)."""
    _check_t(phi, t)
    if t == 0:
        return 0.0
    energy = _phi_energy(covariance, phi)[:-1]
    W = lag_weights(t, phi.times, _wave_kernel(mu, domain.eigenvalues, "gap"), alpha,
                    mu=mu, alpha_modes=domain.eigenvalues)
    return float(np.sum(W * energy))


# ------------------------------------------------------------ reports


def _loglog_slope(mus, values):
    mus = np.asarray(mus, float)
    values = np.asarray(values, float)
    keep = values > 0
    if keep.sum() < 2:
        return 0.0
    slope, _ = np.polyfit(np.log(mus[keep]), np.log(values[keep]), 1)
    return float(slope)


@dataclass
class AnalysisReport:
    name: str
    mu_grid: list
    values: dict
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "mu_grid": list(self.mu_grid), "values": self.values,
                "passed": self.passed, "details": self.details}


def check_lemma_6_1(domain, covariance, alpha, t, mu_grid, phi: PhiPath, slope_tol=0.1) -> AnalysisReport:
    """mu-uniformity of Lambda^mu_alpha(t) / sup ||Phi||^2 over a mu grid.

    Passes when the log-log slope of the ratio against mu is within
    ``slope_tol`` of zero.
    """
    sup2 = phi.sup_norm**2
    lam = [quadratic_variation_wave(domain, covariance, mu, alpha, t, phi) for mu in mu_grid]
    ratio = [x / sup2 if sup2 > 0 else 0.0 for x in lam]
    slope = _loglog_slope(mu_grid, ratio) if sup2 > 0 else 0.0
    ok = bool(np.all(np.isfinite(ratio)) and abs(slope) <= slope_tol)
    return AnalysisReport("lemma_6_1", list(mu_grid),
                          {"Lambda": lam, "ratio": ratio},
                          ok, {"slope": slope, "empirical_constant": max(ratio),
                               "sup_phi_sq": sup2, "q_norm": covariance.q_norm})


def check_lemma_6_2(domain, covariance, alpha, t, mu_grid, phi: PhiPath, eps=0.0,
                    slope_tol=0.1) -> AnalysisReport:
    """Velocity-component quadratic variations split at N_mu.

    (a)+(b): mu^2 Lambda_1 is nonincreasing as mu decreases;
    (c): mu^(1-eps) Lambda_2 shows no growth (log-log slope >= -slope_tol).
    """
    lam1, lam2, n_list = [], [], []
    for mu in mu_grid:
        n = n_mu(domain, mu)
        n_list.append(n)
        lam1.append(quadratic_variation_wave(domain, covariance, mu, alpha, t, phi,
                                             component="velocity", modes=slice(0, n)) if n > 0 else 0.0)
        lam2.append(quadratic_variation_wave(domain, covariance, mu, alpha, t, phi,
                                             component="velocity_dual", modes=slice(n, None))
                    if n < domain.truncation else 0.0)
    mus = np.asarray(mu_grid, float)
    low = [float(x) for x in mus**2 * np.asarray(lam1)]
    high = [float(x) for x in mus ** (1.0 - eps) * np.asarray(lam2)]
    trend = all(b <= a * (1 + 1e-9) + 1e-300 for a, b in zip(low, low[1:]))
    slope_high = _loglog_slope(mu_grid, high)
    ok = bool(trend and slope_high >= -slope_tol)
    return AnalysisReport("lemma_6_2", list(mu_grid),
                          {"Lambda_1": lam1, "Lambda_2": lam2, "mu2_Lambda_1": low,
                           "scaled_Lambda_2": high, "N_mu": n_list},
                          ok, {"eps": eps, "slope_scaled_Lambda_2": slope_high})


def gamma_tail_check(domain, covariance, alpha, N_grid, phi: PhiPath, t=None,
                     threshold=None) -> AnalysisReport:
    """E|(I - P_N) Gamma_alpha(t)|^2 for each N, evaluated exactly by Ito isometry."""
    t = phi.times[-1] if t is None else t
    vals = [quadratic_variation_heat(domain, covariance, alpha, t, phi, modes=slice(int(N), None))
            for N in N_grid]
    decreasing = all(b < a or (a == 0 and b == 0) for a, b in zip(vals, vals[1:]))
    ok = decreasing and (threshold is None or vals[-1] <= threshold)
    return AnalysisReport("gamma_tail", list(N_grid), {"tail": vals}, bool(ok), {"t": t})


# ------------------------------------------- simulated convolutions


def heat_convolution_paths(domain, covariance, phi: PhiPath, seed, path_ids):
    """Gamma(t_m) = sum_{i<m} S(t_m - t_i) Phi_i Q dW_i on the Phi time grid.

    Returns (n_times, P, K). Noise is the (seed, path_id) stream.
    """
    times = phi.times
    n = len(times) - 1
    dt = np.diff(times)
    if not np.allclose(dt, dt[0]):
        raise ValueError("simulated convolutions need a uniform grid")
    dt = dt[0]
    K = domain.truncation
    xi = np.stack([path_gaussians(seed, p, n, K) for p in path_ids], axis=1)
    decay = np.exp(-domain.eigenvalues * dt)
    lam = covariance.eigenvalues * math.sqrt(dt)
    out = np.zeros((n + 1, len(path_ids), K))
    g = np.zeros((len(path_ids), K))
    for m in range(n):
        kick = (lam * xi[m]) @ phi.matrices[m].T
        g = decay * (g + kick)
        out[m + 1] = g
    return out


def wave_convolution_paths(domain, covariance, mu, phi: PhiPath, seed, path_ids):
    """Gamma^mu(t_m) = sum_{i<m} S_mu(t_m - t_i) I_mu Phi_i Q dW_i; returns (u, v) arrays."""
    times = phi.times
    n = len(times) - 1
    dt = times[1] - times[0]
    K = domain.truncation
    xi = np.stack([path_gaussians(seed, p, n, K) for p in path_ids], axis=1)
    a, b, da, db = propagator(mu, domain.eigenvalues, dt)
    lam = covariance.eigenvalues * math.sqrt(dt)
    P = len(path_ids)
    us = np.zeros((n + 1, P, K))
    vs = np.zeros((n + 1, P, K))
    u = np.zeros((P, K))
    v = np.zeros((P, K))
    for m in range(n):
        kick = (lam * xi[m]) @ phi.matrices[m].T
        u, v = a * u + b * v + b / mu * kick, da * u + db * v + db / mu * kick
        us[m + 1] = u
        vs[m + 1] = v
    return us, vs


@dataclass
class MomentReport:
    estimate: float
    std_error: float
    constant: float  # estimate / sup ||Phi||^p
    n_paths: int
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def heat_convolution_bound_check(domain, covariance, phi: PhiPath, p=2.0, n_paths=64, seed=0) -> MomentReport:
    """Monte Carlo E sup_t |Gamma(t)|^p and its ratio to sup ||Phi||^p."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    g = heat_convolution_paths(domain, covariance, phi, seed, range(n_paths))
    sup = np.max(np.sqrt(np.sum(g * g, axis=-1)), axis=0) ** p
    est = float(np.mean(sup))
    se = float(np.std(sup, ddof=1) / math.sqrt(n_paths))
    norm = phi.sup_norm**p
    const = est / norm if norm > 0 else 0.0
    return MomentReport(est, se, const, n_paths, bool(np.isfinite(est)))


# -------------------------------------------------------- factorization


def factorized_wave_convolution(domain, covariance, mu, alpha, phi: PhiPath, seed, path_id,
                                n_nodes=24):
    """Rebuild Gamma^mu at the final grid time from Gamma^mu_alpha.

    Gamma^mu(t) = sin(pi alpha)/pi int_0^t (t-s)^(alpha-1) S_mu(t-s) Gamma^mu_alpha(s) ds,
    Gamma^mu_alpha(s) = sum_{t_i < s} (s - t_i)^(-alpha) S_mu(s - t_i) I_mu Phi_i Q dW_i.

    The s-integral is split by kick and each piece uses Gauss-Jacobi nodes for
    the weight (t-s)^(alpha-1) (s-t_i)^(-alpha); the propagators are
    evaluated at the nodes, not combined analytically. Returns (u, v).
    """
    times = phi.times
    n = len(times) - 1
    dt = times[1] - times[0]
    t = times[-1]
    K = domain.truncation
    xi = path_gaussians(seed, path_id, n, K)
    lam = covariance.eigenvalues * math.sqrt(dt)
    alpha_k = domain.eigenvalues
    # Jacobi weight (1-x)^a (1+x)^b on [-1,1]; s = r + (t - r)(1+x)/2
    with np.errstate(divide="ignore", invalid="ignore"):
        x, w = roots_jacobi(n_nodes, alpha - 1.0, -alpha)
    u_out = np.zeros(K)
    v_out = np.zeros(K)
    for i in range(n):
        r = times[i]
        kick = (lam * xi[i]) @ phi.matrices[i].T  # velocity kick before 1/mu
        c_u, c_v = np.zeros(K), kick / mu
        # the two power weights carry total degree -1, which cancels the dx -> ds Jacobian
        s = r + 0.5 * (t - r) * (1.0 + x)
        a1, b1, da1, db1 = propagator(mu, alpha_k[None, :], (s - r)[:, None])
        u1 = a1 * c_u + b1 * c_v
        v1 = da1 * c_u + db1 * c_v
        a2, b2, da2, db2 = propagator(mu, alpha_k[None, :], (t - s)[:, None])
        u2 = a2 * u1 + b2 * v1
        v2 = da2 * u1 + db2 * v1
        u_out += w @ u2
        v_out += w @ v2
    scale = math.sin(math.pi * alpha) / math.pi
    return scale * u_out, scale * v_out
