"""Phase-space states, weighted Sobolev norms and the Nemytskii operators B, G.

Coefficient maps ``b(t, x, u)`` and ``g(t, x, u)`` are called with ``x`` of
shape ``(n_grid, d)`` and ``u`` of shape ``(..., n_grid)`` and must broadcast.
The shipped maps are small classes rather than lambdas so configs stay
picklable for process pools.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .spectrum import GridField, SpectralDomain, analyze, synthesize


@dataclass(frozen=True, eq=False)
class PhasePoint:
    """Mode coefficients of (u, v) in H^0 x H^-1."""

    u_coeffs: np.ndarray
    v_coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "u_coeffs", np.asarray(self.u_coeffs, float))
        object.__setattr__(self, "v_coeffs", np.asarray(self.v_coeffs, float))
        if self.u_coeffs.shape != self.v_coeffs.shape:
            raise ValueError("u and v coefficient shapes differ")
        if not (np.all(np.isfinite(self.u_coeffs)) and np.all(np.isfinite(self.v_coeffs))):
            raise ValueError("phase point has non-finite entries")

    def norm(self, domain: SpectralDomain) -> float:
        return float(pair_norm(domain, self.u_coeffs, self.v_coeffs))


def pair_norm(domain: SpectralDomain, u, v):
    """|(u, v)|_H with |(u,v)|^2 = sum u_k^2 + sum v_k^2 / alpha_k."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    return np.sqrt(np.sum(u * u, axis=-1) + np.sum(v * v / domain.eigenvalues, axis=-1))


def sobolev_norm(domain: SpectralDomain, coeffs, delta) -> float:
    c = np.asarray(coeffs, float)
    return np.sqrt(np.sum(domain.eigenvalues**delta * c * c, axis=-1))


# ------------------------------------------------------------ coefficient maps


class Zero:
    def __call__(self, t, x, u):
        return np.zeros_like(u)

    def __repr__(self):
        return "Zero()"


class Constant:
    def __init__(self, value=1.0):
        self.value = float(value)

    def __call__(self, t, x, u):
        return np.full_like(u, self.value)

    def __repr__(self):
        return f"Constant({self.value})"


class Linear:
    def __init__(self, slope=1.0):
        self.slope = float(slope)

    def __call__(self, t, x, u):
        return self.slope * u

    def __repr__(self):
        return f"Linear({self.slope})"


class Sine:
    def __init__(self, amplitude=1.0):
        self.amplitude = float(amplitude)

    def __call__(self, t, x, u):
        return self.amplitude * np.sin(u)

    def __repr__(self):
        return f"Sine({self.amplitude})"


class ClippedSine:
    """sin(u) with u clipped to [-clip, clip]; Lipschitz constant 1."""

    def __init__(self, clip=1.0):
        self.clip = float(clip)

    def __call__(self, t, x, u):
        return np.sin(np.clip(u, -self.clip, self.clip))

    def __repr__(self):
        return f"ClippedSine({self.clip})"


class BoundedDiffusion:
    """g(u) = c0 / sqrt(1 + u^2) + c1."""

    def __init__(self, c0=0.5, c1=1.0):
        self.c0 = float(c0)
        self.c1 = float(c1)

    def __call__(self, t, x, u):
        return self.c0 / np.sqrt(1.0 + u * u) + self.c1

    def __repr__(self):
        return f"BoundedDiffusion({self.c0}, {self.c1})"

    @property
    def lipschitz(self):
        return abs(self.c0) * 2.0 / (3.0 * np.sqrt(3.0))


NONLINEARITIES: dict[str, type] = {
    "zero": Zero,
    "constant": Constant,
    "linear": Linear,
    "sine": Sine,
    "clipped_sine": ClippedSine,
    "bounded_diffusion": BoundedDiffusion,
}


def make_map(spec) -> Callable:
    """Build a coefficient map from ``{"kind": name, **params}`` or a bare name."""
    if callable(spec):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in NONLINEARITIES:
        raise ValueError(f"unknown nonlinearity {kind!r}")
    return NONLINEARITIES[kind](**spec)


def _map_spec(fn):
    for name, cls in NONLINEARITIES.items():
        if type(fn) is cls:
            return {"kind": name, **{k: v for k, v in vars(fn).items()}}
    return repr(fn)


@dataclass(frozen=True, eq=False)
class Coefficients:
    b: Callable
    g: Callable
    lipschitz_const: float = 1.0
    growth_const: float = 2.0

    @property
    def additive(self) -> bool:
        return isinstance(self.g, Constant)

    @property
    def drift_free(self) -> bool:
        return isinstance(self.b, Zero)

    @property
    def noise_free(self) -> bool:
        return isinstance(self.g, Zero) or (isinstance(self.g, Constant) and self.g.value == 0.0)

    def describe(self):
        return {
            "b": _map_spec(self.b),
            "g": _map_spec(self.g),
            "lipschitz_const": self.lipschitz_const,
            "growth_const": self.growth_const,
        }

    def check(self, domain: SpectralDomain, n_probes=2000, seed=0, t_max=1.0):
        """Sampled Lipschitz and linear-growth checks against the declared constants.

        Returns the largest observed ratios; both must not exceed 1.
        """
        rng = np.random.default_rng(seed)
        x = domain.grid()
        idx = rng.integers(0, len(x), n_probes)
        xs = x[idx][:, None, :]
        # x-dependent maps index x[..., i]; give them a grid-shaped slice per probe
        t = rng.uniform(0, t_max)
        u = rng.normal(scale=5.0, size=(n_probes, 1))
        w = u + rng.normal(scale=rng.choice([1e-3, 1.0, 10.0]), size=(n_probes, 1))
        diff = np.abs(self.b(t, xs, u) - self.b(t, xs, w)) + np.abs(self.g(t, xs, u) - self.g(t, xs, w))
        lip = np.max(diff / (self.lipschitz_const * np.abs(u - w)))
        growth = np.max((np.abs(self.b(t, xs, u)) + np.abs(self.g(t, xs, u)))
                        / (self.growth_const * (1.0 + np.abs(u))))
        return {"lipschitz_ratio": float(lip), "growth_ratio": float(growth),
                "passed": bool(lip <= 1.0 and growth <= 1.0)}


def _values(field):
    return field.values if isinstance(field, GridField) else np.asarray(field, float)


def compose_B(domain: SpectralDomain, coeffs: Coefficients, t, u_field) -> GridField:
    """Pointwise b(t, x, u(x)) on the collocation grid."""
    return GridField(coeffs.b(t, domain.grid(), _values(u_field)), domain.domain_id)


def compose_G_apply(domain: SpectralDomain, coeffs: Coefficients, t, u_field, h_field) -> GridField:
    """Pointwise g(t, x, u(x)) h(x)."""
    g = coeffs.g(t, domain.grid(), _values(u_field))
    return GridField(g * _values(h_field), domain.domain_id)


def operator_norm_Linf_to_H(domain: SpectralDomain, coeffs: Coefficients, t, u_field) -> float:
    """Norm of h -> g(t, x, u) h as a map L^inf -> L^2, i.e. |g(t, ., u)|_{L^2}.

    The supremum over |h|_inf <= 1 is attained at h = 1 (or h = sign g).
    """
    g = coeffs.g(t, domain.grid(), _values(u_field))
    return float(np.sqrt(np.sum(g * g, axis=-1) * domain.cell_volume))


def drift_modes(domain: SpectralDomain, coeffs: Coefficients, t, u_coeffs):
    """<B(t, u), e_k> for a batch of coefficient vectors."""
    if coeffs.drift_free:
        return np.zeros_like(np.asarray(u_coeffs, float))
    u = synthesize(domain, u_coeffs).values
    return analyze(domain, coeffs.b(t, domain.grid(), u))


def noise_modes(domain: SpectralDomain, coeffs: Coefficients, t, u_coeffs, kicks):
    """<G(t, u) sum_j kick_j e_j, e_k>; ``kicks`` already carry lambda_j sqrt(dt) xi_j."""
    if coeffs.additive:
        return coeffs.g.value * np.asarray(kicks, float)
    if coeffs.noise_free:
        return np.zeros_like(np.asarray(kicks, float))
    u = synthesize(domain, u_coeffs).values
    h = synthesize(domain, kicks).values
    return analyze(domain, coeffs.g(t, domain.grid(), u) * h)


def multiplication_matrix(domain: SpectralDomain, coeffs: Coefficients, t, u_coeffs):
    """Mode matrix <G(t, u) e_j, e_k> (k rows, j columns) for one state."""
    u = synthesize(domain, u_coeffs).values
    g = coeffs.g(t, domain.grid(), u)
    E = domain.basis
    return (E * g) @ E.T * domain.cell_volume
