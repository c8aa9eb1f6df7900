"""Diagonal noise covariance Q and counter-based Gaussian increments.

Draws are addressed by ``(seed, path_id, step, mode)``: the Philox key is
``(seed, path_id)`` and raw word ``step * stride + mode`` is turned into a
standard normal through the inverse CDF. Any single step can therefore be
regenerated without touching the others, which is what lets the heat and wave
solvers share one Brownian path and lets paths run on any worker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .spectrum import SpectralDomain


@dataclass(frozen=True, eq=False)
class CovarianceQ:
    eigenvalues: np.ndarray
    q_exponent: float
    decay_law: dict = field(default_factory=dict)
    dimension: int = 1

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, float)
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ValueError("covariance eigenvalues must be finite and nonnegative")
        object.__setattr__(self, "eigenvalues", lam)

    @property
    def q_norm(self) -> float:
        """||Q||_q over the retained modes (sup norm when q is infinite)."""
        if math.isinf(self.q_exponent):
            return float(self.eigenvalues.max())
        return float(np.sum(self.eigenvalues**self.q_exponent) ** (1.0 / self.q_exponent))

    def partial_q_sums(self) -> np.ndarray:
        if math.isinf(self.q_exponent):
            return np.maximum.accumulate(self.eigenvalues)
        return np.cumsum(self.eigenvalues**self.q_exponent)

    @property
    def q_tail_bound(self) -> float:
        """Upper bound on sum_{j>K} lambda_j^q from the decay law."""
        law = self.decay_law
        if math.isinf(self.q_exponent):
            return 0.0
        if law.get("kind") == "power":
            K = len(self.eigenvalues)
            sq = law["s"] * self.q_exponent
            return float(law.get("scale", 1.0) ** self.q_exponent * K ** (1.0 - sq) / (sq - 1.0))
        if law.get("kind") == "explicit":
            return 0.0
        return math.inf

    def describe(self):
        return {
            "decay_law": dict(self.decay_law),
            "q_exponent": self.q_exponent,
            "q_norm": self.q_norm,
            "q_tail_bound": self.q_tail_bound,
        }


def admissible_q_window(dimension: int) -> tuple[float, float]:
    """Open interval of q allowed for the summability condition in dimension d."""
    if dimension <= 2:
        return 2.0, math.inf
    return 2.0, 2.0 * dimension / (dimension - 2.0)


def alpha_sum(domain: SpectralDomain, q) -> np.ndarray:
    """Partial sums of alpha_k^{-q/(q-2)}, which converge when q < 2d/(d-2)."""
    if math.isinf(q):
        expo = 1.0
    else:
        expo = q / (q - 2.0)
    return np.cumsum(domain.eigenvalues ** (-expo))


def build_covariance(domain: SpectralDomain, law) -> CovarianceQ:
    """Instantiate lambda_j on the retained modes from a decay law.

    Laws: ``{"kind": "constant", "value": c}``, ``{"kind": "power", "s": s,
    "scale": c}`` giving ``c j^{-s}``, or ``{"kind": "explicit", "values": [...]}``.
    An optional ``"q"`` picks the summability exponent; otherwise the smallest
    convenient admissible value is chosen. In d = 1 a bounded sequence suffices
    and q defaults to infinity.
    """
    law = dict(law)
    kind = law.get("kind", "constant")
    d = domain.dimension
    K = domain.truncation
    j = np.arange(1, K + 1, dtype=float)
    if kind == "constant":
        value = float(law.get("value", 1.0))
        lam = np.full(K, value)
        s = 0.0 if value != 0 else math.inf
    elif kind == "power":
        s = float(law["s"])
        lam = float(law.get("scale", 1.0)) * j ** (-s)
    elif kind == "explicit":
        lam = np.asarray(law["values"], float)
        if len(lam) != K:
            raise ValueError(f"explicit law needs {K} eigenvalues")
        s = math.inf
    else:
        raise ValueError(f"unknown decay law {kind!r}")
    if np.any(lam < 0):
        raise ValueError("decay law produced negative eigenvalues")

    lo, hi = admissible_q_window(d)
    q = law.get("q")
    if q is not None:
        q = float(q)
    if d == 1:
        if q is None:
            q = math.inf
        elif not q > 2.0:
            raise ValueError("q must exceed 2")
        elif not math.isinf(q) and s * q <= 1.0:
            raise ValueError(f"sum lambda_j^{q} diverges for decay exponent s={s}")
    else:
        if q is None:
            if s <= 0:
                raise ValueError(
                    f"no admissible q in ({lo}, {hi}) makes sum lambda_j^q finite in d={d}"
                )
            target = max(lo, 1.0 / s)
            if math.isinf(s):
                q = lo + 1.0 if math.isinf(hi) else 0.5 * (lo + hi)
            elif target >= hi:
                raise ValueError(
                    f"no admissible q in ({lo}, {hi}) makes sum lambda_j^q finite in d={d}"
                )
            else:
                q = min(target + 1.0, 0.5 * (target + hi)) if not math.isinf(hi) else target + 1.0
        if not (lo < q < hi):
            raise ValueError(f"q={q} outside the admissible window ({lo}, {hi}) for d={d}")
        if s * q <= 1.0:
            raise ValueError(f"sum lambda_j^{q} diverges for decay exponent s={s}")
    law["q"] = q
    return CovarianceQ(lam, q, law, d)


# ------------------------------------------------------------------ sampling


def _stride(n_modes: int) -> int:
    return 4 * ((n_modes + 3) // 4)


def _key(seed: int, path_id: int) -> np.ndarray:
    if seed < 0 or path_id < 0:
        raise ValueError("seed and path_id must be nonnegative")
    return np.array([seed, path_id], dtype=np.uint64)


def _to_normal(raw: np.ndarray) -> np.ndarray:
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def step_gaussians(seed: int, path_id: int, step: int, n_modes: int) -> np.ndarray:
    """Standard normals xi_j for one (seed, path, step); independent of any other call."""
    stride = _stride(n_modes)
    counter = np.array([step * stride // 4, 0, 0, 0], dtype=np.uint64)
    bg = np.random.Philox(key=_key(seed, path_id), counter=counter)
    return _to_normal(bg.random_raw(stride)[:n_modes])


def path_gaussians(seed: int, path_id: int, n_steps: int, n_modes: int, start: int = 0) -> np.ndarray:
    """Array (n_steps, n_modes) equal row by row to ``step_gaussians`` for steps start.."""
    stride = _stride(n_modes)
    counter = np.array([start * stride // 4, 0, 0, 0], dtype=np.uint64)
    bg = np.random.Philox(key=_key(seed, path_id), counter=counter)
    raw = bg.random_raw(n_steps * stride).reshape(n_steps, stride)[:, :n_modes]
    return _to_normal(raw)


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    gaussians: np.ndarray
    dt: float
    seed_path: tuple[int, int, int]  # (seed, path_id, step)
    scale: np.ndarray = field(repr=False, default=None)  # lambda_j

    @property
    def kicks(self) -> np.ndarray:
        """Mode increments of Q dw over the step: lambda_j sqrt(dt) xi_j."""
        return self.scale * math.sqrt(self.dt) * self.gaussians


def sample_increments(covariance: CovarianceQ, dt, n_steps, stream_seed, path_id=0):
    if not dt > 0:
        raise ValueError("dt must be positive")
    K = len(covariance.eigenvalues)
    xi = path_gaussians(stream_seed, path_id, n_steps, K)
    return [
        NoiseIncrement(xi[n], float(dt), (stream_seed, path_id, n), covariance.eigenvalues)
        for n in range(n_steps)
    ]
