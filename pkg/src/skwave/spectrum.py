"""Dirichlet Laplacian eigenbasis on a generalized rectangle.

The basis is the product sine family

    e_k(x) = prod_i sqrt(2/L_i) sin(k_i pi x_i / L_i),   alpha_k = sum_i (k_i pi / L_i)^2,

sorted by eigenvalue with lexicographic tie-breaking on the multi-index.
Fields live on a tensor grid of cell midpoints, and the transforms between
mode coefficients and grid values are dense matrix products.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class SpectralDomain:
    """Truncated eigenbasis of -Laplacian with Dirichlet conditions.

    Instances are immutable and safe to share between workers; the synthesis
    matrix is built once at construction.
    """

    dimension: int
    side_lengths: tuple[float, ...]
    truncation: int
    modes: np.ndarray  # (K, d) integer multi-indices
    eigenvalues: np.ndarray  # (K,) nondecreasing
    grid_points_per_axis: int
    basis: np.ndarray = field(repr=False)  # (K, M**d) values of e_k on the grid

    @property
    def domain_id(self) -> str:
        key = f"{self.dimension}|{self.side_lengths}|{self.truncation}|{self.grid_points_per_axis}"
        return hashlib.sha1(key.encode()).hexdigest()[:12]

    @property
    def n_grid(self) -> int:
        return self.grid_points_per_axis ** self.dimension

    @property
    def cell_volume(self) -> float:
        return float(np.prod([L / self.grid_points_per_axis for L in self.side_lengths]))

    @property
    def volume(self) -> float:
        return float(np.prod(self.side_lengths))

    @property
    def sup_norm_bound(self) -> float:
        """sup_k |e_k|_{L^inf}; identical for every mode of the sine basis."""
        return float(np.prod([math.sqrt(2.0 / L) for L in self.side_lengths]))

    def axes(self) -> list[np.ndarray]:
        M = self.grid_points_per_axis
        return [(np.arange(M) + 0.5) * L / M for L in self.side_lengths]

    def grid(self) -> np.ndarray:
        """Collocation points as an array of shape (M**d, d), C order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


@dataclass(frozen=True, eq=False)
class GridField:
    values: np.ndarray
    domain_id: str

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid field has non-finite entries")


def _sorted_modes(side_lengths, truncation):
    d = len(side_lengths)
    scale = np.array([math.pi / L for L in side_lengths])
    n = max(1, math.ceil(truncation ** (1.0 / d)))
    while True:
        axes = [np.arange(1, n + 1)] * d
        idx = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=-1)
        alpha = ((idx * scale) ** 2).sum(axis=1)
        if len(alpha) >= truncation:
            kth = np.sort(alpha)[truncation - 1]
            # anything outside the box has alpha >= smallest axis eigenvalue at n+1
            if kth < ((n + 1) * scale.min()) ** 2 or len(alpha) == 0:
                break
        n *= 2
    order = sorted(
        range(len(alpha)),
        key=lambda i: (float(f"{alpha[i]:.12e}"), tuple(int(v) for v in idx[i])),
    )[:truncation]
    return idx[order].astype(np.int64), alpha[order]


def build_domain(dimension, side_lengths, truncation, grid_res=None) -> SpectralDomain:
    """Construct the truncated sine basis and its collocation grid.

    ``grid_res`` defaults to the 2/3-rule size ``ceil(3 * kmax / 2) + 1``, where
    ``kmax`` is the largest retained per-axis mode index; this keeps quadratic
    aliasing of pointwise nonlinearities off the retained modes.
    """
    if dimension < 1:
        raise ValueError("dimension must be >= 1")
    side_lengths = tuple(float(L) for L in np.atleast_1d(side_lengths))
    if len(side_lengths) == 1 and dimension > 1:
        side_lengths = side_lengths * dimension
    if len(side_lengths) != dimension:
        raise ValueError("need one side length per dimension")
    if any(not (L > 0) for L in side_lengths):
        raise ValueError("side lengths must be positive")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")

    modes, alpha = _sorted_modes(side_lengths, int(truncation))
    kmax = int(modes.max())
    if grid_res is None:
        grid_res = math.ceil(1.5 * kmax) + 1
    grid_res = int(grid_res)
    if grid_res <= kmax:
        raise ValueError(
            f"grid_res={grid_res} must exceed the largest mode index {kmax}"
        )

    M = grid_res
    tables = []
    for i, L in enumerate(side_lengths):
        x = (np.arange(M) + 0.5) * L / M
        k = modes[:, i][:, None]
        tables.append(math.sqrt(2.0 / L) * np.sin(k * math.pi * x[None, :] / L))
    basis = tables[0]
    for tab in tables[1:]:
        basis = (basis[:, :, None] * tab[:, None, :]).reshape(len(modes), -1)

    return SpectralDomain(
        dimension=int(dimension),
        side_lengths=side_lengths,
        truncation=int(truncation),
        modes=modes,
        eigenvalues=alpha,
        grid_points_per_axis=M,
        basis=np.ascontiguousarray(basis),
    )


def synthesize(domain: SpectralDomain, coeffs) -> GridField:
    """Evaluate sum_k c_k e_k on the grid. Accepts a batch of shape (..., K)."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-1] != domain.truncation:
        raise ValueError(f"expected {domain.truncation} coefficients, got {c.shape[-1]}")
    return GridField(c @ domain.basis, domain.domain_id)


def analyze(domain: SpectralDomain, field) -> np.ndarray:
    """Midpoint-rule projections <f, e_k> for k = 1..K."""
    if isinstance(field, GridField):
        if field.domain_id != domain.domain_id:
            raise ValueError("field was produced on a different domain")
        values = field.values
    else:
        values = np.asarray(field, dtype=float)
    if values.shape[-1] != domain.n_grid:
        raise ValueError(f"expected {domain.n_grid} grid values, got {values.shape[-1]}")
    return (values @ domain.basis.T) * domain.cell_volume


def weyl_slope(domain: SpectralDomain) -> float:
    """Least-squares slope of log alpha_k against log k (Weyl predicts 2/d)."""
    k = np.arange(1, domain.truncation + 1)
    slope, _ = np.polyfit(np.log(k), np.log(domain.eigenvalues), 1)
    return float(slope)


def weyl_constants(domain: SpectralDomain) -> tuple[float, float]:
    """Tightest (c, C) with c k^{2/d} <= alpha_k <= C k^{2/d} on retained modes."""
    k = np.arange(1, domain.truncation + 1)
    ratio = domain.eigenvalues / k ** (2.0 / domain.dimension)
    return float(ratio.min()), float(ratio.max())
