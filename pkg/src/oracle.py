"""Independent ground truth by adaptive tensor-product Gauss-Legendre quadrature.

Nothing here touches the moment table or the series coefficients; integrands
are assembled from specfun primitives and scipy Legendre polynomials only.
"""
import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import eval_legendre

from .config import settings
from .errors import DomainError, SingularityError
from .logger import oracle_logger
from .matrix import MultipoleVector, WaveletBlock
from .specfun import (HarmonicIndex, ScaleParams, eval_Q, harmonics_upto, scaled_i_upto, scaled_k_upto,
                      solid_harmonic, to_spherical)


class QuadratureSpec(BaseModel):
    """Rule order per axis, refinement limits and tolerances."""

    model_config = ConfigDict(frozen=True)

    base_rule_order: int = Field(default_factory=lambda: settings.quad_rule_order)
    max_subdivision_depth: int = Field(default_factory=lambda: settings.quad_max_depth, ge=0)
    abs_tol: float = Field(default_factory=lambda: settings.quad_abs_tol, gt=0.0)
    rel_tol: float = Field(default_factory=lambda: settings.quad_rel_tol, gt=0.0)
    max_cells: int = Field(default_factory=lambda: settings.quad_max_cells, ge=1)

    @field_validator("base_rule_order")
    @classmethod
    def validate_order(cls, v):
        if v < 8:
            raise ValueError(f"base_rule_order must be at least 8, got: {v}")
        return v


class QuadResult(NamedTuple):
    value: complex
    error: float
    l1_norm: float
    converged: bool
    cells: int
    depth: int


_CHILD_OFFSETS = np.array([[i, j, k] for i in (-1, 1) for j in (-1, 1) for k in (-1, 1)], dtype=np.float64)


def _cell_integrals(f, centers: np.ndarray, half: float, nodes: np.ndarray, weights: np.ndarray):
    """Tensor rule on each cell; returns (integrals (C, m), l1 (C, m))."""
    n = len(nodes)
    grid = np.stack(np.meshgrid(nodes, nodes, nodes, indexing="ij"), axis=-1).reshape(-1, 3)
    w = np.einsum("i,j,k->ijk", weights, weights, weights).reshape(-1) * half ** 3
    points = centers[:, None, :] + half * grid[None, :, :]
    values = np.asarray(f(points.reshape(-1, 3)), dtype=np.complex128)
    values = values.reshape(len(centers), n ** 3, -1)
    return np.einsum("cpm,p->cm", values, w), np.einsum("cpm,p->cm", np.abs(values), w)


def integrate_cube(f: Callable[[np.ndarray], np.ndarray], center: Sequence[float], half: float,
                   spec: QuadratureSpec) -> QuadResult:
    """Adaptive integral of f over the cube center +- half.

    f maps points (N, 3) to values (N,) or (N, m).  A cell is accepted when
    its 8 children agree with it to max(abs_tol, rel_tol |estimate|) scaled
    by the cell's volume fraction; otherwise it is split.
    """
    nodes, weights = leggauss(spec.base_rule_order)
    centers = np.asarray(center, dtype=np.float64).reshape(1, 3)
    coarse, _ = _cell_integrals(f, centers, half, nodes, weights)
    accepted = np.zeros(coarse.shape[1], dtype=np.complex128)
    accepted_l1 = np.zeros(coarse.shape[1])
    error = 0.0
    cells = 1
    converged = True
    depth = 0

    while len(centers):
        child_half = half / 2.0
        children = (centers[:, None, :] + child_half * _CHILD_OFFSETS[None, :, :]).reshape(-1, 3)
        fine_cells, fine_l1 = _cell_integrals(f, children, child_half, nodes, weights)
        cells += len(children)
        fine = fine_cells.reshape(len(centers), 8, -1).sum(axis=1)
        cell_l1 = fine_l1.reshape(len(centers), 8, -1).sum(axis=1)
        diff = np.max(np.abs(fine - coarse), axis=1)

        estimate = accepted + fine.sum(axis=0)
        fraction = 8.0 ** -depth
        tol = max(spec.abs_tol, spec.rel_tol * float(np.max(np.abs(estimate)))) * fraction
        ok = diff <= tol
        last = depth >= spec.max_subdivision_depth or cells + 8 * int((~ok).sum()) * 8 > spec.max_cells
        if last:
            ok = np.ones_like(ok)
            if np.any(diff > tol):
                converged = False

        accepted = accepted + fine[ok].sum(axis=0)
        accepted_l1 = accepted_l1 + cell_l1[ok].sum(axis=0)
        error += float(diff[ok].sum())

        refine = ~ok
        coarse = fine_cells.reshape(len(centers), 8, -1)[refine].reshape(-1, fine_cells.shape[1])
        centers = children.reshape(len(centers), 8, 3)[refine].reshape(-1, 3)
        half = child_half
        depth += 1

    value = accepted if accepted.size > 1 else complex(accepted[0])
    l1 = accepted_l1 if accepted_l1.size > 1 else float(accepted_l1[0])
    if not converged:
        oracle_logger.debug(f"quadrature stopped at depth {depth} after {cells} cells, error {error:.3e}")
    return QuadResult(value=value, error=error, l1_norm=l1, converged=converged, cells=cells, depth=depth)


def legendre_basis(k: int, t: np.ndarray) -> np.ndarray:
    """Normalized Legendre polynomial sqrt((2k+1)/2) P_k on [-1, 1]."""
    return math.sqrt((2 * k + 1) / 2.0) * eval_legendre(k, t)


def _basis_values(k_max: int, points: np.ndarray) -> np.ndarray:
    """phi^k at points for every k <= k_max; shape (N, K, K, K)."""
    per_axis = np.stack([legendre_basis(k, points) for k in range(k_max + 1)], axis=-1)  # (N, 3, K)
    return np.einsum("ni,nj,nk->nijk", per_axis[:, 0], per_axis[:, 1], per_axis[:, 2])


def _tensor_basis(k, points: np.ndarray) -> np.ndarray:
    kx, ky, kz = k
    return legendre_basis(kx, points[:, 0]) * legendre_basis(ky, points[:, 1]) * legendre_basis(kz, points[:, 2])


def quad_E(p: int, q: int, k, lambda_n: float, lambda0: float, spec: QuadratureSpec) -> QuadResult:
    """Level-0 entry as (1/sqrt 8) * integral of conj(Q_p^q(lambda_n/2, x)) phi^k(x) over [-1,1]^3."""
    idx = HarmonicIndex(p=p, q=q)
    if lambda_n > 0:
        scale = ScaleParams(lambda_=lambda_n / 2.0, lambda0=lambda0)

        def expansion(points):
            return eval_Q(idx, scale, points)
    else:
        norm = 1.0 / (math.prod(range(2 * p + 1, 0, -2)) * 2.0 ** p)

        def expansion(points):
            return solid_harmonic(idx, points) * norm

    def integrand(points):
        return np.conj(expansion(points)) * _tensor_basis(k, points)

    result = integrate_cube(integrand, (0.0, 0.0, 0.0), 1.0, spec)
    inv = 1.0 / math.sqrt(8.0)
    return result._replace(value=result.value * inv, error=result.error * inv, l1_norm=result.l1_norm * inv)


# integrand evaluation and summation error of the oracle, relative to the integral of |f|
QUAD_ROUNDOFF = 1e-12


class Agreement(NamedTuple):
    rel_error: float      # |s - q| / max(|q|, floor)
    abs_error: float
    l1_rel_error: float   # |s - q| / integral of |f|
    floored: bool         # |q| below the floor, so effectively an absolute comparison


def agreement(value: complex, quad: QuadResult, threshold: float) -> Agreement:
    """Series value against a quadrature value.

    The relative error is taken against |q| floored at the oracle's own
    uncertainty divided by `threshold`: an entry below the floor passes
    exactly when it matches to within that uncertainty.
    """
    uncertainty = quad.error + QUAD_ROUNDOFF * quad.l1_norm
    floor = uncertainty / threshold
    magnitude = abs(quad.value)
    abs_error = abs(value - quad.value)
    return Agreement(rel_error=abs_error / max(magnitude, floor, 1e-300), abs_error=abs_error,
                     l1_rel_error=abs_error / max(quad.l1_norm, 1e-300), floored=magnitude < floor)


def _outside_box(block: WaveletBlock, x: np.ndarray) -> None:
    if np.all(np.abs(x - block.center) <= block.half_side):
        raise DomainError(f"point {x.tolist()} lies in the closed box of level {block.level} {block.translation}")


def direct_potential(block: WaveletBlock, x, lambda_: float, spec: QuadratureSpec) -> QuadResult:
    """Integral of e^{-lambda |x-y|}/|x-y| times the block's function over its box."""
    x = np.asarray(x, dtype=np.float64)
    _outside_box(block, x)
    center, half, k_max = block.center, block.half_side, block.k_max
    coeffs = block.coeffs
    if not np.any(coeffs):
        return QuadResult(0j, 0.0, 0.0, True, 0, 0)

    def integrand(xi):
        y = center + half * xi
        dist = np.linalg.norm(x - y, axis=1)
        kernel = np.exp(-lambda_ * dist) / dist
        density = np.einsum("nijk,ijk->n", _basis_values(k_max, xi), coeffs)
        return kernel * density

    result = integrate_cube(integrand, (0.0, 0.0, 0.0), 1.0, spec)
    factor = 2.0 ** (-1.5 * (block.level + 1))
    return result._replace(value=result.value * factor, error=result.error * factor, l1_norm=result.l1_norm * factor)


def multipole_potential(M: MultipoleVector, center, x, lambda_: float, lambda0: float) -> complex:
    """sum_{p,q} M_p^q k_p(lambda r) lambda0^p Y_p^q(direction of x - center)."""
    if lambda_ <= 0:
        raise DomainError("multipole potential needs lambda > 0")
    d = np.asarray(x, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    r, theta, phi = to_spherical(d)
    if r == 0.0:
        raise SingularityError("multipole expansion evaluated at its center")
    scale = ScaleParams(lambda_=lambda_, lambda0=lambda0)
    radial = scaled_k_upto(M.p_max, float(r), scale)
    harmonics = harmonics_upto(M.p_max, float(theta), float(phi))
    degrees = np.repeat(np.arange(M.p_max + 1), 2 * np.arange(M.p_max + 1) + 1)
    return complex(np.sum(M.coeffs * radial[degrees] * harmonics))


def local_potential(L: MultipoleVector, center, x, lambda_: float, lambda0: float):
    """sum_{p,q} L_p^q Q_p^q(lambda, x - center) at points x (..., 3)."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(center, dtype=np.float64)
    r, theta, phi = to_spherical(d)
    scale = ScaleParams(lambda_=lambda_, lambda0=lambda0)
    radial = scaled_i_upto(L.p_max, r, scale)
    harmonics = harmonics_upto(L.p_max, theta, phi)
    degrees = np.repeat(np.arange(L.p_max + 1), 2 * np.arange(L.p_max + 1) + 1)
    weights = L.coeffs.reshape((-1,) + (1,) * np.ndim(r))
    return np.sum(weights * radial[degrees] * harmonics, axis=0)


def project_local(L: MultipoleVector, level: int, translation, k_max: int, lambda_: float, lambda0: float,
                  spec: QuadratureSpec) -> np.ndarray:
    """Coefficients of the local-expansion field on the basis of box (level, translation)."""
    box = WaveletBlock.zeros(level, translation, k_max)
    center, half = box.center, box.half_side

    def integrand(xi):
        field = local_potential(L, center, center + half * xi, lambda_, lambda0)
        return field[:, None] * _basis_values(k_max, xi).reshape(len(xi), -1)

    result = integrate_cube(integrand, (0.0, 0.0, 0.0), 1.0, spec)
    factor = 2.0 ** (-1.5 * (level + 1))
    return np.asarray(result.value).reshape((k_max + 1,) * 3) * factor


def ring_points(center, radius: float, count: int = 8) -> np.ndarray:
    """Points on a tilted circle of the given radius around center."""
    angles = 2.0 * math.pi * np.arange(count) / count
    raw = np.stack([np.cos(angles), np.sin(angles), 0.5 * np.sin(2.0 * angles) + 0.3], axis=1)
    unit = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    return np.asarray(center, dtype=np.float64) + radius * unit
