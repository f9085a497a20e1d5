"""Scaled modified spherical Bessel functions and spherical harmonics.

Conventions:
    i_p, k_p      modified spherical Bessel functions with k_0(x) = (pi/2x) e^{-x}
    scaled forms  i_p(lambda r) / lambda0^p  and  k_p(lambda r) * lambda0^p
    Y_p^q         C_Y(p, q) P_p^{|q|}(cos theta) e^{i q phi},
                  C_Y(p, q) = sqrt((2p+1)/(4 pi) (p-|q|)!/(p+|q|)!)
    P_p^m         associated Legendre function with the (-1)^m Condon-Shortley phase

Every function accepts scalar or array radii/points and returns the same shape.
"""
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import DomainError, RangeError, SingularityError

# largest argument for which sinh(x) is finite
_EXP_RANGE = 709.78
_SERIES_CUTOFF = 2.0
_SERIES_TERMS = 30
_RESCALE_AT = 1e250


class HarmonicIndex(BaseModel):
    """Degree and order of a spherical harmonic."""

    model_config = ConfigDict(frozen=True)

    p: int = Field(ge=0)
    q: int

    @model_validator(mode="after")
    def check_order(self):
        if abs(self.q) > self.p:
            raise ValueError(f"order q={self.q} exceeds degree p={self.p}")
        return self

    @property
    def q_abs(self) -> int:
        return abs(self.q)

    @property
    def sign(self) -> int:
        return -1 if self.q < 0 else 1


class ScaleParams(BaseModel):
    """Kernel decay rate and the scaling base of the Bessel functions."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    lambda_: float = Field(ge=0.0, alias="lambda")
    lambda0: float = Field(gt=0.0)

    @classmethod
    def for_lambda(cls, lambda_: float, lambda0: Optional[float] = None) -> "ScaleParams":
        """Default lambda0 is lambda itself, or 1 for the Laplace kernel."""
        if lambda0 is None:
            lambda0 = lambda_ if lambda_ > 0 else 1.0
        return cls(lambda_=lambda_, lambda0=lambda0)


def _as_array(value):
    arr = np.asarray(value, dtype=np.float64)
    return arr, arr.ndim == 0


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


def modified_i_upto(p_max: int, x) -> np.ndarray:
    """Unscaled i_0..i_{p_max} at x >= 0; shape (p_max + 1, *x.shape)."""
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    x = x.reshape(-1)
    if np.any(x < 0):
        raise DomainError("modified spherical Bessel argument must be non-negative")
    if np.any(x > _EXP_RANGE):
        raise RangeError(f"argument {float(np.max(x))!r} beyond the exponent range")
    out = np.zeros((p_max + 1, x.size))

    small = x < _SERIES_CUTOFF
    if np.any(small):
        xs = x[small]
        half_sq = 0.5 * xs * xs
        power = np.ones_like(xs)
        for p in range(p_max + 1):
            term = np.ones_like(xs)
            total = np.ones_like(xs)
            for j in range(_SERIES_TERMS):
                term = term * half_sq / ((j + 1) * (2 * p + 2 * j + 3))
                total = total + term
            out[p, small] = power * total / _double_factorial(2 * p + 1)
            power = power * xs

    large = ~small
    if np.any(large):
        xl = x[large]
        start = p_max + int(np.max(xl)) + 60
        f_next = np.zeros_like(xl)
        f_cur = np.full_like(xl, 1e-300)
        stored = np.zeros((p_max + 1,) + xl.shape)
        if start <= p_max:
            stored[start] = f_cur
        for n in range(start, 0, -1):
            f_prev = f_next + (2 * n + 1) / xl * f_cur
            f_next, f_cur = f_cur, f_prev
            big = np.abs(f_cur) > _RESCALE_AT
            if np.any(big):
                factor = np.where(big, 1.0 / _RESCALE_AT, 1.0)
                f_cur = f_cur * factor
                f_next = f_next * factor
                stored = stored * factor
            if n - 1 <= p_max:
                stored[n - 1] = f_cur
        i0 = np.sinh(xl) / xl
        scale = i0 / stored[0]
        for p in range(p_max + 1):
            out[p, large] = stored[p] * scale
    return out.reshape((p_max + 1,) + shape)


def modified_k_upto(p_max: int, x, lambda0: float = 1.0) -> np.ndarray:
    """Scaled k_p(x) * lambda0^p for p = 0..p_max by upward recurrence."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise SingularityError("k_p is singular at the origin")
    out = np.zeros((p_max + 1,) + x.shape)
    k0 = 0.5 * math.pi / x * np.exp(-x)
    out[0] = k0
    if p_max >= 1:
        out[1] = lambda0 * k0 * (1.0 + 1.0 / x)
    for n in range(1, p_max):
        out[n + 1] = lambda0 * lambda0 * out[n - 1] + (2 * n + 1) * lambda0 / x * out[n]
    return out


def scaled_i(p: int, r, scale: ScaleParams):
    """i_p(lambda r) / lambda0^p."""
    if p < 0:
        raise DomainError(f"degree must be non-negative, got {p}")
    r_arr, scalar = _as_array(r)
    if np.any(r_arr < 0):
        raise DomainError("radius must be non-negative")
    values = modified_i_upto(p, scale.lambda_ * r_arr)[p] / scale.lambda0 ** p
    return float(values) if scalar else values


def scaled_i_upto(p_max: int, r, scale: ScaleParams) -> np.ndarray:
    r_arr = np.asarray(r, dtype=np.float64)
    values = modified_i_upto(p_max, scale.lambda_ * r_arr)
    powers = scale.lambda0 ** -np.arange(p_max + 1, dtype=np.float64)
    return values * powers.reshape((-1,) + (1,) * r_arr.ndim)


def scaled_k(p: int, r, scale: ScaleParams):
    """k_p(lambda r) * lambda0^p."""
    if p < 0:
        raise DomainError(f"degree must be non-negative, got {p}")
    r_arr, scalar = _as_array(r)
    values = modified_k_upto(p, scale.lambda_ * r_arr, scale.lambda0)[p]
    return float(values) if scalar else values


def scaled_k_upto(p_max: int, r, scale: ScaleParams) -> np.ndarray:
    return modified_k_upto(p_max, scale.lambda_ * np.asarray(r, dtype=np.float64), scale.lambda0)


def assoc_legendre(p: int, q_abs: int, z):
    """P_p^{q_abs}(z) including the (-1)^m Condon-Shortley phase."""
    if not 0 <= q_abs <= p:
        raise DomainError(f"need 0 <= q_abs <= p, got p={p}, q_abs={q_abs}")
    z_arr, scalar = _as_array(z)
    if np.any(np.abs(z_arr) > 1.0):
        raise DomainError("associated Legendre argument outside [-1, 1]")
    m = q_abs
    sin_theta = np.sqrt((1.0 - z_arr) * (1.0 + z_arr))
    pmm = np.full_like(z_arr, (-1.0) ** m * _double_factorial(2 * m - 1)) * sin_theta ** m
    if p == m:
        return float(pmm) if scalar else pmm
    pm1 = z_arr * (2 * m + 1) * pmm
    for n in range(m + 2, p + 1):
        pmm, pm1 = pm1, (z_arr * (2 * n - 1) * pm1 - (n + m - 1) * pmm) / (n - m)
    return float(pm1) if scalar else pm1


def harmonic_norm(p: int, q: int) -> float:
    a = abs(q)
    return math.sqrt((2 * p + 1) / (4.0 * math.pi) * math.factorial(p - a) / math.factorial(p + a))


def spherical_harmonic(idx: HarmonicIndex, theta, phi):
    """Y_p^q(theta, phi) with |q| in the Legendre factor."""
    theta_arr, scalar = _as_array(theta)
    if np.any(theta_arr < 0) or np.any(theta_arr > math.pi):
        raise DomainError("polar angle outside [0, pi]")
    z = np.clip(np.cos(theta_arr), -1.0, 1.0)
    legendre = assoc_legendre(idx.p, idx.q_abs, z)
    value = harmonic_norm(idx.p, idx.q) * legendre * np.exp(1j * idx.q * np.asarray(phi, dtype=np.float64))
    return complex(value) if scalar else value


def to_spherical(point):
    """Radius, polar angle and azimuth of Cartesian points (..., 3)."""
    pts = np.asarray(point, dtype=np.float64)
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]
    r = np.sqrt(x * x + y * y + z * z)
    safe = np.where(r > 0, r, 1.0)
    cos_theta = np.where(r > 0, np.clip(z / safe, -1.0, 1.0), 1.0)
    theta = np.arccos(cos_theta)
    phi = np.arctan2(y, x)
    return r, theta, phi


def eval_Q(idx: HarmonicIndex, scale: ScaleParams, point):
    """Regular expansion function i_p(lambda |y|)/lambda0^p Y_p^q(y/|y|)."""
    pts = np.asarray(point, dtype=np.float64)
    r, theta, phi = to_spherical(pts)
    radial = scaled_i(idx.p, r, scale)
    value = radial * spherical_harmonic(idx, theta, phi)
    return complex(value) if pts.ndim == 1 else value


def solid_harmonic(idx: HarmonicIndex, point):
    """Regular solid harmonic |y|^p Y_p^q(y/|y|)."""
    pts = np.asarray(point, dtype=np.float64)
    r, theta, phi = to_spherical(pts)
    value = r ** idx.p * spherical_harmonic(idx, theta, phi)
    return complex(value) if pts.ndim == 1 else value


def harmonics_upto(p_max: int, theta, phi) -> np.ndarray:
    """All Y_p^q for p <= p_max in triangular layout p*p + p + q."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    out = np.zeros(((p_max + 1) ** 2,) + theta.shape, dtype=np.complex128)
    z = np.clip(np.cos(theta), -1.0, 1.0)
    for p in range(p_max + 1):
        for q in range(0, p + 1):
            value = harmonic_norm(p, q) * assoc_legendre(p, q, z) * np.exp(1j * q * phi)
            out[p * p + p + q] = value
            if q:
                out[p * p + p - q] = np.conj(value)
    return out
