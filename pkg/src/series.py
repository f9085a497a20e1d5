"""Quadrature-free evaluation of the level-0 conversion entries.

For a box scaled to [-1, 1]^3 the entry is

    E(p, q, k; lambda_n) = C_E * sum_m t_m I_m(p, q, k)

    C_E = C_Y(p, q) / (sqrt(8) (2p+1)!!) * (lambda_n / (2 lambda0))^p
    t_0 = 1,  t_{m+1} = t_m * (lambda_n^2 / 8) / ((m+1)(2m+2p+3))
    I_m = integral of |x|^{2m} conj(R_p^q(x)) phi^k(x) over the cube,

where R_p^q = |x|^p P_p^{|q|}(cos theta) e^{i q phi}.  Expanding R_p^q in
Cartesian monomials turns I_m into a finite sum of products of three moment
table lookups:

    I_m = (s i)^{|q| + kx mod 2} * sum_alpha B[m, alpha] Ihat[kz, p-|q|+2m-2alpha] J[alpha]
    J[alpha] = sum_{mu = kx mod 2} (-1)^{floor(mu/2)} C(|q|, mu)
               sum_beta C(alpha, beta) Ihat[ky, |q|-mu+2beta] Ihat[kx, mu+2alpha-2beta]
    B[m, alpha] = sum_nu b_nu C(m+nu, alpha)
    b_nu = (-1)^nu (2p-2nu-1)!! / (2^nu nu! (p-|q|-2nu)!)

J depends on (|q|, kx, ky) only and is cached per |q|; B is exact rational.
Only one of the real/imaginary axes is ever populated: the entry is
imaginary exactly when ky is odd.
"""
import math
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import settings
from .errors import SeriesConvergenceError, TableSizeError
from .logger import series_logger
from .moments import MomentTable
from .xprec import (PI, WideReal, mul_float, require_finite, wide_add, wide_div, wide_mul, wide_pow,
                    wide_sqrt, wide_sum, wide_where)

# I_m at or below this fraction of its summed summand magnitudes has cancelled to zero
NEGLIGIBLE_RATIO = 1e-24
# consecutive negligible terms that mark an identically zero entry
ZERO_RUN = 3


class WaveletIndex(NamedTuple):
    """Polynomial degree per axis of a tensor-product basis function."""

    kx: int
    ky: int
    kz: int

    @property
    def total(self) -> int:
        return self.kx + self.ky + self.kz

    def swapped(self) -> "WaveletIndex":
        return WaveletIndex(self.ky, self.kx, self.kz)


class Axis(str, Enum):
    REAL = "R"
    IMAG = "I"

    @classmethod
    def for_index(cls, k: WaveletIndex) -> "Axis":
        return cls.IMAG if k.ky % 2 else cls.REAL


class AxisValue(NamedTuple):
    """A value lying on one axis of the complex plane.

    The complex number is `value` for REAL and `1j * value` for IMAG.
    """

    axis: Axis
    value: float

    @property
    def complex(self) -> complex:
        return complex(self.value) if self.axis is Axis.REAL else 1j * self.value

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0


class SeriesParams(BaseModel):
    """Parameters of one series evaluation."""

    model_config = ConfigDict(frozen=True)

    lambda_n: float = Field(ge=0.0)
    lambda0: float = Field(gt=0.0)
    eps_a: float = Field(default_factory=lambda: settings.eps_a)
    eps_r: float = Field(default_factory=lambda: settings.eps_r)
    eps_sparsity: float = Field(default_factory=lambda: settings.eps_sparsity)
    m_max: int = Field(default_factory=lambda: settings.m_max, ge=1)

    @model_validator(mode="before")
    @classmethod
    def default_lambda0(cls, data):
        """lambda0 follows lambda_n unless given; 1 for the Laplace limit."""
        if isinstance(data, dict) and data.get("lambda0") is None:
            lambda_n = float(data.get("lambda_n") or 0.0)
            data = {**data, "lambda0": lambda_n if lambda_n > 0 else 1.0}
        return data

    @field_validator("eps_a", "eps_r", "eps_sparsity")
    @classmethod
    def validate_tolerance(cls, v):
        if not 0.0 < v < 1.0:
            raise ValueError(f"Tolerance must lie in (0, 1), got: {v}")
        return v


def oddity_zero(p: int, q: int, k: WaveletIndex) -> bool:
    """Parity predicate for entries that vanish for every lambda."""
    a = abs(q)
    kx, ky, kz = k
    if (kz + p + a) % 2:
        return True
    if (kx + ky + a) % 2:
        return True
    return q == 0 and (kx % 2 == 1 or ky % 2 == 1)


def min_term(p: int, k: WaveletIndex) -> int:
    """First m with a possibly nonzero I_m."""
    excess = k[0] + k[1] + k[2] - p
    return max(0, (excess + 1) // 2)


def swap_zero(q: int, k: WaveletIndex) -> bool:
    """Diagonal (kx == ky) entries forced to zero by E(ky, kx) = (-i)^q conj E(kx, ky)."""
    kx, ky, _ = k
    if kx != ky:
        return False
    a = abs(q)
    return (a % 4 == 2 and ky % 2 == 0) or (a % 4 == 0 and ky % 2 == 1)


def axis_sign(q: int, kx: int) -> Tuple[Axis, int]:
    """Axis and sign of the unit (s i)^{|q| + kx mod 2}."""
    e = abs(q) + kx % 2
    s = -1 if q < 0 else 1
    sign = (s ** e) * (-1) ** (e // 2)
    return (Axis.IMAG if e % 2 else Axis.REAL), sign


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@lru_cache(maxsize=None)
def b_coefficients(p: int, a: int) -> Tuple[Fraction, ...]:
    """Cartesian coefficients of the Legendre derivative, nu = 0..(p-a)//2."""
    out = []
    for nu in range((p - a) // 2 + 1):
        num = _double_factorial(2 * p - 2 * nu - 1)
        den = 2 ** nu * math.factorial(nu) * math.factorial(p - a - 2 * nu)
        out.append(Fraction((-1) ** nu * num, den))
    return tuple(out)


@lru_cache(maxsize=4096)
def _b_matrix_row(p: int, a: int, m: int) -> WideReal:
    b = b_coefficients(p, a)
    top = m + len(b) - 1
    row = []
    for alpha in range(top + 1):
        total = Fraction(0)
        for nu, b_nu in enumerate(b):
            if alpha <= m + nu:
                total += b_nu * math.comb(m + nu, alpha)
        row.append(total)
    return WideReal.from_fractions(row)


def prefactor(p: int, q: int, lambda_n: float, lambda0: float) -> WideReal:
    """C_E = C_Y / (sqrt(8) (2p+1)!!) * (lambda_n / (2 lambda0))^p."""
    a = abs(q)
    ratio = WideReal.from_fraction(Fraction((2 * p + 1) * math.factorial(p - a), 4 * math.factorial(p + a)))
    c_y = wide_sqrt(wide_div(ratio, PI))
    base = wide_div(c_y, wide_mul(wide_sqrt(WideReal(8.0)), WideReal.from_int(_double_factorial(2 * p + 1))))
    if p == 0:
        return base
    scale = wide_div(WideReal(lambda_n), mul_float(WideReal(lambda0), 2.0))
    return wide_mul(base, wide_pow(scale, p))


def laplace_prefactor(p: int, q: int) -> WideReal:
    """C_Y / (sqrt(8) (2p+1)!! 2^p)."""
    a = abs(q)
    ratio = WideReal.from_fraction(Fraction((2 * p + 1) * math.factorial(p - a), 4 * math.factorial(p + a)))
    c_y = wide_sqrt(wide_div(ratio, PI))
    den = wide_mul(wide_sqrt(WideReal(8.0)), WideReal.from_int(_double_factorial(2 * p + 1) * 2 ** p))
    return wide_div(c_y, den)


class SeriesBlock(NamedTuple):
    """Converged sums for a grid of (kx, ky) pairs times kz values."""

    values: WideReal          # signed axis values, shape (pairs, kz)
    terms: np.ndarray         # terms_used per entry
    axes: np.ndarray          # True where the entry is imaginary, shape (pairs,)
    estimated_zero: Optional[np.ndarray] = None   # moment-condition sparsity estimate


class SeriesEngine:
    """Evaluates I_m and the series over one immutable moment table.

    Caches J[alpha] per (|q|, pair list) so that all degrees p sharing an
    order reuse the same inner sums.
    """

    def __init__(self, table: MomentTable):
        self.table = table
        self._j_cache: Dict[Tuple[int, Tuple[Tuple[int, int], ...]], List[WideReal]] = {}

    # inner sums --------------------------------------------------------

    def _j_alpha(self, a: int, kxs: np.ndarray, kys: np.ndarray, alpha: int,
                 mu_parity: Optional[int] = None) -> WideReal:
        beta = np.arange(alpha + 1)
        binom = WideReal.from_fractions(math.comb(alpha, b) for b in beta)
        total = WideReal.zeros(kxs.shape)
        for mu in range(a + 1):
            if mu_parity is not None and mu % 2 != mu_parity:
                continue
            weight = float((-1) ** (mu // 2) * math.comb(a, mu))
            ys = self.table.gather(kys[:, None], (a - mu + 2 * beta)[None, :])
            xs = self.table.gather(kxs[:, None], (mu + 2 * alpha - 2 * beta)[None, :])
            prod = wide_mul(wide_mul(ys, xs), binom[None, :])
            total = wide_add(total, mul_float(wide_sum(prod, axis=1), weight))
        return total

    def inner_sums(self, a: int, pairs: Sequence[Tuple[int, int]], alpha_max: int) -> WideReal:
        """J[alpha, pair] for alpha = 0..alpha_max."""
        key = (a, tuple(pairs))
        cached = self._j_cache.setdefault(key, [])
        if len(cached) <= alpha_max:
            kxs = np.array([kx for kx, _ in pairs], dtype=np.int64)
            kys = np.array([ky for _, ky in pairs], dtype=np.int64)
            for alpha in range(len(cached), alpha_max + 1):
                cached.append(self._j_alpha(a, kxs, kys, alpha))
        rows = cached[:alpha_max + 1]
        return WideReal(np.stack([r.hi for r in rows]), np.stack([r.lo for r in rows]))

    def moment_sum(self, p: int, a: int, pairs: Sequence[Tuple[int, int]], kzs: Sequence[int],
                   m: int) -> WideReal:
        """Unsigned I_m over pairs x kzs (the unit (s i)^e is left out)."""
        return wide_sum(self._moment_products(p, a, pairs, kzs, m), axis=0)

    def _moment_products(self, p: int, a: int, pairs: Sequence[Tuple[int, int]], kzs: Sequence[int],
                         m: int) -> WideReal:
        """Summands B[m, alpha] J[alpha] Ihat[kz, .] of I_m, alpha along axis 0."""
        needed = 2 * m + p
        if needed > self.table.l_max:
            raise TableSizeError(f"moment table has {self.table.l_max} columns, term m={m} at p={p} needs {needed}")
        b_row = _b_matrix_row(p, a, m)
        alpha_max = len(b_row) - 1
        j = self.inner_sums(a, pairs, alpha_max)
        alpha = np.arange(alpha_max + 1)
        z = self.table.gather(np.asarray(kzs, dtype=np.int64)[None, :], (p - a + 2 * m - 2 * alpha)[:, None])
        return wide_mul(wide_mul(b_row[:, None, None], j[:, :, None]), z[:, None, :])

    # series ------------------------------------------------------------

    def sum_series(self, p: int, q: int, pairs: Sequence[Tuple[int, int]], kzs: Sequence[int],
                   params: SeriesParams) -> SeriesBlock:
        """Sum the series for every (pair, kz) until each entry converges.

        Summation starts where both the total degree and the z-degree
        p - |q| + 2m of the integrand reach the wavelet degrees.  A term that
        cancels to zero never ends the sum; ZERO_RUN of them in a row mean
        the entry vanishes.

        The same terms also feed the moment-condition sparsity estimate: it
        starts at min_term, stops at the first term below eps_sparsity (exact
        zeros included) and counts the entry as zero when that partial sum is
        below eps_sparsity as well.
        """
        a = abs(q)
        n_pairs, n_kz = len(pairs), len(kzs)
        shape = (n_pairs, n_kz)
        signs = np.empty(n_pairs)
        axes = np.empty(n_pairs, dtype=bool)
        for i, (kx, _) in enumerate(pairs):
            axis, sign = axis_sign(q, kx)
            signs[i] = sign
            axes[i] = axis is Axis.IMAG
        kz_arr = np.asarray(kzs, dtype=np.int64)
        totals_k = np.add.outer(np.array([kx + ky for kx, ky in pairs], dtype=np.int64), kz_arr).reshape(shape)
        estimate_start = np.maximum(0, (totals_k - p + 1) // 2)
        start = np.maximum(estimate_start, np.maximum(0, (kz_arr - p + a + 1) // 2)[None, :])
        swapped = np.array([swap_zero(q, (kx, ky, 0)) for kx, ky in pairs], dtype=bool)
        vanishing = np.broadcast_to(swapped[:, None], shape)

        c_e = require_finite(prefactor(p, q, params.lambda_n, params.lambda0), "series prefactor")
        lam_sq_8 = mul_float(wide_mul(WideReal(params.lambda_n), WideReal(params.lambda_n)), 0.125)
        t = WideReal(1.0)
        total = WideReal.zeros(shape)
        done = vanishing.copy()
        terms = np.zeros(shape, dtype=np.int64)
        run = np.zeros(shape, dtype=np.int64)
        estimate = WideReal.zeros(shape)
        estimate_done = vanishing | (estimate_start < start)

        for m in range(params.m_max + 1):
            active = (~done) & (start <= m)
            estimating = (~estimate_done) & (start <= m)
            if active.any() or estimating.any():
                prod = self._moment_products(p, a, pairs, kzs, m)
                moment = wide_sum(prod, axis=0)
                negligible = np.abs(moment.hi) <= NEGLIGIBLE_RATIO * np.sum(np.abs(prod.hi), axis=0)
                term = require_finite(wide_mul(moment, wide_mul(c_e, t)), f"series term m={m}")
                size = np.abs(term.hi)

                total = wide_where(active, wide_add(total, term), total)
                run = np.where(active, np.where(negligible, run + 1, 0), run)
                stop = active & ~negligible & ((size < params.eps_a) | (size < params.eps_r * np.abs(total.hi)))
                vanished = active & (run >= ZERO_RUN)
                total = wide_where(vanished, WideReal.zeros(shape), total)
                terms[stop | vanished] = m
                done |= stop | vanished

                estimate = wide_where(estimating, wide_add(estimate, term), estimate)
                estimate_done |= estimating & ((size < params.eps_sparsity) |
                                               (size < params.eps_r * np.abs(estimate.hi)))
                if done.all() and estimate_done.all():
                    break
            t = wide_div(wide_mul(t, lam_sq_8), WideReal.from_int((m + 1) * (2 * m + 2 * p + 3)))
        if not done.all():
            idx = np.argwhere(~done)[0]
            kx, ky = pairs[idx[0]]
            key = (p, q, kx, ky, kzs[idx[1]])
            partial = float(total.hi[idx[0], idx[1]] * signs[idx[0]])
            series_logger.error(f"Series for {key} did not converge within {params.m_max} terms "
                                f"(lambda_n={params.lambda_n}, partial sum {partial!r})")
            raise SeriesConvergenceError(
                f"series for (p,q,k)={key} not converged after {params.m_max} terms",
                key=key, partial_sum=partial, terms=params.m_max)

        signed = WideReal(total.hi * signs[:, None], total.lo * signs[:, None])
        return SeriesBlock(values=signed, terms=terms, axes=axes,
                           estimated_zero=np.abs(estimate.hi) < params.eps_sparsity)

    def laplace_block(self, p: int, q: int, pairs: Sequence[Tuple[int, int]], kzs: Sequence[int]) -> SeriesBlock:
        """The first series term under the solid-harmonic normalization."""
        a = abs(q)
        signs = np.array([axis_sign(q, kx)[1] for kx, _ in pairs], dtype=np.float64)
        axes = np.array([axis_sign(q, kx)[0] is Axis.IMAG for kx, _ in pairs], dtype=bool)
        i0 = self.moment_sum(p, a, pairs, kzs, 0)
        value = wide_mul(i0, laplace_prefactor(p, q))
        signed = WideReal(value.hi * signs[:, None], value.lo * signs[:, None])
        return SeriesBlock(values=signed, terms=np.zeros(signed.shape, dtype=np.int64), axes=axes)


@lru_cache(maxsize=8)
def engine_for(table: MomentTable) -> SeriesEngine:
    return SeriesEngine(table)


def _zero(k: WaveletIndex) -> AxisValue:
    return AxisValue(Axis.for_index(k), 0.0)


def eval_Im_parts(p: int, q: int, k: WaveletIndex, m: int, table: MomentTable) -> Tuple[float, float]:
    """Unsigned contributions of even and odd mu to I_m, computed separately."""
    k = WaveletIndex(*k)
    a = abs(q)
    if 2 * m + p > table.l_max:
        raise TableSizeError(f"moment table has {table.l_max} columns, term m={m} needs {2 * m + p}")
    engine = engine_for(table)
    kxs = np.array([k.kx])
    kys = np.array([k.ky])
    b_row = _b_matrix_row(p, a, m)
    alpha = np.arange(len(b_row))
    z = table.gather(np.full(len(b_row), k.kz), p - a + 2 * m - 2 * alpha)
    parts = []
    for parity in (0, 1):
        j = [engine._j_alpha(a, kxs, kys, int(al), mu_parity=parity)[0] for al in alpha]
        j = WideReal(np.array([x.hi for x in j]), np.array([x.lo for x in j]))
        parts.append(float(wide_sum(wide_mul(wide_mul(b_row, j), z)).hi))
    return parts[0], parts[1]


def eval_Im(p: int, q: int, k: WaveletIndex, m: int, table: MomentTable) -> AxisValue:
    """I_m(p, q, k) as a signed axis value."""
    k = WaveletIndex(*k)
    if m < 0:
        raise ValueError(f"term index must be non-negative, got {m}")
    if oddity_zero(p, q, k):
        return _zero(k)
    value = engine_for(table).moment_sum(p, abs(q), [(k.kx, k.ky)], [k.kz], m)
    axis, sign = axis_sign(q, k.kx)
    return AxisValue(axis, sign * float(value.hi[0, 0]))


def eval_E0(p: int, q: int, k: WaveletIndex, params: SeriesParams,
            table: MomentTable) -> Tuple[AxisValue, int]:
    """Level-0 conversion entry and the number of the last series term used."""
    k = WaveletIndex(*k)
    if abs(q) > p:
        raise ValueError(f"order q={q} exceeds degree p={p}")
    if oddity_zero(p, q, k) or swap_zero(q, k):
        return _zero(k), 0
    if params.lambda_n == 0.0:
        return eval_E0_laplace(p, q, k, table), 0
    block = engine_for(table).sum_series(p, q, [(k.kx, k.ky)], [k.kz], params)
    axis = Axis.IMAG if block.axes[0] else Axis.REAL
    return AxisValue(axis, float(block.values.hi[0, 0])), int(block.terms[0, 0])


def eval_E0_laplace(p: int, q: int, k: WaveletIndex, table: MomentTable) -> AxisValue:
    """Level-0 entry for the Laplace kernel (solid-harmonic expansion functions)."""
    k = WaveletIndex(*k)
    if abs(q) > p:
        raise ValueError(f"order q={q} exceeds degree p={p}")
    if oddity_zero(p, q, k) or p < k.total:
        return _zero(k)
    block = engine_for(table).laplace_block(p, q, [(k.kx, k.ky)], [k.kz])
    axis = Axis.IMAG if block.axes[0] else Axis.REAL
    return AxisValue(axis, float(block.values.hi[0, 0]))


def growth_bound(p: int, k: WaveletIndex, m: int) -> float:
    """Upper bound on |I_m| for q = 0 from |P_p| <= 1 and |x| <= sqrt(3)."""
    phi_max = math.prod(math.sqrt((2 * ki + 1) / 2.0) for ki in k)
    return 12.0 * math.pi * math.sqrt(3.0) ** p * 3.0 ** m / (2 * m + p + 3) * phi_max
