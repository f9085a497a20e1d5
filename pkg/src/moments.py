"""Moments of monomials against normalized Legendre polynomials.

    I[k, l] = integral over [-1, 1] of  zeta^l phi_k(zeta) d zeta,
    phi_k = sqrt((2k+1)/2) P_k.

The table is filled column by column from the three-term recurrence
zeta phi_k = c_up[k] phi_{k+1} + c_down[k] phi_{k-1}, so no quadrature is
involved and every entry is a sum of positive terms.
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import TextIO

import numpy as np

from .errors import TableSizeError
from .logger import moments_logger
from .xprec import WideReal, wide_add, wide_mul, wide_sqrt


@dataclass(frozen=True, eq=False)
class MomentTable:
    """Dense (k_max + 1) x (l_max + 1) table of wide moments."""

    k_max: int
    l_max: int
    hi: np.ndarray
    lo: np.ndarray

    def wide(self) -> WideReal:
        return WideReal(self.hi, self.lo)

    def gather(self, k, l) -> WideReal:
        """Vectorized lookup; k and l broadcast against each other."""
        k = np.asarray(k)
        l = np.asarray(l)
        if k.size and (k.min() < 0 or k.max() > self.k_max):
            raise TableSizeError(f"moment row out of range 0..{self.k_max}")
        if l.size and (l.min() < 0 or l.max() > self.l_max):
            raise TableSizeError(f"moment column {int(l.max())} beyond table size {self.l_max}")
        return WideReal(self.hi[k, l], self.lo[k, l])


def recurrence_coefficients(rows: int) -> tuple:
    """Wide (c_up, c_down) for k = 0..rows-1.

    c_up[k]   = (k+1)/(2k+1) sqrt((2k+1)/(2k+3))
    c_down[k] = k/(2k+1) sqrt((2k+1)/(2k-1)),  c_down[0] = 0
    """
    ks = range(rows)
    up_rat = WideReal.from_fractions(Fraction(k + 1, 2 * k + 1) for k in ks)
    up_root = wide_sqrt(WideReal.from_fractions(Fraction(2 * k + 1, 2 * k + 3) for k in ks))
    down_rat = WideReal.from_fractions(Fraction(k, 2 * k + 1) for k in ks)
    down_root = wide_sqrt(WideReal.from_fractions(
        Fraction(2 * k + 1, 2 * k - 1) if k else Fraction(0) for k in ks))
    return wide_mul(up_rat, up_root), wide_mul(down_rat, down_root)


def _initial_rows(l_max: int) -> tuple:
    """Closed forms for rows 0 and 1."""
    a0 = wide_sqrt(WideReal.from_fraction(Fraction(1, 2)))
    a1 = wide_sqrt(WideReal.from_fraction(Fraction(3, 2)))
    row0 = WideReal.from_fractions(
        Fraction(2, l + 1) if l % 2 == 0 else Fraction(0) for l in range(l_max + 1))
    row1 = WideReal.from_fractions(
        Fraction(2, l + 2) if l % 2 == 1 else Fraction(0) for l in range(l_max + 1))
    return wide_mul(row0, a0), wide_mul(row1, a1)


def build_moment_table(k_max: int, l_max: int) -> MomentTable:
    if k_max < 1:
        raise ValueError(f"k_max must be at least 1, got {k_max}")
    if l_max < k_max:
        raise ValueError(f"l_max ({l_max}) must be at least k_max ({k_max})")

    # rows above this stay zero for every column we need
    rows = max(k_max, (l_max + k_max) // 2 + 1) + 2
    c_up, c_down = recurrence_coefficients(rows)
    c_up = c_up[:-1]
    c_down = c_down[1:]

    hi = np.zeros((rows, l_max + 1))
    lo = np.zeros((rows, l_max + 1))
    root2 = wide_sqrt(WideReal(2.0))
    hi[0, 0], lo[0, 0] = root2.hi, root2.lo

    k_index = np.arange(rows)
    for l in range(l_max):
        col = WideReal(hi[:, l], lo[:, l])
        nxt_hi = np.zeros(rows)
        nxt_lo = np.zeros(rows)
        # row k gets c_up[k] * col[k+1] + c_down[k] * col[k-1]
        up = wide_mul(c_up, col[1:])
        nxt_hi[:-1], nxt_lo[:-1] = up.hi, up.lo
        down = wide_mul(c_down, col[:-1])
        total = wide_add(WideReal(nxt_hi[1:], nxt_lo[1:]), down)
        nxt_hi[1:], nxt_lo[1:] = total.hi, total.lo
        structural = ((k_index + l + 1) % 2 == 1) | (k_index > l + 1)
        nxt_hi[structural] = 0.0
        nxt_lo[structural] = 0.0
        hi[:, l + 1] = nxt_hi
        lo[:, l + 1] = nxt_lo

    row0, row1 = _initial_rows(l_max)
    hi[0], lo[0] = row0.hi, row0.lo
    hi[1], lo[1] = row1.hi, row1.lo

    moments_logger.debug(f"Built moment table k_max={k_max} l_max={l_max} ({rows} internal rows)")
    return MomentTable(k_max=k_max, l_max=l_max,
                       hi=np.ascontiguousarray(hi[:k_max + 1]),
                       lo=np.ascontiguousarray(lo[:k_max + 1]))


def moment(table: MomentTable, k: int, l: int) -> WideReal:
    if not (0 <= k <= table.k_max and 0 <= l <= table.l_max):
        raise TableSizeError(f"moment ({k}, {l}) outside table {table.k_max} x {table.l_max}")
    return WideReal(float(table.hi[k, l]), float(table.lo[k, l]))


def required_columns(m_max: int, p_max: int) -> int:
    return 2 * m_max + p_max


def dump_moment_table(table: MomentTable, stream: TextIO) -> int:
    """Write "k l value" rows for the structural nonzeros; returns the row count."""
    count = 0
    for k in range(table.k_max + 1):
        for l in range(k, table.l_max + 1, 2):
            stream.write(f"{k} {l} {float(table.hi[k, l])!r}\n")
            count += 1
    return count
