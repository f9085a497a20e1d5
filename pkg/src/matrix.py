"""Per-level sparse conversion matrices and the transforms built on them."""
import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DomainError, SeriesConvergenceError, TableSizeError
from .logger import matrix_logger
from .moments import MomentTable, required_columns
from .series import Axis, SeriesEngine, SeriesParams, WaveletIndex, oddity_zero
from .xprec import SQRT2, WideReal, mul_float, wide_mul

Key = Tuple[int, int, int, int, int]


class SparseStore:
    """Sorted coordinate list keyed by (p, q, kx, ky, kz)."""

    def __init__(self, keys: Optional[np.ndarray] = None, values: Optional[np.ndarray] = None):
        keys = np.zeros((0, 5), dtype=np.int64) if keys is None else np.asarray(keys, dtype=np.int64).reshape(-1, 5)
        values = np.zeros(0) if values is None else np.asarray(values, dtype=np.float64)
        if len(keys):
            order = np.lexsort(keys.T[::-1])
            keys, values = keys[order], values[order]
        self.keys = keys
        self.values = values
        self._index: Optional[Dict[Key, float]] = None

    def __len__(self) -> int:
        return len(self.values)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseStore):
            return NotImplemented
        return np.array_equal(self.keys, other.keys) and np.array_equal(self.values, other.values)

    def key_set(self) -> set:
        return {tuple(int(v) for v in row) for row in self.keys}

    def get(self, key: Key, default: float = 0.0) -> float:
        if self._index is None:
            self._index = {tuple(int(v) for v in row): float(val) for row, val in zip(self.keys, self.values)}
        return self._index.get(tuple(key), default)

    def __contains__(self, key) -> bool:
        self.get(key)
        return tuple(key) in self._index

    def items(self) -> Iterator[Tuple[Key, float]]:
        for row, val in zip(self.keys, self.values):
            yield tuple(int(v) for v in row), float(val)


@dataclass(eq=True)
class ConversionMatrix:
    """E^{(p,q)}_k for one level, q >= 0 rows only, split by axis."""

    level: int
    lambda_: float
    lambda0: float
    p_max: int
    k_max: int
    real_part: SparseStore
    imag_part: SparseStore
    eps_a: float
    eps_r: float
    terms_used: Dict[Key, int] = field(default_factory=dict, compare=False, repr=False)
    # (real, imaginary) keys the moment-condition estimate counts as zero; not stored in files
    estimated_zeros: Optional[Tuple[int, int]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.real_part.key_set() & self.imag_part.key_set():
            raise ContractError("real and imaginary stores share keys")

    @property
    def tolerances(self) -> Tuple[float, float]:
        return self.eps_a, self.eps_r

    def entries(self) -> Iterator[Tuple[Key, Axis, float]]:
        """All stored entries in lexicographic key order."""
        keys = np.concatenate([self.real_part.keys, self.imag_part.keys])
        values = np.concatenate([self.real_part.values, self.imag_part.values])
        axes = np.concatenate([np.zeros(len(self.real_part), dtype=bool), np.ones(len(self.imag_part), dtype=bool)])
        if not len(keys):
            return
        order = np.lexsort(keys.T[::-1])
        for i in order:
            yield tuple(int(v) for v in keys[i]), (Axis.IMAG if axes[i] else Axis.REAL), float(values[i])

    def max_terms(self) -> int:
        return max(self.terms_used.values(), default=0)

    def mean_terms(self) -> float:
        if not self.terms_used:
            return 0.0
        return sum(self.terms_used.values()) / len(self.terms_used)

    def terms_histogram(self) -> Dict[int, int]:
        hist: Dict[int, int] = {}
        for m in self.terms_used.values():
            hist[m] = hist.get(m, 0) + 1
        return dict(sorted(hist.items()))


@dataclass
class WaveletBlock:
    """Multiwavelet coefficients s^k of one box (n, l)."""

    level: int
    translation: Tuple[int, int, int]
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.ndim != 3 or len(set(self.coeffs.shape)) != 1:
            raise DomainError(f"coefficients must be a cube array, got shape {self.coeffs.shape}")
        if any(not 0 <= t < 2 ** self.level for t in self.translation):
            raise DomainError(f"translation {self.translation} outside level {self.level}")
        self.translation = tuple(int(t) for t in self.translation)

    @property
    def k_max(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def half_side(self) -> float:
        return 2.0 ** -(self.level + 1)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.translation, dtype=np.float64) + 0.5) * 2.0 ** -self.level

    @property
    def radius(self) -> float:
        return math.sqrt(3.0) * self.half_side

    @classmethod
    def zeros(cls, level: int, translation: Sequence[int], k_max: int) -> "WaveletBlock":
        return cls(level, tuple(translation), np.zeros((k_max + 1,) * 3, dtype=np.complex128))


def harmonic_slot(p: int, q: int) -> int:
    return p * p + p + q


@dataclass
class MultipoleVector:
    """Complex coefficients M_p^q (or L_p^q) in triangular layout p*p + p + q."""

    p_max: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape != ((self.p_max + 1) ** 2,):
            raise DomainError(f"expected {(self.p_max + 1) ** 2} coefficients, got {self.coeffs.shape}")

    @classmethod
    def zeros(cls, p_max: int) -> "MultipoleVector":
        return cls(p_max, np.zeros((p_max + 1) ** 2, dtype=np.complex128))

    def get(self, p: int, q: int) -> complex:
        if abs(q) > p or p > self.p_max:
            raise DomainError(f"(p, q) = ({p}, {q}) outside p_max={self.p_max}")
        return complex(self.coeffs[harmonic_slot(p, q)])

    def truncated(self, p_max: int) -> "MultipoleVector":
        return MultipoleVector(p_max, self.coeffs[:(p_max + 1) ** 2].copy())

    def is_conjugate_symmetric(self, rtol: float = 1e-13) -> bool:
        scale = max(float(np.max(np.abs(self.coeffs), initial=0.0)), 1e-300)
        for p in range(self.p_max + 1):
            for q in range(1, p + 1):
                diff = abs(self.coeffs[harmonic_slot(p, -q)] - np.conj(self.coeffs[harmonic_slot(p, q)]))
                if diff > rtol * scale:
                    return False
        return True


# ---------------------------------------------------------------------------
# predicates and counting


def admissible_pairs(a: int, k_max: int) -> List[Tuple[int, int]]:
    """(kx, ky) with kx <= ky passing the parity conditions for order |q| = a."""
    pairs = []
    for kx in range(k_max + 1):
        for ky in range(kx, k_max + 1):
            if (kx + ky + a) % 2:
                continue
            if a == 0 and (kx % 2 or ky % 2):
                continue
            pairs.append((kx, ky))
    return pairs


def admissible_kz(p: int, a: int, k_max: int) -> List[int]:
    return [kz for kz in range(k_max + 1) if (kz + p + a) % 2 == 0]


def total_slots(p_max: int, k_max: int) -> int:
    return sum(p + 1 for p in range(p_max + 1)) * (k_max + 1) ** 3


def count_admissible(p_max: int, k_max: int) -> Tuple[int, int]:
    """(real, imaginary) counts of keys that pass the oddity predicate."""
    real = imag = 0
    ks = range(k_max + 1)
    for p in range(p_max + 1):
        for q in range(p + 1):
            for kx in ks:
                for ky in ks:
                    for kz in ks:
                        if oddity_zero(p, q, WaveletIndex(kx, ky, kz)):
                            continue
                        if ky % 2:
                            imag += 1
                        else:
                            real += 1
    return real, imag


def level_factor(level: int) -> WideReal:
    """2^{-3n/2} as a wide value."""
    whole = (3 * level) // 2
    factor = WideReal(2.0 ** -whole)
    if (3 * level) % 2:
        factor = mul_float(SQRT2, 2.0 ** -(whole + 1))
    return factor


# ---------------------------------------------------------------------------
# build


class _GroupResult:
    __slots__ = ("keys", "axes", "values", "terms", "estimated")

    def __init__(self):
        self.keys: List[Key] = []
        self.axes: List[bool] = []
        self.values: List[float] = []
        self.terms: List[int] = []
        self.estimated: List[int] = [0, 0]   # real, imaginary


def _mirror(value: float, imag: bool, a: int) -> Tuple[bool, float]:
    """Stored value of the (ky, kx, kz) entry from the (kx, ky, kz) one.

    E' = (-i)^q conj(E): with E = v i^x and x + q = 2j + x', E' = v (-1)^{x+q+j} i^{x'}.
    """
    x = 1 if imag else 0
    j, x_new = divmod(x + a, 2)
    sign = -1.0 if (x + a + j) % 2 else 1.0
    return bool(x_new), sign * value


def _build_q_group(engine: SeriesEngine, a: int, level: int, lambda_: float, lambda0: float,
                   p_max: int, k_max: int, params: SeriesParams, drop_zeros: bool) -> _GroupResult:
    result = _GroupResult()
    pairs = admissible_pairs(a, k_max)
    if not pairs:
        return result
    laplace = lambda_ == 0.0
    factor = level_factor(level)
    for p in range(a, p_max + 1):
        kzs = admissible_kz(p, a, k_max)
        if not kzs:
            continue
        if laplace:
            block = engine.laplace_block(p, a, pairs, kzs)
        else:
            try:
                block = engine.sum_series(p, a, pairs, kzs, params)
            except SeriesConvergenceError as e:
                raise e.with_level(level)
        scaled = wide_mul(block.values, factor)
        if laplace and level:
            scaled = WideReal(scaled.hi * 2.0 ** (-level * p), scaled.lo * 2.0 ** (-level * p))
        for i, (kx, ky) in enumerate(pairs):
            imag = bool(block.axes[i])
            for j, kz in enumerate(kzs):
                if block.estimated_zero is not None and block.estimated_zero[i, j]:
                    result.estimated[int(imag)] += 1
                    if kx != ky:
                        result.estimated[int(_mirror(0.0, imag, a)[0])] += 1
                if laplace:
                    if p < kx + ky + kz:
                        continue
                elif drop_zeros and abs(block.values.hi[i, j]) < params.eps_a:
                    continue
                value = float(scaled.hi[i, j])
                terms = int(block.terms[i, j])
                result.keys.append((p, a, kx, ky, kz))
                result.axes.append(imag)
                result.values.append(value)
                result.terms.append(terms)
                if kx != ky:
                    m_imag, m_value = _mirror(value, imag, a)
                    result.keys.append((p, a, ky, kx, kz))
                    result.axes.append(m_imag)
                    result.values.append(m_value)
                    result.terms.append(terms)
    return result


# Worker state for multiprocessing (must be top-level for pickling)
_pool_engine = _pool_args = None


def _pool_init(table, args):
    global _pool_engine, _pool_args
    _pool_engine, _pool_args = SeriesEngine(table), args


def _pool_build_group(a):
    return a, _build_q_group(_pool_engine, a, *_pool_args)


def build_matrix(level: int, lambda_: float, lambda0: float, p_max: int, k_max: int,
                 params: SeriesParams, table: MomentTable, drop_zeros: bool = True,
                 workers: int = 1) -> ConversionMatrix:
    """Assemble the level-n matrix from level-0 series values at lambda / 2^n.

    `params` supplies tolerances and the term cap; its lambda_n and lambda0
    are replaced by the level's values.
    """
    if level < 0:
        raise DomainError(f"level must be non-negative, got {level}")
    if table.k_max < k_max:
        raise TableSizeError(f"moment table has k_max={table.k_max}, need {k_max}")
    needed = p_max if lambda_ == 0.0 else required_columns(params.m_max, p_max)
    if table.l_max < needed:
        raise TableSizeError(f"moment table has l_max={table.l_max}, need {needed}")

    lambda_n = lambda_ / 2 ** level
    params = params.model_copy(update={"lambda_n": lambda_n, "lambda0": lambda0})
    args = (level, lambda_, lambda0, p_max, k_max, params, drop_zeros)
    started = time.monotonic()

    results: Dict[int, _GroupResult] = {}
    if workers > 1:
        from multiprocessing import Pool
        with Pool(workers, initializer=_pool_init, initargs=(table, args)) as pool:
            for a, group in pool.imap_unordered(_pool_build_group, range(p_max + 1)):
                results[a] = group
                matrix_logger.debug(f"level {level}: row group q={a} done ({len(group.keys)} entries)")
    else:
        engine = SeriesEngine(table)
        for a in range(p_max + 1):
            results[a] = _build_q_group(engine, a, *args)
            matrix_logger.debug(f"level {level}: row group q={a} done ({len(results[a].keys)} entries)")

    real_keys, real_vals, imag_keys, imag_vals = [], [], [], []
    terms_used: Dict[Key, int] = {}
    estimated = [0, 0]
    for a in sorted(results):
        group = results[a]
        for key, imag, value, terms in zip(group.keys, group.axes, group.values, group.terms):
            if imag:
                imag_keys.append(key)
                imag_vals.append(value)
            else:
                real_keys.append(key)
                real_vals.append(value)
            terms_used[key] = terms
        estimated[0] += group.estimated[0]
        estimated[1] += group.estimated[1]

    matrix = ConversionMatrix(
        level=level, lambda_=lambda_, lambda0=lambda0, p_max=p_max, k_max=k_max,
        real_part=SparseStore(np.array(real_keys, dtype=np.int64), np.array(real_vals)),
        imag_part=SparseStore(np.array(imag_keys, dtype=np.int64), np.array(imag_vals)),
        eps_a=params.eps_a, eps_r=params.eps_r, terms_used=terms_used,
        estimated_zeros=None if lambda_ == 0.0 else (estimated[0], estimated[1]),
    )
    matrix_logger.info(f"Built level {level} (lambda={lambda_}, lambda_n={lambda_n}): "
                       f"{len(matrix.real_part)} real + {len(matrix.imag_part)} imaginary entries "
                       f"in {time.monotonic() - started:.2f}s")
    return matrix


# ---------------------------------------------------------------------------
# access and transforms


def reconstruct_entry(matrix: ConversionMatrix, p: int, q: int, k: WaveletIndex) -> complex:
    """Complex entry for any sign of q; conjugate symmetry supplies q < 0."""
    k = WaveletIndex(*k)
    if abs(q) > p or p > matrix.p_max or max(k) > matrix.k_max or min(k) < 0:
        raise DomainError(f"entry (p={p}, q={q}, k={tuple(k)}) outside the matrix")
    key = (p, abs(q), k.kx, k.ky, k.kz)
    if key in matrix.real_part:
        value = complex(matrix.real_part.get(key))
    elif key in matrix.imag_part:
        value = 1j * matrix.imag_part.get(key)
    else:
        return 0j
    return value.conjugate() if q < 0 else value


def _dense_rows(matrix: ConversionMatrix):
    """Stored entries as arrays: row slot of q and -q, flat k index, complex value."""
    keys = np.concatenate([matrix.real_part.keys, matrix.imag_part.keys])
    values = np.concatenate([matrix.real_part.values.astype(np.complex128),
                             1j * matrix.imag_part.values])
    p, q = keys[:, 0], keys[:, 1]
    size = matrix.k_max + 1
    flat_k = (keys[:, 2] * size + keys[:, 3]) * size + keys[:, 4]
    return p, q, p * p + p + q, p * p + p - q, flat_k, values


def forward(matrix: ConversionMatrix, block: WaveletBlock, include_kernel_constant: bool = False) -> MultipoleVector:
    """M_p^q = sum_k E^{(p,q)}_k s^k."""
    if block.level != matrix.level:
        raise ContractError(f"block level {block.level} does not match matrix level {matrix.level}")
    if block.k_max > matrix.k_max:
        raise ContractError(f"block k_max {block.k_max} exceeds matrix k_max {matrix.k_max}")
    coeffs = np.zeros((matrix.k_max + 1,) * 3, dtype=np.complex128)
    kb = block.k_max + 1
    coeffs[:kb, :kb, :kb] = block.coeffs
    s = coeffs.reshape(-1)

    out = np.zeros((matrix.p_max + 1) ** 2, dtype=np.complex128)
    p, q, pos, neg, flat_k, values = _dense_rows(matrix)
    if len(values):
        np.add.at(out, pos, values * s[flat_k])
        off_axis = q > 0
        np.add.at(out, neg[off_axis], np.conj(values[off_axis]) * s[flat_k[off_axis]])
    if include_kernel_constant and matrix.lambda_ > 0:
        out = out * (8.0 * matrix.lambda_)
    return MultipoleVector(matrix.p_max, out)


def adjoint(matrix: ConversionMatrix, local: MultipoleVector) -> np.ndarray:
    """s^k = sum_{p,q} conj(E^{(p,q)}_k) L_p^q."""
    if local.p_max > matrix.p_max:
        raise ContractError(f"local expansion degree {local.p_max} exceeds matrix p_max {matrix.p_max}")
    size = matrix.k_max + 1
    out = np.zeros(size ** 3, dtype=np.complex128)
    p, q, pos, neg, flat_k, values = _dense_rows(matrix)
    inside = p <= local.p_max
    if inside.any():
        p, q, pos, neg, flat_k, values = p[inside], q[inside], pos[inside], neg[inside], flat_k[inside], values[inside]
        np.add.at(out, flat_k, np.conj(values) * local.coeffs[pos])
        off_axis = q > 0
        np.add.at(out, flat_k[off_axis], values[off_axis] * local.coeffs[neg[off_axis]])
    return out.reshape((size,) * 3)


def stats(matrix: ConversionMatrix) -> Dict[str, int]:
    admissible_real, admissible_imag = count_admissible(matrix.p_max, matrix.k_max)
    real = len(matrix.real_part)
    imag = len(matrix.imag_part)
    report = {
        "total": total_slots(matrix.p_max, matrix.k_max),
        "admissible_real": admissible_real,
        "admissible_imag": admissible_imag,
        "real_nonzero": real,
        "imag_nonzero": imag,
        "additional_real_zero": admissible_real - real,
        "additional_imag_zero": admissible_imag - imag,
    }
    if matrix.estimated_zeros is not None:
        report["estimated_real_zero"], report["estimated_imag_zero"] = matrix.estimated_zeros
    return report
