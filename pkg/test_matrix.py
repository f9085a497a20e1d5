"""Tests for matrix assembly, storage and the forward/adjoint transforms."""
import math

import numpy as np
import pytest

from src.errors import ContractError, DomainError, TableSizeError
from src.matrix import (ConversionMatrix, MultipoleVector, SparseStore, WaveletBlock, adjoint, build_matrix,
                        count_admissible, forward, level_factor, reconstruct_entry, stats, total_slots)
from src.series import SeriesParams, WaveletIndex, eval_E0, eval_E0_laplace, oddity_zero

INV_SQRT_4PI = 1.0 / math.sqrt(4.0 * math.pi)
PARAMS = SeriesParams(lambda_n=0.0)


def build(level, lambda_, table, p_max=4, k_max=4, lambda0=None, **kwargs):
    if lambda0 is None:
        lambda0 = lambda_ or 1.0
    return build_matrix(level, lambda_, lambda0, p_max, k_max, PARAMS, table, **kwargs)


@pytest.fixture(scope="module")
def laplace(table):
    return build(0, 0.0, table, p_max=10, k_max=10)


@pytest.fixture(scope="module")
def screened(table):
    return build(0, 2.0, table, lambda0=1.0, drop_zeros=False)


def random_block(level, k_max, seed, real=False):
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1.0, 1.0, size=(k_max + 1,) * 3)
    if not real:
        coeffs = coeffs + 1j * rng.uniform(-1.0, 1.0, size=coeffs.shape)
    translation = tuple(int(t) for t in rng.integers(0, 2 ** level, size=3))
    return WaveletBlock(level, translation, coeffs)


def test_slot_counts():
    assert total_slots(10, 10) == 87846
    assert count_admissible(10, 10) == (12186, 8450)


def test_laplace_pattern_counts(laplace):
    report = stats(laplace)
    assert report["total"] == 87846
    assert (report["real_nonzero"], report["imag_nonzero"]) == (1512, 1001)
    assert report["additional_real_zero"] == 12186 - 1512
    assert report["additional_imag_zero"] == 8450 - 1001


def test_laplace_values_match_direct_evaluation(laplace, table):
    for key, axis, value in laplace.entries():
        p, q, kx, ky, kz = key
        expected = eval_E0_laplace(p, q, WaveletIndex(kx, ky, kz), table)
        assert axis is expected.axis, key
        assert value == pytest.approx(expected.value, rel=1e-15, abs=1e-20), key


def test_laplace_constant_entry(laplace):
    assert reconstruct_entry(laplace, 0, 0, WaveletIndex(0, 0, 0)) == pytest.approx(INV_SQRT_4PI, rel=1e-15)


def test_no_oddity_keys_are_stored(screened):
    for (p, q, kx, ky, kz), _, _ in screened.entries():
        assert not oddity_zero(p, q, WaveletIndex(kx, ky, kz))


def test_screened_values_match_direct_evaluation(screened, table):
    params = SeriesParams(lambda_n=2.0, lambda0=1.0)
    for key, axis, value in screened.entries():
        p, q, kx, ky, kz = key
        expected, _ = eval_E0(p, q, WaveletIndex(kx, ky, kz), params, table)
        assert axis is expected.axis, key
        assert value == pytest.approx(expected.value, rel=1e-14, abs=1e-20), key


def test_swap_symmetry(screened):
    scale = max(abs(v) for _, _, v in screened.entries())
    for (p, q, kx, ky, kz), _, _ in screened.entries():
        value = reconstruct_entry(screened, p, q, WaveletIndex(kx, ky, kz))
        mirrored = reconstruct_entry(screened, p, q, WaveletIndex(ky, kx, kz))
        expected = (-1j) ** q * value.conjugate()
        if kx != ky:
            assert mirrored == expected
        else:
            assert abs(mirrored - expected) <= 1e-14 * scale


def test_conjugate_symmetry(screened):
    for (p, q, kx, ky, kz), _, _ in screened.entries():
        k = WaveletIndex(kx, ky, kz)
        assert reconstruct_entry(screened, p, -q, k) == reconstruct_entry(screened, p, q, k).conjugate()


def test_absent_entries_reconstruct_to_zero(screened):
    assert reconstruct_entry(screened, 1, 0, WaveletIndex(0, 0, 0)) == 0j
    with pytest.raises(DomainError):
        reconstruct_entry(screened, 5, 0, WaveletIndex(0, 0, 0))
    with pytest.raises(DomainError):
        reconstruct_entry(screened, 2, 3, WaveletIndex(0, 0, 0))


def test_drop_pass_removes_small_entries(table):
    kept = build(0, 0.01, table, lambda0=1.0)
    full = build(0, 0.01, table, lambda0=1.0, drop_zeros=False)
    assert len(kept.real_part) + len(kept.imag_part) < len(full.real_part) + len(full.imag_part)
    for key, _, value in kept.entries():
        assert abs(value) >= kept.eps_a
    assert kept.real_part.key_set() <= full.real_part.key_set()


def test_level_scaling_is_exact_for_even_levels(table):
    base = build(0, 1.0, table, lambda0=1.0)
    level2 = build(2, 4.0, table, lambda0=1.0)
    assert level2.real_part.key_set() == base.real_part.key_set()
    assert level2.imag_part.key_set() == base.imag_part.key_set()
    np.testing.assert_array_equal(level2.real_part.values, 0.125 * base.real_part.values)
    np.testing.assert_array_equal(level2.imag_part.values, 0.125 * base.imag_part.values)


def test_level_scaling_odd_level(table):
    base = build(0, 1.0, table, lambda0=1.0)
    level1 = build(1, 2.0, table, lambda0=1.0)
    factor = 2.0 ** -1.5
    np.testing.assert_allclose(level1.real_part.values, factor * base.real_part.values, rtol=4e-16)
    np.testing.assert_allclose(level1.imag_part.values, factor * base.imag_part.values, rtol=4e-16)
    assert level_factor(1).hi == pytest.approx(factor, rel=1e-16)


def test_laplace_level_scaling(table):
    base = build(0, 0.0, table)
    level1 = build(1, 0.0, table)
    for key, _, value in base.entries():
        p = key[0]
        k = WaveletIndex(*key[2:])
        got = reconstruct_entry(level1, p, key[1], k)
        want = reconstruct_entry(base, p, key[1], k) * 2.0 ** -1.5 * 2.0 ** -p
        assert got == pytest.approx(want, rel=1e-15)


def test_forward_delta(small_table):
    matrix = build_matrix(0, 0.0, 1.0, 0, 0, PARAMS, small_table)
    block = WaveletBlock(0, (0, 0, 0), np.ones((1, 1, 1)))
    result = forward(matrix, block)
    assert result.get(0, 0) == pytest.approx(INV_SQRT_4PI, rel=1e-15)
    assert forward(matrix, block, include_kernel_constant=True).get(0, 0) == result.get(0, 0)


def test_forward_kernel_constant(screened):
    block = random_block(0, 4, seed=1)
    plain = forward(screened, block)
    scaled = forward(screened, block, include_kernel_constant=True)
    np.testing.assert_allclose(scaled.coeffs, 8.0 * screened.lambda_ * plain.coeffs, rtol=1e-15)


def test_adjoint_delta(laplace):
    local = MultipoleVector.zeros(0)
    local.coeffs[0] = 1.0
    result = adjoint(laplace, local)
    assert result.shape == (11, 11, 11)
    assert result[0, 0, 0] == pytest.approx(INV_SQRT_4PI, rel=1e-15)
    assert np.count_nonzero(result) == 1


def test_zero_maps_to_zero(screened):
    assert not np.any(forward(screened, WaveletBlock.zeros(0, (0, 0, 0), 4)).coeffs)
    assert not np.any(adjoint(screened, MultipoleVector.zeros(4)))


@pytest.mark.parametrize("seed", range(3))
def test_forward_and_adjoint_are_adjoint(screened, seed):
    block = random_block(0, 4, seed)
    rng = np.random.default_rng(100 + seed)
    local = MultipoleVector(4, rng.standard_normal(25) + 1j * rng.standard_normal(25))
    lhs = np.vdot(local.coeffs, forward(screened, block).coeffs)
    rhs = np.vdot(adjoint(screened, local).ravel(), block.coeffs.ravel())
    assert abs(lhs - rhs) <= 1e-13 * max(abs(lhs), 1.0)


def test_real_block_gives_conjugate_symmetric_multipoles(screened):
    moments = forward(screened, random_block(0, 4, seed=8, real=True))
    assert moments.is_conjugate_symmetric()


def test_smaller_block_is_padded(screened):
    small = random_block(0, 2, seed=4)
    padded = WaveletBlock(0, small.translation, np.zeros((5, 5, 5), dtype=np.complex128))
    padded.coeffs[:3, :3, :3] = small.coeffs
    np.testing.assert_array_equal(forward(screened, small).coeffs, forward(screened, padded).coeffs)


def test_contract_errors(screened):
    with pytest.raises(ContractError):
        forward(screened, WaveletBlock.zeros(1, (0, 0, 0), 4))
    with pytest.raises(ContractError):
        forward(screened, WaveletBlock.zeros(0, (0, 0, 0), 5))
    with pytest.raises(ContractError):
        adjoint(screened, MultipoleVector.zeros(5))
    overlap = SparseStore(np.array([[0, 0, 0, 0, 0]]), np.array([1.0]))
    with pytest.raises(ContractError):
        ConversionMatrix(level=0, lambda_=1.0, lambda0=1.0, p_max=0, k_max=0, real_part=overlap,
                         imag_part=overlap, eps_a=1e-16, eps_r=1e-16)


def test_block_validation():
    with pytest.raises(DomainError):
        WaveletBlock(1, (2, 0, 0), np.zeros((2, 2, 2)))
    with pytest.raises(DomainError):
        WaveletBlock(0, (0, 0, 0), np.zeros((2, 3, 2)))
    with pytest.raises(DomainError):
        MultipoleVector(2, np.zeros(5))
    block = WaveletBlock.zeros(2, (1, 0, 3), 3)
    np.testing.assert_allclose(block.center, [0.375, 0.125, 0.875])
    assert block.half_side == 0.125
    assert block.radius == pytest.approx(0.125 * math.sqrt(3.0))


def test_build_preconditions(table, small_table):
    with pytest.raises(TableSizeError):
        build(0, 1.0, small_table)
    with pytest.raises(TableSizeError):
        build(0, 0.0, small_table, k_max=11)
    with pytest.raises(DomainError):
        build(-1, 1.0, table)


def test_parallel_build_matches_serial(table):
    serial = build(1, 3.0, table, p_max=3, k_max=3)
    parallel = build(1, 3.0, table, p_max=3, k_max=3, workers=2)
    assert parallel == serial
    assert parallel.terms_used == serial.terms_used


def test_terms_bookkeeping(screened):
    assert screened.max_terms() >= 1
    assert 0 < screened.mean_terms() <= screened.max_terms()
    assert sum(screened.terms_histogram().values()) == len(screened.terms_used)


# decay rate, published additional zeros (real, imaginary), measured additional zeros (real, imaginary)
SPARSITY_ROWS = [
    (1.0, 9567, 6679, 9268, 6468),
    (2.0, 8813, 6154, 8322, 5814),
    (4.0, 7478, 5235, 6846, 4763),
    (6.0, 6340, 4439, 5705, 4000),
    (8.0, 5439, 3775, 4597, 3172),
    (10.0, 4630, 3203, 3761, 2593),
]


def test_estimate_counts_accompany_screened_builds(table):
    report = stats(build(0, 4.0, table, p_max=4, k_max=4))
    assert (report["admissible_real"], report["admissible_imag"]) == (306, 134)
    assert (report["estimated_real_zero"], report["estimated_imag_zero"]) == (38, 9)
    assert (report["additional_real_zero"], report["additional_imag_zero"]) == (27, 6)
    assert "estimated_real_zero" not in stats(build(0, 0.0, table, p_max=4, k_max=4))


@pytest.mark.slow
@pytest.mark.parametrize("lambda_,published_real,published_imag,measured_real,measured_imag", SPARSITY_ROWS)
def test_additional_zero_counts(table, lambda_, published_real, published_imag, measured_real, measured_imag):
    report = stats(build(0, lambda_, table, p_max=10, k_max=10))
    assert report["estimated_real_zero"] == pytest.approx(published_real, rel=0.01)
    assert report["estimated_imag_zero"] == pytest.approx(published_imag, rel=0.01)
    assert (report["additional_real_zero"], report["additional_imag_zero"]) == (measured_real, measured_imag)
