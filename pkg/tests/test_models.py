"""Ensemble, block-sum and equivalent-construction tests."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from pwtraffic.hermite import expect_scaled, gaussian_moment, hermite, monomial
from pwtraffic.models import (
    EntryLaw,
    ProfiledEnsemble,
    StepProfile,
    all_pairs,
    decompose,
    equivalent_def,
    equivalent_lin,
    equivalent_per,
    equivalent_sum,
    lambda_ell,
    ones_and_pairs,
    per_matrix,
    per_noise_family,
    pw_matrix,
    read_matrix,
    second_moment_cells,
    second_moment_profile,
    triple_and_pairs,
    unit_skewed_law,
    write_matrix,
    z_lambda,
)
from pwtraffic.partitions import IntegerPartition, count_of_type, integer_partitions
from pwtraffic.traffic import BlockLayout

RNG = np.random.default_rng(52)


def const_ensemble(n0, n1, n2, law=None):
    law = law or EntryLaw.gaussian()
    return ProfiledEnsemble(
        BlockLayout(n0, n1, n2), law, law, StepProfile.constant(), StepProfile.constant()
    )


# -- entry laws ---------------------------------------------------------------


def test_skewed_two_point_moments():
    law = unit_skewed_law()
    assert law.moment(1) == 0
    assert law.moment(2) == 1
    assert law.m3 == Fraction(3, 2)


def test_law_validation():
    with pytest.raises(ValueError):
        EntryLaw.skewed_two_point(2, Fraction(-1, 2), Fraction(1, 4))  # not centered
    with pytest.raises(ValueError):
        EntryLaw.skewed_two_point(1, -1, Fraction(1, 3))  # centered only at p=1/2
    assert EntryLaw.rademacher().m3 == 0
    assert EntryLaw.gaussian().m3 == 0


def test_law_sampling_statistics():
    rng = np.random.default_rng(11)
    for law in (EntryLaw.gaussian(), EntryLaw.rademacher(), unit_skewed_law()):
        x = law.sample(rng, (400, 400))
        n = x.size
        assert abs(x.mean()) < 4 / math.sqrt(n)
        assert abs((x**2).mean() - 1) < 6 / math.sqrt(n)
        assert abs((x**3).mean() - float(law.m3)) < 8 / math.sqrt(n)


def test_law_json_round_trip():
    for law in (EntryLaw.gaussian(), EntryLaw.rademacher(), unit_skewed_law()):
        assert EntryLaw.from_json(law.to_json()) == law


# -- profiles -----------------------------------------------------------------


def test_step_profile_realize():
    p = StepProfile.of([[1, 2], [3, 4]])
    mat = p.realize(4, 4)
    assert (mat[:2, :2] == 1).all() and (mat[:2, 2:] == 2).all()
    assert (mat[2:, :2] == 3).all() and (mat[2:, 2:] == 4).all()
    # non-divisible sizes follow the ceiling rule
    assert p.row_cells(3) == [0, 1, 1]


def test_step_profile_validation():
    with pytest.raises(ValueError):
        StepProfile.of([[1, -1]])
    with pytest.raises(ValueError):
        StepProfile.of([[1, 2], [3]])


def test_sample_deterministic_and_profiled():
    ens = const_ensemble(8, 6, 7)
    w1, x1 = ens.sample(3)
    w2, x2 = ens.sample(3)
    assert (w1 == w2).all() and (x1 == x2).all()
    assert w1.shape == (6, 8) and x1.shape == (8, 7)
    zero = ProfiledEnsemble(
        ens.layout, ens.law_w, ens.law_x, StepProfile.constant(0), StepProfile.constant(0)
    )
    wz, xz = zero.sample(3)
    assert not wz.any() and not xz.any()


def test_sample_moments():
    ens = const_ensemble(120, 120, 120)
    w, x = ens.sample(17)
    n = w.size
    assert abs(w.mean()) < 4 / math.sqrt(n)
    assert abs((w**2).mean() - 1) < 6 / math.sqrt(n)


# -- the model matrix ----------------------------------------------------------


def test_pw_matrix_examples():
    lay = BlockLayout(3, 2, 2)
    w, x = RNG.standard_normal((2, 3)), RNG.standard_normal((3, 2))
    from pwtraffic.hermite import Polynomial

    assert not pw_matrix(Polynomial.zero(), w, x, lay).any()
    y1 = pw_matrix(monomial(1), w, x, lay)
    expect = (math.sqrt(lay.N0) / lay.N) * (w @ x) / math.sqrt(lay.N0)
    assert np.allclose(y1, expect)
    # linearity in the polynomial
    h3, h5 = monomial(3), monomial(5)
    combo = Fraction(2) * h3 + Fraction(-3) * h5
    lhs = pw_matrix(combo, w, x, lay)
    rhs = 2 * pw_matrix(h3, w, x, lay) - 3 * pw_matrix(h5, w, x, lay)
    assert np.allclose(lhs, rhs)


def test_pw_matrix_shape_check():
    lay = BlockLayout(3, 2, 2)
    with pytest.raises(ValueError):
        pw_matrix(monomial(1), np.zeros((2, 4)), np.zeros((4, 2)), lay)


# -- distinct-index block sums ---------------------------------------------------


def brute_z(parts, w, x):
    out = np.zeros((w.shape[0], x.shape[1]), dtype=object)
    for i in range(w.shape[0]):
        for j in range(x.shape[1]):
            acc = 0
            for d in itertools.permutations(range(w.shape[1]), len(parts)):
                term = 1
                for dk, p in zip(d, parts):
                    term *= (int(w[i, dk]) * int(x[dk, j])) ** p
                acc += term
            out[i, j] = acc
    return out


def test_z_lambda_single_part_is_product():
    w, x = RNG.integers(-3, 4, (3, 4)), RNG.integers(-3, 4, (4, 3))
    assert (z_lambda(IntegerPartition.of([1]), w, x) == w @ x).all()


def test_z_lambda_power_sum():
    w, x = RNG.integers(-3, 4, (1, 3)), RNG.integers(-3, 4, (3, 1))
    val = z_lambda(IntegerPartition.of([2]), w, x)[0, 0]
    direct = sum(int(w[0, d]) ** 2 * int(x[d, 0]) ** 2 for d in range(3))
    assert val == direct


def test_z_lambda_two_singletons_pattern():
    w, x = RNG.integers(-3, 4, (3, 4)), RNG.integers(-3, 4, (4, 3))
    got = z_lambda(IntegerPartition.of([1, 1]), w, x)
    pattern = (w @ x) * (w @ x) - (w**2) @ (x**2)
    assert (got == pattern).all()
    assert (got == brute_z((1, 1), w, x)).all()


def test_z_lambda_matches_brute_force():
    for n in range(1, 5):
        for lam in integer_partitions(n):
            w = RNG.integers(-3, 4, (2, 5))
            x = RNG.integers(-3, 4, (5, 2))
            assert (z_lambda(lam, w, x) == brute_z(lam.parts, w, x)).all()


def test_z_lambda_ranges_and_guard():
    w, x = RNG.integers(-3, 4, (4, 4)), RNG.integers(-3, 4, (4, 4))
    sub = z_lambda(IntegerPartition.of([1]), w, x, i_range=[0, 2], j_range=[1])
    assert (sub == (w @ x)[np.ix_([0, 2], [1])]).all()
    with pytest.raises(ValueError):
        z_lambda(IntegerPartition.of([1] * 9), w, x)


def test_named_partition_families():
    assert ones_and_pairs(5, 1).parts == (2, 2, 1)
    assert ones_and_pairs(5, 3).parts == (2, 1, 1, 1)
    assert ones_and_pairs(5, 5).parts == (1, 1, 1, 1, 1)
    assert triple_and_pairs(7).parts == (3, 2, 2)
    assert all_pairs(6).parts == (2, 2, 2)
    with pytest.raises(ValueError):
        ones_and_pairs(5, 2)
    with pytest.raises(ValueError):
        triple_and_pairs(2)


# -- the four-way decomposition --------------------------------------------------


def test_decompose_h1():
    lay = BlockLayout(10, 8, 9)
    w, x = RNG.standard_normal((8, 10)), RNG.standard_normal((10, 9))
    d = decompose(monomial(1), w, x, lay)
    assert np.allclose(d.lin, pw_matrix(monomial(1), w, x, lay))
    assert d.per == {}
    assert not d.deformation.any() and np.allclose(d.eps, 0)


def test_decompose_h3_exact_cover():
    lay = BlockLayout(10, 8, 9)
    w, x = RNG.standard_normal((8, 10)), RNG.standard_normal((10, 9))
    d = decompose(monomial(3), w, x, lay)
    assert np.abs(d.eps).max() < 1e-12
    assert set(d.per) == {3}


def test_decompose_h5_remainder_is_lambda_sum():
    lay = BlockLayout(8, 6, 7)
    w, x = RNG.standard_normal((6, 8)), RNG.standard_normal((8, 7))
    d = decompose(monomial(5), w, x, lay)
    gamma = math.sqrt(lay.N0) / lay.N
    oracle = np.zeros((lay.N1, lay.N2))
    for parts in [(5,), (4, 1), (3, 1, 1)]:
        lam = IntegerPartition(parts)
        oracle += count_of_type(lam) * gamma * lay.N0**-2.5 * z_lambda(lam, w, x).astype(float)
    assert np.allclose(d.eps, oracle)


def test_decompose_reassembles_exactly():
    lay = BlockLayout(20, 18, 22)
    w, x = RNG.standard_normal((18, 20)), RNG.standard_normal((20, 22))
    for p in (monomial(1), monomial(3), monomial(5), hermite(3), hermite(5)):
        d = decompose(p, w, x, lay)
        y = pw_matrix(p, w, x, lay)
        assert np.abs(d.reassembled() - y).max() < 1e-10 * max(1.0, np.abs(y).max())


def test_decompose_rejects_even_and_large():
    lay = BlockLayout(4, 4, 4)
    w, x = np.ones((4, 4)), np.ones((4, 4))
    with pytest.raises(ValueError):
        decompose(monomial(2), w, x, lay)
    with pytest.raises(ValueError):
        decompose(monomial(9), w, x, lay)


# -- profile matrices -------------------------------------------------------------


def test_lambda_ell_constant_profile():
    lay = BlockLayout(4, 3, 5)
    lam2 = lambda_ell(StepProfile.constant(), StepProfile.constant(), lay, 2)
    assert np.allclose(lam2, lay.N0 / lay.N)
    zero = lambda_ell(StepProfile.constant(0), StepProfile.constant(), lay, 2)
    assert not zero.any()
    with pytest.raises(ValueError):
        lambda_ell(StepProfile.constant(), StepProfile.constant(), lay, 4)


def test_lambda_ell_step_grid_matches_dense_product():
    lay = BlockLayout(4, 4, 4)
    pw_grid = StepProfile.of([[1, Fraction(1, 2)], [Fraction(3, 2), 1]])
    px_grid = StepProfile.of([[2, 1], [1, Fraction(1, 2)]])
    for ell in (2, 3):
        got = lambda_ell(pw_grid, px_grid, lay, ell)
        gw, gx = pw_grid.realize(4, 4), px_grid.realize(4, 4)
        dense = (gw**ell) @ (gx**ell) / lay.N
        assert np.allclose(got, dense)


def test_second_moment_profile_is_one_for_constant():
    ens = const_ensemble(6, 5, 4)
    assert np.allclose(second_moment_profile(ens), 1.0)
    cells = second_moment_cells(ens)
    assert cells == [[Fraction(1)]]


def test_second_moment_profile_scales_with_lambda2():
    lay = BlockLayout(4, 4, 4)
    pw_grid = StepProfile.of([[1, Fraction(1, 2)], [Fraction(3, 2), 1]])
    px_grid = StepProfile.of([[2, 1], [1, Fraction(1, 2)]])
    ens = ProfiledEnsemble(lay, EntryLaw.gaussian(), EntryLaw.gaussian(), pw_grid, px_grid)
    m2 = second_moment_profile(ens)
    lam2 = lambda_ell(pw_grid, px_grid, lay, 2)
    # the equivalents use the inner-normalized scale: psi0 * m2^2 = lambda2
    assert np.allclose((lay.N0 / lay.N) * m2**2, lam2)


# -- the Gaussian equivalents ------------------------------------------------------


def test_equivalent_lin_h1_reduces_to_wishart_factor():
    ens = const_ensemble(6, 5, 4)
    lay = ens.layout
    got = equivalent_lin(monomial(1), ens, seed=12)
    from pwtraffic.models import STREAM_LIN_W, STREAM_LIN_X

    w = np.random.default_rng([12, STREAM_LIN_W]).standard_normal((lay.N1, lay.N0))
    x = np.random.default_rng([12, STREAM_LIN_X]).standard_normal((lay.N0, lay.N2))
    assert np.allclose(got, w @ x / lay.N)


def test_equivalent_lin_hermite_coefficient_vanishes_at_constant_profile():
    # E[g_n'(xi mu)] = 0 iff mu = 1 for n >= 2; constant unit profiles give mu = 1
    ens = const_ensemble(6, 5, 4)
    for n in (3, 5):
        assert not equivalent_lin(hermite(n), ens, seed=1).any()
    stepped = ProfiledEnsemble(
        ens.layout,
        ens.law_w,
        ens.law_x,
        StepProfile.of([[1, 2]]),
        StepProfile.constant(),
    )
    assert equivalent_lin(hermite(3), stepped, seed=1).any()


def test_equivalent_lin_coefficient_symbolic():
    # coefficient for degree-n monomials: n mu^{n-1} E[xi^{n-1}]
    for n in range(1, 8):
        mu_sq = Fraction(4, 9)
        got = expect_scaled(monomial(n).derivative(1), mu_sq)
        want = n * Fraction(2, 3) ** (n - 1) * gaussian_moment(n - 1)
        assert got == want


def test_equivalent_per_zero_cases():
    ens = const_ensemble(6, 5, 4)
    assert not equivalent_per(monomial(1), ens, m=2, seed=2).any()  # degree < m
    assert not equivalent_per(monomial(3), ens, m=2, seed=2).any()  # odd Gaussian moment
    with pytest.raises(ValueError):
        equivalent_per(monomial(3), ens, m=1, seed=2)


def test_per_noise_family_normalization():
    ens = const_ensemble(6, 5, 4)
    lay = ens.layout
    fam = per_noise_family(ens, seed=4, max_order=5)
    assert set(fam) == {2, 3, 4, 5}
    psi0 = lay.N0 / lay.N
    from pwtraffic.models import STREAM_PER

    for n, mat in fam.items():
        g = np.random.default_rng([4, STREAM_PER, n]).standard_normal((lay.N1, lay.N2))
        assert np.allclose(mat, math.sqrt(psi0 * math.factorial(n) / lay.N) * g)


def test_per_matrix_constant_profile_matches_hermite_assembly():
    # for constant profiles the chaos part is the Hermite-coefficient sum
    ens = const_ensemble(6, 5, 4)
    fam = per_noise_family(ens, seed=8, max_order=5)
    for p in (monomial(3), monomial(5), hermite(3), hermite(5)):
        assembled = sum(
            (float(c) * fam[n] for n, c in enumerate(p.hermite_coeffs) if n >= 2 and c != 0),
            np.zeros((5, 4)),
        )
        assert np.allclose(per_matrix(p, ens, seed=8), assembled)


def test_per_matrix_example_weights():
    # chaos of x^3 is sqrt(6) times a variance-psi0/N noise; x^5 mixes orders
    ens = const_ensemble(6, 5, 4)
    fam = per_noise_family(ens, seed=3, max_order=5)
    z1 = fam[3] / math.sqrt(math.factorial(3))
    z2 = fam[5] / math.sqrt(math.factorial(5))
    assert np.allclose(per_matrix(monomial(3), ens, seed=3), math.sqrt(6) * z1)
    assert np.allclose(
        per_matrix(monomial(5), ens, seed=3), 10 * math.sqrt(6) * z1 + 2 * math.sqrt(30) * z2
    )


def test_equivalent_def_examples():
    ens = const_ensemble(6, 5, 4, law=EntryLaw.rademacher())
    assert not equivalent_def(monomial(3), ens).any()
    mixed = ProfiledEnsemble(
        ens.layout, unit_skewed_law(), EntryLaw.gaussian(), StepProfile.constant(), StepProfile.constant()
    )
    assert not equivalent_def(monomial(3), mixed).any()  # m3_w * m3_x = 0
    skew = const_ensemble(6, 5, 4, law=unit_skewed_law())
    got = equivalent_def(monomial(3), skew)
    want = float(Fraction(3, 2) ** 2) / skew.layout.N
    assert np.allclose(got, want)
    assert not equivalent_def(monomial(1), skew).any()


def test_equivalent_sum_assembles():
    ens = const_ensemble(6, 5, 4, law=unit_skewed_law())
    h3 = monomial(3)
    total = equivalent_sum(h3, ens, seed=5)
    parts = (
        equivalent_lin(h3, ens, 5) + per_matrix(h3, ens, 5) + equivalent_def(h3, ens)
    )
    assert np.allclose(total, parts)


def test_equivalents_deterministic_per_seed():
    ens = const_ensemble(6, 5, 4, law=unit_skewed_law())
    h3 = monomial(3)
    a = equivalent_sum(h3, ens, seed=77)
    b = equivalent_sum(h3, ens, seed=77)
    assert (a == b).all()
    c = equivalent_sum(h3, ens, seed=78)
    assert not np.allclose(a, c)
    fam1 = per_noise_family(ens, seed=77, max_order=4)
    fam2 = per_noise_family(ens, seed=77, max_order=4)
    assert all((fam1[n] == fam2[n]).all() for n in fam1)


def test_matrix_dump_round_trip(tmp_path):
    a = RNG.standard_normal((3, 5))
    path = tmp_path / "mat.bin"
    write_matrix(path, a)
    assert path.stat().st_size == 8 + 3 * 5 * 8
    assert np.allclose(read_matrix(path), a)
