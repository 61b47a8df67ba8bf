import itertools
import math

import numpy as np
import pytest

from conftest import load
from foldover.criteria import bayes_a, eci_foldover
from foldover.design import FoldoverDesign, ModelSpec, full_model_matrix
from foldover.dof import exact_dof, group_dof
from foldover.exceptions import ConfigurationError
from foldover.search import AugmentConfig, SearchConfig, augment, construct_direct, coordinate_exchange

TWO_FI = ModelSpec("2fi")


class TestConfig:
    def test_odd_n_points_to_augment(self):
        with pytest.raises(ConfigurationError, match="augment"):
            SearchConfig(15, 5).validate()

    @pytest.mark.parametrize("kwargs, message", [
        (dict(n=10, m=5), "no residual"),
        (dict(n=8, m=5), "rank"),
        (dict(n=16, m=5, n0=2, R=2), "exceeds v"),
        (dict(n=16, m=5, alpha=1.0), "alpha"),
        (dict(n=16, m=5, n_starts=0), "n_starts"),
        (dict(n=16, m=5, model="quad", quad_factors=(6,)), "out of range"),
    ])
    def test_rejections(self, kwargs, message):
        with pytest.raises(ConfigurationError, match=message):
            SearchConfig(**kwargs).validate()


def _search(**kw):
    base = dict(n=16, m=5, n_starts=12, seed=3)
    base.update(kw)
    return coordinate_exchange(SearchConfig(**base))


def test_result_is_consistent():
    res = _search()
    H = res.half
    assert H.entries.shape == (8, 5)
    assert np.linalg.matrix_rank(H.entries) == 5
    again = eci_foldover(H, 0.05, TWO_FI)
    assert res.report.eci == pytest.approx(again.eci, rel=1e-12)
    assert res.report.eci == pytest.approx(float(np.min(res.start_criteria)), rel=1e-12)
    assert res.start == int(np.argmin(res.start_criteria))


def test_restricted_rows_are_honored():
    res = _search(n0=1, R=1)
    H = res.half
    assert H.n0 >= 1
    f, p = group_dof(H)
    assert f <= H.v - 1 - 1
    assert p >= 1 + 2


def test_zero_fixed_rows_for_quadratic_factors():
    res = _search(m=4, model="quad", quad_factors=(1, 2, 3, 4), n_starts=5)
    H = res.half.entries
    for j in range(4):
        assert np.any(H[:, j] == 0)
    assert {(k, k) for k in range(4)} <= set(res.half.zero_fixed)


def test_same_seed_same_design_across_workers():
    a = _search(n_starts=8, n_jobs=1)
    b = _search(n_starts=8, n_jobs=2)
    assert np.array_equal(a.half.entries, b.half.entries)
    assert np.array_equal(a.start_criteria, b.start_criteria)
    c = _search(n_starts=8, n_jobs=1)
    assert np.array_equal(a.half.entries, c.half.entries)


def test_more_starts_never_worse():
    few = _search(n_starts=4, seed=11)
    many = _search(n_starts=16, seed=11)
    # streams are spawned from the same root, so the first four starts coincide
    assert np.array_equal(few.start_criteria, many.start_criteria[:4])
    assert many.report.eci <= few.report.eci


class TestConstructions:
    H0 = [[1, 1, 1, 1, 1], [1, -1, 1, -1, 1], [1, 1, -1, -1, 1], [1, -1, -1, 1, 1],
          [1, 1, 1, 1, -1], [1, -1, 1, -1, -1], [1, 1, -1, -1, -1], [1, -1, -1, 1, -1]]

    def test_c0_matches_reference_half(self):
        c = construct_direct("C0", 16, 5)
        assert c.half.entries.tolist() == self.H0
        assert c.p == 0

    def test_c0_dropping_a_column_replicates(self):
        c = construct_direct("C0", 16, 4)
        assert c.p == 8
        assert exact_dof(c.half, TWO_FI).p == 8

    @pytest.mark.parametrize("row, p", [([-1, -1, 1, 1, -1], 2), ([-1, 1, 1, 1, 1], 0)])
    def test_c1(self, row, p):
        c = construct_direct("C1", 18, 5, add_rows=[row])
        assert c.half.entries[:8].tolist() == self.H0
        assert c.p == p

    @pytest.mark.parametrize("row, p", [([-1, -1, 1, 1, -1], 4), ([1, -1, -1, -1, 1], 2)])
    def test_c2(self, row, p):
        c = construct_direct("C2", 20, 5, add_rows=[row])
        assert c.half.entries[8].tolist() == [1] * 5
        assert c.p == p

    def test_c3_matches_reference_design(self):
        c = construct_direct("C3", 14, 5)
        assert np.array_equal(c.half.entries, load("c3_n14").half.entries)
        assert c.p == 0

    def test_scheme_residue_checked(self):
        with pytest.raises(ConfigurationError, match="mod 4"):
            construct_direct("C1", 16, 5)
        with pytest.raises(ConfigurationError, match="balanced"):
            construct_direct("C2", 20, 5, add_rows=[[1, 1, 1, 1, -1]])
        with pytest.raises(ConfigurationError):
            construct_direct("C9", 16, 5)


def _brute_force(base, tau2):
    X0 = full_model_matrix(base.runs, TWO_FI)
    info = X0.T @ X0
    cands = [np.array(r) for r in itertools.product([-1, 1], repeat=5)]
    vals = {}
    for a, b in itertools.product(range(32), repeat=2):
        XA = full_model_matrix(np.vstack([cands[a], cands[b]]), TWO_FI)
        vals[(a, b)] = bayes_a(info, XA, tau2, 5)
    best = min(vals.values())
    ties = {k for k, v in vals.items() if v <= best * (1 + 1e-12)}
    return best, ties, cands


def test_augment_matches_exhaustive_minimum():
    base = load("c3_n14")
    best, ties, cands = _brute_force(base, 50.0)
    res = augment(base, AugmentConfig(2, tau2=50.0, n_starts=20, seed=0))
    block = res.design.runs[14:]
    key = tuple(next(i for i, c in enumerate(cands) if np.array_equal(c, r)) for r in block)
    assert res.criterion == pytest.approx(best, rel=1e-12)
    assert key in ties


def test_augment_keeps_base_and_is_deterministic():
    base = load("r1_a05_n14")
    cfg = dict(n_add=2, tau2=50.0, n_starts=6, seed=4)
    a = augment(base, AugmentConfig(**cfg))
    b = augment(base, AugmentConfig(**cfg, n_jobs=2))
    assert np.array_equal(a.design.runs, b.design.runs)
    assert np.array_equal(a.design.runs[:14], base.runs)
    assert a.design.foldover_rows == tuple(range(14))
    assert a.design.n_augmented == 2


def test_augment_uses_center_level_for_quadratic_factors():
    base = load("adsd_n24")
    res = augment(base, AugmentConfig(3, tau2=50.0, model="quad", quad_factors=tuple(range(1, 8)),
                                      n_starts=3, seed=0))
    assert res.design.n == 27
    assert math.isfinite(res.criterion)
    assert set(np.unique(res.design.runs[24:])) <= {-1, 0, 1}


def test_augment_config_validation():
    with pytest.raises(ConfigurationError):
        AugmentConfig(0).validate()
    with pytest.raises(ConfigurationError):
        AugmentConfig(2, tau2=-1).validate()
