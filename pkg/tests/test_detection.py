import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _oracles import brute_min_support
from holireg.detection import (
    MulticollinearityDetector,
    PlantedSpec,
    SmallEigenSpace,
    big_m_for_relation,
    eigen_tail,
    emit_cut,
    evaluate_detection,
    iterative_mc,
    min_support_relation,
    small_eigenvectors,
    synth_generate,
)
from holireg.exceptions import HoliregError, ParameterError
from holireg.linalg import sym_eigen
from holireg.mio import Cut


def six_variable_design(rng, n=60):
    X = rng.normal(size=(n, 6))
    X[:, 2] = X[:, 0] + X[:, 1]
    X[:, 5] = X[:, 3] + X[:, 4]
    return X


def planted_design(rng, p, sizes, n=40):
    X = rng.normal(size=(n, p))
    free = list(rng.permutation(p))
    truth = []
    for q in sizes:
        t = free.pop()
        src = rng.choice([j for j in range(p) if j != t], size=q - 1, replace=False)
        X[:, t] = X[:, src] @ rng.uniform(0.5, 2.0, size=q - 1)
        truth.append(tuple(sorted([t, *src])))
    return X, truth


def space_from_basis(V):
    p, m = V.shape
    return SmallEigenSpace(V, np.zeros(m), 1e-6, np.ones(p - m), np.eye(p))


# -- eigen space ---------------------------------------------------------------

def test_orthogonal_columns_give_empty_space():
    X = np.eye(5) * 2.0
    assert small_eigenvectors(X, 0.5).dim == 0
    assert iterative_mc(small_eigenvectors(X, 0.5)) == []


def test_duplicated_column_direction(rng):
    X = rng.normal(size=(30, 4))
    X[:, 1] = X[:, 0]
    space = small_eigenvectors(X, 1e-8)
    assert space.dim == 1
    v = space.vectors[:, 0]
    target = np.array([1.0, -1.0, 0, 0]) / math.sqrt(2)
    assert abs(abs(v @ target) - 1.0) < 1e-10


def test_space_invariants(rng):
    X = six_variable_design(rng)
    space = small_eigenvectors(X, 1e-2)
    assert np.all(space.values < 1e-2)
    assert np.all(space.complement_values >= 1e-2)
    assert np.allclose(space.vectors.T @ space.vectors, np.eye(space.dim), atol=1e-10)


def test_intercept_column_appended(rng):
    X = rng.normal(size=(40, 3))
    X[:, 2] = 1.0 + 0 * X[:, 2]
    space = small_eigenvectors(X, 1e-8, add_intercept=True)
    assert space.n_features == 4
    assert space.dim == 1
    rel = iterative_mc(space)
    assert rel[0].support == (2, 3)


def test_noisy_triple_direction_within_angle():
    target = np.array([1.0, 1.0, -1.0]) / math.sqrt(3)
    for seed in range(10):
        r = np.random.default_rng(seed)
        X = r.normal(size=(200, 3))
        X[:, 2] = X[:, 0] + X[:, 1]
        X = X + 0.01 * r.normal(size=X.shape)
        space = small_eigenvectors(X, 1.0)
        assert space.dim == 1
        cosine = abs(space.vectors[:, 0] @ target)
        assert math.acos(min(cosine, 1.0)) < 0.05


def test_epsilon_must_be_positive(rng):
    with pytest.raises(ParameterError):
        small_eigenvectors(rng.normal(size=(5, 2)), 0.0)


# -- minimum-support relations ---------------------------------------------------

def test_six_variable_example_min_support():
    V = np.zeros((6, 2))
    V[:3, 0] = np.array([1, 1, -1]) / math.sqrt(3)
    V[3:, 1] = np.array([1, 1, -1]) / math.sqrt(3)
    rel = min_support_relation(space_from_basis(V))
    assert rel.size == 3
    assert rel.support in ((0, 1, 2), (3, 4, 5))
    # ties go to the lexicographically smallest support
    assert rel.support == (0, 1, 2)


def test_six_variable_example_fully_cut_is_infeasible():
    V = np.zeros((6, 2))
    V[:3, 0] = np.array([1, 1, -1]) / math.sqrt(3)
    V[3:, 1] = np.array([1, 1, -1]) / math.sqrt(3)
    cuts = [Cut((0, 1, 2)), Cut((3, 4, 5))]
    assert min_support_relation(space_from_basis(V), exclusion_cuts=cuts) is None


def test_six_variable_example_iterative(rng):
    space = small_eigenvectors(six_variable_design(rng), 1e-2)
    rels = iterative_mc(space)
    assert [r.support for r in rels] == [(0, 1, 2), (3, 4, 5)]
    assert [str(emit_cut(r)) for r in rels] == ["z0 + z1 + z2 <= 2", "z3 + z4 + z5 <= 2"]


def test_relation_invariants(rng):
    space = small_eigenvectors(six_variable_design(rng), 1e-2)
    for rel in iterative_mc(space):
        a = rel.coefficients
        assert abs(np.linalg.norm(a) - 1.0) < 1e-8
        assert np.allclose(space.vectors @ rel.theta, a, atol=1e-8)
        off = np.setdiff1d(np.arange(6), rel.support)
        assert np.all(np.abs(a[off]) == 0)


def test_random_two_dim_space_matches_enumeration(rng):
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.normal(size=(6, 2)))
        rel = min_support_relation(space_from_basis(Q))
        assert rel.size == brute_min_support(Q)


def test_planted_spaces_match_enumeration(rng):
    for _ in range(30):
        p = int(rng.integers(4, 9))
        sizes = [int(rng.integers(2, p)) for _ in range(int(rng.integers(1, 4)))]
        X, _ = planted_design(rng, p, sizes)
        space = small_eigenvectors(X, 1e-6)
        if space.dim == 0 or space.dim > 3:
            continue
        rel = min_support_relation(space)
        assert rel.size == brute_min_support(space.vectors)


def test_cuts_respected_and_match_enumeration(rng):
    for _ in range(20):
        X, truth = planted_design(rng, 7, [3, 3])
        space = small_eigenvectors(X, 1e-6)
        cuts = [Cut(truth[0])]
        rel = min_support_relation(space, exclusion_cuts=cuts)
        expected = brute_min_support(space.vectors, [truth[0]])
        if expected is None:
            assert rel is None
        else:
            assert rel.size == expected
            assert not set(truth[0]) <= set(rel.support)


def test_delta_must_be_positive():
    V = np.eye(3)[:, :1]
    with pytest.raises(ParameterError):
        min_support_relation(space_from_basis(V), delta=0.0)


def test_empty_space_returns_none():
    assert min_support_relation(space_from_basis(np.zeros((4, 0)))) is None


# -- big-M and cuts ------------------------------------------------------------

def test_big_m_values():
    assert big_m_for_relation(1) == 1.0
    assert big_m_for_relation(4) == 0.5
    assert big_m_for_relation(2) == pytest.approx(0.7071068, abs=1e-6)
    with pytest.raises(ParameterError):
        big_m_for_relation(0)


def test_emit_cut_forms():
    assert emit_cut((0, 1, 2)).rhs == 2
    assert str(emit_cut((3, 4, 5))) == "z3 + z4 + z5 <= 2"
    single = emit_cut((7,))
    assert single.rhs == 0 and str(single) == "z7 <= 0"
    with pytest.raises(HoliregError):
        emit_cut(())


# -- iterative detection -------------------------------------------------------------

def test_iterative_relations_independent_and_cut_monotone(rng):
    for _ in range(10):
        X, _ = planted_design(rng, 10, [3, 3, 4], n=60)
        space = small_eigenvectors(X, 1e-6)
        rels = iterative_mc(space)
        assert len(rels) <= space.dim
        A = np.array([r.coefficients for r in rels])
        assert np.linalg.eigvalsh(A @ A.T).min() > 1e-8
        for i, r in enumerate(rels):
            for prior in rels[:i]:
                assert not set(prior.support) <= set(r.support)


def test_noiseless_relations_obey_tail_bound(rng):
    for _ in range(10):
        X, _ = planted_design(rng, 8, [3, 4])
        space = small_eigenvectors(X, 1e-2)
        bound = math.sqrt((1 + space.complement_values.sum()) * space.epsilon)
        for rel in iterative_mc(space):
            assert np.linalg.norm(X @ rel.coefficients) <= bound


def test_planted_recovery_sizes_3_3_4():
    hits = 0
    for seed in range(10):
        spec = PlantedSpec((3, 3, 4), noise_sigma=0.01, seed=seed)
        X, truth = synth_generate(200, 30, spec)
        found = [r.support for r in iterative_mc(small_eigenvectors(X, 1.0))]
        hits += sorted(found) == sorted(truth)
    assert hits >= 9


# -- Theorem-2 style properties ---------------------------------------------------

@given(st.integers(0, 10_000), st.integers(3, 10))
def test_property_small_image_implies_close_to_space(seed, p):
    r = np.random.default_rng(seed)
    X = r.normal(size=(p + 5, p))
    X[:, -1] = X[:, :-1] @ r.normal(size=p - 1) + 1e-4 * r.normal(size=p + 5)
    eig = sym_eigen(X.T @ X)
    a = eig.vectors[:, 0] + 1e-6 * r.normal(size=p)
    a /= np.linalg.norm(a)
    eps = 2 * np.linalg.norm(X @ a)
    tail = eigen_tail(a, eig, eps)
    if tail.norm_bound > 0:
        assert tail.norm < tail.norm_bound + 1e-9


@given(st.integers(0, 10_000), st.integers(3, 10))
def test_property_close_to_space_implies_small_image(seed, p):
    r = np.random.default_rng(seed)
    X = r.normal(size=(p + 5, p))
    X[:, 0] = X[:, 1] - X[:, 2] + 1e-3 * r.normal(size=p + 5)
    eps = 0.5
    space = small_eigenvectors(X, eps)
    if space.dim == 0:
        return
    u = space.vectors @ r.normal(size=space.dim)
    b = r.normal(size=p)
    b *= 0.5 * math.sqrt(eps) / np.linalg.norm(b)
    a = u + b
    a /= np.linalg.norm(a)
    tail = eigen_tail(a, space.eigensystem, eps)
    if tail.norm < math.sqrt(eps):
        bound = math.sqrt((1 + space.complement_values.sum()) * eps)
        assert np.linalg.norm(X @ a) < bound + 1e-9


# -- synthetic generator and scoring -----------------------------------------------

def test_synth_without_relations_is_raw_gaussian():
    X, truth = synth_generate(20, 5, PlantedSpec(seed=3))
    assert truth == []
    assert np.array_equal(X, np.random.default_rng(3).normal(size=(20, 5)))


def test_synth_exact_relation_is_singular():
    X, truth = synth_generate(100, 10, PlantedSpec((3,), seed=1))
    vals = np.linalg.eigvalsh(X.T @ X)
    assert vals[0] <= 1e-8 * vals[-1]
    assert len(truth[0]) == 3


def test_synth_noisy_relation_below_threshold():
    for seed in range(10):
        X, _ = synth_generate(200, 30, PlantedSpec((3,), noise_sigma=0.01, seed=seed))
        assert np.linalg.eigvalsh(X.T @ X)[0] < 1.0


def test_synth_deterministic_and_distinct_targets():
    spec = PlantedSpec.from_counts(3, 2, 1, 0.0, seed=5)
    X1, t1 = synth_generate(50, 40, spec)
    X2, t2 = synth_generate(50, 40, spec)
    assert np.array_equal(X1, X2) and t1 == t2
    assert sorted(len(s) for s in t1)[:5] == [3, 3, 3, 4, 4]
    assert 5 <= max(len(s) for s in t1) <= 10


def test_synth_rejects_impossible_spec():
    with pytest.raises(ParameterError):
        synth_generate(10, 4, PlantedSpec((3, 3, 3)))
    with pytest.raises(ParameterError):
        PlantedSpec((1,))
    with pytest.raises(ParameterError):
        PlantedSpec((3,), noise_sigma=-1.0)


def test_evaluate_detection_examples():
    assert evaluate_detection([(1, 2, 3)], [(1, 2, 3)]) == (100.0, 0.0)
    assert evaluate_detection([], [(1, 2, 3)]) == (0.0, 0.0)
    assert evaluate_detection([(1, 2, 3), (4, 5)], [(1, 2, 3)]) == (100.0, 50.0)


# -- estimator -----------------------------------------------------------------

def test_detector_estimator(rng):
    det = MulticollinearityDetector(epsilon=1e-2).fit(six_variable_design(rng))
    assert det.supports_ == [(0, 1, 2), (3, 4, 5)]
    assert det.n_features_in_ == 6
    assert det.get_params()["epsilon"] == 1e-2
