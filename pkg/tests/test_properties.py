import itertools

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mmpair.core import (Dataset, ModalityLayout, ModalitySet, MultimodalSample,
                         compose_projection_check, project_modality)
from mmpair.erm import best_bias, best_bias_bruteforce
from mmpair.metric import (DiagonalMetricModel, jacobi_diagonalize, mahalanobis_distance,
                           project_to_constraints)
from mmpair.risk import LossSpec, block_risk, hinge, ustat_risk

finite = st.floats(-1e3, 1e3, allow_nan=False)


@st.composite
def samples_and_sets(draw):
    dims = draw(st.lists(st.integers(1, 3), min_size=1, max_size=5))
    K = len(dims)
    feats = tuple(np.array(draw(st.lists(finite, min_size=d, max_size=d))) for d in dims)
    present = tuple(draw(st.lists(st.booleans(), min_size=K, max_size=K)))
    M = draw(st.sets(st.integers(1, K)))
    N = draw(st.sets(st.sampled_from(sorted(M)))) if M else set()
    x = MultimodalSample(feats, present, draw(st.integers(0, 3)))
    return x, ModalitySet(tuple(N)), ModalitySet(tuple(M))


@given(samples_and_sets())
def test_projection_hierarchy(case):
    x, N, M = case
    assert compose_projection_check(x, N, M)
    once = project_modality(x, M)
    assert project_modality(once, M) == once
    assert once.label == x.label


@given(arrays(float, 4, elements=st.floats(-5, 5)), arrays(float, 4, elements=finite),
       arrays(float, 4, elements=finite), st.floats(0.1, 1e4))
def test_distance_range(lam, x, y, cap):
    m = DiagonalMetricModel(project_to_constraints(lam, 2.0), 0.0, ModalitySet((1,)), 2.0, cap)
    d = mahalanobis_distance(m, x, y)
    assert 0.0 <= d <= cap
    assert d == mahalanobis_distance(m, y, x)


@given(arrays(float, 6, elements=st.floats(-10, 10)), st.floats(0, 5))
def test_constraint_projection_is_feasible_and_idempotent(lam, D):
    mask = np.array([True, False, True, True, False, True])
    p = project_to_constraints(lam, D, mask)
    assert np.all((p >= 0) & (p <= D)) and np.all(p[~mask] == 0)
    assert np.array_equal(project_to_constraints(p, D, mask), p)


@given(st.floats(0, 1e3), st.sampled_from([-1.0, 1.0]), st.floats(0, 1e3), st.floats(0, 5),
       st.floats(0, 50))
def test_loss_is_bounded(d, tau, b, margin, extra):
    spec = LossSpec(margin, margin + extra)
    v = hinge(spec, np.array([d]), np.array([tau]), b)[0]
    assert 0.0 <= v <= spec.clip_C


@settings(max_examples=60, deadline=None)
@given(arrays(float, (4, 2), elements=st.floats(-3, 3)),
       st.lists(st.integers(0, 1), min_size=4, max_size=4),
       arrays(float, 2, elements=st.floats(0, 1)), st.floats(0, 5))
def test_block_average_over_permutations_is_the_ustat(X, labels, lam, b):
    ds = Dataset(ModalityLayout((2,)), X, np.ones((4, 1), bool), np.array(labels))
    m = DiagonalMetricModel(lam, b, ModalitySet((1,)), 1.0, 20.0)
    spec = LossSpec(1.0, 3.0)
    perms = list(itertools.permutations(range(4)))
    avg = np.mean([block_risk(spec, m, ds, np.array(p)).value for p in perms])
    assert abs(avg - ustat_risk(spec, m, ds).value) <= 1e-12


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.integers(1, 30), elements=st.floats(0, 50)), st.data(),
       st.sampled_from([1.5, 4.0, 60.0, float("inf")]), st.sampled_from([3.0, 20.0, 80.0]))
def test_best_bias_is_optimal(dist, data, C, cap):
    tau = np.array(data.draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=dist.size,
                                      max_size=dist.size)))
    spec = LossSpec(1.0, C)
    b, r = best_bias(spec, dist, tau, cap)
    assert 0.0 <= b <= cap
    assert abs(r - best_bias_bruteforce(spec, dist, tau, cap)[1]) <= 1e-9 * max(1.0, r)
    assert abs(r - hinge(spec, dist, tau, b).mean()) <= 1e-9 * max(1.0, r)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_jacobi_agrees_with_lapack(m, seed):
    A = np.random.default_rng(seed).normal(size=(m, m))
    A = A + A.T
    Q, lam = jacobi_diagonalize(A)
    assert np.allclose(lam, np.linalg.eigvalsh(A)[::-1], atol=1e-10)
    assert np.allclose(Q.T @ np.diag(lam) @ Q, A, atol=1e-10)
