import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from recaudit.distances import (
    SupportMismatchError,
    distance_grad,
    hellinger,
    l2_distance,
    local_weights,
)
from recaudit.policy import softmax_distribution


def test_hellinger_examples():
    assert hellinger([0.2, 0.8], [0.2, 0.8]) == 0.0
    assert hellinger([1.0, 0.0], [0.0, 1.0]) == 1.0
    assert hellinger([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.sqrt(1 - math.sqrt(0.5)), abs=1e-15)
    assert hellinger([1.0, 0.0], [0.5, 0.5]) == pytest.approx(0.54120, abs=5e-6)


def test_l2_examples():
    assert l2_distance([0.3, 0.7], [0.3, 0.7]) == 0.0
    assert l2_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(math.sqrt(2))
    rng = np.random.default_rng(0)
    p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6))
    assert l2_distance(p, q) == pytest.approx(math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q))))


def test_support_mismatch():
    with pytest.raises(SupportMismatchError):
        hellinger([0.5, 0.5], [1.0])
    a = softmax_distribution([0.0, 1.0], 1.0, [1, 2])
    b = softmax_distribution([0.0, 1.0], 1.0, [1, 3])
    with pytest.raises(SupportMismatchError):
        l2_distance(a, b)
    with pytest.raises(SupportMismatchError):
        hellinger(a, [0.5, 0.5])


simplex = arrays(np.float64, 5, elements=st.floats(0.05, 1.0)).map(lambda x: x / x.sum())


@settings(max_examples=100, deadline=None)
@given(simplex, simplex)
def test_hellinger_matches_bhattacharyya_form(p, q):
    ref = math.sqrt(max(0.0, 1 - float(np.sum(np.sqrt(p * q)))))
    h = hellinger(p, q)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(ref, abs=1e-7)
    assert h == pytest.approx(hellinger(q, p), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(simplex, simplex, st.sampled_from(["l2", "hellinger"]))
def test_distance_gradients_by_finite_differences(p, q, kind):
    f = hellinger if kind == "hellinger" else l2_distance
    v = f(p, q)
    if v < 1e-3:
        return
    g = distance_grad(kind, p, q, v)
    h = 1e-6
    for j in range(len(p)):
        e = np.zeros_like(p)
        e[j] = h
        # unnormalized perturbation: the hellinger value uses the 0.5 * sum form
        if kind == "hellinger":
            fd = (math.sqrt(0.5 * np.sum((np.sqrt(p + e) - np.sqrt(q)) ** 2))
                  - math.sqrt(0.5 * np.sum((np.sqrt(p - e) - np.sqrt(q)) ** 2))) / (2 * h)
        else:
            fd = (np.linalg.norm(p + e - q) - np.linalg.norm(p - e - q)) / (2 * h)
        assert g[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


@settings(max_examples=60, deadline=None)
@given(simplex, arrays(np.float64, 5, elements=st.floats(-1, 1)), st.sampled_from(["l2", "hellinger"]))
def test_local_weights_first_order(p, direction, kind):
    dp = direction - direction.mean()
    if np.abs(dp).max() < 1e-3:
        return
    t = 1e-6
    f = hellinger if kind == "hellinger" else l2_distance
    approx = np.linalg.norm(local_weights(kind, p) * dp) * t
    assert f(p + t * dp, p) == pytest.approx(approx, rel=1e-3)
