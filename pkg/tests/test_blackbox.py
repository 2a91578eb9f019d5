import numpy as np
import pytest

from recaudit import audit
from recaudit.blackbox import BlackBoxQuery, MfAdapter, blackbox_query
from recaudit.errors import ConfigError
from recaudit.mf import update_user_vector
from recaudit.policy import RecPolicy, softmax_probs


def _own_softmax(model, data, user, beta, p=None):
    rated = set(data.user_history_ids(user)[0].tolist())
    ids = np.array([x for x in model.item_ids.tolist() if x not in rated])
    p = model.P[model.uidx(user)] if p is None else p
    return ids, softmax_probs(model.Q[model.item_indices(ids)] @ p, beta)


def test_empty_and_factual_edits_give_model_distribution(toy_factory):
    toy = toy_factory(20)
    ad = MfAdapter(toy.full, toy.data)
    u, _ = toy.user_pair()
    ids, probs = _own_softmax(toy.full, toy.data, u, 1.5)
    pol = RecPolicy.softmax(1.5)
    d0 = blackbox_query(ad, BlackBoxQuery(u, (), pol))
    assert d0.items.tolist() == ids.tolist()
    assert np.allclose(d0.probs, probs, atol=1e-14)
    items, ratings = toy.data.user_history_ids(u)
    same = [(u, int(i), float(r)) for i, r in zip(items[:3], ratings[:3])]
    d1 = blackbox_query(ad, BlackBoxQuery(u, same, pol))
    assert np.array_equal(d1.probs, d0.probs)


def test_single_own_edit_matches_refit(toy_factory):
    toy = toy_factory(21)
    ad = MfAdapter(toy.full, toy.data, ridge=1e-6)
    u, _ = toy.user_pair()
    j = toy.unrated_item(u, toy.full)
    items, ratings = toy.data.user_history_ids(u)
    all_items = sorted(items.tolist() + [j])
    merged = {**dict(zip(items.tolist(), ratings.tolist())), j: 4.5}
    p = update_user_vector(toy.full.Q[toy.full.item_indices(all_items)], [merged[i] for i in all_items], 1e-6)
    rated = set(all_items)
    ids = np.array([x for x in toy.full.item_ids.tolist() if x not in rated])
    ref = softmax_probs(toy.full.Q[toy.full.item_indices(ids)] @ p, 0.8)
    d = blackbox_query(ad, BlackBoxQuery(u, [(u, j, 4.5)], RecPolicy.softmax(0.8)))
    assert d.items.tolist() == ids.tolist()
    assert np.allclose(d.probs, ref, atol=1e-12)
    assert d.probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_query_validation(toy_factory):
    toy = toy_factory(22)
    u, v = toy.user_pair()
    with pytest.raises(ConfigError):
        BlackBoxQuery(u, [(u, 1, 6.0)])
    with pytest.raises(ConfigError):
        BlackBoxQuery(u, update="both")
    ad = MfAdapter(toy.full, toy.data)
    with pytest.raises(ConfigError):
        ad.query(BlackBoxQuery(u, [(v, 1, 3.0)], update="user"))


def test_top_one_policy_is_point_mass(toy_factory):
    toy = toy_factory(23)
    u, _ = toy.user_pair()
    ids, probs = _own_softmax(toy.full, toy.data, u, 1.0)
    d = MfAdapter(toy.full, toy.data).query(BlackBoxQuery(u))
    assert d.prob(int(ids[np.argmax(probs)])) == 1.0


@pytest.mark.parametrize("metric", list(audit.Metric))
def test_blackbox_objectives_agree_with_white_box(toy_factory, metric):
    # two independent routes to the same number: closed-form objective vs adapter queries
    toy = toy_factory(24)
    rng = np.random.default_rng(0)
    for _ in range(5):
        u, v = toy.user_pair()
        model = toy.past if metric.is_past else toy.full
        spec = audit.AuditSpec(metric, 3, u, item=toy.unrated_item(u, model), adversary=v, beta=1.2)
        wb = audit.build_objective(spec, model, toy.data)
        bb = audit.build_blackbox_objective(spec, audit.default_adapter(spec, model, toy.data), model, toy.data)
        for _ in range(3):
            theta = rng.uniform(1, 5, wb.shape)
            assert bb(theta) == pytest.approx(wb(theta), rel=1e-7, abs=1e-12)
