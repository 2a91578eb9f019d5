import numpy as np
import pytest

from recaudit.audit import AuditSpec, Metric, RatingParams, run_audit
from recaudit.errors import ConfigError, PreconditionError
from recaudit.optim import OptimizerConfig


def test_spec_validation():
    with pytest.raises(ConfigError):
        AuditSpec(Metric.PAST_REACH, 0, 1, item=2)
    with pytest.raises(ConfigError):
        AuditSpec(Metric.PAST_REACH, 2, 1)
    with pytest.raises(ConfigError):
        AuditSpec(Metric.PAST_STAB, 2, 1, adversary=1)
    with pytest.raises(ConfigError):
        AuditSpec(Metric.FUTURE_STAB, 2, 1, adversary=2, optimizer=OptimizerConfig(kind="oracle"))
    with pytest.raises(ConfigError):
        AuditSpec("future-reach", 2, 1, item=2, beta=0)
    assert AuditSpec("past-stab", 2, 1, adversary=3).metric is Metric.PAST_STAB


def test_rating_params_checks():
    with pytest.raises(ConfigError):
        RatingParams("past", np.array([0.5]))
    with pytest.raises(ConfigError):
        RatingParams("future", np.array([3.0]))
    assert RatingParams("future", np.full((2, 3), 2.0)).values.shape == (2, 3)


def test_rated_target_raises(toy_factory):
    toy = toy_factory(30)
    u, _ = toy.user_pair()
    rated = int(toy.data.holdout(3).train.user_history_ids(u)[0][0])
    with pytest.raises(PreconditionError):
        run_audit(AuditSpec(Metric.PAST_REACH, 3, u, item=rated), toy.past, toy.data)


def test_zero_epochs_gives_unit_lift(toy_factory):
    toy = toy_factory(31)
    u, _ = toy.user_pair()
    spec = AuditSpec(Metric.PAST_REACH, 3, u, item=toy.unrated_item(u, toy.past),
                     optimizer=OptimizerConfig(epochs=0))
    res = run_audit(spec, toy.past, toy.data)
    assert res.lift == 1.0 and res.objective_trace == []
    items, ratings = toy.data.user_history_ids(u)
    assert res.params_at_opt.values.tolist() == ratings[-3:].tolist()


@pytest.mark.parametrize("kind", ["gd", "zo"])
def test_past_reach_lift_at_least_one(toy_factory, kind):
    toy = toy_factory(32)
    for _ in range(4):
        u, _ = toy.user_pair()
        spec = AuditSpec(Metric.PAST_REACH, 3, u, item=toy.unrated_item(u, toy.past), beta=2.0,
                         optimizer=OptimizerConfig(kind=kind, epochs=10, num_z=4))
        res = run_audit(spec, toy.past, toy.data)
        assert res.lift >= 1.0
        assert np.all(np.diff(res.objective_trace) >= 0)
        assert res.metadata["optimizer"] == kind
        assert (res.metadata["eps"] is None) == (kind == "gd")


def test_gd_does_not_beat_oracle_on_past_stab(toy_factory):
    toy = toy_factory(33)
    for _ in range(5):
        u, v = toy.user_pair()
        kw = dict(metric=Metric.PAST_STAB, k=3, user=u, adversary=v, beta=1.5)
        gd = run_audit(AuditSpec(**kw, optimizer=OptimizerConfig(epochs=40)), toy.past, toy.data)
        orc = run_audit(AuditSpec(**kw, optimizer=OptimizerConfig(kind="oracle")), toy.past, toy.data)
        assert gd.baseline == pytest.approx(0.0, abs=1e-12)
        assert gd.optimized <= orc.optimized + 1e-9
        assert gd.lift is None
        assert set(orc.params_at_opt.values.tolist()) <= {1.0, 5.0}


def test_future_audits_run(toy_factory):
    toy = toy_factory(34)
    u, v = toy.user_pair()
    r = run_audit(AuditSpec(Metric.FUTURE_REACH, 2, u, item=toy.unrated_item(u, toy.full),
                            optimizer=OptimizerConfig(epochs=5)), toy.full, toy.data)
    assert 0 < r.baseline <= 1 and r.lift > 0
    assert r.params_at_opt.values.shape == (2, len(toy.full.item_ids))
    s = run_audit(AuditSpec(Metric.FUTURE_STAB, 2, u, adversary=v, distance="l2",
                            optimizer=OptimizerConfig(epochs=5)), toy.full, toy.data)
    assert s.optimized >= s.baseline >= 0
    assert s.instability == s.optimized
