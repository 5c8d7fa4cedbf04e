import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rllg.sac import Batch, actor_loss, select_action
from rllg.strategies import (
    CategoricalPolicy,
    Perturbation,
    Scheduler,
    Strategy,
    StrategyConfig,
    bc_metric,
    compose_action,
    discrete_compose,
    pag_objective,
    pag_perturbation_update,
    pig_penalty,
    pig_policy_loss,
    rg_shaped_reward,
    target_action_hook,
    update_step,
)

from helpers import AnalyticQ, HalfSpaceGuide, random_batch, tiny_agent

ACTIVE = np.array([1.0, 0.2, -0.3])
INACTIVE = np.array([-1.0, 0.2, -0.3])
GUIDE_ACTION = np.array([0.9, -0.95])


def make(kind, phi=0.2, schedule="const", beta0=1.0, seed=0, **kw):
    cfg = StrategyConfig(kind, Scheduler(schedule, beta0, 0.8, 50), phi=phi, **kw)
    return Strategy(cfg, 3, 2, hidden=(6,), rng=np.random.default_rng(seed + 100))


class TestScheduler:
    def test_values(self):
        assert Scheduler("const", 0.7)(123) == 0.7
        decay = Scheduler("decay", 1.0, 0.9, 50)
        assert decay(100) == pytest.approx(0.81, abs=1e-15)
        assert decay(49) == 1.0 and decay(50) == 0.9
        rise = Scheduler("rise", 1.0, 0.8, 50)
        assert rise(0) == 0.0 and rise(50) == pytest.approx(0.2)

    @settings(max_examples=50, deadline=None)
    @given(delta=st.floats(0.01, 0.99), period=st.integers(1, 80), k=st.integers(0, 2000))
    def test_monotone_plateaus(self, delta, period, k):
        decay, rise = Scheduler("decay", 1.0, delta, period), Scheduler("rise", 1.0, delta, period)
        assert 0.0 <= decay(k + 1) <= decay(k) <= 1.0
        assert 0.0 <= rise(k) <= rise(k + 1) <= 1.0
        start = (k // period) * period
        assert decay(start) == decay(start + period - 1)
        assert rise(start) == rise(start + period - 1)

    @pytest.mark.parametrize("kwargs", [dict(kind="cosine"), dict(kind="decay", delta=1.0),
                                        dict(period=0), dict(beta0=-1.0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            Scheduler(**kwargs)


class TestConfig:
    @pytest.mark.parametrize("kwargs", [dict(kind="dqn"), dict(phi=-0.1),
                                        dict(lambda_threshold=1.5), dict(bc_metric="kl")])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            StrategyConfig(**kwargs)


class TestComposeAction:
    guide = HalfSpaceGuide(GUIDE_ACTION)

    @pytest.mark.parametrize("kind", ["sag", "naive-sag"])
    def test_switching_takes_guide_action(self, kind):
        agent = tiny_agent(0)
        np.testing.assert_array_equal(compose_action(make(kind), agent, self.guide, ACTIVE, 0),
                                      GUIDE_ACTION)

    def test_pag_zero_phi_or_beta_is_guide(self):
        agent = tiny_agent(0)
        for strategy in (make("pag", phi=0.0), make("pag", schedule="rise")):
            for mode in ("explore", "evaluate"):
                a = compose_action(strategy, agent, self.guide, ACTIVE, 0, mode)
                np.testing.assert_array_equal(a, GUIDE_ACTION)

    @pytest.mark.parametrize("kind", ["sac", "sag", "naive-sag", "rg", "pig", "pag"])
    def test_outside_region_uses_policy_stream(self, kind):
        a, b = tiny_agent(3), tiny_agent(3)
        composed = compose_action(make(kind), a, self.guide, INACTIVE, 0)
        np.testing.assert_array_equal(composed, select_action(b, INACTIVE, "explore"))

    @pytest.mark.parametrize("kind", ["sac", "rg", "pig"])
    def test_shaping_strategies_never_switch(self, kind):
        a, b = tiny_agent(4), tiny_agent(4)
        composed = compose_action(make(kind), a, self.guide, ACTIVE, 0, "evaluate")
        np.testing.assert_array_equal(composed, select_action(b, ACTIVE, "evaluate"))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 10_000), phi=st.floats(0.0, 2.0), beta=st.floats(0.0, 1.0))
    def test_pag_deviation_bounded(self, seed, phi, beta):
        rng = np.random.default_rng(seed)
        strategy = make("pag", phi=phi, beta0=beta, seed=seed)
        strategy.perturbation.net.params[:] = rng.normal(size=strategy.perturbation.net.params.size) * 5
        guide = HalfSpaceGuide(rng.uniform(-1, 1, size=2))
        s = np.abs(rng.normal(size=(8, 3))) + 0.01
        a_g = guide.action(s)
        xi = strategy.perturbation(s, a_g)
        assert np.all(np.abs(beta * xi) <= beta * phi)
        a = strategy.guide_branch(guide, s, 0)
        assert np.all(np.abs(a) <= 1.0)
        assert np.all(np.abs(a - a_g) <= beta * phi + 1e-12)


class TestTargetHook:
    guide = HalfSpaceGuide(GUIDE_ACTION)

    def test_sag_switched_target(self):
        agent = tiny_agent(0)
        s2 = np.stack([ACTIVE, INACTIVE])
        a2, logp = target_action_hook(make("sag"), agent, self.guide)(s2, 0)
        np.testing.assert_array_equal(a2[0], GUIDE_ACTION)
        assert logp[0] == 0.0 and logp[1] != 0.0

    def test_naive_sag_bootstraps_with_policy(self):
        a, b = tiny_agent(1), tiny_agent(1)
        s2 = np.stack([ACTIVE, INACTIVE])
        a2, logp = target_action_hook(make("naive-sag"), a, self.guide)(s2, 0)
        expected, expected_logp, *_ = b.sample(s2)
        np.testing.assert_array_equal(a2, expected)
        np.testing.assert_array_equal(logp, expected_logp)

    def test_pag_zero_phi_matches_sag(self):
        a, b = tiny_agent(2), tiny_agent(2)
        s2 = np.random.default_rng(0).normal(size=(20, 3))
        sag = target_action_hook(make("sag"), a, self.guide)(s2, 7)
        pag = target_action_hook(make("pag", phi=0.0), b, self.guide)(s2, 7)
        np.testing.assert_array_equal(sag[0], pag[0])
        np.testing.assert_array_equal(sag[1], pag[1])

    @pytest.mark.parametrize("kind", ["sag", "pag"])
    def test_target_uses_executed_guide_branch(self, kind):
        agent = tiny_agent(5)
        strategy = make(kind, phi=0.6)
        s2 = np.abs(np.random.default_rng(1).normal(size=(10, 3))) + 0.01
        a2, _ = target_action_hook(strategy, agent, self.guide)(s2, 3)
        for i in range(10):
            np.testing.assert_array_equal(a2[i], compose_action(strategy, agent, self.guide, s2[i], 3))


class TestBcMetric:
    def test_neg_sq_dist(self):
        agent = tiny_agent(0)
        agent.policy.params[:] = 0.0
        s = np.zeros((1, 3))
        assert bc_metric(agent, s, np.zeros((1, 2)), "neg-sq-dist")[0] == 0.0
        assert bc_metric(agent, s, np.array([[1.0, 0.0]]), "neg-sq-dist")[0] == -1.0

    def test_guide_log_density_finite_at_bounds(self):
        agent = tiny_agent(0)
        m = bc_metric(agent, np.ones((2, 3)), np.array([[1.0, -1.0], [0.2, 0.1]]))
        assert np.all(np.isfinite(m))


class TestShaping:
    def test_rg_examples(self):
        const = Scheduler("const", 0.5)
        assert rg_shaped_reward(1.0, 0.0, -3.0, 0, const) == 1.0
        assert rg_shaped_reward(1.0, 1.0, -3.0, 10, Scheduler("rise", 1.0)) == 1.0
        assert rg_shaped_reward(1.0, 1.0, -0.04, 0, const) == pytest.approx(0.98, abs=1e-15)

    def test_pig_penalty_vanishes_without_guide(self):
        rng = np.random.default_rng(0)
        a, b = tiny_agent(1), tiny_agent(1)
        batch = random_batch(rng, 8, 3, 2)
        batch.s[:, 0] = -np.abs(batch.s[:, 0]) - 0.1  # guide inactive everywhere
        noise = rng.normal(size=(8, 2))
        guide = HalfSpaceGuide(GUIDE_ACTION)
        plain, _ = actor_loss(a, batch, noise)
        with_penalty, _ = pig_policy_loss(b, batch, guide, 0, Scheduler("const", 1.0), noise=noise)
        assert plain == with_penalty

    def test_pig_weight_follows_schedule(self):
        rng = np.random.default_rng(1)
        agent = tiny_agent(2)
        s = np.abs(rng.normal(size=(6, 3))) + 0.1
        mean, log_std, _ = agent.policy_dist(s)
        guide = HalfSpaceGuide(GUIDE_ACTION)
        decay = Scheduler("decay", 1.0, 0.9, 50)
        at0 = pig_penalty(guide, 0, decay, "neg-sq-dist")(s, mean, log_std)[0]
        at100 = pig_penalty(guide, 100, decay, "neg-sq-dist")(s, mean, log_std)[0]
        assert at100 == pytest.approx(0.81 * at0, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), beta=st.floats(0.0, 3.0))
    def test_pig_distance_term_never_rewards(self, seed, beta):
        # the penalty added to the loss is -beta * mean(lambda * M) with M <= 0
        rng = np.random.default_rng(seed)
        agent = tiny_agent(seed % 50)
        s = rng.normal(size=(10, 3))
        mean, log_std, _ = agent.policy_dist(s)
        guide = HalfSpaceGuide(rng.uniform(-1, 1, 2), soft=True)
        value = pig_penalty(guide, 0, Scheduler("const", beta), "neg-sq-dist")(s, mean, log_std)[0]
        assert value >= 0.0


class TestPerturbationUpdate:
    def test_inactive_batch_leaves_phi(self):
        agent = tiny_agent(0)
        strategy = make("pag", phi=0.5)
        before = strategy.perturbation.net.params.copy()
        batch = random_batch(np.random.default_rng(0), 8, 3, 2)
        batch.s[:, 0] = -np.abs(batch.s[:, 0]) - 0.1
        loss = pag_perturbation_update(agent, strategy.perturbation, batch,
                                       HalfSpaceGuide(GUIDE_ACTION), 0, Scheduler())
        assert loss == 0.0
        np.testing.assert_array_equal(strategy.perturbation.net.params, before)

    def test_zero_phi_has_zero_gradient(self):
        agent = tiny_agent(0)
        strategy = make("pag", phi=0.0)
        batch = random_batch(np.random.default_rng(1), 8, 3, 2)
        batch.s[:, 0] = np.abs(batch.s[:, 0]) + 0.1
        strategy.perturbation.net.zero_grad()
        pag_objective(agent, strategy.perturbation, batch, HalfSpaceGuide(GUIDE_ACTION), 0, 1.0)
        assert not strategy.perturbation.net.grad.any()

    def test_learns_offset_of_analytic_critic(self):
        a_g = np.array([0.2, -0.4])
        agent = tiny_agent(0)
        agent.q1 = AnalyticQ(3, a_g + 0.1)
        agent.q2 = AnalyticQ(3, a_g + 0.1)
        pert = Perturbation(3, 2, 0.5, hidden=(16,), rng=np.random.default_rng(0), lr=3e-3)
        guide = HalfSpaceGuide(a_g)
        rng = np.random.default_rng(1)
        for _ in range(5000):
            s = rng.normal(size=(32, 3))
            s[:, 0] = np.abs(s[:, 0]) + 0.01
            batch = Batch(s, np.zeros((32, 2)), np.zeros(32), s, np.zeros(32))
            pag_perturbation_update(agent, pert, batch, guide, 0, Scheduler("const", 1.0))
        s = np.abs(rng.normal(size=(50, 3))) + 0.01
        xi = pert(s, guide.action(s))
        assert np.all(np.abs(xi - 0.1) <= 0.02)


class TestUpdateStep:
    @pytest.mark.parametrize("kind", ["sac", "sag", "naive-sag", "rg", "pig", "pag"])
    def test_all_strategies_update_cleanly(self, kind):
        rng = np.random.default_rng(0)
        agent = tiny_agent(0)
        strategy = make(kind, phi=0.3)
        guide = HalfSpaceGuide(GUIDE_ACTION)
        for k in range(5):
            batch = random_batch(rng, 16, 3, 2)
            raw_r = batch.r.copy()
            info = update_step(strategy, agent, guide, batch, k)
            assert np.isfinite([info.critic_loss, info.actor_loss, info.alpha_loss]).all()
            if kind != "rg":
                np.testing.assert_array_equal(batch.r, raw_r)
        for net in agent.networks().values():
            assert np.all(np.isfinite(net.params))


class TestDiscrete:
    def test_extremes(self):
        rng = np.random.default_rng(0)
        probs = np.array([0.5, 0.3, 0.2])
        assert all(discrete_compose(0.0, 2, 1.0, probs, rng) == 2 for _ in range(200))
        draws = [discrete_compose(1.0, 2, 1.0, np.array([1.0, 0.0, 0.0]), rng) for _ in range(200)]
        assert set(draws) == {0}
        outside = [discrete_compose(0.0, 2, 0.0, np.array([0.0, 1.0, 0.0]), rng) for _ in range(50)]
        assert set(outside) == {1}

    def test_guide_frequency(self):
        rng = np.random.default_rng(1)
        probs = np.array([1.0, 0.0, 0.0])  # policy never picks the guide's action
        draws = np.array([discrete_compose(0.3, 2, 1.0, probs, rng) for _ in range(10_000)])
        assert abs(np.mean(draws == 2) - 0.7) <= 0.015

    def test_categorical_policy(self):
        pol = CategoricalPolicy(5, 3, rng=np.random.default_rng(0))
        p = pol.probs(np.eye(5))
        np.testing.assert_allclose(p.sum(axis=1), 1.0)
        assert np.all(p > 0)
