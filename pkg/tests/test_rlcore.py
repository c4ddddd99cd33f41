import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclerl import env, policy, rlcore
from cyclerl.env import Question
from cyclerl.policy import PolicyParams, Response
from cyclerl.rlcore import ClipSpec, Group, OptimizerState

from conftest import random_params


# -- capped reward -------------------------------------------------------------


def test_capped_reward_golden_boundaries():
    q = Question.from_digits([3, 1, 4, 1, 5])
    gold = env.golden_tokens(q)
    k = q.k
    assert rlcore.capped_reward(q, gold, k + 2) == 1
    assert rlcore.capped_reward(q, gold, k + 10) == 1
    assert rlcore.capped_reward(q, gold, k + 1) == 1
    assert rlcore.capped_reward(q, gold, k) == 0
    wrong = gold[:-2] + [env.ans_token((q.answer + 1) % 10), env.EOS]
    assert all(rlcore.capped_reward(q, wrong, c) == 0 for c in range(1, k + 5))


def test_capped_reward_matches_bruteforce_prefix():
    gen = np.random.default_rng(5)
    for _ in range(1000):
        q = Question.from_digits(gen.integers(0, 10, size=gen.integers(1, 9)))
        toks = gen.integers(0, 14, size=gen.integers(0, 40)).tolist()
        cap = int(gen.integers(1, 45))
        clipped = [toks[i] for i in range(min(cap, len(toks)))]
        assert rlcore.capped_reward(q, Response(toks, np.zeros(len(toks)), False), cap) == env.verify(q, clipped)


# -- advantages ----------------------------------------------------------------


@pytest.mark.parametrize(
    "rewards,expected",
    [([1, 0, 0, 1], [1, -1, -1, 1]), ([1, 1, 1, 1], [0, 0, 0, 0]), ([1, 0], [1, -1]), ([0, 0, 0], [0, 0, 0])],
)
def test_group_advantages_examples(rewards, expected):
    np.testing.assert_allclose(rlcore.group_advantages(rewards), expected, atol=1e-15)


def test_group_advantages_rejects_singleton():
    with pytest.raises(ValueError):
        rlcore.group_advantages([1])


@settings(max_examples=200)
@given(st.lists(st.sampled_from([0.0, 1.0]), min_size=2, max_size=64))
def test_advantage_normalization(rewards):
    a = rlcore.group_advantages(rewards)
    if len(set(rewards)) == 1:
        assert np.all(a == 0)
    else:
        assert abs(a.mean()) < 1e-10
        assert abs(a.std() - 1) < 1e-10
        mean = sum(rewards) / len(rewards)
        for r, adv in zip(rewards, a):
            assert (adv > 0) == (r > mean)


# -- surrogate loss ------------------------------------------------------------


def _single_group(n_tokens, old_lp, adv):
    q = Question.from_digits([1, 2])
    toks = [env.NEXT] * n_tokens
    resp = Response(toks, np.full(n_tokens, old_lp), True)
    return Group(q, [resp], [1.0], [adv])


def test_loss_ratio_one():
    grp = _single_group(2, -1.0, 1.0)
    p = random_params(np.random.default_rng(0))
    loss, _ = rlcore.surrogate_loss(p, [grp], [[np.array([-1.0, -1.0])]], ClipSpec())
    assert loss == pytest.approx(-1.0, abs=1e-15)


def test_loss_upper_clip_binds():
    grp = _single_group(1, -2.0, 1.0)
    p = random_params(np.random.default_rng(0))
    loss, grad = rlcore.surrogate_loss(p, [grp], [[np.array([-2.0 + math.log(1.5)])]], ClipSpec())
    assert loss == pytest.approx(-1.28, abs=1e-12)
    assert np.all(grad == 0)


def test_loss_lower_clip_binds():
    grp = _single_group(1, -2.0, -1.0)
    p = random_params(np.random.default_rng(0))
    loss, grad = rlcore.surrogate_loss(p, [grp], [[np.array([-2.0 + math.log(0.5)])]], ClipSpec())
    assert loss == pytest.approx(0.8, abs=1e-12)
    assert np.all(grad == 0)


def test_loss_unclipped_side_keeps_gradient():
    # r = 1.5 with negative advantage: min picks the unclipped -1.5
    grp = _single_group(1, -2.0, -1.0)
    p = random_params(np.random.default_rng(0))
    loss, grad = rlcore.surrogate_loss(p, [grp], [[np.array([-2.0 + math.log(1.5)])]], ClipSpec())
    assert loss == pytest.approx(1.5, abs=1e-12)
    assert np.any(grad != 0)


def _training_batch(seed, n_groups=4, G=4, cap=20, scale=0.5):
    gen = np.random.default_rng(seed)
    old = random_params(gen, scale)
    qs_unique = env.gen_dataset(seed, n_groups, (2, 6))
    qs = [q for q in qs_unique for _ in range(G)]
    batch = policy.rollout_batch(old, qs, cap, 1.0, [np.random.default_rng([seed, i]) for i in range(len(qs))])
    rewards = gen.integers(0, 2, size=(n_groups, G)).astype(float)
    adv = rlcore.batch_advantages(rewards).ravel()
    return old, qs_unique, batch, rewards, adv


def _kink_distance(params, batch, clip):
    new, _ = policy.token_logprobs(params, batch.feat_idx, np.where(batch.mask, batch.tokens, 0))
    r = np.exp(new - batch.logprobs)[batch.mask]
    return min(np.abs(r - (1 - clip.eps_low)).min(), np.abs(r - (1 + clip.eps_high)).min())


@pytest.mark.parametrize("loss_norm", ["response", "token"])
@pytest.mark.parametrize("kl_coef", [0.0, 0.1])
def test_batch_gradient_finite_differences(loss_norm, kl_coef):
    clip = ClipSpec(kl_coef=kl_coef)
    h = 1e-5
    checked = 0
    seed = 0
    while checked < 3:
        seed += 1
        old, _, batch, _, adv = _training_batch(seed)
        gen = np.random.default_rng(100 + seed)
        cur = PolicyParams(old.weights + 0.15 * gen.standard_normal(old.weights.shape))
        if _kink_distance(cur, batch, clip) < 1e-3:
            continue
        checked += 1
        _, grad, _ = rlcore.batch_surrogate_loss(cur, batch, adv, 4, clip, loss_norm)
        for _ in range(20):
            i, j = int(gen.integers(14)), int(gen.integers(38))
            wp, wm = cur.weights.copy(), cur.weights.copy()
            wp[i, j] += h
            wm[i, j] -= h
            lp = rlcore.batch_surrogate_loss(PolicyParams(wp), batch, adv, 4, clip, loss_norm)[0]
            lm = rlcore.batch_surrogate_loss(PolicyParams(wm), batch, adv, 4, clip, loss_norm)[0]
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(grad[i, j]))
            if denom < 1e-8:
                assert abs(fd - grad[i, j]) < 1e-10
            else:
                assert abs(fd - grad[i, j]) / denom <= 1e-4


def test_group_api_matches_batch_api():
    clip = ClipSpec()
    old, qs, batch, rewards, adv = _training_batch(3)
    cur = PolicyParams(old.weights + 0.2 * np.random.default_rng(9).standard_normal(old.weights.shape))
    loss_b, grad_b, _ = rlcore.batch_surrogate_loss(cur, batch, adv, 4, clip)
    groups, new_lps = [], []
    for g, q in enumerate(qs):
        resps = [batch.response(4 * g + i) for i in range(4)]
        groups.append(Group(q, resps, rewards[g], adv[4 * g : 4 * g + 4]))
        lps = []
        for r in resps:
            feats = policy.replay_features(q, r.tokens)
            lps.append(np.array([policy.logprob(cur, f, t) for f, t in zip(feats, r.tokens)]))
        new_lps.append(lps)
    loss_g, grad_g = rlcore.surrogate_loss(cur, groups, new_lps, clip)
    assert loss_g == pytest.approx(loss_b, abs=1e-12)
    np.testing.assert_allclose(grad_g, grad_b, atol=1e-12)


def test_on_policy_loss_is_negative_mean_advantage():
    old, _, batch, _, adv = _training_batch(4)
    loss, _, stats = rlcore.batch_surrogate_loss(old, batch, adv, 4, ClipSpec())
    # response-level normalization turns each response into its own advantage
    assert loss == pytest.approx(-adv.mean(), abs=1e-12)
    assert stats.clip_frac == 0


def test_batch_rejects_bad_shapes():
    old, _, batch, _, adv = _training_batch(2)
    with pytest.raises(ValueError):
        rlcore.batch_surrogate_loss(old, batch, adv, 3, ClipSpec())
    with pytest.raises(ValueError):
        rlcore.surrogate_loss(old, [_single_group(2, -1.0, 1.0)], [[np.zeros(3)]], ClipSpec())


def test_clip_spec_validation():
    assert (ClipSpec().eps_low, ClipSpec().eps_high, ClipSpec().kl_coef) == (0.2, 0.28, 0.0)
    for bad in (dict(eps_low=0), dict(eps_low=1.0), dict(eps_high=0.1), dict(kl_coef=-1)):
        with pytest.raises(ValueError):
            ClipSpec(**bad)


# -- optimizer -----------------------------------------------------------------


def test_adam_zero_grad():
    p = random_params(np.random.default_rng(1))
    st0 = OptimizerState.zeros_like(p)
    p2, st1 = rlcore.adam_step(p, np.zeros_like(p.weights), st0, 0.1)
    assert np.array_equal(p2.weights, p.weights)
    assert np.all(st1.m == 0) and np.all(st1.v == 0) and st1.step == 1


def test_adam_first_step_unit_grad():
    p = random_params(np.random.default_rng(1))
    p2, _ = rlcore.adam_step(p, np.ones_like(p.weights), OptimizerState.zeros_like(p), 0.1)
    np.testing.assert_allclose(p.weights - p2.weights, 0.1, rtol=1e-6)


def test_adam_deterministic_and_pure():
    gen = np.random.default_rng(2)
    p = random_params(gen)
    g = gen.standard_normal(p.weights.shape)
    s = OptimizerState(gen.standard_normal(p.weights.shape), gen.random(p.weights.shape), 7)
    w0 = p.weights.copy()
    a = rlcore.adam_step(p, g, s, 0.01)
    b = rlcore.adam_step(p, g, s, 0.01)
    assert np.array_equal(a[0].weights, b[0].weights)
    assert np.array_equal(a[1].m, b[1].m) and np.array_equal(a[1].v, b[1].v)
    assert np.array_equal(p.weights, w0)
