"""Differential reward shaping."""

import numpy as np
import pytest

from symcheck import (Action, PatientRecord, RewardConfig, diff,
                      hypothetical_positive, kl_onehot, reset, shape_reward,
                      step)
from symcheck.errors import UsageError


class StubDiagnoser:
    """Fixed distributions keyed by whether a probe symptom looks positive."""

    def __init__(self, before, after, probe):
        self.before = np.asarray(before, dtype=np.float64)
        self.after = np.asarray(after, dtype=np.float64)
        self.probe = probe

    def predict(self, state_vec):
        return self.after if state_vec[self.probe] > 0 else self.before


class StubVae:
    def __init__(self, p):
        self.p = p

    def conditional_prob(self, obs, target):
        return self.p


class TestKlOnehot:
    def test_equals_negative_log_prob(self):
        dist = np.array([0.2, 0.5, 0.3])
        assert kl_onehot(1, dist) == pytest.approx(-np.log(0.5), abs=1e-12)

    def test_certain_prediction_gives_zero(self):
        assert kl_onehot(0, np.array([1.0])) == 0.0


class TestDiff:
    def test_reference_value(self):
        """q_true 0.6 -> 0.8 after confirming the symptom: the effect is
        log(0.8/0.6) exactly."""
        rec = PatientRecord(0, frozenset({2}), 2)
        state = reset(rec, 3, 4)
        stub = StubDiagnoser([0.6, 0.4], [0.8, 0.2], probe=1)
        hyp = hypothetical_positive(state, 1)
        effect = diff(state, 1, hyp, 0, stub)
        assert effect == pytest.approx(np.log(0.8 / 0.6), abs=1e-9)

    def test_absolute_value_of_the_change(self):
        rec = PatientRecord(0, frozenset({2}), 2)
        state = reset(rec, 3, 4)
        worse = StubDiagnoser([0.8, 0.2], [0.6, 0.4], probe=1)
        hyp = hypothetical_positive(state, 1)
        assert diff(state, 1, hyp, 0, worse) == pytest.approx(np.log(0.8 / 0.6), abs=1e-9)

    def test_hypothetical_positive_only_touches_target(self):
        rec = PatientRecord(0, frozenset({2}), 2)
        state = reset(rec, 3, 4)
        hyp = hypothetical_positive(state, 1)
        assert hyp.obs_vec[1] == 1
        assert state.obs_vec[1] == 0
        assert np.array_equal(np.delete(hyp.obs_vec, 1), np.delete(state.obs_vec, 1))


class TestShapeReward:
    def setup_method(self):
        self.rec = PatientRecord(0, frozenset({2, 1}), 2)
        self.config = RewardConfig(alpha=0.1)
        self.stub = StubDiagnoser([0.6, 0.4], [0.8, 0.2], probe=1)

    def test_positive_symptom_earns_full_effect(self):
        state = reset(self.rec, 3, 4)
        res = step(state, Action.inquire(1), self.rec)
        r = shape_reward(state, Action.inquire(1), res.next_state, self.rec,
                         self.stub, StubVae(0.5), self.config)
        assert r == pytest.approx(np.log(0.8 / 0.6), abs=1e-9)

    def test_negative_symptom_weighted_and_penalized(self):
        stub = StubDiagnoser([0.6, 0.4], [0.8, 0.2], probe=3)
        state = reset(self.rec, 3, 4)
        res = step(state, Action.inquire(3), self.rec)
        r = shape_reward(state, Action.inquire(3), res.next_state, self.rec,
                         stub, StubVae(0.25), self.config)
        assert r == pytest.approx(0.25 * np.log(0.8 / 0.6) - 0.1, abs=1e-9)

    def test_alpha_zero_removes_the_penalty(self):
        stub = StubDiagnoser([0.6, 0.4], [0.8, 0.2], probe=3)
        state = reset(self.rec, 3, 4)
        res = step(state, Action.inquire(3), self.rec)
        r = shape_reward(state, Action.inquire(3), res.next_state, self.rec,
                         stub, StubVae(0.25), RewardConfig(alpha=0.0))
        assert r == pytest.approx(0.25 * np.log(0.8 / 0.6), abs=1e-9)

    def test_terminal_rewards_with_real_models(self, tiny_kb, tiny_diagnoser, tiny_vae):
        """Terminate earns +1 when the imputed diagnosis argmax matches the
        record and -1 otherwise (checked against a direct recomputation)."""
        from symcheck.rewards import final_diagnosis
        rng = np.random.default_rng(0)
        seen = set()
        for rec in [r for r in _sample_records(tiny_kb, rng, 30)]:
            state = reset(rec, 3, tiny_kb.n_symptoms)
            res = step(state, Action.terminate(), rec)
            r = shape_reward(state, Action.terminate(), res.next_state, rec,
                             tiny_diagnoser, tiny_vae, self.config)
            dist = final_diagnosis(res.next_state, tiny_diagnoser, tiny_vae)
            expected = 1.0 if int(np.argmax(dist)) == rec.disease_index else -1.0
            assert r == expected
            seen.add(r)
        assert seen <= {1.0, -1.0}

    def test_cap_hit_is_terminal_even_for_inquiries(self, tiny_kb, tiny_diagnoser, tiny_vae):
        rng = np.random.default_rng(1)
        rec = _sample_records(tiny_kb, rng, 1)[0]
        state = reset(rec, 1, tiny_kb.n_symptoms)
        target = next(i for i in range(tiny_kb.n_symptoms) if state.obs_vec[i] == 0)
        res = step(state, Action.inquire(target), rec)
        assert res.done
        r = shape_reward(state, Action.inquire(target), res.next_state, rec,
                         tiny_diagnoser, tiny_vae, self.config)
        assert r in (1.0, -1.0)

    def test_negative_alpha_rejected(self):
        with pytest.raises(UsageError, match="non-negative"):
            RewardConfig(alpha=-0.5)


def _sample_records(kb, rng, n):
    from symcheck import sample_patient
    return [sample_patient(kb, rng) for _ in range(n)]
