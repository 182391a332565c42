"""Dialogue MDP: states, legal actions, transitions, termination."""

import numpy as np
import pytest

from symcheck import Action, PatientRecord, legal_mask, reset, step
from symcheck.env import ANSWER_NEGATIVE, ANSWER_NONE, ANSWER_POSITIVE
from symcheck.errors import UsageError

REC = PatientRecord(disease_index=2, positive_symptoms=frozenset({1, 4}), self_report=1)


class TestAction:
    def test_index_round_trip(self):
        for idx in range(6):
            assert Action.from_index(idx, 5).index(5) == idx
        assert Action.from_index(5, 5).is_terminate

    def test_out_of_range_rejected(self):
        with pytest.raises(UsageError, match="out of range"):
            Action.from_index(6, 5)
        with pytest.raises(UsageError, match="out of range"):
            Action.from_index(-1, 5)


class TestReset:
    def test_only_self_report_observed(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        assert state.obs_vec.tolist() == [0, 1, 0, 0, 0, 0]
        assert state.turn == 0

    def test_no_ground_truth_leaks(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        assert state.obs_vec[4] == 0  # positive but unasked


class TestLegalMask:
    def test_observed_symptoms_illegal(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        mask = legal_mask(state)
        assert mask.tolist() == [True, False, True, True, True, True, True]

    def test_terminate_always_legal(self):
        state = reset(REC, n_max=0, n_symptoms=6)
        mask = legal_mask(state)
        assert mask[6] and not mask[:6].any()

    def test_cap_reached_leaves_only_terminate(self):
        state = reset(REC, n_max=1, n_symptoms=6)
        state = step(state, Action.inquire(0), REC).next_state
        mask = legal_mask(state)
        assert mask[6] and not mask[:6].any()


class TestStep:
    def test_positive_answer(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        res = step(state, Action.inquire(4), REC)
        assert res.answer == ANSWER_POSITIVE
        assert res.next_state.obs_vec[4] == 1
        assert res.next_state.turn == 1
        assert not res.done

    def test_negative_answer(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        res = step(state, Action.inquire(0), REC)
        assert res.answer == ANSWER_NEGATIVE
        assert res.next_state.obs_vec[0] == -1

    def test_original_state_not_mutated(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        step(state, Action.inquire(0), REC)
        assert state.obs_vec[0] == 0 and state.turn == 0

    def test_terminate_keeps_state(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        res = step(state, Action.terminate(), REC)
        assert res.done and res.answer == ANSWER_NONE
        assert res.next_state.turn == 0
        assert np.array_equal(res.next_state.obs_vec, state.obs_vec)

    def test_cap_forces_done(self):
        state = reset(REC, n_max=2, n_symptoms=6)
        state = step(state, Action.inquire(0), REC).next_state
        res = step(state, Action.inquire(2), REC)
        assert res.done and res.next_state.turn == 2

    def test_reask_rejected(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        state = step(state, Action.inquire(0), REC).next_state
        with pytest.raises(UsageError, match="already observed"):
            step(state, Action.inquire(0), REC)

    def test_self_report_reask_rejected(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        with pytest.raises(UsageError, match="already observed"):
            step(state, Action.inquire(1), REC)

    def test_inquiry_past_cap_rejected(self):
        state = reset(REC, n_max=1, n_symptoms=6)
        state = step(state, Action.inquire(0), REC).next_state
        with pytest.raises(UsageError, match="cap"):
            step(state, Action.inquire(2), REC)

    def test_out_of_range_symptom_rejected(self):
        state = reset(REC, n_max=3, n_symptoms=6)
        with pytest.raises(UsageError, match="out of range"):
            step(state, Action.inquire(9), REC)


class TestEpisodeFuzz:
    def test_random_policy_invariants(self, tiny_kb, tiny_dataset):
        """Random legal actions for many episodes: turns bounded, answers
        always truthful, no re-asking possible, termination consistent."""
        rng = np.random.default_rng(8)
        n_max = 4
        for episode in range(300):
            rec = tiny_dataset.train[episode % len(tiny_dataset.train)]
            state = reset(rec, n_max, tiny_kb.n_symptoms)
            done = False
            steps = 0
            while not done:
                mask = legal_mask(state)
                legal = np.flatnonzero(mask)
                choice = int(legal[rng.integers(len(legal))])
                res = step(state, Action.from_index(choice, tiny_kb.n_symptoms), rec)
                if choice < tiny_kb.n_symptoms:
                    truth = 1 if choice in rec.positive_symptoms else -1
                    assert res.next_state.obs_vec[choice] == truth
                state, done = res.next_state, res.done
                steps += 1
                assert steps <= n_max + 1
            assert state.turn <= n_max
