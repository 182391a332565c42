"""Dialogue episode simulator for the symptom-inquiry MDP.

The state tracks a {+1, 0, -1} observation vector, the set of symptoms
already asked, and the turn counter. Transitions answer inquiries from the
ground-truth patient record; an episode ends on an explicit terminate
action or when the inquiry cap is reached.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import UsageError
from .knowledge import PatientRecord

ANSWER_POSITIVE = "positive"
ANSWER_NEGATIVE = "negative"
ANSWER_NONE = "none"


@dataclass(frozen=True)
class Action:
    """Inquire about one symptom, or terminate for a diagnosis."""

    symptom: int | None

    @classmethod
    def inquire(cls, symptom: int) -> "Action":
        return cls(int(symptom))

    @classmethod
    def terminate(cls) -> "Action":
        return cls(None)

    @property
    def is_terminate(self) -> bool:
        return self.symptom is None

    def index(self, n_symptoms: int) -> int:
        """Flat action index: symptoms 0..N_S-1, terminate N_S."""
        return n_symptoms if self.is_terminate else self.symptom

    @classmethod
    def from_index(cls, index: int, n_symptoms: int) -> "Action":
        if not 0 <= index <= n_symptoms:
            raise UsageError(f"action index {index} out of range")
        return cls.terminate() if index == n_symptoms else cls.inquire(index)


@dataclass
class DialogueState:
    obs_vec: np.ndarray  # int8, {+1, 0, -1}
    asked: frozenset[int]
    turn: int
    n_max: int

    def copy(self) -> "DialogueState":
        return replace(self, obs_vec=self.obs_vec.copy())


@dataclass
class StepResult:
    next_state: DialogueState
    done: bool
    answer: str


def reset(record: PatientRecord, n_max: int, n_symptoms: int) -> DialogueState:
    """Fresh episode state: only the self-report observed, turn zero."""
    obs = np.zeros(n_symptoms, dtype=np.int8)
    obs[record.self_report] = 1
    return DialogueState(obs, frozenset(), 0, n_max)


def legal_mask(state: DialogueState) -> np.ndarray:
    """Boolean mask over the N_S+1 action slots (terminate last).

    Observed symptoms (asked ones and the self-report) are illegal; once the
    turn cap is reached only terminate remains.
    """
    n = len(state.obs_vec)
    mask = np.zeros(n + 1, dtype=bool)
    if state.turn < state.n_max:
        mask[:n] = state.obs_vec == 0
    mask[n] = True
    return mask


def step(state: DialogueState, action: Action, record: PatientRecord) -> StepResult:
    """Apply one action. Inquiries reveal the record's answer and advance the
    turn; the episode is done on terminate or when the cap is hit."""
    if action.is_terminate:
        return StepResult(state, True, ANSWER_NONE)
    idx = action.symptom
    if not 0 <= idx < len(state.obs_vec):
        raise UsageError(f"symptom index {idx} out of range")
    if state.turn >= state.n_max:
        raise UsageError("inquiry past the turn cap; only terminate is legal")
    if state.obs_vec[idx] != 0:
        raise UsageError(f"symptom index {idx} was already observed")
    positive = idx in record.positive_symptoms
    obs = state.obs_vec.copy()
    obs[idx] = 1 if positive else -1
    next_state = DialogueState(obs, state.asked | {idx}, state.turn + 1, state.n_max)
    done = next_state.turn >= state.n_max
    return StepResult(next_state, done, ANSWER_POSITIVE if positive else ANSWER_NEGATIVE)


def trajectory_json(turns: list[dict], label: str) -> str:
    """One JSONL line for a finished episode (debugging aid)."""
    return json.dumps({"turns": turns, "label": label})
