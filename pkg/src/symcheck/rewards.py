"""Differential reward shaping for inquiry episodes.

The terminal reward is +1/-1 for a correct/incorrect final diagnosis. Each
inquiry earns the absolute change in KL divergence between the one-hot true
label and the diagnoser's prediction when the symptom is hypothetically
confirmed; for symptoms the patient does not have, that effect is weighted
by the conditional probability of the symptom under the observations and
discounted by a constant length penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnoser import Diagnoser
from .env import Action, DialogueState
from .errors import UsageError
from .knowledge import PatientRecord
from .vae import PartialVae, obs_from_state


@dataclass
class RewardConfig:
    alpha: float = 0.1
    r_end_correct: float = 1.0
    r_end_wrong: float = -1.0

    def __post_init__(self):
        if self.alpha < 0:
            raise UsageError("alpha must be non-negative")


def kl_onehot(true_disease: int, dist: np.ndarray) -> float:
    """KL(one-hot truth || dist) in closed form: -log dist[true]."""
    return float(-np.log(dist[true_disease]))


def diff(state: DialogueState, symptom: int, hypothetical_state: DialogueState,
         true_disease: int, diagnoser: Diagnoser) -> float:
    """Differential effect of confirming ``symptom``: |ΔKL| between the
    predictions on the current and hypothetical states."""
    before = kl_onehot(true_disease, diagnoser.predict(state.obs_vec.astype(np.float64)))
    after = kl_onehot(
        true_disease, diagnoser.predict(hypothetical_state.obs_vec.astype(np.float64))
    )
    return abs(before - after)


def hypothetical_positive(state: DialogueState, symptom: int) -> DialogueState:
    """Copy of ``state`` assuming the patient has ``symptom``."""
    hyp = state.copy()
    hyp.obs_vec[symptom] = 1
    return hyp


def final_diagnosis(state: DialogueState, diagnoser: Diagnoser, vae: PartialVae) -> np.ndarray:
    """Diagnosis distribution on the VAE-imputed observations of a state."""
    return diagnoser.diagnose_final(obs_from_state(state.obs_vec), vae)


def shape_reward(
    prev_state: DialogueState,
    action: Action,
    next_state: DialogueState,
    record: PatientRecord,
    diagnoser: Diagnoser,
    vae: PartialVae,
    config: RewardConfig,
    done: bool | None = None,
) -> float:
    """Reward for one transition.

    Episode end (terminate, or an inquiry that hits the cap) earns only the
    terminal reward from the final imputed diagnosis. A confirmed symptom
    earns its differential effect; a denied one earns the conditional-
    probability-weighted effect minus the length penalty.
    """
    if done is None:
        done = action.is_terminate or next_state.turn >= next_state.n_max
    if done:
        dist = final_diagnosis(next_state, diagnoser, vae)
        predicted = int(np.argmax(dist))
        return config.r_end_correct if predicted == record.disease_index else config.r_end_wrong

    symptom = action.symptom
    hyp = hypothetical_positive(prev_state, symptom)
    effect = diff(prev_state, symptom, hyp, record.disease_index, diagnoser)
    if symptom in record.positive_symptoms:
        return effect
    p = vae.conditional_prob(obs_from_state(prev_state.obs_vec), symptom)
    return p * effect - config.alpha
