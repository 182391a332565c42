"""Batched episode rollouts.

Episodes run in lockstep waves so every model call (actor, critic,
diagnoser, VAE) is batched across the active environments; per-episode
semantics are identical to stepping one environment at a time. Rewards are
computed at collection time from the frozen diagnoser/VAE, matching the
scalar reward function transition for transition.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .diagnoser import Diagnoser
from .env import ANSWER_NONE, Action, DialogueState, legal_mask, reset, step
from .errors import UsageError
from .knowledge import PatientRecord
from .rewards import RewardConfig, kl_onehot
from .vae import PartialVae

VARIANTS = ("full", "no_reward_shaping", "no_vae")
NO_SHAPING_POSITIVE_REWARD = 0.25


@dataclass
class TransitionRecord:
    """One (state, action, log-prob, reward, value, done) rollout tuple."""

    state: np.ndarray
    action: Action
    log_prob: float
    reward: float
    value: float
    done: bool


@dataclass
class RolloutBuffer:
    """Column-major rollout storage; episodes are contiguous runs ending in
    a done flag. ``emb`` caches the actor's policy embedding (latent mean,
    or the raw state for the MLP actor) so PPO epochs skip the frozen
    encoder."""

    states: np.ndarray
    emb: np.ndarray
    yhat: np.ndarray
    nratio: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def n_episodes(self) -> int:
        return int(self.dones.sum())

    def episode_slices(self) -> list[slice]:
        ends = np.flatnonzero(self.dones)
        starts = np.concatenate([[0], ends[:-1] + 1])
        return [slice(int(s), int(e) + 1) for s, e in zip(starts, ends)]

    def as_records(self) -> list[TransitionRecord]:
        n_symptoms = self.states.shape[1]
        return [
            TransitionRecord(
                state=self.states[t],
                action=Action.from_index(int(self.actions[t]), n_symptoms),
                log_prob=float(self.log_probs[t]),
                reward=float(self.rewards[t]),
                value=float(self.values[t]),
                done=bool(self.dones[t]),
            )
            for t in range(self.size)
        ]


@dataclass
class _Columns:
    states: list = field(default_factory=list)
    emb: list = field(default_factory=list)
    yhat: list = field(default_factory=list)
    nratio: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def append(self, **kw):
        for key, val in kw.items():
            getattr(self, key).append(val)

    def finalize(self) -> RolloutBuffer:
        return RolloutBuffer(
            states=np.stack(self.states).astype(np.int8),
            emb=np.stack(self.emb).astype(np.float32),
            yhat=np.stack(self.yhat).astype(np.float32),
            nratio=np.asarray(self.nratio, dtype=np.float32),
            masks=np.stack(self.masks),
            actions=np.asarray(self.actions, dtype=np.int64),
            log_probs=np.asarray(self.log_probs, dtype=np.float32),
            rewards=np.asarray(self.rewards, dtype=np.float32),
            values=np.asarray(self.values, dtype=np.float32),
            dones=np.asarray(self.dones, dtype=bool),
        )


def state_tensors(obs_mat: np.ndarray, dtype=torch.float32):
    """(values, observed, states) tensors from a stacked int8 state matrix."""
    states = torch.as_tensor(obs_mat.astype(np.float32), dtype=dtype)
    values = torch.as_tensor((obs_mat > 0).astype(np.float32), dtype=dtype)
    observed = torch.as_tensor(obs_mat != 0)
    return values, observed, states


def gumbel_sample(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Row-wise categorical draw; zero-probability entries can never win."""
    with np.errstate(divide="ignore"):
        scores = np.log(probs)
    u = rng.random(probs.shape)
    scores = scores - np.log(-np.log(np.clip(u, 1e-300, 1.0)))
    scores[probs <= 0.0] = -np.inf
    return scores.argmax(axis=1)


def final_diagnosis_batch(obs_mat: np.ndarray, diagnoser: Diagnoser,
                          vae: PartialVae | None, variant: str) -> np.ndarray:
    """Diagnosis rows for final states: VAE-imputed unless running VAE-free."""
    with torch.no_grad():
        if variant == "no_vae" or vae is None:
            states = torch.as_tensor(obs_mat.astype(np.float32))
            probs = diagnoser.predict_batch(states)
        else:
            values, observed, _ = state_tensors(obs_mat)
            probs = diagnoser.predict_batch(vae.impute_batch(values, observed))
    return probs.cpu().numpy()


def collect_rollouts(
    records: list[PatientRecord],
    agent,
    diagnoser: Diagnoser,
    vae: PartialVae | None,
    reward_config: RewardConfig,
    n_transitions: int,
    rng: np.random.Generator,
    n_max: int,
    variant: str = "full",
    n_envs: int = 256,
) -> RolloutBuffer:
    """Gather at least ``n_transitions`` transitions from complete episodes.

    Episodes run in waves of ``n_envs``; each wave drains fully so the
    buffer never contains a truncated episode.
    """
    if variant not in VARIANTS:
        raise UsageError(f"unknown variant {variant!r}")
    if variant != "no_vae" and vae is None:
        raise UsageError(f"variant {variant!r} requires a VAE")
    n_symptoms = len(agent.symptoms)
    n_diseases = len(agent.diseases)
    columns = _Columns()
    total = 0

    while total < n_transitions:
        picks = rng.integers(len(records), size=n_envs)
        wave = [records[int(i)] for i in picks]
        total += _run_wave(
            wave, agent, diagnoser, vae, reward_config, rng, n_max, variant,
            n_symptoms, n_diseases, columns,
        )
    return columns.finalize()


def _run_wave(wave, agent, diagnoser, vae, reward_config, rng, n_max, variant,
              n_symptoms, n_diseases, columns) -> int:
    n_envs = len(wave)
    env_states: list[DialogueState] = [reset(r, n_max, n_symptoms) for r in wave]
    pending: list[list[dict]] = [[] for _ in range(n_envs)]
    alive = np.ones(n_envs, dtype=bool)
    appended = 0

    while alive.any():
        rows = np.flatnonzero(alive)
        obs_mat = np.stack([env_states[i].obs_vec for i in rows])
        masks_np = np.stack([legal_mask(env_states[i]) for i in rows])
        turns = np.array([env_states[i].turn for i in rows], dtype=np.float32)

        values, observed, states = state_tensors(obs_mat)
        masks = torch.as_tensor(masks_np)
        nratio = torch.as_tensor(turns / n_max)
        with torch.no_grad():
            probs, emb = agent.actor.policy_batch(values, observed, states, masks)
            yhat = diagnoser.predict_batch(states)
            vals = agent.critic.forward_batch(yhat, emb, nratio)
        probs_np = probs.cpu().numpy().astype(np.float64)
        emb_np = emb.cpu().numpy()
        yhat_np = yhat.cpu().numpy().astype(np.float64)
        vals_np = vals.cpu().numpy()

        action_idx = gumbel_sample(probs_np, rng)
        log_probs = np.log(probs_np[np.arange(len(rows)), action_idx])

        # step every active env
        results = []
        for k, i in enumerate(rows):
            action = Action.from_index(int(action_idx[k]), n_symptoms)
            results.append(step(env_states[i], action, wave[i]))

        rewards = _wave_rewards(
            rows, obs_mat, yhat_np, emb_np, action_idx, results, wave,
            diagnoser, vae, reward_config, variant, n_symptoms,
        )

        for k, i in enumerate(rows):
            res = results[k]
            pending[i].append(
                dict(
                    states=obs_mat[k],
                    emb=emb_np[k],
                    yhat=yhat_np[k].astype(np.float32),
                    nratio=turns[k] / n_max,
                    masks=masks_np[k],
                    actions=int(action_idx[k]),
                    log_probs=float(log_probs[k]),
                    rewards=float(rewards[k]),
                    values=float(vals_np[k]),
                    dones=res.done,
                )
            )
            env_states[i] = res.next_state
            if res.done:
                alive[i] = False
                for row in pending[i]:
                    columns.append(**row)
                appended += len(pending[i])
                pending[i] = []
    return appended


def _wave_rewards(rows, obs_mat, yhat_np, emb_np, action_idx, results, wave,
                  diagnoser, vae, reward_config, variant, n_symptoms) -> np.ndarray:
    """Per-env rewards for one lockstep round, with the model calls batched.

    Episode-ending transitions earn only the terminal reward; inquiry
    rewards follow the configured variant.
    """
    n = len(rows)
    rewards = np.zeros(n)
    done_k = [k for k in range(n) if results[k].done]
    inquiry_k = [k for k in range(n) if not results[k].done]

    if done_k:
        final_obs = np.stack([results[k].next_state.obs_vec for k in done_k])
        dist = final_diagnosis_batch(final_obs, diagnoser, vae, variant)
        predicted = dist.argmax(axis=1)
        for j, k in enumerate(done_k):
            correct = predicted[j] == wave[rows[k]].disease_index
            rewards[k] = reward_config.r_end_correct if correct else reward_config.r_end_wrong

    if not inquiry_k:
        return rewards

    if variant == "full":
        # hypothetical states: the inquired symptom assumed present
        hyp = obs_mat[inquiry_k].astype(np.float32)
        for j, k in enumerate(inquiry_k):
            hyp[j, action_idx[k]] = 1.0
        with torch.no_grad():
            hyp_dist = diagnoser.predict_batch(torch.as_tensor(hyp)).cpu().numpy()
        negatives = [k for k in inquiry_k if results[k].answer != "positive"]
        cond = {}
        if negatives:
            z = torch.as_tensor(emb_np[negatives])
            with torch.no_grad():
                decoded = vae.decode_batch(z).cpu().numpy()
            for j, k in enumerate(negatives):
                cond[k] = float(decoded[j, action_idx[k]])
        for j, k in enumerate(inquiry_k):
            truth = wave[rows[k]].disease_index
            effect = abs(
                kl_onehot(truth, yhat_np[k]) - kl_onehot(truth, hyp_dist[j])
            )
            if results[k].answer == "positive":
                rewards[k] = effect
            else:
                rewards[k] = cond[k] * effect - reward_config.alpha
    else:
        # constant co-occurrence reward, nothing for negatives
        for k in inquiry_k:
            if results[k].answer == "positive":
                rewards[k] = NO_SHAPING_POSITIVE_REWARD
    return rewards


def greedy_rollouts(
    records: list[PatientRecord],
    agent,
    diagnoser: Diagnoser,
    vae: PartialVae | None,
    n_max: int,
    variant: str = "full",
    batch_size: int = 512,
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic rollouts: (final state matrix, inquiry counts).

    Greedy action selection with lowest-index tie-breaking; identical to
    stepping single environments with ``greedy_action``.
    """
    n_symptoms = len(agent.symptoms)
    finals = np.zeros((len(records), n_symptoms), dtype=np.int8)
    turns = np.zeros(len(records), dtype=np.int64)
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        env_states = [reset(r, n_max, n_symptoms) for r in chunk]
        alive = np.ones(len(chunk), dtype=bool)
        while alive.any():
            rows = np.flatnonzero(alive)
            obs_mat = np.stack([env_states[i].obs_vec for i in rows])
            masks_np = np.stack([legal_mask(env_states[i]) for i in rows])
            values, observed, states = state_tensors(obs_mat)
            with torch.no_grad():
                probs, _ = agent.actor.policy_batch(
                    values, observed, states, torch.as_tensor(masks_np)
                )
            action_idx = probs.cpu().numpy().argmax(axis=1)
            for k, i in enumerate(rows):
                action = Action.from_index(int(action_idx[k]), n_symptoms)
                res = step(env_states[i], action, chunk[i])
                env_states[i] = res.next_state
                if res.done:
                    alive[i] = False
                    finals[start + i] = res.next_state.obs_vec
                    turns[start + i] = res.next_state.turn
    return finals, turns
