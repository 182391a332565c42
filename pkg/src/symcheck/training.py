"""Policy training pipeline.

Stages: dataset synthesis, diagnoser pretraining, VAE pretraining, actor
initialization from the VAE, then clipped-surrogate policy optimization
with generalized advantage estimation and linearly decaying step sizes.
Each stage failure surfaces with the stage name attached.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .agent import Agent, Critic, MlpActor, init_actor_from_vae
from .diagnoser import Diagnoser, DiagnoserTrainConfig, train_diagnoser
from .errors import (CompatibilityError, SymcheckError, TrainingDivergedError,
                     UsageError)
from .knowledge import (DatasetSplit, KnowledgeBase, generate_dataset,
                        load_dataset_dir, load_knowledge_base)
from .rewards import RewardConfig
from .rollouts import (VARIANTS, RolloutBuffer, collect_rollouts,
                       final_diagnosis_batch, greedy_rollouts)
from .vae import PartialVae, VaeConfig, VaeTrainConfig, train_vae

ADV_NORM_EPS = 1e-8


def _vae_train_config(d: dict) -> VaeTrainConfig:
    d = dict(d)
    if "model" in d and isinstance(d["model"], dict):
        d["model"] = VaeConfig.from_dict(d["model"])
    if "mask_range" in d:
        d["mask_range"] = tuple(d["mask_range"])
    unknown = set(d) - {f.name for f in dataclasses.fields(VaeTrainConfig)}
    if unknown:
        raise UsageError(f"unknown vae config keys: {sorted(unknown)}")
    return VaeTrainConfig(**d)


def _diagnoser_train_config(d: dict) -> DiagnoserTrainConfig:
    d = dict(d)
    for key in ("mask_range", "hidden"):
        if key in d:
            d[key] = tuple(d[key])
    unknown = set(d) - {f.name for f in dataclasses.fields(DiagnoserTrainConfig)}
    if unknown:
        raise UsageError(f"unknown diagnoser config keys: {sorted(unknown)}")
    return DiagnoserTrainConfig(**d)


@dataclass
class TrainerConfig:
    """Pipeline hyperparameters; defaults follow the reference settings."""

    variant: str = "full"
    seed: int = 0
    n_max: int = 20
    gamma: float = 0.95
    lam: float = 0.9
    epsilon: float = 0.1
    eta: float = 0.01
    alpha: float = 0.1
    actor_lr: float = 5e-5
    critic_lr: float = 5e-5
    total_iterations: int = 100
    decay_horizon: int | None = None
    transitions_per_iter: int = 2048
    batch_size: int = 512
    ppo_epochs: int = 4
    max_grad_norm: float = 0.5
    n_envs: int = 256
    n_train: int = 50000
    n_valid: int = 5000
    n_test: int = 5000
    data_seed: int | None = None
    data_dir: str | None = None
    eval_records: int = 1000
    eval_every: int = 1
    critic_hidden: tuple[int, ...] = (128, 128)
    mlp_hidden: tuple[int, ...] = (256, 256)
    vae: VaeTrainConfig = field(default_factory=VaeTrainConfig)
    diagnoser: DiagnoserTrainConfig = field(default_factory=DiagnoserTrainConfig)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise UsageError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if not 0.0 < self.epsilon < 1.0:
            raise UsageError(f"clip range must lie in (0, 1), got {self.epsilon}")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise UsageError("gamma and lam must lie in [0, 1]")
        if self.n_max < 1:
            raise UsageError("n_max must be at least 1")
        if self.alpha < 0:
            raise UsageError("alpha must be non-negative")
        for name in ("total_iterations", "transitions_per_iter", "batch_size",
                     "ppo_epochs", "n_envs", "eval_every"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be positive")

    @property
    def horizon(self) -> int:
        return self.decay_horizon if self.decay_horizon is not None else self.total_iterations

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        d = dict(d)
        if "vae" in d and isinstance(d["vae"], dict):
            d["vae"] = _vae_train_config(d["vae"])
        if "diagnoser" in d and isinstance(d["diagnoser"], dict):
            d["diagnoser"] = _diagnoser_train_config(d["diagnoser"])
        for key in ("critic_hidden", "mlp_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise UsageError(f"unknown trainer config keys: {sorted(unknown)}")
        return cls(**d)


def decay_schedules(iteration: int, config: TrainerConfig) -> tuple[float, float, float]:
    """(actor lr, critic lr, entropy weight) at ``iteration``.

    Linear decay to one tenth of the initial value at the horizon, constant
    afterwards.
    """
    horizon = max(config.horizon, 1)
    frac = min(max(iteration, 0) / horizon, 1.0)
    scale = 1.0 - 0.9 * frac
    return config.actor_lr * scale, config.critic_lr * scale, config.eta * scale


def gae_advantages(rewards, values, gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates for one complete episode.

    Backward recursion with a zero terminal bootstrap; equivalent to the
    discounted double sum over one-step temporal-difference errors.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape or rewards.ndim != 1:
        raise UsageError("rewards and values must be matching 1-d arrays")
    adv = np.zeros(len(rewards))
    gae = 0.0
    next_value = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        gae = delta + gamma * lam * gae
        adv[t] = gae
        next_value = values[t]
    return adv


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float,
                normalize: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and value targets over a rollout buffer.

    Episodes reset the recursion. Value targets use the raw advantages;
    normalization (buffer-wide, when enabled) applies only to the
    advantages handed to the policy update.
    """
    adv = np.zeros(buffer.size)
    for sl in buffer.episode_slices():
        adv[sl] = gae_advantages(buffer.rewards[sl], buffer.values[sl], gamma, lam)
    returns = adv + buffer.values.astype(np.float64)
    out = adv
    if normalize and buffer.size > 1:
        out = (adv - adv.mean()) / (adv.std() + ADV_NORM_EPS)
    buffer.advantages = out.astype(np.float32)
    buffer.returns = returns.astype(np.float32)
    return buffer.advantages, buffer.returns


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float


def ppo_update(
    buffer: RolloutBuffer,
    agent: Agent,
    config: TrainerConfig,
    actor_opt: torch.optim.Optimizer | None = None,
    critic_opt: torch.optim.Optimizer | None = None,
    eta: float | None = None,
    rng: np.random.Generator | None = None,
    capture: dict | None = None,
) -> UpdateStats:
    """Clipped-surrogate policy and value update over shuffled minibatches.

    Policy probabilities are recomputed from the cached embeddings, which
    is exact because the actor encoder stays frozen. When ``capture`` is a
    dict the probability ratios of the first minibatch (before any
    optimizer step) are stored under ``"first_ratios"``.
    """
    if buffer.advantages is None or buffer.returns is None:
        raise UsageError("compute_gae must run before ppo_update")
    if eta is None:
        eta = config.eta
    if rng is None:
        rng = np.random.default_rng(config.seed)
    actor, critic = agent.actor, agent.critic
    actor_params = list(actor.trainable_parameters())
    if actor_opt is None:
        actor_opt = torch.optim.Adam(actor_params, lr=config.actor_lr)
    if critic_opt is None:
        critic_opt = torch.optim.Adam(critic.parameters(), lr=config.critic_lr)

    emb = torch.as_tensor(buffer.emb)
    yhat = torch.as_tensor(buffer.yhat)
    nratio = torch.as_tensor(buffer.nratio)
    masks = torch.as_tensor(buffer.masks)
    actions = torch.as_tensor(buffer.actions)
    old_logp = torch.as_tensor(buffer.log_probs)
    adv = torch.as_tensor(buffer.advantages)
    ret = torch.as_tensor(buffer.returns)
    neg_inf = torch.tensor(float("-inf"))
    zero = torch.tensor(0.0)

    sums = dict.fromkeys(
        ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl"), 0.0
    )
    batches = 0
    first = True
    for _ in range(config.ppo_epochs):
        order = rng.permutation(buffer.size)
        for start in range(0, buffer.size, config.batch_size):
            idx = torch.as_tensor(order[start : start + config.batch_size])
            mask_b = masks[idx]
            logits = actor.logits_from_embedding(emb[idx])
            logp_all = torch.log_softmax(torch.where(mask_b, logits, neg_inf), dim=-1)
            logp = logp_all.gather(1, actions[idx, None])[:, 0]
            ratio = torch.exp(logp - old_logp[idx])
            if capture is not None and first:
                capture["first_ratios"] = ratio.detach().cpu().numpy().copy()
                first = False
            adv_b = adv[idx]
            clipped = torch.clamp(ratio, 1.0 - config.epsilon, 1.0 + config.epsilon)
            surrogate = torch.minimum(ratio * adv_b, clipped * adv_b)
            probs = torch.exp(logp_all)
            # mask before the product: 0 * (-inf) would poison the backward
            entropy = -(probs * torch.where(mask_b, logp_all, zero)).sum(dim=-1)
            policy_loss = -(surrogate.mean() + eta * entropy.mean())
            value_pred = critic.forward_batch(yhat[idx], emb[idx], nratio[idx])
            value_loss = nn.functional.mse_loss(value_pred, ret[idx])
            if not (torch.isfinite(policy_loss) and torch.isfinite(value_loss)):
                raise TrainingDivergedError(
                    "ppo_update",
                    {"policy_loss": float(policy_loss.detach()),
                     "value_loss": float(value_loss.detach())},
                )
            actor_opt.zero_grad()
            policy_loss.backward()
            nn.utils.clip_grad_norm_(actor_params, config.max_grad_norm)
            actor_opt.step()
            critic_opt.zero_grad()
            value_loss.backward()
            nn.utils.clip_grad_norm_(critic.parameters(), config.max_grad_norm)
            critic_opt.step()
            with torch.no_grad():
                sums["policy_loss"] += float(policy_loss)
                sums["value_loss"] += float(value_loss)
                sums["entropy"] += float(entropy.mean())
                sums["clip_fraction"] += float(
                    ((ratio - 1.0).abs() > config.epsilon).float().mean()
                )
                sums["approx_kl"] += float((old_logp[idx] - logp).mean())
            batches += 1
    return UpdateStats(**{k: v / max(batches, 1) for k, v in sums.items()})


@dataclass
class TrainResult:
    out_dir: Path
    kb: KnowledgeBase
    dataset: DatasetSplit
    diagnoser: Diagnoser
    vae: PartialVae | None
    agent: Agent
    metrics: list[dict]
    config: TrainerConfig


def evaluate_accuracy(records, agent: Agent, diagnoser: Diagnoser,
                      vae: PartialVae | None, n_max: int, variant: str) -> dict:
    """Greedy-policy accuracy summary on a record list."""
    finals, turns = greedy_rollouts(records, agent, diagnoser, vae, n_max, variant)
    probs = final_diagnosis_batch(finals, diagnoser, vae, variant)
    labels = np.array([r.disease_index for r in records])
    return {
        "top1": float((probs.argmax(axis=1) == labels).mean()),
        "mean_turns": float(turns.mean()),
    }


def train(config: TrainerConfig, kb_path, out_dir,
          dataset: DatasetSplit | None = None,
          diagnoser: Diagnoser | None = None,
          vae: PartialVae | None = None) -> TrainResult:
    """Run the staged pipeline, saving checkpoints and per-iteration metrics.

    ``kb_path`` may be a path or an in-memory knowledge base. Pretrained
    components can be injected to skip their stages; they must share the
    knowledge base ordering.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        stage = "load_knowledge_base"
        if isinstance(kb_path, KnowledgeBase):
            kb = kb_path
        elif kb_path is not None:
            kb = load_knowledge_base(kb_path)
        elif config.data_dir is None:
            raise UsageError("either a knowledge base or data_dir is required")
        else:
            kb = None

        stage = "dataset"
        if dataset is None:
            if config.data_dir is not None:
                data_kb, dataset = load_dataset_dir(config.data_dir)
                if kb is None:
                    kb = data_kb
                elif kb.symptoms != data_kb.symptoms or kb.diseases != data_kb.diseases:
                    raise CompatibilityError(
                        "dataset directory disagrees with the knowledge base"
                    )
            else:
                data_seed = config.data_seed if config.data_seed is not None else config.seed
                dataset = generate_dataset(
                    kb, config.n_train, config.n_valid, config.n_test, seed=data_seed
                )

        stage = "train_diagnoser"
        if diagnoser is None:
            diagnoser = train_diagnoser(kb, dataset, config.diagnoser)
        if diagnoser.symptoms != kb.symptoms or diagnoser.diseases != kb.diseases:
            raise CompatibilityError("diagnoser does not match the knowledge base")

        stage = "train_vae"
        if config.variant == "no_vae":
            vae = None
        elif vae is None:
            vae = train_vae(kb, dataset, config.vae)
        if vae is not None and vae.symptoms != kb.symptoms:
            raise CompatibilityError("VAE does not match the knowledge base")

        stage = "init_agent"
        torch.manual_seed(config.seed)
        if config.variant == "no_vae":
            actor = MlpActor(kb.symptoms, config.mlp_hidden)
        else:
            actor = init_actor_from_vae(vae)
        critic = Critic(kb.n_diseases, actor.embedding_dim, config.critic_hidden)
        agent = Agent.build(
            actor=actor, critic=critic, variant=config.variant, kb=kb,
            n_max=config.n_max, vae=vae, diagnoser=diagnoser,
        )

        stage = "ppo"
        metrics = _ppo_loop(config, kb, dataset, agent, diagnoser, vae, out)

        stage = "save"
        diagnoser.save(out / "diagnoser.pt")
        if vae is not None:
            vae.save(out / "vae.pt")
        agent.save(out / "agent.pt")
        (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2))
    except SymcheckError:
        raise
    except Exception as exc:
        raise SymcheckError(f"stage '{stage}' failed: {exc}") from exc
    return TrainResult(
        out_dir=out, kb=kb, dataset=dataset, diagnoser=diagnoser, vae=vae,
        agent=agent, metrics=metrics, config=config,
    )


def _ppo_loop(config, kb, dataset, agent, diagnoser, vae, out: Path) -> list[dict]:
    actor, critic = agent.actor, agent.critic
    encoder_expected = actor.encoder_fingerprint()
    actor_opt = torch.optim.Adam(actor.trainable_parameters(), lr=config.actor_lr)
    critic_opt = torch.optim.Adam(critic.parameters(), lr=config.critic_lr)
    reward_cfg = RewardConfig(alpha=config.alpha)
    rollout_rng = np.random.default_rng([config.seed, 17])
    update_rng = np.random.default_rng([config.seed, 23])
    eval_pool = dataset.validation if dataset.validation else dataset.train
    eval_records = eval_pool[: config.eval_records]
    n_symptoms = kb.n_symptoms
    metrics: list[dict] = []
    top1 = float("nan")

    with (out / "metrics.jsonl").open("w") as fh:
        for it in range(config.total_iterations):
            tic = time.perf_counter()
            actor_lr, critic_lr, eta = decay_schedules(it, config)
            for group in actor_opt.param_groups:
                group["lr"] = actor_lr
            for group in critic_opt.param_groups:
                group["lr"] = critic_lr

            buffer = collect_rollouts(
                dataset.train, agent, diagnoser, vae, reward_cfg,
                config.transitions_per_iter, rollout_rng, config.n_max,
                config.variant, config.n_envs,
            )
            if not np.isfinite(buffer.rewards).all():
                raise TrainingDivergedError("collect_rollouts", {"iteration": it})
            compute_gae(buffer, config.gamma, config.lam)
            stats = ppo_update(
                buffer, agent, config, actor_opt, critic_opt, eta, update_rng
            )
            if actor.encoder_fingerprint() != encoder_expected:
                raise TrainingDivergedError(
                    "ppo", {"iteration": it, "reason": "encoder changed"}
                )

            slices = buffer.episode_slices()
            mean_reward = float(np.mean([buffer.rewards[s].sum() for s in slices]))
            mean_len = float(
                np.mean([(buffer.actions[s] < n_symptoms).sum() for s in slices])
            )
            if it % config.eval_every == 0 or it == config.total_iterations - 1:
                report = evaluate_accuracy(
                    eval_records, agent, diagnoser, vae, config.n_max, config.variant
                )
                top1 = report["top1"]
            entry = {
                "iter": it,
                "mean_reward": mean_reward,
                "mean_len": mean_len,
                "top1": top1,
                "policy_loss": stats.policy_loss,
                "value_loss": stats.value_loss,
                "entropy": stats.entropy,
                "clip_fraction": stats.clip_fraction,
                "approx_kl": stats.approx_kl,
                "actor_lr": actor_lr,
                "critic_lr": critic_lr,
                "eta": eta,
                "episodes": len(slices),
                "transitions": buffer.size,
                "seconds": round(time.perf_counter() - tic, 3),
            }
            metrics.append(entry)
            fh.write(json.dumps(entry) + "\n")
            fh.flush()
    return metrics
