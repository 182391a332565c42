"""Shared fixtures.

Tiny models cover the unit tests. The desk-scale artifacts (20 diseases,
60 symptoms, 50k training records) back the learning-outcome tests; they
are cached under .testcache/ keyed by their exact configuration, so
repeated runs skip the expensive training.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest
import torch

from symcheck import (Agent, Critic, DiagnoserTrainConfig, TrainerConfig,
                      generate_dataset, init_actor_from_vae,
                      random_knowledge_base, train, train_diagnoser, train_vae)
from symcheck.diagnoser import Diagnoser
from symcheck.vae import PartialVae, VaeConfig, VaeTrainConfig

CACHE_DIR = Path(__file__).resolve().parent.parent / ".testcache"

DESK_KB_SEED = 7
DESK_DATA_SEED = 7
DESK_N_MAX = 10
DESK_SEEDS = (42, 43, 44)

DESK_VAE = VaeTrainConfig(epochs=12, lr=1e-3, seed=0, max_train_records=30000)
DESK_DIAGNOSER = DiagnoserTrainConfig(epochs=10, lr=1e-3, seed=0)


def desk_trainer_config(variant: str, seed: int) -> TrainerConfig:
    return TrainerConfig(
        variant=variant, seed=seed, n_max=DESK_N_MAX,
        total_iterations=150, transitions_per_iter=2048, batch_size=512,
        ppo_epochs=4, n_envs=256, actor_lr=3e-4, critic_lr=3e-4,
        eta=0.01, gamma=0.95, lam=0.9, epsilon=0.1, alpha=0.1,
        data_seed=DESK_DATA_SEED, eval_records=500, eval_every=10,
        vae=DESK_VAE, diagnoser=DESK_DIAGNOSER,
    )


# ---------------------------------------------------------------- tiny scale

@pytest.fixture(scope="session")
def tiny_kb():
    return random_knowledge_base(6, 14, (3, 6), (0.3, 0.9), seed=3)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_kb):
    return generate_dataset(tiny_kb, 1200, 300, 300, seed=2)


@pytest.fixture(scope="session")
def tiny_diagnoser(tiny_kb, tiny_dataset):
    cfg = DiagnoserTrainConfig(epochs=5, hidden=(64,), seed=0)
    return train_diagnoser(tiny_kb, tiny_dataset, cfg)


@pytest.fixture(scope="session")
def tiny_vae(tiny_kb, tiny_dataset):
    cfg = VaeTrainConfig(
        epochs=5, seed=0,
        model=VaeConfig(latent_dim=8, embed_dim=4, enc_hidden=(32,), dec_hidden=(32,)),
    )
    return train_vae(tiny_kb, tiny_dataset, cfg)


@pytest.fixture(scope="session")
def tiny_agent(tiny_kb, tiny_vae, tiny_diagnoser):
    torch.manual_seed(0)
    actor = init_actor_from_vae(tiny_vae)
    critic = Critic(tiny_kb.n_diseases, actor.embedding_dim, (32,))
    return Agent.build(
        actor=actor, critic=critic, variant="full", kb=tiny_kb,
        n_max=5, vae=tiny_vae, diagnoser=tiny_diagnoser,
    )


# ---------------------------------------------------------------- desk scale

@pytest.fixture(scope="session")
def desk_kb():
    return random_knowledge_base(20, 60, (3, 8), (0.3, 0.9), seed=DESK_KB_SEED)


@pytest.fixture(scope="session")
def desk_dataset(desk_kb):
    return generate_dataset(desk_kb, 50000, 5000, 5000, seed=DESK_DATA_SEED)


def _load_or_train_pretrained(kb, dataset):
    out = CACHE_DIR / "desk" / "pretrained"
    key = {"vae": dataclasses.asdict(DESK_VAE),
           "diagnoser": dataclasses.asdict(DESK_DIAGNOSER)}
    key_text = json.dumps(key, sort_keys=True)
    stamp = out / "key.json"
    if stamp.exists() and stamp.read_text() == key_text:
        return Diagnoser.load(out / "diagnoser.pt"), PartialVae.load(out / "vae.pt")
    diagnoser = train_diagnoser(kb, dataset, DESK_DIAGNOSER)
    vae = train_vae(kb, dataset, DESK_VAE)
    out.mkdir(parents=True, exist_ok=True)
    diagnoser.save(out / "diagnoser.pt")
    vae.save(out / "vae.pt")
    stamp.write_text(key_text)
    return diagnoser, vae


@pytest.fixture(scope="session")
def desk_pretrained(desk_kb, desk_dataset):
    return _load_or_train_pretrained(desk_kb, desk_dataset)


@pytest.fixture(scope="session")
def desk_run(desk_kb, desk_dataset, desk_pretrained):
    """Factory: cached desk-scale training run for (variant, seed)."""
    diagnoser, vae = desk_pretrained

    def run(variant: str, seed: int):
        config = desk_trainer_config(variant, seed)
        out = CACHE_DIR / "desk" / f"{variant}_s{seed}"
        expected = json.dumps(config.to_dict(), sort_keys=True)
        cfg_file = out / "config.json"
        if cfg_file.exists() and json.dumps(json.loads(cfg_file.read_text()),
                                            sort_keys=True) == expected:
            agent = Agent.load(out / "agent.pt")
            metrics = [json.loads(line)
                       for line in (out / "metrics.jsonl").read_text().splitlines()]
            return agent, metrics
        result = train(
            config, desk_kb, out, dataset=desk_dataset, diagnoser=diagnoser,
            vae=None if variant == "no_vae" else vae,
        )
        return result.agent, result.metrics

    return run
