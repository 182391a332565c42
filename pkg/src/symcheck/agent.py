"""Actor and critic networks for the inquiry policy.

The standard actor reuses the pretrained VAE: its encoder (frozen) and
decoder (fine-tuned) are copied in, and a single linear head maps the
decoded symptom probabilities to N_S+1 action logits. Illegal actions are
masked to probability exactly zero before the softmax normalization. The
critic scores the extended state [diagnosis distribution, latent mean,
turn ratio]. A plain-MLP actor over the raw state is provided for the
VAE-free ablation; it exposes the same batched interface with the raw
state standing in for the latent embedding.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .diagnoser import Diagnoser
from .env import Action, DialogueState, legal_mask
from .errors import CompatibilityError, UsageError
from .nets import load_checkpoint, mlp, params_fingerprint, save_checkpoint
from .vae import VAR_FLOOR, PartialVae, VaeConfig, obs_from_state

NEG_INF = float("-inf")


@dataclass
class PolicyOutput:
    action_probs: np.ndarray
    log_prob: float | None = None
    value: float | None = None


def masked_softmax(logits: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
    """Softmax with illegal entries at exactly zero probability."""
    filled = torch.where(masks, logits, torch.full_like(logits, NEG_INF))
    return torch.softmax(filled, dim=-1)


class PoeActor(nn.Module):
    """VAE-shaped policy: frozen PoE encoder, fine-tuned decoder, action head."""

    def __init__(self, symptoms: list[str], config: VaeConfig):
        super().__init__()
        self.symptoms = list(symptoms)
        self.config = config
        n = len(self.symptoms)
        self.embedding = nn.Embedding(n, config.embed_dim)
        self.h_enc = mlp((1 + config.embed_dim, *config.enc_hidden, 2 * config.latent_dim))
        self.decoder = mlp((config.latent_dim, *config.dec_hidden, n))
        self.h_a = nn.Linear(n, n + 1)
        nn.init.normal_(self.h_a.weight, std=0.01)
        nn.init.zeros_(self.h_a.bias)
        self._freeze_encoder()
        self._tables = None

    def _freeze_encoder(self):
        for p in self.embedding.parameters():
            p.requires_grad_(False)
        for p in self.h_enc.parameters():
            p.requires_grad_(False)

    @property
    def embedding_dim(self) -> int:
        """Width of the per-transition embedding cached for PPO updates."""
        return self.config.latent_dim

    def trainable_parameters(self):
        return list(self.decoder.parameters()) + list(self.h_a.parameters())

    def encoder_fingerprint(self) -> str:
        frozen = nn.ModuleDict({"embedding": self.embedding, "h_enc": self.h_enc})
        return params_fingerprint(frozen)

    def load_state_dict(self, *args, **kwargs):
        self._tables = None
        return super().load_state_dict(*args, **kwargs)

    def _expert_tables(self):
        """Per-(value, symptom) expert Gaussians, precomputed once.

        Valid only while the encoder stays frozen: observation values are
        binary, so each symptom admits exactly two expert inputs.
        """
        if self._tables is None:
            n = len(self.symptoms)
            with torch.no_grad():
                emb = self.embedding.weight
                mus, variances = [], []
                for value in (0.0, 1.0):
                    col = torch.full((n, 1), value, dtype=emb.dtype)
                    out = self.h_enc(torch.cat([col, emb], dim=-1))
                    mu_i, raw = out.chunk(2, dim=-1)
                    mus.append(mu_i)
                    variances.append(nn.functional.softplus(raw) + VAR_FLOOR)
                self._tables = (torch.stack(mus), torch.stack(variances))
        return self._tables

    def encode_mean(self, values: torch.Tensor, observed: torch.Tensor) -> torch.Tensor:
        """Posterior mean of the frozen PoE encoder (detached).

        Table lookup equivalent of the product-of-experts combination."""
        with torch.no_grad():
            mu_tab, var_tab = self._expert_tables()
            cols = torch.arange(len(self.symptoms))
            vsel = (values > 0.5).long()
            mu_i = mu_tab[vsel, cols]
            var_i = var_tab[vsel, cols]
            w = observed.to(mu_i.dtype).unsqueeze(-1)
            precision = 1.0 + (w / var_i).sum(dim=1)
            weighted = (w * mu_i / var_i).sum(dim=1)
            return weighted / precision

    def logits_from_embedding(self, z: torch.Tensor) -> torch.Tensor:
        probs = torch.clamp(torch.sigmoid(self.decoder(z)), 1e-6, 1.0 - 1e-6)
        return self.h_a(probs)

    def policy_batch(self, values, observed, states, masks):
        """(action_probs, cached embedding) for a batch of dialogue states."""
        z = self.encode_mean(values, observed)
        return masked_softmax(self.logits_from_embedding(z), masks), z


class MlpActor(nn.Module):
    """Alternate actor over the raw {+1, 0, -1} state (VAE-free ablation)."""

    def __init__(self, symptoms: list[str], hidden: tuple[int, ...] = (256, 256)):
        super().__init__()
        self.symptoms = list(symptoms)
        self.hidden = tuple(hidden)
        n = len(self.symptoms)
        self.net = mlp((n, *self.hidden, n + 1))

    @property
    def embedding_dim(self) -> int:
        return len(self.symptoms)

    def trainable_parameters(self):
        return list(self.net.parameters())

    def encoder_fingerprint(self) -> str:
        return "none"

    def logits_from_embedding(self, states: torch.Tensor) -> torch.Tensor:
        return self.net(states)

    def policy_batch(self, values, observed, states, masks):
        return masked_softmax(self.logits_from_embedding(states), masks), states


class Critic(nn.Module):
    """State-value head over [diagnosis probs, latent embedding, turn ratio]."""

    def __init__(self, n_diseases: int, embedding_dim: int,
                 hidden: tuple[int, ...] = (128, 128)):
        super().__init__()
        self.n_diseases = n_diseases
        self.embedding_dim = embedding_dim
        self.hidden = tuple(hidden)
        self.h_c = mlp((n_diseases + embedding_dim + 1, *self.hidden, 1))

    def forward_batch(self, yhat: torch.Tensor, z: torch.Tensor,
                      n: torch.Tensor) -> torch.Tensor:
        x = torch.cat([yhat, z, n.unsqueeze(-1)], dim=-1)
        return self.h_c(x).squeeze(-1)

    def value(self, yhat, z, n: float) -> float:
        dtype = self.h_c[0].weight.dtype
        with torch.no_grad():
            out = self.forward_batch(
                torch.as_tensor(np.asarray(yhat), dtype=dtype).unsqueeze(0),
                torch.as_tensor(np.asarray(z), dtype=dtype).unsqueeze(0),
                torch.as_tensor([float(n)], dtype=dtype),
            )
        return float(out[0])


def init_actor_from_vae(vae: PartialVae) -> PoeActor:
    """Fresh actor with the pretrained encoder (frozen) and decoder copied in."""
    actor = PoeActor(vae.symptoms, vae.config)
    actor.embedding.load_state_dict(copy.deepcopy(vae.embedding.state_dict()))
    actor.h_enc.load_state_dict(copy.deepcopy(vae.h_enc.state_dict()))
    actor.decoder.load_state_dict(copy.deepcopy(vae.decoder.state_dict()))
    actor._freeze_encoder()
    actor._tables = None
    return actor


def actor_forward(actor, state: DialogueState, mask: np.ndarray | None = None) -> PolicyOutput:
    """Action probabilities for one dialogue state under the legal mask."""
    if mask is None:
        mask = legal_mask(state)
    if not mask.any():
        raise UsageError("legal mask has no true entries")
    dtype = next(actor.parameters()).dtype
    state_f = torch.as_tensor(state.obs_vec, dtype=dtype).unsqueeze(0)
    values = torch.as_tensor((state.obs_vec > 0), dtype=dtype).unsqueeze(0)
    observed = torch.as_tensor(state.obs_vec != 0).unsqueeze(0)
    masks = torch.as_tensor(mask).unsqueeze(0)
    with torch.no_grad():
        probs, _ = actor.policy_batch(values, observed, state_f, masks)
    return PolicyOutput(probs[0].cpu().numpy().astype(np.float64))


def build_critic_input(state: DialogueState, diagnoser: Diagnoser, vae: PartialVae,
                       turn: int, n_max: int):
    """(yhat, z, n) triple the critic consumes for one state."""
    yhat = diagnoser.predict(state.obs_vec.astype(np.float64))
    z = vae.encode(obs_from_state(state.obs_vec)).mean
    return yhat, z, turn / n_max


def _probs_of(policy_output) -> np.ndarray:
    probs = getattr(policy_output, "action_probs", policy_output)
    return np.asarray(probs, dtype=np.float64)


def sample_action(policy_output, rng: np.random.Generator) -> Action:
    probs = _probs_of(policy_output)
    n_symptoms = len(probs) - 1
    index = int(rng.choice(len(probs), p=probs / probs.sum()))
    return Action.from_index(index, n_symptoms)


def greedy_action(policy_output) -> Action:
    """Argmax action; ties break to the lowest index."""
    probs = _probs_of(policy_output)
    return Action.from_index(int(np.argmax(probs)), len(probs) - 1)


@dataclass
class Agent:
    """Actor/critic pair plus provenance of the models it was trained with."""

    actor: nn.Module
    critic: Critic
    variant: str  # "full" | "no_vae"
    symptoms: list[str]
    diseases: list[str]
    n_max: int
    vae_fingerprint: str | None = None
    diagnoser_fingerprint: str | None = None

    @classmethod
    def build(cls, actor, critic, variant: str, kb, n_max: int,
              vae: PartialVae | None, diagnoser: Diagnoser) -> "Agent":
        """Assemble an agent, fingerprinting the models it depends on."""
        return cls(
            actor=actor,
            critic=critic,
            variant=variant,
            symptoms=list(kb.symptoms),
            diseases=list(kb.diseases),
            n_max=n_max,
            vae_fingerprint=params_fingerprint(vae) if vae is not None else None,
            diagnoser_fingerprint=params_fingerprint(diagnoser),
        )

    def save(self, path) -> None:
        if isinstance(self.actor, PoeActor):
            actor_meta = {"type": "poe", "config": self.actor.config.to_dict()}
        else:
            actor_meta = {"type": "mlp", "hidden": list(self.actor.hidden)}
        save_checkpoint(
            path,
            "agent",
            {"actor": self.actor.state_dict(), "critic": self.critic.state_dict()},
            {
                "variant": self.variant,
                "symptoms": self.symptoms,
                "diseases": self.diseases,
                "n_max": self.n_max,
                "actor": actor_meta,
                "critic_hidden": list(self.critic.hidden),
                "vae_fingerprint": self.vae_fingerprint,
                "diagnoser_fingerprint": self.diagnoser_fingerprint,
            },
        )

    @classmethod
    def load(cls, path) -> "Agent":
        state, meta = load_checkpoint(path, "agent")
        if meta["actor"]["type"] == "poe":
            actor = PoeActor(meta["symptoms"], VaeConfig.from_dict(meta["actor"]["config"]))
        else:
            actor = MlpActor(meta["symptoms"], tuple(meta["actor"]["hidden"]))
        actor.load_state_dict(state["actor"])
        critic = Critic(len(meta["diseases"]), actor.embedding_dim,
                        tuple(meta["critic_hidden"]))
        critic.load_state_dict(state["critic"])
        actor.eval()
        critic.eval()
        return cls(
            actor=actor,
            critic=critic,
            variant=meta["variant"],
            symptoms=meta["symptoms"],
            diseases=meta["diseases"],
            n_max=meta["n_max"],
            vae_fingerprint=meta.get("vae_fingerprint"),
            diagnoser_fingerprint=meta.get("diagnoser_fingerprint"),
        )

    def check_compatible(self, diagnoser: Diagnoser, vae: PartialVae | None) -> None:
        if diagnoser.symptoms != self.symptoms or diagnoser.diseases != self.diseases:
            raise CompatibilityError("agent and diagnoser orderings differ")
        if vae is not None and vae.symptoms != self.symptoms:
            raise CompatibilityError("agent and VAE symptom orderings differ")
        if self.variant != "no_vae" and vae is None:
            raise CompatibilityError("this agent requires a VAE checkpoint")
        if self.diagnoser_fingerprint and params_fingerprint(diagnoser) != self.diagnoser_fingerprint:
            raise CompatibilityError(
                "diagnoser parameters differ from the ones this agent was trained with"
            )
        if vae is not None and self.vae_fingerprint and params_fingerprint(vae) != self.vae_fingerprint:
            raise CompatibilityError(
                "VAE parameters differ from the ones this agent was trained with"
            )
