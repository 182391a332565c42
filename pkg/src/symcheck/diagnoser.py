"""Supervised diagnosis model over partial symptom states.

A feedforward classifier on the {+1, 0, -1} state encoding (or its
soft-imputed variant), trained with the same random-masking regime the
dialogue produces. Output probabilities are clamped away from 0/1 so
downstream KL-based rewards stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import CompatibilityError, TrainingDivergedError, UsageError, ValidationError
from .knowledge import DatasetSplit, KnowledgeBase
from .nets import load_checkpoint, mlp, save_checkpoint
from .vae import PartialVae, draw_dropout_masks, obs_arrays, records_to_binary

PROB_FLOOR = 1e-7


class Diagnoser(nn.Module):
    """Softmax classifier from [-1, 1]^{N_S} states to disease probabilities."""

    def __init__(self, symptoms: list[str], diseases: list[str],
                 hidden: tuple[int, ...] = (256, 256)):
        super().__init__()
        self.symptoms = list(symptoms)
        self.diseases = list(diseases)
        self.hidden = tuple(hidden)
        self.net = mlp((len(self.symptoms), *self.hidden, len(self.diseases)))
        self.history: list[dict] = []

    @property
    def n_symptoms(self) -> int:
        return len(self.symptoms)

    @property
    def n_diseases(self) -> int:
        return len(self.diseases)

    def logits(self, states: torch.Tensor) -> torch.Tensor:
        return self.net(states)

    def predict_batch(self, states: torch.Tensor) -> torch.Tensor:
        """Clamped, renormalized probability rows for a [B, N_S] batch."""
        probs = torch.softmax(self.logits(states), dim=-1)
        probs = torch.clamp(probs, min=PROB_FLOOR)
        return probs / probs.sum(dim=-1, keepdim=True)

    def predict(self, state_vec) -> np.ndarray:
        state_vec = np.asarray(state_vec, dtype=np.float64)
        if state_vec.shape != (self.n_symptoms,):
            raise UsageError(
                f"expected state vector of length {self.n_symptoms}, "
                f"got shape {state_vec.shape}"
            )
        dtype = self.net[0].weight.dtype
        with torch.no_grad():
            probs = self.predict_batch(torch.as_tensor(state_vec, dtype=dtype).unsqueeze(0))
        return probs[0].cpu().numpy().astype(np.float64)

    def diagnose_final(self, obs, vae: PartialVae) -> np.ndarray:
        """Final diagnosis on the VAE-imputed state for an observation set."""
        if vae.symptoms != self.symptoms:
            raise CompatibilityError("diagnoser and VAE symptom orderings differ")
        return self.predict(vae.impute(obs))

    def save(self, path) -> None:
        save_checkpoint(
            path,
            "diagnoser",
            self.state_dict(),
            {"symptoms": self.symptoms, "diseases": self.diseases,
             "hidden": list(self.hidden)},
        )

    @classmethod
    def load(cls, path) -> "Diagnoser":
        state, meta = load_checkpoint(path, "diagnoser")
        model = cls(meta["symptoms"], meta["diseases"], tuple(meta["hidden"]))
        model.load_state_dict(state)
        model.eval()
        return model


@dataclass
class DiagnoserTrainConfig:
    epochs: int = 15
    batch_size: int = 512
    lr: float = 1e-3
    seed: int = 0
    mask_range: tuple[float, float] = (0.1, 0.9)
    full_obs_prob: float = 0.1
    hidden: tuple[int, ...] = (256, 256)


def masked_states(x_binary: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """{+1, 0, -1} encoding: observed present +1, observed absent -1, else 0."""
    return np.where(observed, 2.0 * x_binary - 1.0, 0.0).astype(np.float32)


def train_diagnoser(kb: KnowledgeBase, dataset: DatasetSplit,
                    config: DiagnoserTrainConfig) -> Diagnoser:
    """Cross-entropy training on randomly masked record encodings.

    Per-sample dropped fraction is uniform over ``mask_range``; a
    ``full_obs_prob`` slice keeps the complete record so the
    full-information regime stays in-distribution. Validation accuracy is
    logged per epoch in ``model.history``.
    """
    if not dataset.train:
        raise ValidationError("empty training set")
    torch.manual_seed(config.seed)
    model = Diagnoser(kb.symptoms, kb.diseases, config.hidden)
    x_train = records_to_binary(dataset.train, kb.n_symptoms)
    y_train = np.array([r.disease_index for r in dataset.train], dtype=np.int64)
    x_val = records_to_binary(dataset.validation, kb.n_symptoms)
    y_val = np.array([r.disease_index for r in dataset.validation], dtype=np.int64)
    rng = np.random.default_rng(config.seed)
    val_masks = draw_dropout_masks(
        np.random.default_rng(config.seed + 1), len(x_val), kb.n_symptoms,
        config.mask_range, config.full_obs_prob,
    ) if len(x_val) else None
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)
    loss_fn = nn.CrossEntropyLoss()

    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(x_train))
        masks = draw_dropout_masks(
            rng, len(x_train), kb.n_symptoms, config.mask_range, config.full_obs_prob
        )
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            states = torch.as_tensor(masked_states(x_train[idx], masks[idx]))
            labels = torch.as_tensor(y_train[idx])
            loss = loss_fn(model.logits(states), labels)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    "train_diagnoser", {"epoch": epoch, "loss": float(loss)}
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        entry = {"epoch": epoch, "train_loss": total / len(x_train)}
        if val_masks is not None:
            entry["val_accuracy"] = _accuracy(model, x_val, y_val, val_masks)
        model.history.append(entry)
    model.eval()
    return model


def _accuracy(model: Diagnoser, x, y, masks) -> float:
    model.eval()
    hits = 0
    with torch.no_grad():
        for start in range(0, len(x), 2048):
            states = torch.as_tensor(masked_states(x[start:start + 2048], masks[start:start + 2048]))
            pred = model.predict_batch(states).argmax(dim=-1).cpu().numpy()
            hits += int((pred == y[start:start + 2048]).sum())
    return hits / len(x)


def state_from_obs(obs, n_symptoms: int) -> np.ndarray:
    """{+1, 0, -1} state vector from (index, value) observation pairs."""
    values, observed = obs_arrays(obs, n_symptoms)
    return masked_states(values[None, :], observed[None, :])[0].astype(np.float64)
