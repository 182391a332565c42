"""Product-of-Experts VAE over partially observed symptom vectors.

Each observed symptom contributes one Gaussian expert in latent space,
produced by a shared per-feature encoder applied to ``[value, embedding]``.
Experts multiply with a standard-normal prior into a closed-form diagonal
Gaussian posterior, so any subset of observations can be encoded with a
single network. The decoder maps a latent point to independent Bernoulli
probabilities for all symptoms, which supports conditional-probability
queries and imputation of the unobserved coordinates.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import TrainingDivergedError, UsageError, ValidationError
from .knowledge import DatasetSplit, KnowledgeBase
from .nets import load_checkpoint, mlp, save_checkpoint

PROB_CLAMP = 1e-6
VAR_FLOOR = 1e-4


@dataclass
class GaussianLatent:
    """Diagonal Gaussian in latent space (mean and per-dimension variance)."""

    mean: np.ndarray
    variance: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.variance = np.asarray(self.variance, dtype=np.float64)
        if self.mean.shape != self.variance.shape:
            raise ValidationError("mean and variance shapes differ")
        if not np.all(np.isfinite(self.mean)):
            raise ValidationError("latent mean must be finite")
        if not np.all(self.variance > 0):
            raise ValidationError("latent variance must be strictly positive")


def standard_normal_prior(dim: int) -> GaussianLatent:
    return GaussianLatent(np.zeros(dim), np.ones(dim))


def poe_combine(prior: GaussianLatent, experts) -> GaussianLatent:
    """Product of diagonal Gaussian experts with a prior expert.

    Precisions add: V = (V0^-1 + sum Vi^-1)^-1 and the mean is the
    precision-weighted average. With no experts the prior is returned
    unchanged.
    """
    precision = 1.0 / prior.variance
    weighted = prior.mean / prior.variance
    for expert in experts:
        if expert.mean.shape != prior.mean.shape:
            raise ValidationError("expert latent dimension mismatch")
        precision = precision + 1.0 / expert.variance
        weighted = weighted + expert.mean / expert.variance
    variance = 1.0 / precision
    return GaussianLatent(weighted * variance, variance)


def poe_posterior(embedding: nn.Embedding, h_enc: nn.Module,
                  values: torch.Tensor, observed: torch.Tensor):
    """Batched PoE posterior (mu, var) from the shared per-feature encoder.

    Expert parameters are computed densely for every feature and weighted by
    the observation mask, so one fused pass covers arbitrary observed sets;
    the standard-normal prior contributes unit precision at zero mean.
    """
    b, n = values.shape
    emb = embedding.weight.unsqueeze(0).expand(b, n, -1)
    inp = torch.cat([values.to(emb.dtype).unsqueeze(-1), emb], dim=-1)
    out = h_enc(inp.reshape(b * n, -1)).reshape(b, n, -1)
    mu_i, raw = out.chunk(2, dim=-1)
    var_i = nn.functional.softplus(raw) + VAR_FLOOR
    w = observed.to(mu_i.dtype).unsqueeze(-1)
    precision = 1.0 + (w / var_i).sum(dim=1)
    weighted = (w * mu_i / var_i).sum(dim=1)
    var = 1.0 / precision
    return weighted * var, var


def obs_arrays(entries, n_symptoms: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense (values, observed) float/bool arrays from (index, value) pairs."""
    values = np.zeros(n_symptoms, dtype=np.float32)
    observed = np.zeros(n_symptoms, dtype=bool)
    for idx, value in entries:
        if not 0 <= idx < n_symptoms:
            raise UsageError(f"symptom index {idx} out of range")
        if observed[idx]:
            raise UsageError(f"duplicate observation for symptom index {idx}")
        if value not in (0, 1):
            raise UsageError(f"observation value must be 0 or 1, got {value!r}")
        observed[idx] = True
        values[idx] = float(value)
    return values, observed


def obs_from_state(obs_vec: np.ndarray) -> list[tuple[int, int]]:
    """(index, value) pairs from a {+1, 0, -1} state vector."""
    entries = []
    for idx in np.flatnonzero(obs_vec):
        entries.append((int(idx), 1 if obs_vec[idx] > 0 else 0))
    return entries


@dataclass
class VaeConfig:
    latent_dim: int = 32
    embed_dim: int = 16
    enc_hidden: tuple[int, ...] = (64, 64)
    dec_hidden: tuple[int, ...] = (64, 64)
    beta: float = 1.0

    def to_dict(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "embed_dim": self.embed_dim,
            "enc_hidden": list(self.enc_hidden),
            "dec_hidden": list(self.dec_hidden),
            "beta": self.beta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VaeConfig":
        d = dict(d)
        for key in ("enc_hidden", "dec_hidden"):
            if key in d:
                d[key] = tuple(d[key])
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise UsageError(f"unknown vae model config keys: {sorted(unknown)}")
        return cls(**d)


class PartialVae(nn.Module):
    """PoE encoder + Bernoulli decoder over a fixed symptom ordering."""

    def __init__(self, symptoms: list[str], config: VaeConfig | None = None):
        super().__init__()
        self.symptoms = list(symptoms)
        self.config = config or VaeConfig()
        n, c = len(self.symptoms), self.config
        self.embedding = nn.Embedding(n, c.embed_dim)
        self.h_enc = mlp((1 + c.embed_dim, *c.enc_hidden, 2 * c.latent_dim))
        self.decoder = mlp((c.latent_dim, *c.dec_hidden, n))
        self.history: list[dict] = []

    @property
    def n_symptoms(self) -> int:
        return len(self.symptoms)

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def _dtype(self):
        return self.embedding.weight.dtype

    # --- expert / posterior ---

    def encode_expert(self, value, embedding: torch.Tensor) -> GaussianLatent:
        """One Gaussian expert for a single observed value and its embedding."""
        inp = torch.cat(
            [torch.as_tensor([float(value)], dtype=embedding.dtype), embedding]
        )
        out = self.h_enc(inp)
        mu, raw = out.chunk(2)
        var = nn.functional.softplus(raw) + VAR_FLOOR
        return GaussianLatent(
            mu.detach().cpu().numpy(), var.detach().cpu().numpy()
        )

    def encode_batch(self, values: torch.Tensor, observed: torch.Tensor):
        """Posterior (mu, var) tensors for a [B, N_S] batch of partial rows."""
        return poe_posterior(self.embedding, self.h_enc, values, observed)

    def encode(self, obs) -> GaussianLatent:
        """Posterior for one observation set of (symptom index, value) pairs."""
        values, observed = obs_arrays(obs, self.n_symptoms)
        with torch.no_grad():
            mu, var = self.encode_batch(
                torch.as_tensor(values).unsqueeze(0),
                torch.as_tensor(observed).unsqueeze(0),
            )
        return GaussianLatent(mu[0].cpu().numpy(), var[0].cpu().numpy())

    # --- decoder ---

    def decode_batch(self, z: torch.Tensor) -> torch.Tensor:
        logits = self.decoder(z)
        return torch.clamp(torch.sigmoid(logits), PROB_CLAMP, 1.0 - PROB_CLAMP)

    def decode(self, z) -> np.ndarray:
        z = torch.as_tensor(np.asarray(z, dtype=np.float64), dtype=self._dtype())
        with torch.no_grad():
            probs = self.decode_batch(z.unsqueeze(0))[0]
        return probs.cpu().numpy().astype(np.float64)

    def conditional_prob(self, obs, target: int) -> float:
        """p(symptom ``target`` present | observations), at the posterior mean."""
        if any(idx == target for idx, _ in obs):
            raise UsageError(f"symptom index {target} is already observed")
        if not 0 <= target < self.n_symptoms:
            raise UsageError(f"symptom index {target} out of range")
        posterior = self.encode(obs)
        return float(self.decode(posterior.mean)[target])

    def impute(self, obs) -> np.ndarray:
        """State vector in [-1, 1]: observed coords exact, rest soft (2p - 1)."""
        values, observed = obs_arrays(obs, self.n_symptoms)
        posterior = self.encode(obs)
        soft = 2.0 * self.decode(posterior.mean) - 1.0
        out = np.where(observed, 2.0 * values.astype(np.float64) - 1.0, soft)
        return out

    def impute_batch(self, values: torch.Tensor, observed: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            mu, _ = self.encode_batch(values, observed)
            soft = 2.0 * self.decode_batch(mu) - 1.0
            hard = 2.0 * values.to(soft.dtype) - 1.0
            return torch.where(observed, hard, soft)

    # --- objective ---

    def elbo_batch(
        self,
        x: torch.Tensor,
        observed: torch.Tensor,
        beta: float | None = None,
        noise: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Per-sample negative ELBO with one reparameterized sample.

        The reconstruction term covers every coordinate of the full record,
        so the decoder is supervised on dropped features; the KL term is the
        closed form against the standard-normal prior.
        """
        if not observed.any(dim=1).all():
            raise UsageError("every sample needs at least one observed coordinate")
        beta = self.config.beta if beta is None else beta
        mu, var = self.encode_batch(x * observed.to(x.dtype), observed)
        if noise is None:
            noise = torch.randn_like(mu)
        z = mu + noise * torch.sqrt(var)
        probs = self.decode_batch(z)
        recon = (x * torch.log(probs) + (1.0 - x) * torch.log(1.0 - probs)).sum(dim=1)
        kl = 0.5 * (var + mu * mu - 1.0 - torch.log(var)).sum(dim=1)
        return -(recon - beta * kl)

    def elbo(self, record_full, observed_mask, beta: float | None = None,
             noise=None) -> float:
        """Scalar negative-ELBO loss for one record (see ``elbo_batch``)."""
        x = torch.as_tensor(np.asarray(record_full), dtype=self._dtype()).unsqueeze(0)
        observed = torch.as_tensor(np.asarray(observed_mask, dtype=bool)).unsqueeze(0)
        if noise is not None:
            noise = torch.as_tensor(np.asarray(noise), dtype=self._dtype()).unsqueeze(0)
        return float(self.elbo_batch(x, observed, beta=beta, noise=noise)[0].detach())

    # --- persistence ---

    def save(self, path) -> None:
        save_checkpoint(
            path,
            "vae",
            self.state_dict(),
            {"symptoms": self.symptoms, "config": self.config.to_dict()},
        )

    @classmethod
    def load(cls, path) -> "PartialVae":
        state, meta = load_checkpoint(path, "vae")
        model = cls(meta["symptoms"], VaeConfig.from_dict(meta["config"]))
        model.load_state_dict(state)
        model.eval()
        return model


@dataclass
class VaeTrainConfig:
    epochs: int = 20
    batch_size: int = 512
    lr: float = 1e-3
    seed: int = 0
    mask_range: tuple[float, float] = (0.1, 0.9)
    max_train_records: int | None = None
    model: VaeConfig = field(default_factory=VaeConfig)


def records_to_binary(records, n_symptoms: int) -> np.ndarray:
    """{0,1} matrix of full records: positives 1, everything else 0."""
    x = np.zeros((len(records), n_symptoms), dtype=np.float32)
    for row, rec in enumerate(records):
        x[row, sorted(rec.positive_symptoms)] = 1.0
    return x


def draw_dropout_masks(rng: np.random.Generator, n: int, n_symptoms: int,
                       mask_range, full_prob: float = 0.0) -> np.ndarray:
    """Observed-coordinate masks with a per-sample dropped fraction.

    The dropped count is capped at ``n_symptoms - 1`` so at least one
    coordinate stays observed. With probability ``full_prob`` a sample keeps
    the full observation.
    """
    frac = rng.uniform(mask_range[0], mask_range[1], size=n)
    k = np.minimum(np.round(frac * n_symptoms).astype(int), n_symptoms - 1)
    if full_prob > 0:
        k = np.where(rng.random(n) < full_prob, 0, k)
    ranks = rng.random((n, n_symptoms)).argsort(axis=1).argsort(axis=1)
    return ranks >= k[:, None]


def train_vae(kb: KnowledgeBase, dataset: DatasetSplit, config: VaeTrainConfig) -> PartialVae:
    """Pretrain the PoE VAE on randomly masked records.

    Masks are redrawn every epoch with per-sample dropped fractions uniform
    over ``mask_range``. Validation loss (fixed masks) is logged per epoch in
    ``model.history``.
    """
    if not dataset.train:
        raise ValidationError("empty training set")
    torch.manual_seed(config.seed)
    model = PartialVae(kb.symptoms, config.model)
    train_records = dataset.train
    if config.max_train_records and len(train_records) > config.max_train_records:
        train_records = train_records[: config.max_train_records]
    x_train = records_to_binary(train_records, kb.n_symptoms)
    x_val = records_to_binary(dataset.validation, kb.n_symptoms)
    rng = np.random.default_rng(config.seed)
    val_masks = draw_dropout_masks(
        np.random.default_rng(config.seed + 1), len(x_val), kb.n_symptoms, config.mask_range
    ) if len(x_val) else None
    opt = torch.optim.Adam(model.parameters(), lr=config.lr)

    for epoch in range(config.epochs):
        model.train()
        order = rng.permutation(len(x_train))
        masks = draw_dropout_masks(rng, len(x_train), kb.n_symptoms, config.mask_range)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            xb = torch.as_tensor(x_train[idx])
            ob = torch.as_tensor(masks[idx])
            loss = model.elbo_batch(xb, ob).mean()
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    "train_vae", {"epoch": epoch, "loss": float(loss)}
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        entry = {"epoch": epoch, "train_loss": total / len(x_train)}
        if val_masks is not None:
            entry["val_loss"] = validation_loss(model, x_val, val_masks, config.seed)
        model.history.append(entry)
    model.eval()
    return model


def validation_loss(model: PartialVae, x_val, val_masks, seed: int) -> float:
    gen = torch.Generator().manual_seed(seed)
    model.eval()
    with torch.no_grad():
        losses = []
        for start in range(0, len(x_val), 1024):
            xb = torch.as_tensor(x_val[start : start + 1024])
            ob = torch.as_tensor(val_masks[start : start + 1024])
            noise = torch.randn(
                (len(xb), model.latent_dim), generator=gen, dtype=xb.dtype
            )
            losses.append(model.elbo_batch(xb, ob, noise=noise))
        return float(torch.cat(losses).mean())
