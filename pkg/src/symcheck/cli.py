"""Command-line entry points for the training and serving workflow."""

from __future__ import annotations

import json
from pathlib import Path

import click
import numpy as np

from .agent import Agent
from .diagnoser import Diagnoser
from .errors import SymcheckError
from .evaluation import (baseline_full_observation, baseline_random, evaluate,
                         run_ablation)
from .knowledge import generate_dataset, load_dataset_dir, load_knowledge_base
from .training import (TrainerConfig, _diagnoser_train_config,
                       _vae_train_config, train)
from .vae import PartialVae
from .vae import train_vae as _train_vae
from .diagnoser import train_diagnoser as _train_diagnoser


def _read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def _trainer_config(config_path, **overrides) -> TrainerConfig:
    raw = _read_json(config_path) if config_path else {}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return TrainerConfig.from_dict(raw)


def _load_models(model_dir):
    model_dir = Path(model_dir)
    agent = Agent.load(model_dir / "agent.pt")
    diagnoser = Diagnoser.load(model_dir / "diagnoser.pt")
    vae_path = model_dir / "vae.pt"
    vae = PartialVae.load(vae_path) if vae_path.exists() else None
    agent.check_compatible(diagnoser, vae)
    return agent, diagnoser, vae


def _split_records(data_dir, split: str, limit: int | None):
    _, dataset = load_dataset_dir(data_dir)
    records = {"train": dataset.train, "valid": dataset.validation,
               "test": dataset.test}[split]
    return records[:limit] if limit else records


@click.group()
def cli() -> None:
    """Symptom-inquiry diagnosis: data synthesis, training, evaluation, serving."""


@cli.command()
@click.option("--kb", "kb_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--train", "n_train", default=50000, show_default=True)
@click.option("--valid", "n_valid", default=5000, show_default=True)
@click.option("--test", "n_test", default=5000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def synth(kb_path, out_dir, n_train, n_valid, n_test, seed) -> None:
    """Sample a synthetic patient dataset into a self-contained directory."""
    kb = load_knowledge_base(kb_path)
    generate_dataset(kb, n_train, n_valid, n_test, seed=seed, out_dir=out_dir)
    click.echo(f"wrote {n_train}/{n_valid}/{n_test} records to {out_dir}")


@cli.command("pretrain-vae")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def pretrain_vae(data_dir, out_path, config_path) -> None:
    """Pretrain the generative model on masked records."""
    kb, dataset = load_dataset_dir(data_dir)
    config = _vae_train_config(_read_json(config_path)) if config_path else None
    model = _train_vae(kb, dataset, config or _vae_train_config({}))
    model.save(out_path)
    last = model.history[-1] if model.history else {}
    click.echo(f"saved {out_path} ({json.dumps(last)})")


@cli.command("train-diagnoser")
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def train_diagnoser_cmd(data_dir, out_path, config_path) -> None:
    """Train the masked-state diagnosis classifier."""
    kb, dataset = load_dataset_dir(data_dir)
    config = _diagnoser_train_config(_read_json(config_path)) if config_path else None
    model = _train_diagnoser(kb, dataset, config or _diagnoser_train_config({}))
    model.save(out_path)
    last = model.history[-1] if model.history else {}
    click.echo(f"saved {out_path} ({json.dumps(last)})")


@cli.command("train")
@click.option("--kb", "kb_path", type=click.Path(exists=True))
@click.option("--data", "data_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--variant", type=click.Choice(["full", "no_reward_shaping", "no_vae"]))
@click.option("--seed", type=int)
@click.option("--iterations", "total_iterations", type=int)
def train_cmd(kb_path, data_dir, out_dir, config_path, variant, seed,
              total_iterations) -> None:
    """Run the full training pipeline into an output directory."""
    config = _trainer_config(
        config_path, variant=variant, seed=seed,
        total_iterations=total_iterations, data_dir=data_dir,
    )
    result = train(config, kb_path, out_dir)
    last = result.metrics[-1] if result.metrics else {}
    click.echo(f"trained {config.variant} agent into {out_dir} "
               f"(final top1 {last.get('top1')})")


@cli.command("eval")
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "valid", "test"]))
@click.option("--limit", type=int)
def eval_cmd(model_dir, data_dir, split, limit) -> None:
    """Evaluate a trained agent; prints a JSON report."""
    agent, diagnoser, vae = _load_models(model_dir)
    records = _split_records(data_dir, split, limit)
    report = evaluate(agent, diagnoser, vae, records)
    click.echo(json.dumps(report.to_dict(), indent=2))


@cli.command()
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--kind", default="random", show_default=True,
              type=click.Choice(["random", "full"]))
@click.option("--split", default="test", show_default=True,
              type=click.Choice(["train", "valid", "test"]))
@click.option("--budget", type=int)
@click.option("--limit", type=int)
@click.option("--seed", default=0, show_default=True)
def baseline(model_dir, data_dir, kind, split, budget, limit, seed) -> None:
    """Reference accuracies: random inquiries or the full-observation ceiling."""
    agent, diagnoser, vae = _load_models(model_dir)
    records = _split_records(data_dir, split, limit)
    if kind == "full":
        report = baseline_full_observation(records, diagnoser)
    else:
        rng = np.random.default_rng(seed)
        report = baseline_random(
            records, diagnoser, vae, budget if budget is not None else agent.n_max, rng
        )
    click.echo(json.dumps(report.to_dict(), indent=2))


@cli.command()
@click.option("--kb", "kb_path", type=click.Path(exists=True))
@click.option("--data", "data_dir", type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--limit", "eval_limit", type=int)
def ablate(kb_path, data_dir, out_dir, config_path, eval_limit) -> None:
    """Train and evaluate all variants under one configuration."""
    config = _trainer_config(config_path, data_dir=data_dir)
    reports = run_ablation(config, kb_path, out_dir, eval_limit=eval_limit)
    click.echo(json.dumps({v: r.to_dict() for v, r in reports.items()}, indent=2))


@cli.command()
@click.option("--model-dir", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--db", "db_path", type=click.Path())
def serve(model_dir, host, port, db_path) -> None:
    """Serve consultation sessions over HTTP."""
    from .service import serve as _serve

    _serve(model_dir, host=host, port=port, db_path=db_path)


def main() -> None:
    try:
        cli.main(standalone_mode=True)
    except SymcheckError as exc:
        click.echo(f"error: {exc}", err=True)
        raise SystemExit(2)


if __name__ == "__main__":
    main()
