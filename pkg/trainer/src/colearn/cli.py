"""CLI: train on exported pipeline artifacts and write Z + eval report."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import data
from .train import TrainConfig, export_z, train


@click.group()
def main():
    """Co-learned concept embeddings and next-visit diagnosis prediction."""


@main.command("train")
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--kg-dir", type=click.Path(exists=True), default=None,
              help="Exported KG directory; omit for the no-KG baseline.")
@click.option("--k", type=int, default=10, show_default=True,
              help="Scheduler budget per iteration; 0 freezes the encoder.")
@click.option("--iterations", type=int, default=200, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def train_cmd(cohort_path, vocab_path, kg_dir, k, iterations, seed, out_dir):
    """Train the co-learned model and export Z.f32, a checkpoint, and
    eval_report.json."""
    patients = data.load_cohort(cohort_path)
    vocab = data.load_vocab(vocab_path)
    kg = data.load_kg(kg_dir) if kg_dir else None
    cfg = TrainConfig(k=k, iterations=iterations, seed=seed,
                      use_kg=kg is not None)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = train(patients, vocab, kg, cfg,
                   checkpoint_path=out / "checkpoint.pt")
    export_z(result.z, vocab, out)
    (out / "eval_report.json").write_text(
        json.dumps(result.report.to_dict(), indent=2) + "\n")
    click.echo(f"final loss {result.losses[-1]:.4f}, "
               f"micro AUPRC {result.report.auprc:.4f} -> {out}")


if __name__ == "__main__":
    main()
