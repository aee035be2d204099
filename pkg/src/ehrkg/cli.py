"""Command-line surface for the full pipeline:

    generate -> ingest -> stats -> filter -> prompt -> infer/enrich -> build
plus reporting (report, ablate, audit-sample), the relation-inventory export,
and the scheduler CLI used by the downstream trainer.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import evidence as ev
from . import ingest as ing
from . import kg as kgmod
from . import prompts as pr
from . import report as rep
from . import scheduler as sched
from . import synth
from .codes import CodeId
from .gateway import (Gateway, GatewayConfig, RelationJudgment, NodeDescription,
                      run_description_inference, run_relation_inference)
from .relations import TypePair, export_inventory, pool_for


@click.group()
def main():
    """Evidence-grounded medical knowledge graph pipeline."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="SynthConfig JSON; defaults to the standard benchmark config.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out-dir", required=True, type=click.Path())
def generate(config_path, seed, out_dir):
    """Generate a synthetic cohort with planted dependencies."""
    if config_path:
        cfg = synth.SynthConfig.from_json(config_path)
        if seed is not None:
            cfg.seed = seed
    else:
        cfg = synth.standard_config(seed=seed if seed is not None else 7)
    cohort_path, vocab_path, truth_path = synth.emit(cfg, out_dir)
    click.echo(f"wrote {cohort_path}, {vocab_path}, {truth_path}")


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
def ingest(cohort_path, vocab_path, report_path):
    """Load and validate a cohort against a vocabulary."""
    cohort = ing.load_cohort(cohort_path)
    vocab = ing.load_vocabulary(vocab_path)
    report = ing.validate_cohort(cohort, vocab)
    stats = ing.cohort_summary(cohort)
    payload = report.to_dict()
    payload["stats"] = {
        "n_patients": stats.n_patients, "n_visits": stats.n_visits,
        "mean_codes_per_visit": {t.value: v for t, v in stats.mean_codes_per_visit.items()},
        "unique_codes": {t.value: v for t, v in stats.unique_codes.items()},
    }
    Path(report_path).write_text(json.dumps(payload, indent=2) + "\n")
    click.echo(f"{stats.n_patients} patients, {stats.n_visits} visits; "
               f"{len(report.missing_codes)} missing codes")
    if not report.clean:
        sys.exit(1)


@main.command()
@click.option("--cohort", "cohort_path", required=True, type=click.Path(exists=True))
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def stats(cohort_path, alpha, out_path):
    """Compute the 8-metric evidence table for every supported directed pair."""
    cohort = ing.load_cohort(cohort_path)
    table = ev.build_evidence_table(cohort, ev.FilterConfig(alpha=alpha))
    ev.save_evidence(table, out_path)
    click.echo(f"wrote {len(table)} directed records to {out_path}")


@main.command("filter")
@click.option("--evidence", "evidence_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="FilterConfig JSON; defaults apply otherwise.")
@click.option("--out", "out_path", required=True, type=click.Path())
def filter_cmd(evidence_path, config_path, out_path):
    """Filter the evidence table down to candidate pairs."""
    cfg = ev.FilterConfig.from_json(config_path) if config_path else ev.FilterConfig()
    table = ev.load_evidence(evidence_path)
    pairs = ev.filter_pairs(table, cfg)
    ev.save_candidates(pairs, out_path)
    click.echo(f"retained {len(pairs)} pairs -> {out_path}")


@main.command()
@click.option("--export", "export_path", required=True, type=click.Path())
def inventory(export_path):
    """Dump the type-constrained relation pools as JSON."""
    Path(export_path).write_text(json.dumps(export_inventory(), indent=2) + "\n")
    click.echo(f"wrote inventory to {export_path}")


@main.command("prompt")
@click.option("--candidates", "candidates_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--nodes/--no-nodes", default=True, show_default=True,
              help="Also emit node-description prompts for pair endpoints.")
def prompt_cmd(candidates_path, vocab_path, out_path, nodes):
    """Render relation (and node) prompts for the candidate pairs."""
    pairs = ev.load_candidates(candidates_path)
    vocab = ing.load_vocabulary(vocab_path)
    n_rel = n_node = 0
    with Path(out_path).open("w") as fh:
        for cp in pairs:
            inp = pr.RelationPromptInput.from_candidate(cp, vocab)
            p = pr.build_relation_prompt(inp)
            fh.write(json.dumps({
                "kind": "relation", "codeA": cp.code_a.key(), "codeB": cp.code_b.key(),
                "text": p.text, "hash": p.content_hash,
                "template_version": p.template_version}) + "\n")
            n_rel += 1
        if nodes:
            endpoints = sorted({c for cp in pairs for c in (cp.code_a, cp.code_b)})
            for code in endpoints:
                p = pr.build_node_prompt(vocab[code])
                fh.write(json.dumps({
                    "kind": "node", "code": code.key(),
                    "text": p.text, "hash": p.content_hash,
                    "template_version": p.template_version}) + "\n")
                n_node += 1
    click.echo(f"wrote {n_rel} relation and {n_node} node prompts to {out_path}")


def _load_prompt_records(path: str, kind: str) -> list[dict]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if rec.get("kind") == kind:
                    records.append(rec)
    return records


@main.command()
@click.option("--prompts", "prompts_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--quarantine", "quarantine_path", type=click.Path(), default=None)
def infer(prompts_path, config_path, out_path, quarantine_path):
    """Run relation prompts through the gateway and validate the judgments."""
    gw = Gateway(GatewayConfig.from_json(config_path))
    records = _load_prompt_records(prompts_path, "relation")
    judgments, quarantined = run_relation_inference(records, gw, quarantine_path)
    with Path(out_path).open("w") as fh:
        for j in judgments:
            fh.write(json.dumps(j.to_dict()) + "\n")
    click.echo(f"{len(judgments)} judgments ({len(quarantined)} quarantined) -> {out_path}")


@main.command()
@click.option("--prompts", "prompts_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def enrich(prompts_path, config_path, out_path):
    """Run node-description prompts through the gateway."""
    gw = Gateway(GatewayConfig.from_json(config_path))
    records = _load_prompt_records(prompts_path, "node")
    descriptions = run_description_inference(records, gw)
    with Path(out_path).open("w") as fh:
        for d in descriptions:
            fh.write(json.dumps(d.to_dict()) + "\n")
    click.echo(f"{len(descriptions)} descriptions -> {out_path}")


@main.command()
@click.option("--candidates", "candidates_path", required=True, type=click.Path(exists=True))
@click.option("--judgments", "judgments_path", required=True, type=click.Path(exists=True))
@click.option("--descriptions", "descriptions_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--confidence-floor", type=float, default=0.5, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def build(candidates_path, judgments_path, descriptions_path, vocab_path,
          confidence_floor, out_dir):
    """Assemble and export the knowledge graph."""
    pairs = ev.load_candidates(candidates_path)
    judgments = [RelationJudgment.from_dict(json.loads(l))
                 for l in Path(judgments_path).read_text().splitlines() if l.strip()]
    descriptions = [NodeDescription.from_dict(json.loads(l))
                    for l in Path(descriptions_path).read_text().splitlines() if l.strip()]
    vocab = ing.load_vocabulary(vocab_path)
    kg = kgmod.assemble_kg(pairs, judgments, descriptions, vocab,
                           kgmod.AssembleConfig(confidence_floor=confidence_floor))
    kgmod.export_kg(kg, out_dir, {"confidence_floor": confidence_floor})
    click.echo(f"KG with {len(kg.nodes)} nodes, {len(kg.edges)} edges -> {out_dir}")


@main.command()
@click.option("--kg-dir", required=True, type=click.Path(exists=True))
@click.option("--candidates", "candidates_path", type=click.Path(exists=True), default=None)
@click.option("--out-dir", required=True, type=click.Path())
def report(kg_dir, candidates_path, out_dir):
    """Render relation and pair-category histograms (PNG + CSV)."""
    kg = kgmod.import_kg(kg_dir)
    hist = rep.relation_report(kg, out_dir)
    click.echo(f"relation histogram over {len(hist)} labels -> {out_dir}")
    if candidates_path:
        pairs = ev.load_candidates(candidates_path)
        rep.category_report(pairs, out_dir)
        click.echo(f"pair-category report over {len(pairs)} pairs -> {out_dir}")


@main.command()
@click.option("--kg-dir", required=True, type=click.Path(exists=True))
@click.option("--family", required=True,
              help="A type-pair family (e.g. px-rx) or one relation label.")
@click.option("--out-dir", required=True, type=click.Path())
def ablate(kg_dir, family, out_dir):
    """Remove all edges of a relation family and export the reduced KG."""
    kg = kgmod.import_kg(kg_dir)
    try:
        fam = TypePair(family)
    except ValueError:
        fam = family
    reduced, removed = kgmod.ablate_relation_family(kg, fam)
    kgmod.export_kg(reduced, out_dir, {"ablated_family": family})
    click.echo(f"removed {removed} edges -> {out_dir}")


@main.command("audit-sample")
@click.option("--kg-dir", required=True, type=click.Path(exists=True))
@click.option("--top-n", type=int, default=10, show_default=True)
@click.option("--per-relation", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def audit_sample_cmd(kg_dir, top_n, per_relation, seed, out_path):
    """Deterministically sample edges for the clinical audit sheet."""
    kg = kgmod.import_kg(kg_dir)
    sample, shortfall = kgmod.audit_sample(kg, top_n=top_n,
                                           per_relation=per_relation, seed=seed)
    kgmod.write_audit_file(kg, sample, out_path)
    click.echo(f"sampled {len(sample)} edges -> {out_path}")
    for relation, missing in shortfall.items():
        click.echo(f"shortfall: {relation} is missing {missing} edges")


@main.group()
def schedule():
    """Scheduler state CLI for the cross-language trainer."""


@schedule.command("init")
@click.option("--state", "state_path", required=True, type=click.Path())
@click.option("--k", "--K", "k", type=int, default=10, show_default=True)
@click.option("--m", type=int, default=1, show_default=True)
@click.option("--rho", type=float, default=0.5, show_default=True)
def schedule_init(state_path, k, m, rho):
    """Create a fresh scheduler state file."""
    state = sched.SchedulerState(config=sched.SchedulerConfig(k=k, m=m, rho=rho))
    sched.snapshot(state, state_path)
    click.echo(f"initialized scheduler state -> {state_path}")


@schedule.command("step")
@click.option("--state", "state_path", required=True, type=click.Path(exists=True))
@click.option("--batch-codes", "batch_path", required=True, type=click.Path(exists=True),
              help="Text file, one code key per line; repeats count as multiplicity.")
@click.option("--out", "out_path", required=True, type=click.Path())
def schedule_step(state_path, batch_path, out_path):
    """Apply one record+select step and rewrite the state atomically."""
    state = sched.restore(state_path)
    batch = [CodeId.from_key(l.strip())
             for l in Path(batch_path).read_text().splitlines() if l.strip()]
    sched.record_batch(state, batch)
    selected = sched.next_update_set(state, set(batch))
    Path(out_path).write_text("".join(c.key() + "\n" for c in sorted(selected)))
    sched.snapshot(state, state_path)
    click.echo(f"iteration {state.iteration} ({state.phase}): "
               f"{len(selected)} codes -> {out_path}")


if __name__ == "__main__":
    main()
