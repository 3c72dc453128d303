"""Command-line interface tying the pipeline together.

Every command accepts --seed and --config; given both, all outputs are
deterministic byte-for-byte.
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .annotator_fit import FitError, fit
from .candidates import cluster_candidates, filter_executable
from .database import database_to_json
from .dbsynth import SynthFailure, synthesize_question_db
from .evalsim import (
    annotation_accuracy,
    build_fit_dataset,
    candidate_ceiling,
    interaction_ceiling,
    metrics_table,
    precompute_corpus_trees,
    simulate_crowd_transcripts,
)
from .infogain import Belief, truncate
from .interaction import Limits
from .response_model import AnnotatorParams, fixed_error_params
from .store import (
    Workspace,
    bundled_corpus_path,
    corpus_items,
    ingest as ingest_bundle,
    load_corpus,
    synth_config_from,
)


class Pipeline:
    def __init__(self, corpus: str | None, workspace: str, seed: int, config: str | None):
        self.bundle = load_corpus(Path(corpus) if corpus else bundled_corpus_path())
        if config:
            import tomli

            overrides = tomli.loads(Path(config).read_text())
            merged = dict(self.bundle.config)
            for section, values in overrides.items():
                merged.setdefault(section, {}).update(values)
            self.bundle.config = merged
        self.workspace = Workspace(workspace)
        self.seed = seed
        self.cfg = synth_config_from(self.bundle.config, seed=seed)

    def items(self, utterance_ids=None):
        return corpus_items(self.bundle, self.workspace, utterance_ids)

    def ensure_ingested(self):
        if not all(self.workspace.has_repaired_db(sid) for sid in self.bundle.schemas):
            ingest_bundle(self.bundle, self.workspace)

    def ensure_clustered(self):
        self.ensure_ingested()
        missing = [u for u in self.bundle.utterances if not self.workspace.has_clusters(u.id)]
        if missing:
            self._cluster(missing)

    def _cluster(self, utterances, n_dbs: int | None = None):
        n = n_dbs or int(self.bundle.config.get("cluster", {}).get("n_dbs", 1000))
        for u in utterances:
            schema = self.bundle.schemas[u.schema_id]
            sample = self.workspace.load_repaired_db(schema)
            cands = filter_executable(self.bundle.candidates.get(u.id, []), sample)
            clusters = cluster_candidates(cands, schema, sample, n_dbs=n, seed=self.seed)
            self.workspace.save_clusters(u.id, clusters)


@click.group()
@click.option("--corpus", type=click.Path(exists=True), default=None,
              help="Corpus bundle directory (defaults to the bundled fixture corpus).")
@click.option("--workspace", type=click.Path(), default="workspace",
              help="Directory for derived artifacts.")
@click.option("--seed", type=int, default=0)
@click.option("--config", type=click.Path(exists=True), default=None,
              help="TOML file overriding corpus configuration.")
@click.pass_context
def main(ctx, corpus, workspace, seed, config):
    """Disambiguate candidate SQL programs with synthesized databases."""
    ctx.obj = Pipeline(corpus, workspace, seed, config)


@main.command()
@click.pass_obj
def ingest(p: Pipeline):
    """Repair sample databases and stage them into the workspace."""
    ingest_bundle(p.bundle, p.workspace)
    click.echo(f"ingested {len(p.bundle.schemas)} schemas into {p.workspace.root}")


@main.command()
@click.option("--n-dbs", type=int, default=None, help="Fuzz databases per utterance.")
@click.pass_obj
def cluster(p: Pipeline, n_dbs):
    """Filter and cluster raw candidates into equivalence classes."""
    p.ensure_ingested()
    p._cluster(p.bundle.utterances, n_dbs=n_dbs)
    total = sum(len(p.workspace.load_clusters(u.id)) for u in p.bundle.utterances)
    click.echo(f"clustered {len(p.bundle.utterances)} utterances into {total} clusters")


@main.command()
@click.argument("utterance_id")
@click.pass_obj
def synth(p: Pipeline, utterance_id):
    """Synthesize one question database and print it with its IG trace."""
    p.ensure_clustered()
    [item] = p.items([utterance_id])
    belief = Belief.from_clusters(item.clusters)
    pprime = truncate(belief, item.clusters)
    try:
        result = synthesize_question_db(pprime, item.schema, item.sample_db, p.cfg)
    except SynthFailure as failure:
        payload = {"utterance_id": utterance_id, "failure": failure.reason,
                   "attempted_configs": failure.attempted_configs}
        p.workspace.write_json(f"exports/synth-{utterance_id}.json", payload)
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
        sys.exit(1)
    from .schema import schema_to_json

    payload = {
        "utterance_id": utterance_id,
        "ig_bits": result.ig_bits,
        "config_used": result.config_used,
        "schema": schema_to_json(result.db.schema),
        "db": database_to_json(result.db),
        "trace": result.trace,
    }
    p.workspace.write_json(f"exports/synth-{utterance_id}.json", payload)
    for t in result.db.schema.tables:
        click.echo(f"{t.name}({', '.join(t.column_names)})")
        for row in result.db.rows(t.name):
            click.echo("  " + " | ".join("NULL" if v is None else str(v) for v in row))
    click.echo(f"ig_bits={result.ig_bits:.4f} config={result.config_used} size={result.db.size}")


@main.command()
@click.option("--budget-min", type=float, default=40.0, help="Per-utterance budget, minutes.")
@click.option("--utterances", "only", default=None, help="Comma-separated utterance ids.")
@click.pass_obj
def precompute(p: Pipeline, budget_min, only):
    """Precompute response trees for real-time serving."""
    p.ensure_clustered()
    wanted = only.split(",") if only else None
    from .evalsim import precompute_corpus_trees

    items = p.items(wanted)
    trees = precompute_corpus_trees(items, fixed_error_params(), p.cfg,
                                    budget_ms=budget_min * 60_000.0, seed=p.seed)
    for tree in trees.values():
        p.workspace.save_tree(tree)
    sizes = {uid: len(t.nodes) for uid, t in sorted(trees.items())}
    click.echo(f"precomputed {len(trees)} trees; node counts: {json.dumps(sizes)}")


@main.command()
@click.option("--oracle", "mode", flag_value="oracle", default=True)
@click.option("--crowd", "mode", flag_value="crowd")
@click.option("--annotators", default="ann1:0.3,ann2:0.3,ann3:0.3",
              help="Crowd spec as name:error_rate pairs.")
@click.option("--per-utterance", type=int, default=3)
@click.option("--seeds", type=int, default=1,
              help="Monte-Carlo repetitions for the crowd mode (20 for a full evaluation).")
@click.option("--save-transcripts/--no-save-transcripts", default=True)
@click.pass_obj
def simulate(p: Pipeline, mode, annotators, per_utterance, seeds, save_transcripts):
    """Simulated evaluation with an oracle annotator or a noisy crowd."""
    p.ensure_clustered()
    items = p.items()
    t0 = time.time()
    if mode == "oracle":
        ceiling = candidate_ceiling(items, seed=p.seed)
        result = interaction_ceiling(items, Limits(), p.cfg, seed=p.seed)
        ann = annotation_accuracy(items, result["transcripts"],
                                  AnnotatorParams(bias=float("-inf")), seed=p.seed)
        sizes = [s for record in result["records"] for s in record.db_sizes]
        metrics = {
            "mode": "oracle",
            "candidate_ceiling": ceiling,
            "interaction_ceiling": result["accuracy"],
            "accuracy": ann["accuracy"],
            "mean_rounds": result["mean_rounds"],
            "mean_db_size": result["mean_db_size"],
            "max_db_size": max(sizes) if sizes else 0,
            "max_rounds": max((r.rounds_used for r in result["records"]), default=0),
            "per_difficulty": result["per_difficulty"],
            "runtime_s": round(time.time() - t0, 1),
        }
        p.workspace.write_json("exports/metrics-oracle.json", metrics)
        click.echo(metrics_table({"accuracy": result["accuracy"],
                                  "per_difficulty": result["per_difficulty"]}))
        click.echo(json.dumps({k: v for k, v in metrics.items() if k != "per_difficulty"},
                              indent=2, sort_keys=True))
        return
    crowd = {}
    for part in annotators.split(","):
        name, _, rate = part.partition(":")
        crowd[name.strip()] = float(rate)
    trees = {}
    for item in items:
        if p.workspace.has_tree(item.utterance.id):
            trees[item.utterance.id] = p.workspace.load_tree(item.utterance.id)
    missing = [item for item in items if item.utterance.id not in trees]
    if missing:
        fresh = precompute_corpus_trees(missing, fixed_error_params(), p.cfg, seed=p.seed)
        for tree in fresh.values():
            p.workspace.save_tree(tree)
        trees.update(fresh)
    if seeds > 1:
        from .evalsim import monte_carlo_crowd_eval

        metrics = monte_carlo_crowd_eval(items, trees, crowd,
                                         per_utterance=per_utterance, n_seeds=seeds)
        metrics.update({"mode": "crowd-mc", "annotators": crowd,
                        "runtime_s": round(time.time() - t0, 1)})
        p.workspace.write_json("exports/metrics-crowd.json", metrics)
        click.echo(json.dumps({k: v for k, v in metrics.items() if k != "per_seed"},
                              indent=2, sort_keys=True))
        return
    transcripts = simulate_crowd_transcripts(items, trees, crowd,
                                             per_utterance=per_utterance, seed=p.seed)
    if save_transcripts:
        for uid, entries in sorted(transcripts.items()):
            path = p.workspace.root / "transcripts" / f"{uid}.jsonl"
            if path.exists():
                path.unlink()
            p.workspace.append_transcript(uid, entries)
    ann = annotation_accuracy(items, transcripts, fixed_error_params(), seed=p.seed)
    metrics = {
        "mode": "crowd",
        "annotators": crowd,
        "accuracy": ann["accuracy"],
        "prior_top1_accuracy": ann["prior_top1_accuracy"],
        "single_annotator_accuracy": ann["single_annotator_accuracy"],
        "per_difficulty": ann["per_difficulty"],
        "runtime_s": round(time.time() - t0, 1),
    }
    p.workspace.write_json("exports/metrics-crowd.json", metrics)
    click.echo(json.dumps({k: v for k, v in metrics.items() if k != "per_difficulty"},
                          indent=2, sort_keys=True))


@main.command(name="fit")
@click.option("--mode", type=click.Choice(["full", "single"]), default="full")
@click.option("--max-iters", type=int, default=200)
@click.pass_obj
def fit_cmd(p: Pipeline, mode, max_iters):
    """Fit the annotator error model from stored transcripts."""
    p.ensure_clustered()
    items = p.items()
    transcripts = p.workspace.all_transcripts()
    if not any(transcripts.values()):
        click.echo("no transcripts recorded yet", err=True)
        sys.exit(1)
    ds = build_fit_dataset(items, transcripts, seed=p.seed)
    try:
        report = fit(ds, fixed_error_params(), max_iters=max_iters, mode=mode)
    except FitError as exc:
        click.echo(f"fit failed: {exc}", err=True)
        sys.exit(1)
    report.params.save(p.workspace.root / "params.json")
    p.workspace.write_json("report.json", {
        "log_likelihood_trace": report.log_likelihood_trace,
        "auc": report.auc,
        "mse": report.mse,
    })
    click.echo(f"fitted params saved; final objective {report.log_likelihood_trace[-1]:.4f} "
               f"auc={report.auc:.3f} mse={report.mse:.4f}")


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
@click.option("--tree-budget-min", type=float, default=40.0)
@click.pass_obj
def serve(p: Pipeline, host, port, tree_budget_min):
    """Run the annotation service."""
    import uvicorn

    from .service import AnnotationService, create_app

    p.ensure_clustered()
    service = AnnotationService(p.bundle, p.workspace, seed=p.seed,
                                tree_budget_ms=tree_budget_min * 60_000.0)
    uvicorn.run(create_app(service), host=host, port=port, log_level="warning")


@main.command()
@click.pass_obj
def export(p: Pipeline):
    """Export MAP annotations and posteriors from recorded transcripts."""
    from .evalsim import recompute_posteriors
    from .store import export_annotations

    p.ensure_clustered()
    items = p.items()
    transcripts = p.workspace.all_transcripts()
    params_path = p.workspace.root / "params.json"
    params = AnnotatorParams.load(params_path) if params_path.exists() else fixed_error_params()
    posteriors = recompute_posteriors(items, transcripts, params)
    text = export_annotations(items, posteriors)
    out = p.workspace.root / "exports" / "annotations.jsonl"
    out.write_text(text)
    click.echo(f"wrote {out} ({len(text.splitlines())} records)")


if __name__ == "__main__":
    main()
