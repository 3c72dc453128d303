"""Corpus bundles and the on-disk workspace.

A corpus bundle is the read-only input: schema DDL plus sidecar metadata,
sample databases in portable JSON, utterances and raw candidates in JSON
Lines, a unit manifest for annotation sessions, and optional synthesis
configuration. A workspace holds everything the pipeline derives from it:
repaired databases, clusters, response trees, transcripts, fitted
parameter files, and exports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .candidates import (
    CandidateCluster,
    RawCandidate,
    Utterance,
    clusters_from_json,
    clusters_to_json,
    read_candidates,
)
from .database import Database, database_from_json, database_to_json, repair_database
from .dbsynth import SynthConfig
from .evalsim import CorpusItem
from .interaction import (
    ResponseTree,
    TranscriptEntry,
    transcript_entry_from_json,
    transcript_entry_to_json,
    tree_from_json,
    tree_to_json,
)
from .schema import Schema, load_schema


@dataclass
class CorpusBundle:
    root: Path
    schemas: dict[str, Schema]
    sample_dbs: dict[str, Database]
    utterances: list[Utterance]
    candidates: dict[str, list[RawCandidate]]
    units: dict[str, list[str]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def utterance(self, utterance_id: str) -> Utterance:
        for u in self.utterances:
            if u.id == utterance_id:
                return u
        raise KeyError(utterance_id)


def bundled_corpus_path() -> Path:
    return Path(resources.files("sqlprobe") / "fixtures" / "corpus")


def load_corpus(root: str | Path) -> CorpusBundle:
    root = Path(root)
    schemas: dict[str, Schema] = {}
    for ddl in sorted((root / "schemas").glob("*.sql")):
        schema = load_schema(ddl)
        schemas[schema.id] = schema

    sample_dbs: dict[str, Database] = {}
    for db_path in sorted((root / "databases").glob("*.json")):
        doc = json.loads(db_path.read_text())
        schema = schemas[db_path.stem]
        sample_dbs[schema.id] = database_from_json(doc, schema)

    utterances = []
    for line in (root / "utterances.jsonl").read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        utterances.append(Utterance(
            id=doc["id"],
            text=doc["text"],
            schema_id=doc["schema_id"],
            gold_sql=doc.get("gold_sql"),
            difficulty=doc.get("difficulty"),
        ))

    candidates: dict[str, list[RawCandidate]] = {}
    for cand in read_candidates(root / "candidates.jsonl"):
        candidates.setdefault(cand.utterance_id, []).append(cand)

    units = {}
    units_path = root / "units.json"
    if units_path.exists():
        units = json.loads(units_path.read_text())

    config = {}
    config_path = root / "config.toml"
    if config_path.exists():
        import tomli

        config = tomli.loads(config_path.read_text())
    return CorpusBundle(
        root=root,
        schemas=schemas,
        sample_dbs=sample_dbs,
        utterances=utterances,
        candidates=candidates,
        units=units,
        config=config,
    )


def synth_config_from(config: dict, seed: int = 0) -> SynthConfig:
    opts = dict(config.get("synth", {}))
    opts.setdefault("seed", seed)
    return SynthConfig(**opts)


class Workspace:
    """Derived-artifact store. All writes are deterministic (sorted keys,
    fixed layout) so identical inputs yield byte-identical files."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("databases", "clusters", "trees", "transcripts", "exports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    # -- repaired sample databases

    def save_repaired_db(self, db: Database) -> Path:
        path = self.root / "databases" / f"{db.schema_id}.json"
        path.write_text(json.dumps(database_to_json(db), indent=2, sort_keys=True) + "\n")
        return path

    def load_repaired_db(self, schema: Schema) -> Database:
        path = self.root / "databases" / f"{schema.id}.json"
        return database_from_json(json.loads(path.read_text()), schema)

    def has_repaired_db(self, schema_id: str) -> bool:
        return (self.root / "databases" / f"{schema_id}.json").exists()

    # -- clusters

    def save_clusters(self, utterance_id: str, clusters: list[CandidateCluster]) -> Path:
        path = self.root / "clusters" / f"{utterance_id}.json"
        path.write_text(json.dumps(clusters_to_json(utterance_id, clusters),
                                   indent=2, sort_keys=True) + "\n")
        return path

    def load_clusters(self, utterance_id: str) -> list[CandidateCluster]:
        path = self.root / "clusters" / f"{utterance_id}.json"
        return clusters_from_json(json.loads(path.read_text()))

    def has_clusters(self, utterance_id: str) -> bool:
        return (self.root / "clusters" / f"{utterance_id}.json").exists()

    # -- response trees

    def save_tree(self, tree: ResponseTree) -> Path:
        path = self.root / "trees" / f"{tree.utterance_id}.json"
        path.write_text(json.dumps(tree_to_json(tree), indent=2, sort_keys=True) + "\n")
        return path

    def load_tree(self, utterance_id: str) -> ResponseTree:
        path = self.root / "trees" / f"{utterance_id}.json"
        return tree_from_json(json.loads(path.read_text()))

    def has_tree(self, utterance_id: str) -> bool:
        return (self.root / "trees" / f"{utterance_id}.json").exists()

    # -- transcripts (JSON Lines, append-oriented)

    def append_transcript(self, utterance_id: str, entries: list[TranscriptEntry]) -> Path:
        path = self.root / "transcripts" / f"{utterance_id}.jsonl"
        with path.open("a") as fh:
            for entry in entries:
                fh.write(json.dumps(transcript_entry_to_json(utterance_id, entry), sort_keys=True) + "\n")
        return path

    def load_transcripts(self, utterance_id: str) -> list[TranscriptEntry]:
        path = self.root / "transcripts" / f"{utterance_id}.jsonl"
        if not path.exists():
            return []
        entries = []
        for line in path.read_text().splitlines():
            if line.strip():
                entries.append(transcript_entry_from_json(json.loads(line)))
        return entries

    def all_transcripts(self) -> dict[str, list[TranscriptEntry]]:
        out = {}
        for path in sorted((self.root / "transcripts").glob("*.jsonl")):
            out[path.stem] = self.load_transcripts(path.stem)
        return out

    # -- misc json artifacts

    def write_json(self, name: str, doc) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return path

    def read_json(self, name: str):
        return json.loads((self.root / name).read_text())


def ingest(bundle: CorpusBundle, workspace: Workspace) -> None:
    """Repair and stage every sample database."""
    for schema_id in sorted(bundle.schemas):
        repaired = repair_database(bundle.sample_dbs[schema_id])
        workspace.save_repaired_db(repaired)


def corpus_items(
    bundle: CorpusBundle,
    workspace: Workspace,
    utterance_ids: list[str] | None = None,
) -> list[CorpusItem]:
    """Assemble evaluation items from staged databases and clusters."""
    items = []
    wanted = set(utterance_ids) if utterance_ids is not None else None
    for u in bundle.utterances:
        if wanted is not None and u.id not in wanted:
            continue
        schema = bundle.schemas[u.schema_id]
        sample_db = (
            workspace.load_repaired_db(schema)
            if workspace.has_repaired_db(schema.id)
            else repair_database(bundle.sample_dbs[schema.id])
        )
        clusters = workspace.load_clusters(u.id)
        items.append(CorpusItem(
            utterance=u, schema=schema, sample_db=sample_db, clusters=clusters,
        ))
    return items


def export_annotations(items: list[CorpusItem], posteriors: dict[str, dict[str, float]]) -> str:
    """JSON Lines export: one record per utterance with the MAP SQL and the
    full posterior; stable byte-for-byte across repeated exports."""
    lines = []
    for item in sorted(items, key=lambda it: it.utterance.id):
        weights = posteriors.get(item.utterance.id) or {c.id: c.weight for c in item.clusters}
        by_id = {c.id: c for c in item.clusters}
        ranked = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
        map_id = ranked[0][0]
        doc = {
            "utterance_id": item.utterance.id,
            "map_sql": by_id[map_id].representative_sql,
            "posterior": [
                {"sql": by_id[cid].representative_sql, "weight": w}
                for cid, w in ranked if cid in by_id
            ],
        }
        lines.append(json.dumps(doc, sort_keys=True))
    return "\n".join(lines) + "\n"
