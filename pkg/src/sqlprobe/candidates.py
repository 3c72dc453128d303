"""Candidate pool: ingest raw SQL candidates, cluster semantic equivalents
by execution on fuzzed databases, derive the empirical prior, produce
neighbor-query rewrites, and build prompts for an external generator.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .database import Database
from .execution import ExecutionError, Workbench, denotations_equal
from .schema import Schema, linearize_schema

log = logging.getLogger(__name__)


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class RawCandidate:
    utterance_id: str
    sql: str
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("candidate count must be >= 1")


@dataclass
class CandidateCluster:
    id: str
    representative_sql: str
    member_sqls: list[str]
    weight: float
    kind: str = "normal"  # normal | return_null | neighbor


@dataclass(frozen=True)
class Utterance:
    id: str
    text: str
    schema_id: str
    gold_sql: str | None = None
    difficulty: str | None = None


def derive_seed(*parts) -> int:
    """Stable sub-seed derivation, independent of PYTHONHASHSEED."""
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


# ---------------------------------------------------------------------------
# Executability filtering and equivalence clustering

def filter_executable(cands: list[RawCandidate], sample_db: Database) -> list[RawCandidate]:
    """Keep exactly the candidates that execute on the sample database."""
    kept = []
    with Workbench(sample_db) as wb:
        for cand in cands:
            try:
                wb.execute(cand.sql)
            except ExecutionError as exc:
                log.debug("filtered non-executable candidate %r: %s", cand.sql, exc)
                continue
            kept.append(cand)
    return kept


def _aggregate(cands: list[RawCandidate]) -> list[RawCandidate]:
    by_sql: dict[str, RawCandidate] = {}
    for c in cands:
        prev = by_sql.get(c.sql)
        if prev is None:
            by_sql[c.sql] = c
        else:
            by_sql[c.sql] = RawCandidate(prev.utterance_id, prev.sql, prev.count + c.count)
    return list(by_sql.values())


def cluster_candidates(
    cands: list[RawCandidate],
    schema: Schema,
    sample_db: Database,
    n_dbs: int = 1000,
    seed: int = 0,
    cfg=None,
) -> list[CandidateCluster]:
    """Partition candidates into semantic equivalence classes.

    Two candidates share a cluster iff their denotations agree on the sample
    database and on every one of n_dbs fuzzed databases. A candidate that
    errors on a fuzzed database is dropped (and logged), not the whole pool.
    The fuzz sequence for a given seed is a prefix of the sequence for any
    larger n_dbs, so refining with more databases can only split clusters.
    """
    from .dbsynth import SynthConfig, fuzz_database

    # Equivalence testing wants maximally discriminating databases, so the
    # uniqueness naturalness tweak stays off by default here.
    cfg = cfg or SynthConfig(seed=seed, tweak_unique=False)
    cands = _aggregate(cands)
    groups: list[list[RawCandidate]] = [list(cands)] if cands else []

    def refine_on(db: Database) -> None:
        nonlocal groups
        new_groups: list[list[RawCandidate]] = []
        with Workbench(db) as wb:
            for group in groups:
                if len(group) == 1:
                    new_groups.append(group)
                    continue
                subgroups: list[tuple[object, list[RawCandidate]]] = []
                for cand in group:
                    try:
                        denot = wb.execute(cand.sql)
                    except ExecutionError as exc:
                        log.info("dropping candidate %r: errored on fuzz database (%s)", cand.sql, exc)
                        continue
                    for existing, members in subgroups:
                        if denotations_equal(existing, denot):
                            members.append(cand)
                            break
                    else:
                        subgroups.append((denot, [cand]))
                new_groups.extend(members for _, members in subgroups)
        groups = new_groups

    refine_on(sample_db)
    for i in range(n_dbs):
        if all(len(g) == 1 for g in groups):
            break
        refine_on(fuzz_database(schema, sample_db, cfg, derive_seed(seed, "clusterdb", i)))

    total = sum(c.count for g in groups for c in g)
    clusters = []
    for group in groups:
        rep = min(group, key=lambda c: (-c.count, len(c.sql), c.sql))
        weight = sum(c.count for c in group) / total
        clusters.append((rep.sql, sorted(c.sql for c in group), weight))
    clusters.sort(key=lambda item: (-item[2], item[0]))
    width = max(2, len(str(max(len(clusters) - 1, 0))))
    return [
        CandidateCluster(id=f"c{i:0{width}d}", representative_sql=rep, member_sqls=members, weight=weight)
        for i, (rep, members, weight) in enumerate(clusters)
    ]


# ---------------------------------------------------------------------------
# Neighbor-query rewrites

_AGG_RE = re.compile(r"\b(min|max|count|sum|avg)\s*\(", re.IGNORECASE)
_WHERE_END_RE = re.compile(r"\b(group\s+by|order\s+by|limit|having|union|intersect|except)\b", re.IGNORECASE)


def _string_spans(sql: str) -> list[tuple[int, int]]:
    return [m.span() for m in re.finditer(r"'(?:[^']|'')*'|\"(?:[^\"]|\"\")*\"", sql)]


def _in_string(pos: int, spans) -> bool:
    return any(a <= pos < b for a, b in spans)


def _match_paren(sql: str, open_idx: int) -> int:
    depth = 0
    spans = _string_spans(sql)
    for i in range(open_idx, len(sql)):
        if _in_string(i, spans):
            continue
        if sql[i] == "(":
            depth += 1
        elif sql[i] == ")":
            depth -= 1
            if depth == 0:
                return i
    return -1


def _depth_at(sql: str, pos: int, spans) -> int:
    depth = 0
    for i in range(pos):
        if _in_string(i, spans):
            continue
        if sql[i] == "(":
            depth += 1
        elif sql[i] == ")":
            depth -= 1
    return depth


def _normalize(sql: str) -> str:
    return re.sub(r"\s+", " ", sql).strip().rstrip(";").lower()


def neighbor_queries(sql: str, check=None) -> list[str]:
    """Variants with one aggregation operator or one top-level WHERE removed.

    Conservative token-level rewriting: anything the rewriter cannot handle
    contributes no variants. `check` is an optional callable(sql) -> bool
    used to confirm executability before a variant is emitted.
    """
    if sql.count("(") != sql.count(")"):
        return []
    variants: list[str] = []
    spans = _string_spans(sql)

    for m in _AGG_RE.finditer(sql):
        if _in_string(m.start(), spans):
            continue
        close = _match_paren(sql, m.end() - 1)
        if close < 0:
            return []
        inner = sql[m.end():close].strip()
        variants.append(sql[:m.start()] + inner + sql[close + 1:])

    for m in re.finditer(r"\bwhere\b", sql, re.IGNORECASE):
        if _in_string(m.start(), spans) or _depth_at(sql, m.start(), spans) != 0:
            continue
        end = len(sql)
        for em in _WHERE_END_RE.finditer(sql, m.end()):
            if not _in_string(em.start(), spans) and _depth_at(sql, em.start(), spans) == 0:
                end = em.start()
                break
        variants.append((sql[:m.start()] + sql[end:]).strip())

    seen = {_normalize(sql)}
    out = []
    for v in variants:
        v = re.sub(r"\s+", " ", v).strip()
        key = _normalize(v)
        if key in seen:
            continue
        seen.add(key)
        if check is not None and not check(v):
            continue
        out.append(v)
    return out


def executability_check(sample_db: Database):
    """A `check` callable for neighbor_queries bound to one database."""
    def check(sql: str) -> bool:
        try:
            with Workbench(sample_db) as wb:
                wb.execute(sql)
            return True
        except ExecutionError:
            return False
    return check


# ---------------------------------------------------------------------------
# Prompt construction for an external candidate generator

def _tokens(text: str) -> list[str]:
    return re.findall(r"[a-z0-9']+", text.lower())


def tfidf_vectors(texts: list[str]) -> list[dict[str, float]]:
    """Unigram TF-IDF vectors over lowercased tokens."""
    n = len(texts)
    df: dict[str, int] = {}
    token_lists = [_tokens(t) for t in texts]
    for toks in token_lists:
        for tok in set(toks):
            df[tok] = df.get(tok, 0) + 1
    vectors = []
    for toks in token_lists:
        vec: dict[str, float] = {}
        for tok in toks:
            vec[tok] = vec.get(tok, 0.0) + 1.0
        for tok in vec:
            vec[tok] *= math.log((1 + n) / (1 + df.get(tok, 0))) + 1.0
        vectors.append(vec)
    return vectors


def cosine(a: dict[str, float], b: dict[str, float]) -> float:
    if not a or not b:
        return 0.0
    dot = sum(v * b.get(k, 0.0) for k, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def choose_prompt_size(rng: random.Random) -> int:
    """Example-count policy for generation prompts: 4 or 8, evenly."""
    return 4 if rng.random() < 0.5 else 8


def build_prompt(
    u: Utterance,
    schema: Schema,
    pool: list[tuple[str, str]],
    k: int,
    seed: int = 0,
) -> str:
    """Schema linearization + k examples + the target utterance.

    Each example slot is filled with probability 0.5 by a uniformly random
    unchosen pool item and with probability 0.5 by the unchosen item whose
    utterance has the highest TF-IDF cosine similarity to the target.
    """
    if len(pool) < k:
        raise PromptError(f"pool of {len(pool)} examples is smaller than k={k}")
    rng = random.Random(derive_seed(seed, "prompt", u.id, k))
    vectors = tfidf_vectors([text for text, _ in pool] + [u.text])
    query_vec = vectors[-1]
    sims = [cosine(vec, query_vec) for vec in vectors[:-1]]

    remaining = list(range(len(pool)))
    chosen: list[int] = []
    for _ in range(k):
        if rng.random() < 0.5:
            idx = rng.choice(remaining)
        else:
            idx = max(remaining, key=lambda i: (sims[i], -i))
        remaining.remove(idx)
        chosen.append(idx)

    lines = [linearize_schema(schema), ""]
    for idx in chosen:
        text, sql = pool[idx]
        lines.append(f"-- {text}")
        lines.append(sql if sql.endswith(";") else sql + ";")
        lines.append("")
    lines.append(f"-- {u.text}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Optional external generator adapter (disabled unless configured)

class CandidateGenerator:
    """Interface for services that turn a prompt into candidate SQL texts."""

    def generate(self, prompt: str, n: int = 20) -> list[str]:
        raise NotImplementedError


class HttpCandidateGenerator(CandidateGenerator):
    """Completion-service client configured from the environment.

    Uses SQLPROBE_GEN_ENDPOINT, SQLPROBE_GEN_MODEL, and SQLPROBE_GEN_TOKEN.
    Sampling uses temperature 1.0 and top_p 0.95. The core pipeline never
    requires this adapter; candidates are normally ingested from files.
    """

    def __init__(self, endpoint: str | None = None, model: str | None = None, token: str | None = None,
                 temperature: float = 1.0, top_p: float = 0.95):
        self.endpoint = endpoint or os.environ.get("SQLPROBE_GEN_ENDPOINT")
        self.model = model or os.environ.get("SQLPROBE_GEN_MODEL", "")
        self.token = token or os.environ.get("SQLPROBE_GEN_TOKEN", "")
        self.temperature = temperature
        self.top_p = top_p
        if not self.endpoint:
            raise PromptError("no generation endpoint configured (set SQLPROBE_GEN_ENDPOINT)")

    def generate(self, prompt: str, n: int = 20) -> list[str]:
        import httpx

        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        payload = {
            "model": self.model,
            "prompt": prompt,
            "n": n,
            "temperature": self.temperature,
            "top_p": self.top_p,
        }
        resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=60.0)
        resp.raise_for_status()
        doc = resp.json()
        return [choice["text"].strip() for choice in doc.get("choices", [])]


# ---------------------------------------------------------------------------
# File formats

def read_candidates(path: str | Path) -> list[RawCandidate]:
    """JSON Lines, one record per raw candidate: {utterance_id, sql, count}."""
    out = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        doc = json.loads(line)
        out.append(RawCandidate(doc["utterance_id"], doc["sql"], int(doc.get("count", 1))))
    return out


def clusters_to_json(utterance_id: str, clusters: list[CandidateCluster]) -> dict:
    return {
        "utterance_id": utterance_id,
        "clusters": [
            {
                "id": c.id,
                "representative_sql": c.representative_sql,
                "member_sqls": list(c.member_sqls),
                "weight": c.weight,
                "kind": c.kind,
            }
            for c in clusters
        ],
    }


def clusters_from_json(doc: dict) -> list[CandidateCluster]:
    return [
        CandidateCluster(
            id=c["id"],
            representative_sql=c["representative_sql"],
            member_sqls=list(c["member_sqls"]),
            weight=float(c["weight"]),
            kind=c.get("kind", "normal"),
        )
        for c in doc["clusters"]
    ]
