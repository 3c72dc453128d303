"""The per-utterance interaction loop: question construction, Bayesian
posterior updates, the stopping policy, and response-tree precomputation
for real-time serving.
"""

from __future__ import annotations

import hashlib
import random
import time
from dataclasses import dataclass, field, replace

from .candidates import CandidateCluster, Utterance, derive_seed
from .database import Database, database_from_json, database_to_json
from .dbsynth import FuzzContext, SynthConfig, SynthFailure, synthesize_question_db
from .execution import Denotation, ExecutionError, Workbench, denotations_equal
from .infogain import Belief, fold_response, truncate
from .response_model import (
    AnnotatorParams,
    ERROR_RESPONSE,
    NONE_RESPONSE,
    error_rate,
    fixed_error_params,
    likelihood_of,
)
from .schema import Schema, schema_from_json, schema_to_json


class UpdateError(RuntimeError):
    """A response assigned zero likelihood to every cluster (possible only
    under the oracle model with a contradictory response)."""


@dataclass
class Question:
    id: str
    utterance_id: str
    round: int
    db: Database
    options: list[tuple[str, Denotation]]
    display_permutation: list[str]
    partition: dict[str, str]              # belief cluster id -> response id
    ig_bits: float = 0.0
    config_used: int = 7
    none_option_id: str = NONE_RESPONSE

    @property
    def n_responses(self) -> int:
        return len(self.options) + 1

    @property
    def response_ids(self) -> list[str]:
        return [oid for oid, _ in self.options] + [NONE_RESPONSE]

    def correct_response_for(self, cluster_id: str) -> str:
        return fold_response(self.partition.get(cluster_id, NONE_RESPONSE))


@dataclass
class NoQuestion:
    reason: str


@dataclass
class ResponseRecord:
    question_id: str
    annotator_id: str
    response: str
    free_text_ambiguous: str | None = None
    free_text_confusing: str | None = None
    free_text_none_reason: str | None = None
    elapsed_ms: int = 0


@dataclass
class Limits:
    max_rounds: int = 3
    stop_threshold: float = 0.9


def make_question(
    belief: Belief,
    clusters: list[CandidateCluster],
    schema: Schema,
    sample_db: Database,
    cfg: SynthConfig,
    seed: int = 0,
    utterance_id: str = "u",
    deadline: float | None = None,
) -> Question | NoQuestion:
    """Synthesize the next question database for a belief.

    Options are the distinct denotations of the truncated belief's normal
    clusters on the synthesized database, ranked by belief mass and capped
    at six; every cluster of the full belief is mapped into that option set
    so the posterior update covers the whole support.
    """
    round_no = belief.round + 1
    cfg = replace(cfg, seed=derive_seed(cfg.seed, seed, utterance_id, round_no))
    ctx = FuzzContext(schema, sample_db, replace(cfg, tweak_unique=False),
                      seed=derive_seed(cfg.seed, "neighbors"))
    pprime = truncate(belief, clusters, ctx=ctx)
    try:
        synth = synthesize_question_db(pprime, schema, sample_db, cfg, deadline=deadline)
    except SynthFailure as failure:
        return NoQuestion(failure.reason)

    partition: dict[str, str] = {}
    by_id = {c.id: c for c in clusters}
    leftovers = [cid for cid in belief.weights if cid not in pprime.normal_ids]
    with Workbench(synth.db, timeout_s=cfg.exec_timeout_s) as wb:
        for cid in leftovers:
            try:
                denot = wb.execute(by_id[cid].representative_sql)
            except ExecutionError:
                partition[cid] = ERROR_RESPONSE
                continue
            for oid, opt_denot in synth.options:
                if denotations_equal(opt_denot, denot):
                    partition[cid] = oid
                    break
            else:
                partition[cid] = NONE_RESPONSE
    for cid in pprime.normal_ids:
        partition[cid] = synth.partition[cid]

    display = [oid for oid, _ in synth.options]
    random.Random(derive_seed("display", utterance_id, round_no)).shuffle(display)
    digest = hashlib.sha256(repr((utterance_id, round_no, synth.db.fingerprint())).encode()).hexdigest()[:10]
    return Question(
        id=f"{utterance_id}:r{round_no}:{digest}",
        utterance_id=utterance_id,
        round=round_no,
        db=synth.db,
        options=synth.options,
        display_permutation=display,
        partition=partition,
        ig_bits=synth.ig_bits,
        config_used=synth.config_used,
    )


def validate_response(q: Question, response: str) -> None:
    if response not in q.response_ids:
        raise ValueError(f"response {response!r} is not one of {q.response_ids}")


def update_belief(
    belief: Belief,
    q: Question,
    r: ResponseRecord,
    params: AnnotatorParams,
    domain: str | None = None,
) -> Belief:
    """Multiply each cluster's weight by the likelihood of the observed
    response and renormalize; covers the full support, not just the
    truncated top clusters."""
    validate_response(q, r.response)
    e = error_rate(params, r.annotator_id, domain)
    n = q.n_responses
    new_weights: dict[str, float] = {}
    for cid, w in belief.weights.items():
        lik = likelihood_of(r.response, q.correct_response_for(cid), n, e)
        new_weights[cid] = w * lik
    total = sum(new_weights.values())
    if total <= 0.0:
        raise UpdateError(f"response {r.response!r} to question {q.id} contradicts every cluster")
    return Belief(
        weights={cid: w / total for cid, w in new_weights.items()},
        round=belief.round + 1,
        history=belief.history + [(q.id, r.response)],
    )


@dataclass
class TranscriptEntry:
    question: Question
    response: ResponseRecord
    posterior_after: dict[str, float]


@dataclass
class InteractionResult:
    final_belief: Belief
    transcript: list[TranscriptEntry]
    stopped_reason: str


def run_interaction(
    utterance: Utterance,
    clusters: list[CandidateCluster],
    belief0: Belief,
    answer_fn,
    params: AnnotatorParams | None = None,
    limits: Limits | None = None,
    *,
    schema: Schema,
    sample_db: Database,
    cfg: SynthConfig,
    domain: str | None = None,
    seed: int = 0,
    deadline: float | None = None,
) -> InteractionResult:
    """Loop make_question -> answer_fn -> update_belief until the belief is
    confident, the round limit is reached, or no informative question exists.
    The stop threshold is checked before each (expensive) synthesis."""
    params = params if params is not None else fixed_error_params()
    limits = limits or Limits()
    belief = belief0
    transcript: list[TranscriptEntry] = []
    while True:
        if belief.map_cluster()[1] > limits.stop_threshold:
            return InteractionResult(belief, transcript, "threshold")
        if belief.round >= limits.max_rounds:
            return InteractionResult(belief, transcript, "max_rounds")
        q = make_question(belief, clusters, schema, sample_db, cfg,
                          seed=seed, utterance_id=utterance.id, deadline=deadline)
        if isinstance(q, NoQuestion):
            return InteractionResult(belief, transcript, f"no_question:{q.reason}")
        record = answer_fn(q)
        try:
            belief = update_belief(belief, q, record, params, domain)
        except UpdateError:
            return InteractionResult(belief, transcript, "update_error")
        transcript.append(TranscriptEntry(q, record, dict(belief.weights)))


# ---------------------------------------------------------------------------
# Response-tree precomputation (real-time serving support)

MISSING = "missing"


@dataclass
class TreeNode:
    question: Question | None
    stop_reason: str | None = None           # set for leaves without questions
    children: dict[str, str] = field(default_factory=dict)  # response -> child path key


@dataclass
class ResponseTree:
    utterance_id: str
    prior: dict[str, float]
    nodes: dict[str, TreeNode] = field(default_factory=dict)
    missing: set[str] = field(default_factory=set)

    @staticmethod
    def path_key(responses: tuple[str, ...]) -> str:
        return "|".join(responses) if responses else ""

    def lookup(self, responses: tuple[str, ...]):
        """Node for a response history, or MISSING if the budget cut it off."""
        key = self.path_key(responses)
        if key in self.nodes:
            return self.nodes[key]
        if key in self.missing:
            return MISSING
        return MISSING if self.missing or key not in self.nodes else None


def predicted_response_distribution(belief: Belief, q: Question, e: float) -> dict[str, float]:
    """Mixture of the annotator model over the belief (the pre-response view)."""
    probs = {r: 0.0 for r in q.response_ids}
    n = q.n_responses
    for cid, w in belief.weights.items():
        correct = q.correct_response_for(cid)
        for r in probs:
            probs[r] += w * likelihood_of(r, correct, n, e)
    return probs


def precompute_tree(
    utterance: Utterance,
    clusters: list[CandidateCluster],
    belief0: Belief,
    params: AnnotatorParams | None = None,
    budget_ms: float | None = None,
    limits: Limits | None = None,
    *,
    schema: Schema,
    sample_db: Database,
    cfg: SynthConfig,
    domain: str | None = None,
    seed: int = 0,
) -> ResponseTree:
    """Breadth-first expansion of question nodes over response histories,
    most probable responses first, until depth 3 or the budget is spent.
    Paths not reached within budget are marked missing; a live session that
    hits one aborts early as if no question existed."""
    params = params if params is not None else fixed_error_params()
    limits = limits or Limits()
    deadline = time.monotonic() + budget_ms / 1000.0 if budget_ms is not None else None
    tree = ResponseTree(utterance_id=utterance.id, prior=dict(belief0.weights))
    queue: list[tuple[tuple[str, ...], Belief]] = [((), belief0)]
    e = error_rate(params, None, domain)

    while queue:
        path, belief = queue.pop(0)
        key = ResponseTree.path_key(path)
        if deadline is not None and time.monotonic() > deadline:
            tree.missing.add(key)
            continue
        if belief.map_cluster()[1] > limits.stop_threshold:
            tree.nodes[key] = TreeNode(question=None, stop_reason="threshold")
            continue
        if belief.round >= limits.max_rounds:
            tree.nodes[key] = TreeNode(question=None, stop_reason="max_rounds")
            continue
        q = make_question(belief, clusters, schema, sample_db, cfg,
                          seed=seed, utterance_id=utterance.id, deadline=deadline)
        if isinstance(q, NoQuestion):
            tree.nodes[key] = TreeNode(question=None, stop_reason=f"no_question:{q.reason}")
            continue
        node = TreeNode(question=q)
        tree.nodes[key] = node
        probs = predicted_response_distribution(belief, q, e)
        ordered = sorted(probs.items(), key=lambda kv: (-kv[1], kv[0]))
        for r, p in ordered:
            if p <= 0.0:
                continue
            record = ResponseRecord(question_id=q.id, annotator_id="*", response=r)
            try:
                child_belief = update_belief(belief, q, record, params, domain)
            except UpdateError:
                continue
            child_path = path + (r,)
            node.children[r] = ResponseTree.path_key(child_path)
            queue.append((child_path, child_belief))
    return tree


def walk_tree(
    tree: ResponseTree,
    answer_fn,
    params: AnnotatorParams | None = None,
    limits: Limits | None = None,
    domain: str | None = None,
) -> InteractionResult:
    """Run an interaction against precomputed questions instead of live
    synthesis. Hitting a missing node aborts early (treated like a failed
    question search)."""
    params = params if params is not None else fixed_error_params()
    limits = limits or Limits()
    belief = Belief(weights=dict(tree.prior))
    transcript: list[TranscriptEntry] = []
    path: tuple[str, ...] = ()
    while True:
        if belief.map_cluster()[1] > limits.stop_threshold:
            return InteractionResult(belief, transcript, "threshold")
        if belief.round >= limits.max_rounds:
            return InteractionResult(belief, transcript, "max_rounds")
        key = ResponseTree.path_key(path)
        node = tree.nodes.get(key)
        if node is None:
            return InteractionResult(belief, transcript, "no_question:missing_node")
        if node.question is None:
            return InteractionResult(belief, transcript, node.stop_reason or "no_question:leaf")
        q = node.question
        record = answer_fn(q)
        try:
            belief = update_belief(belief, q, record, params, domain)
        except UpdateError:
            return InteractionResult(belief, transcript, "update_error")
        transcript.append(TranscriptEntry(q, record, dict(belief.weights)))
        path = path + (record.response,)


# ---------------------------------------------------------------------------
# Serialization

def denotation_to_json(d: Denotation) -> dict:
    return {"columns": list(d.columns), "rows": [list(r) for r in d.rows], "ordered": d.ordered}


def denotation_from_json(doc: dict) -> Denotation:
    return Denotation(
        columns=tuple(doc["columns"]),
        rows=tuple(tuple(r) for r in doc["rows"]),
        ordered=bool(doc.get("ordered", False)),
    )


def question_to_json(q: Question) -> dict:
    return {
        "id": q.id,
        "utterance_id": q.utterance_id,
        "round": q.round,
        "schema": schema_to_json(q.db.schema),
        "db": database_to_json(q.db),
        "options": [{"id": oid, **denotation_to_json(d)} for oid, d in q.options],
        "display_permutation": list(q.display_permutation),
        "partition": dict(sorted(q.partition.items())),
        "ig_bits": q.ig_bits,
        "config_used": q.config_used,
        "none_option_id": q.none_option_id,
    }


def question_from_json(doc: dict) -> Question:
    schema = schema_from_json(doc["schema"])
    return Question(
        id=doc["id"],
        utterance_id=doc["utterance_id"],
        round=doc["round"],
        db=database_from_json(doc["db"], schema),
        options=[(o["id"], denotation_from_json(o)) for o in doc["options"]],
        display_permutation=list(doc["display_permutation"]),
        partition=dict(doc["partition"]),
        ig_bits=float(doc.get("ig_bits", 0.0)),
        config_used=int(doc.get("config_used", 7)),
    )


def response_to_json(r: ResponseRecord) -> dict:
    return {
        "question_id": r.question_id,
        "annotator_id": r.annotator_id,
        "response": r.response,
        "free_text_ambiguous": r.free_text_ambiguous,
        "free_text_confusing": r.free_text_confusing,
        "free_text_none_reason": r.free_text_none_reason,
        "elapsed_ms": r.elapsed_ms,
    }


def response_from_json(doc: dict) -> ResponseRecord:
    return ResponseRecord(
        question_id=doc["question_id"],
        annotator_id=doc["annotator_id"],
        response=doc["response"],
        free_text_ambiguous=doc.get("free_text_ambiguous"),
        free_text_confusing=doc.get("free_text_confusing"),
        free_text_none_reason=doc.get("free_text_none_reason"),
        elapsed_ms=int(doc.get("elapsed_ms", 0)),
    )


def transcript_entry_to_json(utterance_id: str, entry: TranscriptEntry) -> dict:
    return {
        "utterance_id": utterance_id,
        "question": question_to_json(entry.question),
        "response": response_to_json(entry.response),
        "posterior_after": dict(sorted(entry.posterior_after.items())),
    }


def transcript_entry_from_json(doc: dict) -> TranscriptEntry:
    return TranscriptEntry(
        question=question_from_json(doc["question"]),
        response=response_from_json(doc["response"]),
        posterior_after=dict(doc["posterior_after"]),
    )


def tree_to_json(tree: ResponseTree) -> dict:
    return {
        "utterance_id": tree.utterance_id,
        "prior": dict(sorted(tree.prior.items())),
        "nodes": {
            key: {
                "question": question_to_json(node.question) if node.question else None,
                "stop_reason": node.stop_reason,
                "children": dict(sorted(node.children.items())),
            }
            for key, node in sorted(tree.nodes.items())
        },
        "missing": sorted(tree.missing),
    }


def tree_from_json(doc: dict) -> ResponseTree:
    nodes = {}
    for key, nd in doc["nodes"].items():
        nodes[key] = TreeNode(
            question=question_from_json(nd["question"]) if nd.get("question") else None,
            stop_reason=nd.get("stop_reason"),
            children=dict(nd.get("children", {})),
        )
    return ResponseTree(
        utterance_id=doc["utterance_id"],
        prior=dict(doc["prior"]),
        nodes=nodes,
        missing=set(doc.get("missing", [])),
    )
