"""HTTP annotation service: session orchestration over precomputed response
trees, an append-only event log for crash recovery, and annotation export.

All state mutation funnels through the single event log; replaying it
reconstructs every session's belief exactly (response events carry the
question's option partition, so replay never re-synthesizes databases).
"""

from __future__ import annotations

import itertools
import json
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .candidates import Utterance
from .infogain import Belief
from .interaction import (
    Limits,
    Question,
    ResponseRecord,
    ResponseTree,
    TranscriptEntry,
    precompute_tree,
    update_belief,
)
from .response_model import AnnotatorParams, NONE_RESPONSE, fixed_error_params, likelihood_of
from .store import CorpusBundle, Workspace, corpus_items, export_annotations, synth_config_from

TIMEOUT_RESPONSE = "timeout"
CLIENT_TIMER_SECONDS = 240


class ResponseBody(BaseModel):
    question_id: str
    response: str
    free_text_ambiguous: str | None = None
    free_text_confusing: str | None = None
    free_text_none_reason: str | None = None
    elapsed_ms: int = 0


class SessionBody(BaseModel):
    annotator_id: str
    unit_id: str


@dataclass
class UtteranceState:
    belief: Belief
    path: tuple[str, ...] = ()
    done: bool = False
    reason: str | None = None


@dataclass
class Session:
    id: str
    annotator_id: str
    unit_id: str
    utterance_ids: list[str]
    cursor: int = 0
    states: dict[str, UtteranceState] = field(default_factory=dict)
    created_at: float = 0.0

    def current_utterance(self) -> str | None:
        while self.cursor < len(self.utterance_ids):
            uid = self.utterance_ids[self.cursor]
            if not self.states[uid].done:
                return uid
            self.cursor += 1
        return None


def recompute_posterior(prior: dict[str, float], responses: list[dict],
                        params: AnnotatorParams, domain: str) -> dict[str, float]:
    """Posterior over clusters given stored response events (each carries the
    question's partition and option count)."""
    from .response_model import error_rate

    weights = dict(prior)
    for ev in responses:
        e = error_rate(params, ev["annotator_id"], domain)
        n = len(ev["option_ids"]) + 1
        partition = ev["partition"]
        for cid in weights:
            correct = partition.get(cid, NONE_RESPONSE)
            correct = NONE_RESPONSE if correct == "error" else correct
            weights[cid] *= likelihood_of(ev["response"], correct, n, e)
    total = sum(weights.values())
    if total <= 0:
        return dict(prior)
    return {cid: w / total for cid, w in weights.items()}


class AnnotationService:
    """In-memory session state backed by the event log."""

    def __init__(self, bundle: CorpusBundle, workspace: Workspace,
                 params: AnnotatorParams | None = None,
                 limits: Limits | None = None,
                 seed: int = 0,
                 tree_budget_ms: float | None = None):
        self.bundle = bundle
        self.workspace = workspace
        self.params = params if params is not None else fixed_error_params()
        self.limits = limits or Limits()
        self.seed = seed
        self.tree_budget_ms = tree_budget_ms
        self.items = {item.utterance.id: item for item in corpus_items(bundle, workspace)}
        self.trees: dict[str, ResponseTree] = {}
        self.sessions: dict[str, Session] = {}
        self.responses_by_utterance: dict[str, list[dict]] = {}
        self._session_counter = itertools.count(1)
        self._lock = threading.Lock()
        self._log_path = workspace.root / "events.jsonl"
        self.replay()

    # -- event log

    def _append_event(self, kind: str, payload: dict) -> None:
        event = {"ts": time.time(), "kind": kind, "payload": payload}
        with self._log_path.open("a") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def replay(self) -> None:
        """Rebuild sessions and per-utterance responses from the event log."""
        self.sessions.clear()
        self.responses_by_utterance.clear()
        self._session_counter = itertools.count(1)
        if not self._log_path.exists():
            return
        for line in self._log_path.read_text().splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            payload = event["payload"]
            if event["kind"] == "session_created":
                self._restore_session(payload)
            elif event["kind"] == "response_recorded":
                self._apply_response_event(payload)
            elif event["kind"] == "utterance_skipped":
                session = self.sessions[payload["session_id"]]
                state = session.states[payload["utterance_id"]]
                state.done = True
                state.reason = payload.get("reason", TIMEOUT_RESPONSE)

    def _restore_session(self, payload: dict) -> Session:
        session = Session(
            id=payload["session_id"],
            annotator_id=payload["annotator_id"],
            unit_id=payload["unit_id"],
            utterance_ids=list(payload["utterance_ids"]),
            created_at=payload.get("created_at", 0.0),
        )
        for uid in session.utterance_ids:
            item = self.items[uid]
            session.states[uid] = UtteranceState(belief=Belief.from_clusters(item.clusters))
        self.sessions[session.id] = session
        next(self._session_counter)
        return session

    def _apply_response_event(self, payload: dict) -> None:
        session = self.sessions[payload["session_id"]]
        uid = payload["utterance_id"]
        state = session.states[uid]
        domain = self.items[uid].schema.domain_id
        posterior = recompute_posterior(
            state.belief.weights, [payload], self.params, domain)
        state.belief = Belief(
            weights=posterior,
            round=state.belief.round + 1,
            history=state.belief.history + [(payload["question_id"], payload["response"])],
        )
        state.path = state.path + (payload["response"],)
        self.responses_by_utterance.setdefault(uid, []).append(payload)
        if state.belief.map_cluster()[1] > self.limits.stop_threshold:
            state.done, state.reason = True, "threshold"
        elif state.belief.round >= self.limits.max_rounds:
            state.done, state.reason = True, "max_rounds"

    # -- trees

    def tree_for(self, uid: str) -> ResponseTree:
        if uid in self.trees:
            return self.trees[uid]
        if self.workspace.has_tree(uid):
            tree = self.workspace.load_tree(uid)
        else:
            item = self.items[uid]
            cfg = synth_config_from(self.bundle.config, seed=self.seed)
            tree = precompute_tree(
                item.utterance, item.clusters, Belief.from_clusters(item.clusters),
                self.params, budget_ms=self.tree_budget_ms, limits=self.limits,
                schema=item.schema, sample_db=item.sample_db, cfg=cfg,
                domain=item.schema.domain_id, seed=self.seed,
            )
            self.workspace.save_tree(tree)
        self.trees[uid] = tree
        return tree

    # -- session API

    def create_session(self, annotator_id: str, unit_id: str) -> Session:
        if unit_id not in self.bundle.units:
            raise HTTPException(status_code=404, detail=f"unknown unit {unit_id!r}")
        with self._lock:
            session_id = f"s{next(self._session_counter):04d}"
            session = Session(
                id=session_id,
                annotator_id=annotator_id,
                unit_id=unit_id,
                utterance_ids=list(self.bundle.units[unit_id]),
                created_at=time.time(),
            )
            for uid in session.utterance_ids:
                item = self.items[uid]
                session.states[uid] = UtteranceState(belief=Belief.from_clusters(item.clusters))
            self.sessions[session_id] = session
            self._append_event("session_created", {
                "session_id": session.id,
                "annotator_id": annotator_id,
                "unit_id": unit_id,
                "utterance_ids": session.utterance_ids,
                "created_at": session.created_at,
            })
        return session

    def _session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id!r}")
        return session

    def current_question(self, session: Session) -> tuple[str, Question] | None:
        """Advance past finished utterances to the next live question."""
        while True:
            uid = session.current_utterance()
            if uid is None:
                return None
            state = session.states[uid]
            tree = self.tree_for(uid)
            node = tree.nodes.get(ResponseTree.path_key(state.path))
            if node is None or node.question is None:
                state.done = True
                state.reason = node.stop_reason if node else "no_question:missing_node"
                continue
            return uid, node.question

    def record_response(self, session_id: str, body: ResponseBody) -> None:
        session = self._session(session_id)
        with self._lock:
            current = self.current_question(session)
            if current is None:
                raise HTTPException(status_code=409, detail="session has no open question")
            uid, question = current
            if body.question_id != question.id:
                raise HTTPException(status_code=409,
                                    detail=f"stale question {body.question_id!r}; current is {question.id!r}")
            if body.response == TIMEOUT_RESPONSE:
                state = session.states[uid]
                state.done, state.reason = True, TIMEOUT_RESPONSE
                self._append_event("utterance_skipped", {
                    "session_id": session.id,
                    "utterance_id": uid,
                    "question_id": question.id,
                    "reason": TIMEOUT_RESPONSE,
                })
                return
            if body.response not in question.response_ids:
                raise HTTPException(status_code=422,
                                    detail=f"response {body.response!r} not among {question.response_ids}")
            record = ResponseRecord(
                question_id=question.id,
                annotator_id=session.annotator_id,
                response=body.response,
                free_text_ambiguous=body.free_text_ambiguous,
                free_text_confusing=body.free_text_confusing,
                free_text_none_reason=body.free_text_none_reason,
                elapsed_ms=body.elapsed_ms,
            )
            payload = {
                "session_id": session.id,
                "utterance_id": uid,
                "question_id": question.id,
                "annotator_id": session.annotator_id,
                "response": body.response,
                "option_ids": [oid for oid, _ in question.options],
                "partition": dict(sorted(question.partition.items())),
                "free_text_ambiguous": body.free_text_ambiguous,
                "free_text_confusing": body.free_text_confusing,
                "free_text_none_reason": body.free_text_none_reason,
                "elapsed_ms": body.elapsed_ms,
            }
            self._append_event("response_recorded", payload)
            state = session.states[uid]
            item = self.items[uid]
            belief = update_belief(state.belief, question, record, self.params,
                                   domain=item.schema.domain_id)
            self.workspace.append_transcript(uid, [TranscriptEntry(question, record, dict(belief.weights))])
            self._apply_response_event(payload)

    # -- aggregate posteriors / export

    def posterior(self, uid: str) -> dict[str, float]:
        item = self.items.get(uid)
        if item is None:
            raise HTTPException(status_code=404, detail=f"unknown utterance {uid!r}")
        prior = {c.id: c.weight for c in item.clusters}
        return recompute_posterior(prior, self.responses_by_utterance.get(uid, []),
                                   self.params, item.schema.domain_id)

    def export(self) -> str:
        posteriors = {uid: self.posterior(uid) for uid in self.items}
        return export_annotations(list(self.items.values()), posteriors)


# ---------------------------------------------------------------------------
# View rendering

def question_view(service: AnnotationService, session: Session, uid: str, q: Question) -> dict:
    utterance: Utterance = service.items[uid].utterance
    schema = q.db.schema
    options_by_id = dict(q.options)
    descriptions = schema.descriptions or {}
    return {
        "session_id": session.id,
        "done": False,
        "utterance": {"id": utterance.id, "text": utterance.text},
        "unit_progress": {
            "position": session.utterance_ids.index(uid) + 1,
            "total": len(session.utterance_ids),
        },
        "round": q.round,
        "max_rounds": service.limits.max_rounds,
        "timer_seconds": CLIENT_TIMER_SECONDS,
        "question": {
            "id": q.id,
            "schema": {
                "id": schema.id,
                "overview": descriptions.get("_overview", ""),
                "foreign_keys": [
                    {"table": fk.child_table, "column": fk.child_column,
                     "ref_table": fk.parent_table, "ref_column": fk.parent_column}
                    for fk in schema.foreign_keys
                ],
            },
            "tables": [
                {
                    "name": t.name,
                    "description": descriptions.get(t.name, ""),
                    "columns": list(t.column_names),
                    "rows": [list(row) for row in q.db.rows(t.name)],
                }
                for t in schema.tables
            ],
            "options": [
                {
                    "id": oid,
                    "columns": list(options_by_id[oid].columns),
                    "rows": [list(r) for r in options_by_id[oid].rows],
                    "ordered": options_by_id[oid].ordered,
                }
                for oid in q.display_permutation
            ],
            "none_option_id": q.none_option_id,
            "timeout_response_id": TIMEOUT_RESPONSE,
        },
    }


def create_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="sqlprobe annotation service")
    app.state.service = service

    @app.get("/api/v1/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/v1/sessions")
    def create_session(body: SessionBody):
        session = service.create_session(body.annotator_id, body.unit_id)
        return {"session_id": session.id, "unit_id": session.unit_id,
                "utterance_ids": session.utterance_ids}

    @app.get("/api/v1/sessions/{session_id}/next")
    def next_question(session_id: str):
        session = service._session(session_id)
        current = service.current_question(session)
        if current is None:
            return {"session_id": session.id, "done": True}
        uid, q = current
        return question_view(service, session, uid, q)

    @app.post("/api/v1/sessions/{session_id}/responses")
    def post_response(session_id: str, body: ResponseBody):
        service.record_response(session_id, body)
        session = service._session(session_id)
        current = service.current_question(session)
        if current is None:
            return {"session_id": session.id, "done": True}
        uid, q = current
        return question_view(service, session, uid, q)

    @app.get("/api/v1/utterances/{utterance_id}/posterior")
    def posterior(utterance_id: str):
        weights = service.posterior(utterance_id)
        item = service.items[utterance_id]
        by_id = {c.id: c for c in item.clusters}
        ranked = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return {
            "utterance_id": utterance_id,
            "posterior": [
                {"cluster_id": cid, "sql": by_id[cid].representative_sql, "weight": w}
                for cid, w in ranked
            ],
        }

    @app.get("/api/v1/schemas/{schema_id}")
    def schema_page(schema_id: str):
        schema = service.bundle.schemas.get(schema_id)
        if schema is None:
            raise HTTPException(status_code=404, detail=f"unknown schema {schema_id!r}")
        return {"id": schema.id, "descriptions": schema.descriptions,
                "tables": [{"name": t.name, "columns": list(t.column_names)} for t in schema.tables]}

    @app.get("/api/v1/export/annotations")
    def export():
        from fastapi.responses import PlainTextResponse

        return PlainTextResponse(service.export(), media_type="application/jsonl")

    return app
