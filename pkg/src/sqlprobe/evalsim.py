"""Simulated evaluation: oracle and noisy annotators, the three error
ceilings (candidate, interaction, annotation), and interaction statistics.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .annotator_fit import FitDataset, FitUtterance, fit_response_from_entry
from .candidates import CandidateCluster, Utterance, derive_seed
from .database import Database
from .dbsynth import FuzzContext, SynthConfig
from .execution import ExecutionError, Workbench, denotations_equal
from .infogain import Belief
from .interaction import (
    Limits,
    Question,
    ResponseRecord,
    ResponseTree,
    precompute_tree,
    run_interaction,
    walk_tree,
)
from .response_model import AnnotatorParams, NONE_RESPONSE, error_rate, fixed_error_params
from .schema import Schema


@dataclass
class CorpusItem:
    """Everything needed to evaluate one utterance."""
    utterance: Utterance
    schema: Schema
    sample_db: Database
    clusters: list[CandidateCluster]
    gold_cluster_id: str | None = None
    _gold_resolved: bool = field(default=False, repr=False)


@dataclass
class EvalRecord:
    utterance_id: str
    gold_cluster_present: bool
    map_cluster_correct: bool
    rounds_used: int
    db_sizes: list[int]
    stopped_reason: str


# ---------------------------------------------------------------------------
# Gold resolution (fuzz equivalence against the gold SQL)

def _signature(sql: str, dbs: list[Database]):
    out = []
    for db in dbs:
        with Workbench(db) as wb:
            try:
                out.append(wb.execute(sql))
            except ExecutionError:
                out.append(None)
    return out


def _norm_sql(sql: str) -> str:
    return " ".join(sql.split()).rstrip(";").lower()


def resolve_gold_cluster(item: CorpusItem, cfg: SynthConfig | None = None,
                         n_dbs: int = 32, seed: int = 0) -> str | None:
    """Find the cluster that is semantically correct, or None.

    A cluster that literally contains the gold SQL wins outright (clusters
    are equivalence classes, and the fuzz check alone cannot adjudicate
    pairs that agree on every database up to the suite's scale, such as a
    bare query versus its LIMIT-100 variant). Otherwise fall back to
    fuzz-equivalence of the gold SQL against each representative."""
    if item._gold_resolved:
        return item.gold_cluster_id
    item._gold_resolved = True
    if item.utterance.gold_sql is None:
        item.gold_cluster_id = None
        return None
    gold_norm = _norm_sql(item.utterance.gold_sql)
    for cluster in item.clusters:
        if any(_norm_sql(sql) == gold_norm for sql in cluster.member_sqls):
            item.gold_cluster_id = cluster.id
            return cluster.id
    cfg = cfg or SynthConfig(seed=seed, tweak_unique=False)
    ctx = FuzzContext(item.schema, item.sample_db, cfg,
                      seed=derive_seed(seed, "gold", item.utterance.id), n_dbs=n_dbs)
    dbs = [item.sample_db] + ctx.suite()
    gold_sig = _signature(item.utterance.gold_sql, dbs)
    for cluster in item.clusters:
        rep_sig = _signature(cluster.representative_sql, dbs)
        same = True
        for g, r in zip(gold_sig, rep_sig):
            if (g is None) != (r is None):
                same = False
                break
            if g is not None and not denotations_equal(g, r):
                same = False
                break
        if same:
            item.gold_cluster_id = cluster.id
            return cluster.id
    item.gold_cluster_id = None
    return None


def candidate_ceiling(corpus: list[CorpusItem], cfg: SynthConfig | None = None, seed: int = 0) -> float:
    """Fraction of utterances whose pool contains a gold-equivalent cluster."""
    if not corpus:
        return 0.0
    hits = sum(1 for item in corpus if resolve_gold_cluster(item, cfg, seed=seed) is not None)
    return hits / len(corpus)


# ---------------------------------------------------------------------------
# Simulated annotators

def oracle_answer(q: Question, gold_cluster_id: str | None, annotator_id: str = "oracle") -> ResponseRecord:
    """Always selects the option matching the gold cluster's output, or the
    none-option when that output is not displayed (or errored)."""
    response = q.correct_response_for(gold_cluster_id) if gold_cluster_id is not None else NONE_RESPONSE
    return ResponseRecord(question_id=q.id, annotator_id=annotator_id, response=response)


def oracle_answer_fn(gold_cluster_id: str | None, annotator_id: str = "oracle"):
    return lambda q: oracle_answer(q, gold_cluster_id, annotator_id)


def noisy_answer_fn(gold_cluster_id: str | None, e: float, rng: random.Random,
                    annotator_id: str = "crowd"):
    """Correct with probability 1-e, otherwise uniform over all responses
    (the correct one and NONE included)."""
    def answer(q: Question) -> ResponseRecord:
        correct = q.correct_response_for(gold_cluster_id) if gold_cluster_id is not None else NONE_RESPONSE
        if rng.random() < e:
            response = rng.choice(q.response_ids)
        else:
            response = correct
        return ResponseRecord(question_id=q.id, annotator_id=annotator_id, response=response)
    return answer


# ---------------------------------------------------------------------------
# Interaction ceiling (oracle annotator, live synthesis)

def _difficulty(item: CorpusItem) -> str:
    return item.utterance.difficulty or "unlabeled"


def _summarize(records: list[EvalRecord]) -> dict:
    n = len(records)
    accuracy = sum(1 for r in records if r.map_cluster_correct) / n if n else 0.0
    rounds = [r.rounds_used for r in records]
    sizes = [s for r in records for s in r.db_sizes]
    return {
        "accuracy": accuracy,
        "mean_rounds": sum(rounds) / n if n else 0.0,
        "mean_db_size": sum(sizes) / len(sizes) if sizes else 0.0,
        "n": n,
    }


def interaction_ceiling(
    corpus: list[CorpusItem],
    limits: Limits | None = None,
    cfg: SynthConfig | None = None,
    seed: int = 0,
) -> dict:
    """MAP accuracy achievable with a perfect annotator under the
    interaction limits, plus round/size statistics."""
    from dataclasses import replace

    limits = limits or Limits()
    cfg = cfg or SynthConfig(seed=seed)
    oracle_cfg = replace(cfg, ig_error_rate=0.0)
    oracle_params = AnnotatorParams(bias=float("-inf"))
    records: list[EvalRecord] = []
    by_difficulty: dict[str, list[EvalRecord]] = {}
    transcripts: dict[str, list] = {}
    for item in corpus:
        gold = resolve_gold_cluster(item, seed=seed)
        belief0 = Belief.from_clusters(item.clusters)
        result = run_interaction(
            item.utterance, item.clusters, belief0,
            oracle_answer_fn(gold),
            params=oracle_params, limits=limits,
            schema=item.schema, sample_db=item.sample_db, cfg=oracle_cfg,
            domain=item.schema.domain_id, seed=seed,
        )
        map_id, _ = result.final_belief.map_cluster()
        record = EvalRecord(
            utterance_id=item.utterance.id,
            gold_cluster_present=gold is not None,
            map_cluster_correct=(gold is not None and map_id == gold),
            rounds_used=result.final_belief.round,
            db_sizes=[entry.question.db.size for entry in result.transcript],
            stopped_reason=result.stopped_reason,
        )
        records.append(record)
        by_difficulty.setdefault(_difficulty(item), []).append(record)
        transcripts[item.utterance.id] = result.transcript
    summary = _summarize(records)
    summary["per_difficulty"] = {d: _summarize(rs) for d, rs in sorted(by_difficulty.items())}
    summary["records"] = records
    summary["transcripts"] = transcripts
    return summary


# ---------------------------------------------------------------------------
# Annotation accuracy from collected transcripts

def _recomputed_posterior(item: CorpusItem, entries: list, params: AnnotatorParams) -> dict[str, float]:
    from .response_model import likelihood_of

    weights = {c.id: c.weight for c in item.clusters}
    for entry in entries:
        resp = fit_response_from_entry(entry)
        e = error_rate(params, resp.annotator_id, item.schema.domain_id)
        n = resp.n_options + 1
        for cid in weights:
            weights[cid] *= likelihood_of(resp.response, resp.correct_map.get(cid, NONE_RESPONSE), n, e)
    total = sum(weights.values())
    if total <= 0:
        return {c.id: c.weight for c in item.clusters}
    return {cid: w / total for cid, w in weights.items()}


def _map_id(weights: dict[str, float]) -> str:
    return min(weights.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _single_annotator_map(item: CorpusItem, entries: list, annotator: str) -> str:
    """Prior MAP among clusters consistent with every response of one
    annotator; falls back to the full prior when nothing survives."""
    survivors = {c.id for c in item.clusters}
    for entry in entries:
        if entry.response.annotator_id != annotator:
            continue
        resp = fit_response_from_entry(entry)
        consistent = {cid for cid in survivors if resp.correct_map.get(cid, NONE_RESPONSE) == resp.response}
        if consistent:
            survivors &= consistent
    prior = {c.id: c.weight for c in item.clusters}
    pool = {cid: prior[cid] for cid in survivors} if survivors else prior
    return _map_id(pool)


def recompute_posteriors(corpus: list[CorpusItem], transcripts: dict[str, list],
                         params: AnnotatorParams | None = None) -> dict[str, dict[str, float]]:
    params = params if params is not None else fixed_error_params()
    return {
        item.utterance.id: _recomputed_posterior(item, transcripts.get(item.utterance.id, []), params)
        for item in corpus
    }


def annotation_accuracy(
    corpus: list[CorpusItem],
    transcripts: dict[str, list],
    params: AnnotatorParams | None = None,
    seed: int = 0,
) -> dict:
    """1-best accuracy of the posterior recomputed from stored transcripts
    under the given annotator model, plus prior-only and single-random-
    annotator baselines."""
    params = params if params is not None else fixed_error_params()
    rng = random.Random(derive_seed(seed, "single-annotator"))
    stats = {"n": 0, "correct": 0, "prior_correct": 0, "single_correct": 0}
    by_difficulty: dict[str, dict] = {}
    posteriors: dict[str, dict[str, float]] = {}
    for item in corpus:
        gold = resolve_gold_cluster(item, seed=seed)
        entries = transcripts.get(item.utterance.id, [])
        posterior = _recomputed_posterior(item, entries, params)
        posteriors[item.utterance.id] = posterior
        prior_map = _map_id({c.id: c.weight for c in item.clusters})
        annotators = sorted({e.response.annotator_id for e in entries})
        single_map = prior_map
        if annotators:
            chosen = rng.choice(annotators)
            single_map = _single_annotator_map(item, entries, chosen)
        hit = gold is not None and _map_id(posterior) == gold
        stats["n"] += 1
        stats["correct"] += 1 if hit else 0
        stats["prior_correct"] += 1 if (gold is not None and prior_map == gold) else 0
        stats["single_correct"] += 1 if (gold is not None and single_map == gold) else 0
        bucket = by_difficulty.setdefault(_difficulty(item), {"n": 0, "correct": 0})
        bucket["n"] += 1
        bucket["correct"] += 1 if hit else 0
    n = stats["n"] or 1
    return {
        "accuracy": stats["correct"] / n,
        "prior_top1_accuracy": stats["prior_correct"] / n,
        "single_annotator_accuracy": stats["single_correct"] / n,
        "per_difficulty": {
            d: {"accuracy": b["correct"] / b["n"], "n": b["n"]}
            for d, b in sorted(by_difficulty.items())
        },
        "posteriors": posteriors,
    }


# ---------------------------------------------------------------------------
# Noisy-crowd simulation over precomputed response trees

def precompute_corpus_trees(
    corpus: list[CorpusItem],
    params: AnnotatorParams | None = None,
    cfg: SynthConfig | None = None,
    limits: Limits | None = None,
    budget_ms: float | None = None,
    seed: int = 0,
) -> dict[str, ResponseTree]:
    params = params if params is not None else fixed_error_params()
    cfg = cfg or SynthConfig(seed=seed)
    trees = {}
    for item in corpus:
        belief0 = Belief.from_clusters(item.clusters)
        trees[item.utterance.id] = precompute_tree(
            item.utterance, item.clusters, belief0, params,
            budget_ms=budget_ms, limits=limits,
            schema=item.schema, sample_db=item.sample_db, cfg=cfg,
            domain=item.schema.domain_id, seed=seed,
        )
    return trees


def simulate_crowd_transcripts(
    corpus: list[CorpusItem],
    trees: dict[str, ResponseTree],
    annotator_error: dict[str, float],
    per_utterance: int = 3,
    params: AnnotatorParams | None = None,
    limits: Limits | None = None,
    seed: int = 0,
) -> dict[str, list]:
    """Each utterance is annotated by `per_utterance` simulated annotators
    drawn round-robin from `annotator_error`; responses are sampled from
    the noisy model while posterior updates use `params` (the model the
    collection pipeline believes in)."""
    params = params if params is not None else fixed_error_params()
    annotators = sorted(annotator_error)
    transcripts: dict[str, list] = {}
    for i, item in enumerate(corpus):
        gold = resolve_gold_cluster(item, seed=seed)
        tree = trees[item.utterance.id]
        entries = []
        for j in range(per_utterance):
            annotator = annotators[(i + j) % len(annotators)]
            rng = random.Random(derive_seed(seed, "crowd", item.utterance.id, annotator, j))
            answer = noisy_answer_fn(gold, annotator_error[annotator], rng, annotator_id=annotator)
            result = walk_tree(tree, answer, params=params, limits=limits,
                               domain=item.schema.domain_id)
            entries.extend(result.transcript)
        transcripts[item.utterance.id] = entries
    return transcripts


def monte_carlo_crowd_eval(
    corpus: list[CorpusItem],
    trees: dict[str, ResponseTree],
    annotator_error: dict[str, float],
    per_utterance: int = 3,
    n_seeds: int = 20,
    fit_model: bool = True,
    params: AnnotatorParams | None = None,
    limits: Limits | None = None,
) -> dict:
    """Repeated noisy-crowd simulation: per seed, sample transcripts, fit the
    annotator model on them (optionally), and score the recomputed MAP
    against the prior-only and single-random-annotator baselines. Returns
    the per-seed series and their means."""
    from .annotator_fit import fit

    params = params if params is not None else fixed_error_params()
    accuracy, prior, single = [], [], []
    for seed in range(n_seeds):
        transcripts = simulate_crowd_transcripts(
            corpus, trees, annotator_error, per_utterance=per_utterance,
            params=params, limits=limits, seed=seed)
        scoring_params = params
        if fit_model:
            ds = build_fit_dataset(corpus, transcripts, seed=seed)
            scoring_params = fit(ds, params, max_iters=60).params
        ann = annotation_accuracy(corpus, transcripts, scoring_params, seed=seed)
        accuracy.append(ann["accuracy"])
        prior.append(ann["prior_top1_accuracy"])
        single.append(ann["single_annotator_accuracy"])
    mean = lambda xs: sum(xs) / len(xs) if xs else 0.0
    return {
        "n_seeds": n_seeds,
        "accuracy": mean(accuracy),
        "prior_top1_accuracy": mean(prior),
        "single_annotator_accuracy": mean(single),
        "per_seed": {"accuracy": accuracy, "prior_top1_accuracy": prior,
                     "single_annotator_accuracy": single},
    }


def build_fit_dataset(corpus: list[CorpusItem], transcripts: dict[str, list],
                      with_gold: bool = True, seed: int = 0) -> FitDataset:
    utterances = []
    for item in corpus:
        gold = resolve_gold_cluster(item, seed=seed) if with_gold else None
        fu = FitUtterance(
            utterance_id=item.utterance.id,
            domain_id=item.schema.domain_id,
            prior={c.id: c.weight for c in item.clusters},
            responses=[fit_response_from_entry(e) for e in transcripts.get(item.utterance.id, [])],
            gold_cluster=gold,
        )
        utterances.append(fu)
    return FitDataset(utterances=utterances)


def metrics_table(metrics: dict) -> str:
    """Plain-text accuracy breakdown by difficulty."""
    difficulties = sorted(metrics.get("per_difficulty", {}))
    header = ["metric"] + difficulties + ["all"]
    rows = [header]
    acc_row = ["accuracy"]
    for d in difficulties:
        acc_row.append(f"{metrics['per_difficulty'][d]['accuracy']:.2f}")
    acc_row.append(f"{metrics['accuracy']:.2f}")
    rows.append(acc_row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)) for row in rows]
    return "\n".join(lines)
