"""Fit the logistic annotator-error model by EM over collected transcripts.

The true program behind each utterance is latent; the incomplete-data
log-likelihood marginalizes it under the candidate prior. The E-step
imputes a posterior over clusters, the M-step maximizes the expected
response log-likelihood over the per-annotator, per-domain, and bias
parameters by gradient ascent with backtracking line search. A small L2
penalty on the annotator and domain offsets pins the shift-invariance
degeneracy of the logistic parameterization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .infogain import fold_response
from .response_model import AnnotatorParams, error_rate
from .interaction import TranscriptEntry

DEFAULT_L2 = 1e-3


class FitError(RuntimeError):
    """The likelihood decreased across an EM step; the M-step is broken."""


class EvalError(ValueError):
    pass


@dataclass
class FitResponse:
    annotator_id: str
    n_options: int                      # K displayed outputs (excludes NONE)
    correct_map: dict[str, str]         # cluster id -> folded correct response
    response: str


@dataclass
class FitUtterance:
    utterance_id: str
    domain_id: str
    prior: dict[str, float]
    responses: list[FitResponse] = field(default_factory=list)
    gold_cluster: str | None = None


@dataclass
class FitDataset:
    utterances: list[FitUtterance] = field(default_factory=list)

    def annotators(self) -> list[str]:
        out = sorted({r.annotator_id for u in self.utterances for r in u.responses})
        return out

    def domains(self) -> list[str]:
        return sorted({u.domain_id for u in self.utterances})


def fit_response_from_entry(entry: TranscriptEntry) -> FitResponse:
    q = entry.question
    return FitResponse(
        annotator_id=entry.response.annotator_id,
        n_options=len(q.options),
        correct_map={cid: fold_response(v) for cid, v in q.partition.items()},
        response=entry.response.response,
    )


@dataclass
class FitReport:
    params: AnnotatorParams
    log_likelihood_trace: list[float]
    auc: float
    mse: float


def _response_loglik(resp: FitResponse, cluster_id: str, e: float) -> float:
    n = resp.n_options + 1
    if resp.correct_map.get(cluster_id, "none") == resp.response:
        return math.log((1.0 - e) + e / n)
    return math.log(e / n) if e > 0 else -math.inf


def _utterance_cluster_logliks(u: FitUtterance, params: AnnotatorParams) -> dict[str, float]:
    out = {}
    for cid, p0 in u.prior.items():
        if p0 <= 0:
            continue
        total = math.log(p0)
        for resp in u.responses:
            e = error_rate(params, resp.annotator_id, u.domain_id)
            total += _response_loglik(resp, cid, e)
        out[cid] = total
    return out


def incomplete_log_likelihood(ds: FitDataset, params: AnnotatorParams) -> float:
    """Sum over utterances of log sum over clusters of prior times the
    product of response likelihoods; the latent cluster is marginalized
    through the prior."""
    total = 0.0
    for u in ds.utterances:
        logliks = list(_utterance_cluster_logliks(u, params).values())
        if not logliks:
            continue
        m = max(logliks)
        if m == -math.inf:
            return -math.inf
        total += m + math.log(sum(math.exp(v - m) for v in logliks))
    return total


def _posteriors(u: FitUtterance, params: AnnotatorParams) -> dict[str, float]:
    logliks = _utterance_cluster_logliks(u, params)
    m = max(logliks.values())
    unnorm = {cid: math.exp(v - m) for cid, v in logliks.items()}
    z = sum(unnorm.values())
    return {cid: v / z for cid, v in unnorm.items()}


def _suff_stats(ds: FitDataset, params: AnnotatorParams) -> dict[tuple[str, str, int], list[float]]:
    """Per (annotator, domain, K): [expected count correct, total count]."""
    stats: dict[tuple[str, str, int], list[float]] = {}
    for u in ds.utterances:
        post = _posteriors(u, params)
        for resp in u.responses:
            c = sum(w for cid, w in post.items()
                    if resp.correct_map.get(cid, "none") == resp.response)
            key = (resp.annotator_id, u.domain_id, resp.n_options)
            cell = stats.setdefault(key, [0.0, 0.0])
            cell[0] += c
            cell[1] += 1.0
    return stats


def _pack(params: AnnotatorParams, annotators: list[str], domains: list[str]) -> np.ndarray:
    theta = [params.bias]
    theta += [params.alpha.get(a, 0.0) for a in annotators]
    theta += [params.beta.get(d, 0.0) for d in domains]
    return np.array(theta, dtype=float)


def _unpack(theta: np.ndarray, annotators: list[str], domains: list[str]) -> AnnotatorParams:
    na = len(annotators)
    return AnnotatorParams(
        alpha={a: float(theta[1 + i]) for i, a in enumerate(annotators)},
        beta={d: float(theta[1 + na + i]) for i, d in enumerate(domains)},
        bias=float(theta[0]),
    )


def m_step_objective_and_grad(
    stats: dict[tuple[str, str, int], list[float]],
    theta: np.ndarray,
    annotators: list[str],
    domains: list[str],
    l2: float = DEFAULT_L2,
) -> tuple[float, np.ndarray]:
    """Expected response log-likelihood (plus L2 penalty) and its gradient."""
    a_idx = {a: 1 + i for i, a in enumerate(annotators)}
    d_idx = {d: 1 + len(annotators) + i for i, d in enumerate(domains)}
    obj = 0.0
    grad = np.zeros_like(theta)
    for (a, d, k), (sum_c, n) in stats.items():
        ai, di = a_idx[a], d_idx[d]
        z = theta[0] + theta[ai] + theta[di]
        e = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
        kk = k / (k + 1.0)
        p_correct = 1.0 - e * kk
        obj += sum_c * math.log(p_correct) + (n - sum_c) * (math.log(e) - math.log(k + 1.0))
        s = e * (1.0 - e)
        dz = -sum_c * kk * s / p_correct + (n - sum_c) * (1.0 - e)
        for idx in (0, ai, di):
            grad[idx] += dz
    for i in range(1, len(theta)):
        obj -= l2 * theta[i] ** 2
        grad[i] -= 2.0 * l2 * theta[i]
    return obj, grad


def _maximize(stats, theta0, annotators, domains, l2, max_inner=500) -> np.ndarray:
    theta = theta0.copy()
    obj, grad = m_step_objective_and_grad(stats, theta, annotators, domains, l2)
    for _ in range(max_inner):
        gnorm2 = float(np.dot(grad, grad))
        if math.sqrt(gnorm2) < 1e-9:
            break
        step = 1.0
        while step > 1e-12:
            cand = theta + step * grad
            cand_obj, cand_grad = m_step_objective_and_grad(stats, cand, annotators, domains, l2)
            if cand_obj >= obj + 1e-4 * step * gnorm2:
                theta, obj, grad = cand, cand_obj, cand_grad
                break
            step /= 2.0
        else:
            break
    return theta


def penalized_objective(ds: FitDataset, params: AnnotatorParams, l2: float = DEFAULT_L2) -> float:
    reg = sum(v * v for v in params.alpha.values()) + sum(v * v for v in params.beta.values())
    return incomplete_log_likelihood(ds, params) - l2 * reg


def fit(
    ds: FitDataset,
    init: AnnotatorParams | None = None,
    max_iters: int = 200,
    tol: float = 1e-6,
    l2: float = DEFAULT_L2,
    mode: str = "full",
) -> FitReport:
    """EM over the incomplete-data objective.

    The trace records the penalized objective actually being maximized
    (log-likelihood minus the L2 penalty) and must be non-decreasing up to
    1e-9 slack; a larger decrease raises FitError. mode="single" performs
    one E-step under the initial parameters and one M-step, mirroring a
    fixed-prior imputation; mode="full" re-imputes every iteration.
    """
    if not ds.utterances:
        raise EvalError("cannot fit an empty dataset")
    annotators = ds.annotators()
    domains = ds.domains()
    params = init if init is not None else AnnotatorParams()
    trace = [penalized_objective(ds, params, l2)]
    iters = 1 if mode == "single" else max_iters
    for _ in range(iters):
        stats = _suff_stats(ds, params)
        theta = _pack(params, annotators, domains)
        theta = _maximize(stats, theta, annotators, domains, l2)
        params = _unpack(theta, annotators, domains)
        obj = penalized_objective(ds, params, l2)
        if obj < trace[-1] - 1e-9:
            raise FitError(f"objective decreased from {trace[-1]} to {obj}")
        gain = obj - trace[-1]
        trace.append(obj)
        if mode == "full" and gain < tol:
            break
    try:
        ev = evaluate(ds, params)
        auc, mse = ev["auc"], ev["mse"]
    except EvalError:
        auc, mse = math.nan, math.nan
    return FitReport(params=params, log_likelihood_trace=trace, auc=auc, mse=mse)


def auc_score(labels: list[int], scores: list[float]) -> float:
    """Rank-statistic AUC with midrank tie handling."""
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return math.nan
    ranks = rankdata(scores)
    pos_rank_sum = sum(r for r, y in zip(ranks, labels) if y == 1)
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def evaluate(ds: FitDataset, params: AnnotatorParams) -> dict:
    """Score the model's predicted per-response correctness probability
    against actual correctness under the gold clusters."""
    labels: list[int] = []
    scores: list[float] = []
    by_annotator: dict[str, list[int]] = {}
    by_domain: dict[str, list[int]] = {}
    for u in ds.utterances:
        if u.gold_cluster is None:
            continue
        for resp in u.responses:
            e = error_rate(params, resp.annotator_id, u.domain_id)
            pred = (1.0 - e) + e / (resp.n_options + 1)
            actual = 1 if resp.correct_map.get(u.gold_cluster, "none") == resp.response else 0
            labels.append(actual)
            scores.append(pred)
            by_annotator.setdefault(resp.annotator_id, []).append(actual)
            by_domain.setdefault(u.domain_id, []).append(actual)
    if not labels:
        raise EvalError("no gold clusters available for evaluation")
    mse = float(np.mean([(s - y) ** 2 for s, y in zip(scores, labels)]))
    return {
        "auc": auc_score(labels, scores),
        "mse": mse,
        "accuracy_by_annotator": {a: sum(v) / len(v) for a, v in sorted(by_annotator.items())},
        "accuracy_by_domain": {d: sum(v) / len(v) for d, v in sorted(by_domain.items())},
    }
