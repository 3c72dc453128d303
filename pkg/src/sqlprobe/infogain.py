"""Entropy and expected information gain over a truncated belief.

The belief is a distribution over candidate clusters. For question scoring
it is truncated to the top-16 clusters and extended with pseudo-candidates:
a small RETURN-NULL mass (pushes the search toward databases on which real
candidates return non-null outputs) and a small neighbor-query mass (pushes
toward databases on which aggregation operators and WHERE clauses matter).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .candidates import CandidateCluster, executability_check, neighbor_queries
from .database import Database
from .execution import ExecutionError, Workbench, denotations_equal
from .response_model import ERROR_RESPONSE, NONE_RESPONSE, likelihood_of

TOP_K_CLUSTERS = 16
MAX_OPTIONS = 6

DEFAULT_EPS_NULL = 0.01
DEFAULT_EPS_NEIGHBOR = 0.04

RETURN_NULL_SQL = "SELECT NULL"


@dataclass
class Belief:
    """Normalized distribution over cluster ids after `round` responses."""
    weights: dict[str, float]
    round: int = 0
    history: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"belief weights sum to {total}, not 1")
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("negative belief weight")
        if len(self.history) != self.round:
            raise ValueError("history length must equal round")

    @classmethod
    def from_clusters(cls, clusters: list[CandidateCluster]) -> "Belief":
        return cls(weights={c.id: c.weight for c in clusters})

    def map_cluster(self) -> tuple[str, float]:
        """Highest-weight cluster id (ties broken by id)."""
        best = min(self.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return best

    def top_ids(self, n: int) -> list[str]:
        ranked = sorted(self.weights.items(), key=lambda kv: (-kv[1], kv[0]))
        return [cid for cid, _ in ranked[:n]]


@dataclass
class TruncatedBelief:
    """Top clusters of a belief plus pseudo-candidates, renormalized."""
    weights: dict[str, float]
    clusters: dict[str, CandidateCluster]
    normal_ids: list[str]
    source_round: int = 0

    def __post_init__(self):
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"truncated weights sum to {total}, not 1")

    def sql_of(self, cluster_id: str) -> str:
        return self.clusters[cluster_id].representative_sql


def _weights_of(b) -> dict[str, float]:
    return b.weights if hasattr(b, "weights") else dict(b)


def entropy(b) -> float:
    """Shannon entropy in bits; 0·log 0 = 0."""
    h = 0.0
    for w in _weights_of(b).values():
        if w > 0:
            h -= w * math.log2(w)
    return h


def _cluster_neighbors(reps: list[str], ctx) -> list[list[str]]:
    """Neighbor queries of the retained representatives, deduplicated and
    grouped by agreement on the context's fuzz suite."""
    check = executability_check(ctx.sample_db) if ctx is not None else None
    seen: set[str] = set()
    neighbor_sqls: list[str] = []
    for rep in reps:
        for sql in neighbor_queries(rep, check=check):
            key = " ".join(sql.lower().split())
            if key not in seen:
                seen.add(key)
                neighbor_sqls.append(sql)
    if not neighbor_sqls or ctx is None:
        return [[sql] for sql in neighbor_sqls]

    groups: list[list[str]] = [list(neighbor_sqls)]
    for db in ctx.suite():
        new_groups: list[list[str]] = []
        with Workbench(db) as wb:
            for group in groups:
                if len(group) == 1:
                    new_groups.append(group)
                    continue
                subgroups: list[tuple[object, list[str]]] = []
                for sql in group:
                    try:
                        denot = wb.execute(sql)
                    except ExecutionError:
                        continue
                    for existing, members in subgroups:
                        if denotations_equal(existing, denot):
                            members.append(sql)
                            break
                    else:
                        subgroups.append((denot, [sql]))
                new_groups.extend(members for _, members in subgroups)
        groups = new_groups
        if all(len(g) == 1 for g in groups):
            break
    return groups


def truncate(
    b: Belief,
    clusters: list[CandidateCluster],
    eps_null: float = DEFAULT_EPS_NULL,
    eps_neighbor_total: float = DEFAULT_EPS_NEIGHBOR,
    ctx=None,
) -> TruncatedBelief:
    """Truncate a belief to its top-16 clusters and attach pseudo-candidates.

    The retained clusters keep their relative ranking and are renormalized
    to 1 - eps_null - eps_neighbor_total; the RETURN-NULL pseudo-cluster
    receives eps_null; neighbor-query groups share eps_neighbor_total
    uniformly. When there are no neighbors, their mass returns to the
    normal clusters. `ctx` (a dbsynth.FuzzContext) enables executability
    checking and fuzz-grouping of neighbors; without it no neighbors are
    generated.
    """
    by_id = {c.id: c for c in clusters}
    ranked = sorted(b.weights.items(), key=lambda kv: (-kv[1], kv[0]))
    kept = [(cid, w) for cid, w in ranked[:TOP_K_CLUSTERS] if w > 0]
    if not kept:
        raise ValueError("cannot truncate a belief with no positive weights")

    reps = [by_id[cid].representative_sql for cid, _ in kept]
    neighbor_groups = _cluster_neighbors(reps, ctx) if ctx is not None else []
    eps_nb = eps_neighbor_total if neighbor_groups else 0.0

    normal_mass = 1.0 - eps_null - eps_nb
    total_kept = sum(w for _, w in kept)
    weights: dict[str, float] = {}
    out_clusters: dict[str, CandidateCluster] = {}
    normal_ids: list[str] = []
    for cid, w in kept:
        weights[cid] = w / total_kept * normal_mass
        out_clusters[cid] = by_id[cid]
        normal_ids.append(cid)

    null_id = "pseudo:null"
    weights[null_id] = eps_null
    out_clusters[null_id] = CandidateCluster(
        id=null_id, representative_sql=RETURN_NULL_SQL, member_sqls=[RETURN_NULL_SQL],
        weight=eps_null, kind="return_null",
    )
    for i, group in enumerate(neighbor_groups):
        nid = f"pseudo:nb{i}"
        share = eps_nb / len(neighbor_groups)
        weights[nid] = share
        out_clusters[nid] = CandidateCluster(
            id=nid, representative_sql=group[0], member_sqls=list(group), weight=share, kind="neighbor",
        )
    return TruncatedBelief(weights=weights, clusters=out_clusters, normal_ids=normal_ids,
                           source_round=b.round)


# ---------------------------------------------------------------------------
# Option construction and information gain

@dataclass
class OptionBuild:
    """Displayed options plus the cluster -> response assignment they induce."""
    options: list[tuple[str, object]]          # (option id, Denotation), display-ranked
    partition: dict[str, str]                  # cluster id -> option id | "none" | "error"

    @property
    def n_displayed(self) -> int:
        return len(self.options)

    @property
    def responses(self) -> list[str]:
        return [oid for oid, _ in self.options] + [NONE_RESPONSE]


def fold_response(assigned: str) -> str:
    """Map a partition value to the response an annotator could give.

    Erroring clusters are never displayed; for likelihood purposes their
    correct response is the none-option.
    """
    return NONE_RESPONSE if assigned == ERROR_RESPONSE else assigned


def build_options(pprime: TruncatedBelief, db: Database, timeout_s: float = 2.0,
                  max_options: int = MAX_OPTIONS) -> OptionBuild:
    """Execute every cluster of the truncated belief on `db` and build the
    deduplicated option list exactly as a served question would.

    Options come from normal clusters only, ranked by total belief mass;
    pseudo-clusters map into the option set by denotation equality (or to
    the none/error responses) but never add displayed options.
    """
    denots: dict[str, object] = {}
    errored: set[str] = set()
    with Workbench(db, timeout_s=timeout_s) as wb:
        for cid, cluster in pprime.clusters.items():
            try:
                denots[cid] = wb.execute(cluster.representative_sql)
            except ExecutionError:
                errored.add(cid)

    # Group normal clusters by output equality, in rank order.
    groups: list[dict] = []  # {denot, members: [cid], mass}
    for cid in pprime.normal_ids:
        if cid in errored:
            continue
        denot = denots[cid]
        for group in groups:
            if denotations_equal(group["denot"], denot):
                group["members"].append(cid)
                group["mass"] += pprime.weights[cid]
                break
        else:
            groups.append({"denot": denot, "members": [cid], "mass": pprime.weights[cid]})

    order = sorted(range(len(groups)), key=lambda i: (-groups[i]["mass"], i))
    displayed = order[:max_options]

    partition: dict[str, str] = {}
    options: list[tuple[str, object]] = []
    for rank, gi in enumerate(displayed):
        oid = str(rank)
        options.append((oid, groups[gi]["denot"]))
        for cid in groups[gi]["members"]:
            partition[cid] = oid
    for gi in order[max_options:]:
        for cid in groups[gi]["members"]:
            partition[cid] = NONE_RESPONSE
    for cid in pprime.normal_ids:
        if cid in errored:
            partition[cid] = ERROR_RESPONSE

    # Pseudo-clusters: match displayed options by denotation, else NONE/ERROR.
    for cid in pprime.clusters:
        if cid in partition:
            continue
        if cid in errored:
            partition[cid] = ERROR_RESPONSE
            continue
        denot = denots[cid]
        for oid, opt_denot in options:
            if denotations_equal(opt_denot, denot):
                partition[cid] = oid
                break
        else:
            partition[cid] = NONE_RESPONSE
    return OptionBuild(options=options, partition=partition)


def information_gain(weights: dict[str, float], partition: dict[str, str],
                     responses: list[str], e: float) -> float:
    """Expected information gain, in bits, of observing one response.

    `partition` assigns each cluster its correct response; the predicted
    response distribution mixes the annotator model over clusters, and the
    gain is prior entropy minus expected posterior entropy.
    """
    n_responses = len(responses)
    prior_h = entropy(weights)
    expected_posterior_h = 0.0
    for r in responses:
        p_r = 0.0
        posterior = []
        for cid, w in weights.items():
            lik = likelihood_of(r, fold_response(partition[cid]), n_responses, e)
            contrib = w * lik
            p_r += contrib
            posterior.append(contrib)
        if p_r <= 0:
            continue
        h_r = 0.0
        for contrib in posterior:
            if contrib > 0:
                p = contrib / p_r
                h_r -= p * math.log2(p)
        expected_posterior_h += p_r * h_r
    return prior_h - expected_posterior_h


def normal_response_groups(pprime: TruncatedBelief, partition: dict[str, str]) -> int:
    """Number of distinct responses induced by positive-weight normal clusters.

    A question can only tell real candidates apart when this is >= 2; the
    pseudo-candidates steer the search but cannot make a database count as
    informative on their own.
    """
    seen = set()
    for cid in pprime.normal_ids:
        if pprime.weights.get(cid, 0.0) > 0:
            seen.add(fold_response(partition[cid]))
    return len(seen)


@dataclass
class IGResult:
    ig_bits: float
    partition: dict[str, str]
    options: list[tuple[str, object]]
    normal_groups: int


def expected_information_gain(pprime: TruncatedBelief, db: Database, error_rate: float,
                              timeout_s: float = 2.0) -> IGResult:
    """Score a candidate question database against a truncated belief."""
    build = build_options(pprime, db, timeout_s=timeout_s)
    ig = information_gain(pprime.weights, build.partition, build.responses, error_rate)
    return IGResult(
        ig_bits=ig,
        partition=build.partition,
        options=build.options,
        normal_groups=normal_response_groups(pprime, build.partition),
    )
