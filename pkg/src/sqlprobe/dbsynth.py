"""Random database generation and the fuzz-then-drop search for a small
database that maximizes expected information gain.

Fuzzing copies cell values from a sample database (integers optionally
perturbed by one), fills parent columns first, and samples child
foreign-key columns from the generated parent values, so every generated
database is valid by construction. The search then repeatedly drops ~5% of
records while tracking information gain, and finally prunes tables and
columns that no retained candidate mentions.
"""

from __future__ import annotations

import itertools
import math
import random
import re
import time
from dataclasses import dataclass, field, replace

from .candidates import derive_seed
from .database import Database, repair_database, validate_database
from .infogain import IGResult, TruncatedBelief, expected_information_gain
from .schema import ColumnDef, ForeignKey, Schema, TableDef


class FuzzError(RuntimeError):
    """Generation is impossible: foreign-key cycle or empty value domain."""


class SynthFailure(Exception):
    """The search found no informative database (reason: ig_zero | timeout)."""

    def __init__(self, reason: str, attempted_configs: list[int] | None = None):
        super().__init__(reason)
        self.reason = reason
        self.attempted_configs = attempted_configs or []


@dataclass
class SynthConfig:
    tweak_unique: bool = True
    tweak_init_sample_db: bool = True
    tweak_small_cap: bool = True          # record cap 15 when on, 30 when off
    n_fuzz: int = 64
    max_rows_per_table: int = 40
    drop_fraction: float = 0.05
    drop_tries: int = 20
    restarts: int = 3
    seed: int = 0
    int_perturb_prob: float = 0.3
    ig_error_rate: float = 0.3            # 0.0 forces the oracle model
    exec_timeout_s: float = 2.0

    def __post_init__(self):
        if not (0 < self.drop_fraction < 1):
            raise ValueError("drop_fraction must be in (0, 1)")
        if self.n_fuzz < 1 or self.max_rows_per_table < 1 or self.drop_tries < 1 or self.restarts < 1:
            raise ValueError("caps must be positive")

    @property
    def record_cap(self) -> int:
        return 15 if self.tweak_small_cap else 30

    def with_lattice_bits(self, c: int) -> "SynthConfig":
        """Configuration c in 0..7; bit 4 = uniqueness, bit 2 = sample-db
        initialization, bit 1 = small record cap."""
        return replace(
            self,
            tweak_unique=bool(c & 4),
            tweak_init_sample_db=bool(c & 2),
            tweak_small_cap=bool(c & 1),
        )


@dataclass
class FuzzContext:
    """A reusable suite of fuzzed databases for equivalence grouping."""
    schema: Schema
    sample_db: Database
    cfg: SynthConfig
    seed: int = 0
    n_dbs: int = 16
    _suite: list[Database] | None = field(default=None, repr=False)

    def suite(self) -> list[Database]:
        if self._suite is None:
            self._suite = [
                fuzz_database(self.schema, self.sample_db, self.cfg, derive_seed(self.seed, "suite", i))
                for i in range(self.n_dbs)
            ]
        return self._suite


# ---------------------------------------------------------------------------
# Fuzzing

def _perturb_int(value: int, rng: random.Random, prob: float) -> int:
    if rng.random() < prob:
        return value + rng.choice((-1, 1))
    return value


def fuzz_database(schema: Schema, sample_db: Database, cfg: SynthConfig, seed: int) -> Database:
    """Generate one random database conforming to `schema`.

    Tables are filled in parent-first order with per-table row counts
    uniform in [1, max_rows_per_table]. Deterministic given `seed`.
    """
    rng = random.Random(seed)
    try:
        order = schema.topological_order()
    except Exception as exc:
        raise FuzzError(str(exc)) from exc

    tables: dict[str, list[tuple]] = {}
    generated: dict[tuple[str, str], list] = {}

    for tdef in order:
        child_fks = schema.child_fk_columns(tdef.name)
        n = rng.randint(1, cfg.max_rows_per_table)

        plans = []
        for col in tdef.columns:
            fk = child_fks.get(col.name.lower())
            sample_vals = sample_db.column_values(tdef.name, col.name)
            nonnull = [v for v in sample_vals if v is not None]
            null_frac = 0.0
            if sample_vals and not col.not_null and not col.is_unique:
                null_frac = (len(sample_vals) - len(nonnull)) / len(sample_vals)
            if fk is not None:
                pool = [v for v in generated[(fk.parent_table.lower(), fk.parent_column.lower())]
                        if v is not None]
                if not pool:
                    raise FuzzError(f"empty parent domain for {tdef.name}.{col.name}")
            else:
                pool = nonnull
                if not pool and col.not_null:
                    raise FuzzError(f"empty value domain for {tdef.name}.{col.name}")
            sample_unique = bool(nonnull) and len(set(nonnull)) == len(nonnull)
            unique = col.is_unique or (cfg.tweak_unique and sample_unique)
            plans.append((col, pool, unique, null_frac, fk is not None))

        # Unique columns are drawn first; perturbation collisions can shrink
        # the distinct supply, which in turn caps the row count.
        unique_values: dict[int, list] = {}
        for ci, (col, pool, unique, _, is_fk) in enumerate(plans):
            if not unique or not pool:
                continue
            perturb = col.type == "integer" and not is_fk
            bases = sorted(set(pool), key=lambda v: (str(type(v)), v))
            rng.shuffle(bases)
            values, used = [], set()
            for base in bases:
                if len(values) == n:
                    break
                v = _perturb_int(base, rng, cfg.int_perturb_prob) if perturb else base
                for cand in (v, base):
                    if cand not in used:
                        used.add(cand)
                        values.append(cand)
                        break
            if len(values) < n and perturb:
                extras = sorted({b + d for b in bases for d in (-1, 0, 1)} - used)
                rng.shuffle(extras)
                values.extend(extras[: n - len(values)])
            unique_values[ci] = values
            n = min(n, len(values))
        n = max(n, 1)

        columns: list[list] = []
        for ci, (col, pool, unique, null_frac, is_fk) in enumerate(plans):
            if ci in unique_values:
                columns.append(unique_values[ci][:n])
                continue
            if not pool:
                columns.append([None] * n)
                continue
            perturb = col.type == "integer" and not is_fk
            values = []
            for _ in range(n):
                if null_frac > 0 and rng.random() < null_frac:
                    values.append(None)
                    continue
                v = rng.choice(pool)
                if perturb:
                    v = _perturb_int(v, rng, cfg.int_perturb_prob)
                values.append(v)
            columns.append(values)
        tables[tdef.name] = [tuple(col[i] for col in columns) for i in range(n)]
        for col, values in zip(tdef.columns, columns):
            generated[(tdef.name.lower(), col.name.lower())] = values

    db = Database(schema, tables)
    validate_database(db)
    return db


# ---------------------------------------------------------------------------
# Fuzz-then-drop search

@dataclass
class SynthResult:
    db: Database
    ig_bits: float
    config_used: int
    trace: dict
    partition: dict[str, str]
    options: list


class _Scorer:
    """Memoized IG evaluation with a wall-clock deadline."""

    def __init__(self, pprime: TruncatedBelief, cfg: SynthConfig, deadline: float | None):
        self.pprime = pprime
        self.cfg = cfg
        self.deadline = deadline
        self.cache: dict = {}
        self.evaluations = 0

    def score(self, db: Database) -> IGResult:
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise SynthFailure("timeout")
        key = db.fingerprint()
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        result = expected_information_gain(self.pprime, db, self.cfg.ig_error_rate,
                                           timeout_s=self.cfg.exec_timeout_s)
        self.evaluations += 1
        self.cache[key] = result
        return result


def _drop_records(db: Database, k: int, rng: random.Random) -> Database:
    positions = [(t.name, i) for t in db.schema.tables for i in range(len(db.rows(t.name)))]
    doomed = set(rng.sample(positions, min(k, len(positions))))
    tables = {
        t.name: [row for i, row in enumerate(db.rows(t.name)) if (t.name, i) not in doomed]
        for t in db.schema.tables
    }
    return repair_database(Database(db.schema, tables))


def fuzz_then_drop(
    pprime: TruncatedBelief,
    schema: Schema,
    sample_db: Database,
    cfg: SynthConfig,
    deadline: float | None = None,
) -> SynthResult:
    """Search for a small database with high information gain.

    Per restart: a fuzz phase keeps the IG-best of n_fuzz random databases
    (seeded with the repaired sample database when that tweak is on), then a
    drop phase repeatedly removes ceil(5%) of records, re-repairing orphans,
    keeping the IG-best of up to drop_tries variants per level and stopping
    a level early on strict improvement. The winner is the IG-best visited
    database within the record cap that actually distinguishes real
    candidates, ties favoring smaller databases, then earlier discovery.

    Raises SynthFailure(ig_zero) when no visited database tells any two
    positive-weight normal clusters apart, and SynthFailure(timeout) when
    the deadline expires.
    """
    scorer = _Scorer(pprime, cfg, deadline)
    cap = cfg.record_cap
    counter = itertools.count()
    best: tuple | None = None  # (-ig, size, discovery, db, IGResult)
    trace: dict = {"config": _config_bits(cfg), "restarts": []}

    def consider(db: Database, result: IGResult):
        nonlocal best
        if db.size > cap:
            return
        if result.normal_groups < 2 or result.ig_bits <= 1e-12:
            return
        key = (-result.ig_bits, db.size, next(counter), db, result)
        if best is None or key[:3] < best[:3]:
            best = key

    repaired_sample = repair_database(sample_db)

    for restart in range(cfg.restarts):
        rng = random.Random(derive_seed(cfg.seed, "drop", restart))
        candidates: list[Database] = []
        if cfg.tweak_init_sample_db:
            candidates.append(repaired_sample)
        candidates.extend(
            fuzz_database(schema, sample_db, cfg, derive_seed(cfg.seed, "fuzz", restart, i))
            for i in range(cfg.n_fuzz)
        )
        restart_trace = {"levels": []}
        cur, cur_res = None, None
        for db in candidates:
            res = scorer.score(db)
            consider(db, res)
            if cur is None or (res.ig_bits, -db.size) > (cur_res.ig_bits, -cur.size):
                cur, cur_res = db, res
        restart_trace["fuzz_ig"] = round(cur_res.ig_bits, 12)
        restart_trace["fuzz_size"] = cur.size

        while cur.size > 0:
            k = max(1, math.ceil(cfg.drop_fraction * cur.size))
            level_best, level_best_res = None, None
            for _ in range(cfg.drop_tries):
                variant = _drop_records(cur, k, rng)
                res = scorer.score(variant)
                consider(variant, res)
                if level_best is None or (res.ig_bits, -variant.size) > (level_best_res.ig_bits, -level_best.size):
                    level_best, level_best_res = variant, res
                if res.ig_bits > cur_res.ig_bits + 1e-12:
                    break
            cur, cur_res = level_best, level_best_res
            restart_trace["levels"].append({"size": cur.size, "ig": round(cur_res.ig_bits, 12)})
        trace["restarts"].append(restart_trace)

    trace["ig_evaluations"] = scorer.evaluations
    if best is None:
        raise SynthFailure("ig_zero")

    neg_ig, size, _, db, result = best
    pruned_db = prune_database(db, [pprime.sql_of(cid) for cid in pprime.normal_ids])
    trace["chosen"] = {"ig": round(-neg_ig, 12), "size": size, "pruned_size": pruned_db.size}
    final = expected_information_gain(pprime, pruned_db, cfg.ig_error_rate,
                                      timeout_s=cfg.exec_timeout_s)
    return SynthResult(
        db=pruned_db,
        ig_bits=final.ig_bits,
        config_used=_config_bits(cfg),
        trace=trace,
        partition=final.partition,
        options=final.options,
    )


def _config_bits(cfg: SynthConfig) -> int:
    return (4 if cfg.tweak_unique else 0) | (2 if cfg.tweak_init_sample_db else 0) | (1 if cfg.tweak_small_cap else 0)


def synthesize_question_db(
    pprime: TruncatedBelief,
    schema: Schema,
    sample_db: Database,
    base_cfg: SynthConfig,
    budget_s: float | None = 2400.0,
    deadline: float | None = None,
) -> SynthResult:
    """Try the naturalness-tweak configurations from strictest (7) to loosest
    (0) until the search yields a database with positive information gain.

    A per-utterance wall-clock budget (default 40 minutes) bounds the whole
    enumeration. Raises SynthFailure when every configuration fails or the
    budget runs out.
    """
    if deadline is None and budget_s is not None:
        deadline = time.monotonic() + budget_s
    attempted: list[int] = []
    for c in range(7, -1, -1):
        cfg = base_cfg.with_lattice_bits(c)
        attempted.append(c)
        try:
            result = fuzz_then_drop(pprime, schema, sample_db, cfg, deadline=deadline)
            result.trace["attempted_configs"] = attempted
            return result
        except SynthFailure as failure:
            if failure.reason == "timeout":
                raise SynthFailure("timeout", attempted) from None
            continue
    raise SynthFailure("ig_zero", attempted)


# ---------------------------------------------------------------------------
# Pruning

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _sql_identifiers(sqls: list[str]) -> tuple[set[str], bool]:
    idents: set[str] = set()
    star = False
    for sql in sqls:
        stripped = re.sub(r"'(?:[^']|'')*'", " ", sql)
        idents.update(tok.lower() for tok in _IDENT_RE.findall(stripped))
        if "*" in stripped:
            star = True
    return idents, star


def prune_database(db: Database, sqls: list[str]) -> Database:
    """Drop tables and columns that no query mentions.

    Primary-key columns and foreign-key link columns between kept tables
    are preserved so the displayed structure stays navigable; the pruned
    database carries a correspondingly pruned schema.
    """
    schema = db.schema
    idents, star = _sql_identifiers(sqls)

    kept_tables = [t for t in schema.tables if t.name.lower() in idents]
    if not kept_tables:
        return db
    kept_names = {t.name.lower() for t in kept_tables}

    fk_cols: set[tuple[str, str]] = set()
    kept_fks: list[ForeignKey] = []
    for fk in schema.foreign_keys:
        if fk.child_table.lower() in kept_names and fk.parent_table.lower() in kept_names:
            fk_cols.add((fk.child_table.lower(), fk.child_column.lower()))
            fk_cols.add((fk.parent_table.lower(), fk.parent_column.lower()))
            kept_fks.append(fk)

    new_tables: list[TableDef] = []
    projections: dict[str, list[int]] = {}
    for t in kept_tables:
        kept_cols: list[ColumnDef] = []
        idxs: list[int] = []
        for i, col in enumerate(t.columns):
            keep = (
                star
                or col.name.lower() in idents
                or col.primary_key
                or (t.name.lower(), col.name.lower()) in fk_cols
            )
            if keep:
                kept_cols.append(col)
                idxs.append(i)
        if not kept_cols:
            kept_cols = list(t.columns)
            idxs = list(range(len(t.columns)))
        new_tables.append(TableDef(t.name, tuple(kept_cols)))
        projections[t.name] = idxs

    pruned_schema = Schema(
        id=schema.id + "+pruned",
        tables=tuple(new_tables),
        foreign_keys=tuple(kept_fks),
        domain_id=schema.domain_id,
        descriptions={k: v for k, v in schema.descriptions.items()
                      if k.lower() in kept_names or k == schema.id},
    )
    rows = {
        t.name: [tuple(row[i] for i in projections[t.name]) for row in db.rows(t.name)]
        for t in kept_tables
    }
    pruned = Database(pruned_schema, rows)
    validate_database(pruned)
    return pruned
