"""
The two-phase experiment grid.

For every dataset, core level and algorithm, a model is fitted once on the
coreset's phase-1 training split.  It is scored on the phase-1 test split
and, for pruned levels, on a size-matched test set drawn from the unpruned
log (phase 2).  The unpruned level has no phase 2.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .characteristics import CharacteristicsReport, characterize
from .corefilter import CoresetDescriptor, PruneMode, RetentionReport, prune, retention
from .dataset import InteractionLog, PipelineConfig
from .metrics import MetricSpec, aggregate
from .recommenders import DEFAULT_PARAMS, Recommender, RecommenderSpec
from .rng import derive_seed
from .splitter import Phase, SplitPair, split_per_user, split_phase2

_log = logging.getLogger(__name__)

ALGORITHMS = tuple(DEFAULT_PARAMS)


@dataclass(frozen=True)
class EvalRecord:
    dataset: str
    core_t: int
    phase: str
    algorithm: str
    metric: str
    k: int
    value: float
    n_users_evaluated: int
    n_users_skipped: int = 0
    config_hash: str = ""
    seed_chain: dict = field(default_factory=dict)
    model_fingerprint: str = ""

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"metric value {self.value} outside [0, 1]")

    @property
    def metric_label(self) -> str:
        return f"{self.metric}@{self.k}"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> EvalRecord:
        return cls(**json.loads(line))


@dataclass(frozen=True)
class GridIssue:
    "A grid cell that was skipped or failed."

    dataset: str
    core_t: int
    kind: str
    message: str
    phase: str | None = None
    algorithm: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class GridResult:
    records: list[EvalRecord] = field(default_factory=list)
    issues: list[GridIssue] = field(default_factory=list)
    characteristics: dict[tuple[str, int], CharacteristicsReport] = field(default_factory=dict)
    retention: dict[tuple[str, int], RetentionReport] = field(default_factory=dict)
    config_hash: str = ""


def config_hash(config: Mapping) -> str:
    "SHA-256 of the canonical JSON encoding of an effective configuration."
    return hashlib.sha256(json.dumps(config, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def evaluate(model: Recommender, test: InteractionLog, metrics: Sequence[MetricSpec]) -> tuple[dict[str, float], int, int]:
    """
    Score a fitted model on every user of a test log.

    Returns the per-metric mean, the number of users evaluated, and the
    number of training users left out because they have no test rows.
    """
    kmax = max(m.k for m in metrics)
    per_user: dict[str, list[float]] = {m.label: [] for m in metrics}
    off = test.user_offsets
    items = test.item_tokens[test.items]
    for u, user in enumerate(test.user_tokens.tolist()):
        relevant = set(items[off[u] : off[u + 1]].tolist())
        if not relevant:
            continue
        recs = model.recommend_tokens(user, kmax)
        for m in metrics:
            per_user[m.label].append(m(recs, relevant))
    n = len(per_user[metrics[0].label])
    in_test = int((model.train.lookup_users(test.user_tokens) >= 0).sum())
    skipped = model.train.n_users - in_test
    return {label: aggregate(vals) for label, vals in per_user.items()}, n, skipped


@dataclass
class _Cell:
    dataset: str
    core_t: int
    phase1: SplitPair
    phase2: SplitPair | None
    split_seed: int


def _prepare(name: str, zero: InteractionLog, config: PipelineConfig, mode: PruneMode, result: GridResult) -> list[_Cell]:
    cells = []
    for t in config.core_levels:
        core: CoresetDescriptor = prune(zero, t, mode, seed_chain=(config.seed,))
        if core.empty:
            result.issues.append(GridIssue(name, t, "empty-coreset", f"no users with at least {t} interactions"))
            continue
        result.characteristics[(name, t)] = characterize(core.log)
        result.retention[(name, t)] = retention(core, zero)
        split_seed = derive_seed(config.seed, "split", name, t)
        p1 = split_per_user(core.log, config.train_fraction, split_seed, core_t=t)
        if p1.test is None:
            result.issues.append(GridIssue(name, t, "no-test", "phase-1 split produced no test rows"))
            continue
        p2 = None
        if t > 0:
            try:
                p2 = split_phase2(p1, zero)
            except ValueError as e:
                result.issues.append(GridIssue(name, t, "no-test", str(e), phase=Phase.PHASE2.value))
        cells.append(_Cell(name, t, p1, p2, split_seed))
    return cells


def _run_cell(cell: _Cell, algorithm: str, params: Mapping, metrics, config: PipelineConfig, chash: str):
    model_seed = derive_seed(config.seed, "model", cell.dataset, cell.core_t, algorithm)
    model = RecommenderSpec(algorithm, dict(params.get(algorithm, {})), model_seed).build()
    model.fit(cell.phase1.train)
    fp = model.fingerprint()
    chain = {"root": config.seed, "split": cell.split_seed, "model": model_seed}
    out = []
    for pair in (cell.phase1, cell.phase2):
        if pair is None:
            continue
        vals, n_eval, n_skip = evaluate(model, pair.test, metrics)
        for m in metrics:
            out.append(
                EvalRecord(
                    dataset=cell.dataset,
                    core_t=cell.core_t,
                    phase=pair.phase.value,
                    algorithm=algorithm,
                    metric=m.kind,
                    k=m.k,
                    value=vals[m.label],
                    n_users_evaluated=n_eval,
                    n_users_skipped=n_skip,
                    config_hash=chash,
                    seed_chain=chain,
                    model_fingerprint=fp,
                )
            )
    return out


def effective_config(
    config: PipelineConfig,
    algorithms: Sequence[str],
    metrics: Sequence[MetricSpec],
    params: Mapping,
    mode: PruneMode,
    datasets: Mapping[str, InteractionLog],
) -> dict:
    return {
        "pipeline": config.to_dict(),
        "algorithms": list(algorithms),
        "params": {a: RecommenderSpec(a, dict(params.get(a, {}))).params for a in algorithms},
        "metrics": [m.label for m in metrics],
        "mode": mode.value,
        "datasets": {name: log.fingerprint() for name, log in datasets.items()},
    }


def run_grid(
    config: PipelineConfig,
    datasets: Mapping[str, InteractionLog],
    algorithms: Sequence[str] = ALGORITHMS,
    metrics: Sequence[MetricSpec | str] = ("ndcg", "precision", "recall"),
    *,
    params: Mapping[str, Mapping] | None = None,
    mode: PruneMode | str = PruneMode.USER,
    jobs: int = 1,
) -> GridResult:
    """
    Run every (dataset, core level, algorithm) cell of the experiment.

    ``datasets`` maps names to their unpruned (already downsampled) logs.
    Records come back ordered by dataset (input order), core level, phase,
    algorithm (input order) and metric, regardless of ``jobs``.  Empty
    coresets and failing algorithms are recorded in ``issues`` and do not
    stop the grid.
    """
    params = dict(params or {})
    mode = PruneMode(mode)
    metrics = [m if isinstance(m, MetricSpec) else MetricSpec.parse(m, config.k_cutoff) for m in metrics]
    for a in algorithms:
        RecommenderSpec(a, dict(params.get(a, {})))
    result = GridResult()
    result.config_hash = chash = config_hash(effective_config(config, algorithms, metrics, params, mode, datasets))

    cells: list[_Cell] = []
    for name, zero in datasets.items():
        cells.extend(_prepare(name, zero, config, mode, result))

    tasks = [(c, a) for c in cells for a in algorithms]

    def work(task):
        cell, algo = task
        try:
            return _run_cell(cell, algo, params, metrics, config, chash), None
        except Exception as e:  # noqa: BLE001 - one failing cell must not sink the grid
            _log.exception("%s core %d %s failed", cell.dataset, cell.core_t, algo)
            return [], GridIssue(cell.dataset, cell.core_t, "error", f"{type(e).__name__}: {e}", algorithm=algo)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outcomes = list(pool.map(work, tasks))
    else:
        outcomes = [work(t) for t in tasks]

    by_cell: dict[tuple[str, int], list[EvalRecord]] = {}
    for (cell, _algo), (recs, issue) in zip(tasks, outcomes):
        by_cell.setdefault((cell.dataset, cell.core_t), []).extend(recs)
        if issue is not None:
            result.issues.append(issue)
    phase_order = {Phase.PHASE1.value: 0, Phase.PHASE2.value: 1}
    algo_order = {a: n for n, a in enumerate(algorithms)}
    metric_order = {(m.kind, m.k): n for n, m in enumerate(metrics)}
    for cell in cells:
        recs = by_cell.get((cell.dataset, cell.core_t), [])
        recs.sort(key=lambda r: (phase_order[r.phase], algo_order[r.algorithm], metric_order[(r.metric, r.k)]))
        result.records.extend(recs)
    return result


def save_results(result: GridResult, out_dir) -> list[Path]:
    """
    Persist a grid result: ``records.jsonl`` (one record per line, appended
    in grid order), ``records.csv`` (pivot of values), ``coresets.json``
    (characteristics and retention per dataset and core) and
    ``issues.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rec_path = out / "records.jsonl"
    with open(rec_path, "a", encoding="utf-8") as f:
        for r in result.records:
            f.write(r.to_json() + "\n")

    piv_path = out / "records.csv"
    cols = list(dict.fromkeys(r.metric_label for r in result.records))
    rows: dict[tuple, dict[str, float]] = {}
    for r in result.records:
        rows.setdefault((r.dataset, r.core_t, r.phase, r.algorithm), {})[r.metric_label] = r.value
    with open(piv_path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dataset", "core", "phase", "algorithm", *cols])
        for key, vals in rows.items():
            w.writerow([*key, *(repr(vals[c]) if c in vals else "" for c in cols)])

    core_path = out / "coresets.json"
    entries = []
    for (name, t), rep in result.characteristics.items():
        ret = result.retention.get((name, t))
        entries.append(
            {"dataset": name, "core_t": t, "characteristics": rep.to_dict(), "retention": None if ret is None else asdict(ret)}
        )
    with open(core_path, "w") as f:
        json.dump({"config_hash": result.config_hash, "coresets": entries}, f, indent=2, sort_keys=True)
        f.write("\n")

    issue_path = out / "issues.json"
    with open(issue_path, "w") as f:
        json.dump([i.to_dict() for i in result.issues], f, indent=2, sort_keys=True)
        f.write("\n")
    return [rec_path, piv_path, core_path, issue_path]


def load_results(in_dir) -> GridResult:
    d = Path(in_dir)
    result = GridResult()
    with open(d / "records.jsonl", encoding="utf-8") as f:
        result.records = [EvalRecord.from_json(line) for line in f if line.strip()]
    if (d / "coresets.json").exists():
        with open(d / "coresets.json") as f:
            data = json.load(f)
        result.config_hash = data.get("config_hash", "")
        for e in data["coresets"]:
            key = (e["dataset"], int(e["core_t"]))
            result.characteristics[key] = CharacteristicsReport(**e["characteristics"])
            if e["retention"] is not None:
                result.retention[key] = RetentionReport(**e["retention"])
    if (d / "issues.json").exists():
        with open(d / "issues.json") as f:
            result.issues = [GridIssue(**i) for i in json.load(f)]
    if not result.config_hash and result.records:
        result.config_hash = result.records[0].config_hash
    return result
