"""
Command-line pipeline: ``ingest``, ``prune``, ``stats``, ``split``, ``run``
and ``report``.

Every command accepts ``--config FILE`` (JSON); keys are the long option
names with dashes replaced by underscores.  Flags given on the command
line override the file.  Each command writes ``manifest.json`` into its
output location before any other output.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .characteristics import characterize
from .corefilter import PruneMode, load_coreset, prune, retention, save_coreset
from .dataset import LogFormat, PipelineConfig, downsample, file_digest, load_log, read_log
from .experiment import ALGORITHMS, config_hash, run_grid, save_results, load_results
from .metrics import METRIC_KINDS, MetricSpec
from .report import emit_tables
from .rng import derive_seed
from .splitter import export_atomic, split_per_user, split_phase2

_log = logging.getLogger("coreprune")

DEFAULTS = {
    "format": "user,item,rating,timestamp",
    "delimiter": ",",
    "header": False,
    "rating_threshold": 4.0,
    "sample_cap": 3_000_000,
    "seed": 42,
    "cores": "0,5,10,20,50,100",
    "mode": PruneMode.USER.value,
    "train_fraction": 0.8,
    "k": 10,
    "name": "dataset",
    "algorithms": ",".join(ALGORITHMS),
    "metrics": ",".join(METRIC_KINDS),
    "jobs": 1,
}


class UsageError(Exception):
    pass


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def _str_list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(x) for x in text]
    return [x.strip() for x in str(text).split(",") if x.strip()]


def _merge(args: argparse.Namespace, keys) -> dict:
    "Defaults, then config file, then explicit flags."
    merged = {k: DEFAULTS.get(k) for k in keys}
    if getattr(args, "config", None):
        try:
            with open(args.config) as f:
                file_conf = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(file_conf, dict):
            raise UsageError("config file must hold a JSON object")
        merged.update(file_conf)
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            merged[k] = v
    return merged


def _write_manifest(out: Path, command: str, effective: dict, seeds: dict, inputs: list) -> str:
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(effective)
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config_hash": chash,
        "effective_config": effective,
        "seeds": seeds,
        "inputs": {str(p): file_digest(p) for p in inputs},
        "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return chash


def _stamp(meta_path: Path, chash: str):
    "Add the manifest reference to a sidecar JSON file."
    with open(meta_path) as f:
        meta = json.load(f)
    meta["manifest"] = {"file": "manifest.json", "config_hash": chash}
    with open(meta_path, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def _format(conf: dict) -> LogFormat:
    try:
        return LogFormat.from_string(conf["format"], conf["delimiter"], bool(conf["header"]))
    except ValueError as e:
        raise UsageError(str(e)) from e


def _ingest_one(path, fmt: LogFormat, threshold, cap: int, seed: int, name: str):
    counts: dict = {}
    log = read_log(path, fmt, threshold, counts=counts)
    counts["deduplicated"] = log.n_interactions
    log = downsample(log, cap, seed, name)
    counts["downsampled"] = log.n_interactions
    return log, counts


def cmd_ingest(args) -> int:
    conf = _merge(args, ["input", "format", "delimiter", "header", "rating_threshold", "sample_cap", "seed", "name", "out"])
    if not conf.get("input") or not conf.get("out"):
        raise UsageError("ingest needs --input and --out")
    out = Path(conf["out"])
    fmt = _format(conf)
    seeds = {"downsample": derive_seed(int(conf["seed"]), "downsample", conf["name"])}
    chash = _write_manifest(out, "ingest", conf, seeds, [conf["input"]])
    log, counts = _ingest_one(
        conf["input"], fmt, conf["rating_threshold"], int(conf["sample_cap"]), int(conf["seed"]), conf["name"]
    )
    core = prune(log, 0, seed_chain=(int(conf["seed"]),))
    save_coreset(core, out)
    with open(out / "meta.json") as f:
        meta = json.load(f)
    meta["ingest_counts"] = counts
    meta["name"] = conf["name"]
    with open(out / "meta.json", "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    _stamp(out / "meta.json", chash)
    print(f"{conf['name']}: {counts['rows']} rows, {counts['retained']} after threshold, "
          f"{counts['deduplicated']} unique, {counts['downsampled']} in 0-core")
    return 0


def cmd_prune(args) -> int:
    conf = _merge(args, ["cores", "mode", "in_", "out"])
    if not conf.get("in_") or not conf.get("out"):
        raise UsageError("prune needs --in and --out")
    try:
        mode = PruneMode(conf["mode"])
        cores = _int_list(conf["cores"])
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = Path(conf["out"])
    zero_path = Path(conf["in_"])
    chash = _write_manifest(out, "prune", {**conf, "in_": str(zero_path)}, {}, [zero_path / "interactions.csv"])
    zero = load_log(zero_path / "interactions.csv")
    for t in cores:
        core = prune(zero, t, mode)
        d = save_coreset(core, out / f"core-{t}")
        _stamp(d / "meta.json", chash)
        status = "empty" if core.empty else f"{core.log.n_interactions} interactions"
        print(f"core {t}: {status}")
    return 0


def cmd_stats(args) -> int:
    conf = _merge(args, ["in_", "baseline", "out"])
    if not conf.get("in_") or not conf.get("out"):
        raise UsageError("stats needs --in and --out")
    ins = conf["in_"] if isinstance(conf["in_"], list) else [conf["in_"]]
    out = Path(conf["out"])
    inputs = [Path(p) / "interactions.csv" for p in ins]
    if conf.get("baseline"):
        inputs.append(Path(conf["baseline"]) / "interactions.csv")
    chash = _write_manifest(out, "stats", conf, {}, [p for p in inputs if p.exists()])
    base = load_log(Path(conf["baseline"]) / "interactions.csv") if conf.get("baseline") else None
    entries = []
    for p in ins:
        core = load_coreset(p)
        entry = {"source": str(p), "core_t": core.threshold_t, "empty": core.empty}
        if not core.empty:
            entry["characteristics"] = characterize(core.log).to_dict()
            if base is not None:
                r = retention(core, base)
                entry["retention"] = {
                    "user_retention_pct": r.user_retention_pct,
                    "item_retention_pct": r.item_retention_pct,
                    "interaction_retention_pct": r.interaction_retention_pct,
                }
        entries.append(entry)
    with open(out / "characteristics.json", "w") as f:
        json.dump({"config_hash": chash, "coresets": entries}, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"wrote {out / 'characteristics.json'}")
    return 0


def cmd_split(args) -> int:
    conf = _merge(args, ["phase", "in_", "zero_core", "seed", "train_fraction", "name", "out"])
    if conf.get("phase") is None:
        conf["phase"] = 1
    if not conf.get("in_") or not conf.get("out"):
        raise UsageError("split needs --in and --out")
    phase = int(conf["phase"])
    if phase == 2 and not conf.get("zero_core"):
        raise UsageError("--phase 2 requires --zero-core")
    out = Path(conf["out"])
    core = load_coreset(conf["in_"])
    if core.empty:
        raise RuntimeError(f"{conf['in_']} is an empty coreset")
    seed = derive_seed(int(conf["seed"]), "split", conf["name"], core.threshold_t)
    inputs = [Path(conf["in_"]) / "interactions.csv"]
    if phase == 2:
        inputs.append(Path(conf["zero_core"]) / "interactions.csv")
    chash = _write_manifest(out, "split", conf, {"split": seed}, inputs)
    pair = split_per_user(core.log, float(conf["train_fraction"]), seed, core_t=core.threshold_t)
    if phase == 2:
        zero = load_log(Path(conf["zero_core"]) / "interactions.csv")
        pair = split_phase2(pair, zero)
    paths = export_atomic(pair, out, conf["name"])
    _stamp(paths[-1], chash)
    print(f"phase {phase}: {pair.train.n_interactions} train / "
          f"{0 if pair.test is None else pair.test.n_interactions} test")
    return 0


def _datasets_from(conf: dict) -> list[dict]:
    specs = list(conf.get("datasets") or [])
    for item in conf.get("dataset") or []:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--dataset expects NAME=PATH, got {item!r}")
        specs.append({"name": name, "path": path})
    if not specs:
        raise UsageError("run needs at least one dataset (--dataset NAME=PATH or config 'datasets')")
    names = [s.get("name") for s in specs]
    if any(not n or "/" in n for n in names) or len(set(names)) != len(names):
        raise UsageError(f"dataset names must be unique, non-empty and slash-free: {names}")
    return specs


def cmd_run(args) -> int:
    keys = ["datasets", "dataset", "format", "delimiter", "header", "rating_threshold", "sample_cap", "seed",
            "cores", "mode", "train_fraction", "k", "algorithms", "metrics", "params", "jobs", "out"]
    conf = _merge(args, keys)
    if not conf.get("out"):
        raise UsageError("run needs --out")
    specs = _datasets_from(conf)
    try:
        algorithms = _str_list(conf["algorithms"])
        for a in algorithms:
            if a not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {a!r}")
        config = PipelineConfig(
            rating_threshold=float(conf["rating_threshold"]),
            sample_cap=int(conf["sample_cap"]),
            seed=int(conf["seed"]),
            core_levels=tuple(_int_list(conf["cores"])),
            train_fraction=float(conf["train_fraction"]),
            k_cutoff=int(conf["k"]),
        )
        metrics = [MetricSpec.parse(m, config.k_cutoff) for m in _str_list(conf["metrics"])]
        mode = PruneMode(conf["mode"])
    except ValueError as e:
        raise UsageError(str(e)) from e

    out = Path(conf["out"])
    if (out / "records.jsonl").exists():
        raise UsageError(f"{out} already holds results; choose a fresh --out")
    conf.pop("dataset", None)
    conf["datasets"] = specs
    seeds = {s["name"]: derive_seed(config.seed, "downsample", s["name"]) for s in specs}
    inputs = [s["path"] for s in specs if "path" in s]
    _write_manifest(out, "run", conf, {"root": config.seed, "downsample": seeds}, inputs)

    logs = {}
    for s in specs:
        if "zero_core" in s:
            logs[s["name"]] = load_log(Path(s["zero_core"]) / "interactions.csv")
            continue
        fmt = _format({**conf, **{k: s[k] for k in ("format", "delimiter", "header") if k in s}})
        logs[s["name"]], counts = _ingest_one(
            s["path"], fmt, config.rating_threshold, config.sample_cap, config.seed, s["name"]
        )
        _log.info("%s: %s", s["name"], counts)

    result = run_grid(config, logs, algorithms, metrics, params=conf.get("params") or {}, mode=mode,
                      jobs=int(conf["jobs"]))
    save_results(result, out)
    emit_tables(result, out / "report")
    for issue in result.issues:
        print(f"warning: {issue.dataset} core {issue.core_t} {issue.algorithm or ''} {issue.kind}: {issue.message}",
              file=sys.stderr)
    print(f"{len(result.records)} records written to {out / 'records.jsonl'}")
    return 0


def cmd_report(args) -> int:
    conf = _merge(args, ["results", "out"])
    if not conf.get("results") or not conf.get("out"):
        raise UsageError("report needs --results and --out")
    out = Path(conf["out"])
    res_dir = Path(conf["results"])
    _write_manifest(out, "report", conf, {}, [res_dir / "records.jsonl"])
    result = load_results(res_dir)
    paths = emit_tables(result, out)
    print(f"wrote {len(paths)} report files to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coreprune", description="Core-pruning experiment pipeline")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file supplying option values")
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("ingest", help="parse, binarize, deduplicate and downsample a raw log")
    common(sp)
    sp.add_argument("--input")
    sp.add_argument("--format", help="column list, e.g. user,item,rating,timestamp")
    sp.add_argument("--delimiter")
    sp.add_argument("--header", action="store_true", default=None)
    sp.add_argument("--rating-threshold", type=float)
    sp.add_argument("--sample-cap", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("prune", help="write coresets at the given core levels")
    common(sp)
    sp.add_argument("--cores")
    sp.add_argument("--mode", choices=[m.value for m in PruneMode])
    sp.add_argument("--in", dest="in_")
    sp.set_defaults(func=cmd_prune)

    sp = sub.add_parser("stats", help="characteristics and retention of coresets")
    common(sp)
    sp.add_argument("--in", dest="in_", nargs="+")
    sp.add_argument("--baseline")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("split", help="phase-1 or phase-2 train/test atomic files")
    common(sp)
    sp.add_argument("--phase", type=int, choices=[1, 2])
    sp.add_argument("--in", dest="in_")
    sp.add_argument("--zero-core")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--train-fraction", type=float)
    sp.add_argument("--name")
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("run", help="full pipeline and evaluation grid")
    common(sp)
    sp.add_argument("--dataset", action="append", help="NAME=PATH (repeatable)")
    sp.add_argument("--format")
    sp.add_argument("--delimiter")
    sp.add_argument("--header", action="store_true", default=None)
    sp.add_argument("--rating-threshold", type=float)
    sp.add_argument("--sample-cap", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--cores")
    sp.add_argument("--mode", choices=[m.value for m in PruneMode])
    sp.add_argument("--train-fraction", type=float)
    sp.add_argument("--k", type=int)
    sp.add_argument("--algorithms")
    sp.add_argument("--metrics")
    sp.add_argument("--jobs", type=int)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("report", help="report tables from a results directory")
    common(sp)
    sp.add_argument("--results")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"coreprune {args.command}: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        _log.debug("failure", exc_info=True)
        print(f"coreprune {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
