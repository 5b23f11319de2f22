"""Command-line entry point for reproducible batch workflows.

Subcommands: ``train``, ``eval``, ``cluster``, ``synth``, ``stats``.  Every
command writes its outputs under ``--out-dir`` together with a run manifest
(command, resolved configuration digest, input file digests, seed, tool
version, timestamps).  Reruns with identical flags and seed produce
bit-identical model, trace, and report files; the manifest carries the only
timestamps.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 internal
consistency failure (a violated likelihood guarantee).

A JSON config file (``--config``) may supply defaults using the long flag
names; explicit flags win.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import re
import sys
from typing import Optional

from . import __version__
from .corpus import (Corpus, SyntheticConfig, build_corpus, corpus_stats,
                     extract_parsebank, generate_synthetic, load_corpus,
                     save_corpus)
from .errors import ConfigError, DataError, InternalConsistencyError
from .evaluation import (evaluate, format_report_table, random_baseline,
                         sweep_checkpoints, write_report_json, write_sweep_csv)
from .lexicalization import (build_freq_table, load_freq_table,
                             load_pair_counts, save_cluster_model,
                             save_freq_table, train_clusters)
from .model import load_model, save_model
from .properties import (add_correction, build_registry, save_registry,
                         select_properties)
from .trainer import TrainingConfig, train

MANIFEST_NAME = "manifest.json"
CHECKPOINT_PATTERN = re.compile(r"checkpoint_(\d+)\.json$")

TASK_ALIASES = {"exact": "exact_match", "frame": "frame_match",
                "exact_match": "exact_match", "frame_match": "frame_match"}


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


# ---------------------------------------------------------------------------
# Run manifest

def _file_digest(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: str, command: str, config: dict,
                   input_paths: list[str], seed: Optional[int]) -> str:
    resolved = {k: config[k] for k in sorted(config)}
    manifest = {
        "command": command,
        "config": resolved,
        "config_digest": hashlib.sha256(
            json.dumps(resolved, sort_keys=True).encode("utf-8")).hexdigest(),
        "input_digests": {p: _file_digest(p) for p in sorted(set(input_paths))},
        "seed": seed,
        "tool_version": __version__,
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = os.path.join(out_dir, MANIFEST_NAME)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(manifest, handle, sort_keys=True, indent=1)
        handle.write("\n")
    return path


def verify_manifest(path) -> bool:
    """Recompute the digests recorded in a manifest; True when all match."""
    with open(path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    config_digest = hashlib.sha256(
        json.dumps(manifest["config"], sort_keys=True).encode("utf-8")).hexdigest()
    if config_digest != manifest["config_digest"]:
        return False
    for input_path, digest in manifest["input_digests"].items():
        if not os.path.exists(input_path) or _file_digest(input_path) != digest:
            return False
    return True


# ---------------------------------------------------------------------------
# Shared plumbing

def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="reserved; computations are deterministic for "
                             "any value (default 1)")
    parser.add_argument("--out-dir", default=argparse.SUPPRESS)
    parser.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON file of flag defaults; explicit flags win")


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """builtin defaults < config file < explicit flags."""
    given = dict(vars(args))
    given.pop("func", None)
    config_path = given.pop("config", None)
    layered = dict(defaults)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as handle:
            try:
                file_conf = json.load(handle)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON config") from exc
        unknown = set(file_conf) - set(defaults)
        if unknown:
            raise ConfigError(
                f"{config_path}: unknown config keys {sorted(unknown)}")
        layered.update(file_conf)
    layered.update(given)
    return layered


def _require_out_dir(conf: dict) -> str:
    out_dir = conf.get("out_dir")
    if not out_dir:
        raise ConfigError("--out-dir is required for this command")
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _load_input_corpus(path, max_parses=None) -> Corpus:
    if not os.path.exists(path):
        raise DataError(f"corpus file not found: {path}")
    return load_corpus(path, max_parses=max_parses)


# ---------------------------------------------------------------------------
# train

TRAIN_DEFAULTS = {
    "corpus": None, "parsebank": False, "max_parses": None,
    "select_cutoff": None, "lexicalized": None, "init": "uniform_zero",
    "init_range": 0.5, "max_iterations": 100, "tolerance": 1e-8,
    "checkpoint_every": 5, "complete_data": False,
    "seed": None, "threads": 1, "out_dir": None,
}


def cmd_train(args: argparse.Namespace) -> int:
    conf = _resolve(args, TRAIN_DEFAULTS)
    out_dir = _require_out_dir(conf)
    if not conf["corpus"]:
        raise ConfigError("--corpus is required")

    corpus = _load_input_corpus(conf["corpus"], max_parses=conf["max_parses"])
    inputs = [conf["corpus"]]
    complete = bool(conf["complete_data"])
    if conf["parsebank"]:
        corpus = extract_parsebank(corpus)
        complete = True

    lex_table = None
    if conf["lexicalized"]:
        if not os.path.exists(conf["lexicalized"]):
            raise DataError(f"frequency table not found: {conf['lexicalized']}")
        lex_table = load_freq_table(conf["lexicalized"])
        inputs.append(conf["lexicalized"])

    registry = build_registry(corpus, include_lexicalized=lex_table is not None,
                              lex_table=lex_table)
    if conf["select_cutoff"] is not None:
        registry = select_properties(registry, int(conf["select_cutoff"]))
    registry = add_correction(registry, corpus, lex_table=lex_table)

    training = TrainingConfig(
        init=conf["init"],
        init_range=float(conf["init_range"]),
        seed=conf["seed"],
        max_iterations=int(conf["max_iterations"]),
        likelihood_tolerance=float(conf["tolerance"]),
        checkpoint_every=int(conf["checkpoint_every"]),
    )
    model, trace = train(corpus, registry, training, complete_data=complete,
                         lex_table=lex_table)

    save_model(model, os.path.join(out_dir, "model.json"))
    save_registry(registry, os.path.join(out_dir, "registry.json"))
    with open(os.path.join(out_dir, "trace.jsonl"), "w", encoding="utf-8") as handle:
        for record in trace.records:
            handle.write(json.dumps(
                {"iter": record.iteration, "L": record.log_likelihood,
                 "max_gamma": record.max_abs_gamma}, sort_keys=True) + "\n")
    os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
    for iteration, lam in trace.checkpoints():
        save_model(model.with_lam(lam),
                   os.path.join(out_dir, "checkpoints",
                                f"checkpoint_{iteration:04d}.json"))
    write_manifest(out_dir, "train", conf, inputs, conf["seed"])
    print(f"trained {trace.n_iterations} iterations, "
          f"final L = {trace.final_log_likelihood:.6f}, "
          f"converged = {trace.converged}")
    return 0


# ---------------------------------------------------------------------------
# eval

EVAL_DEFAULTS = {
    "model": None, "corpus": None, "task": None, "tie_epsilon": 1e-9,
    "baseline": None, "lambda_range": 1.0, "checkpoints": None,
    "lex_table": None, "seed": None, "threads": 1, "out_dir": None,
}


def _load_checkpoint_models(directory: str) -> list:
    if not os.path.isdir(directory):
        raise DataError(f"checkpoint directory not found: {directory}")
    found = []
    for name in sorted(os.listdir(directory)):
        match = CHECKPOINT_PATTERN.match(name)
        if match:
            found.append((int(match.group(1)),
                          load_model(os.path.join(directory, name))))
    if not found:
        raise DataError(f"no checkpoint models in {directory}")
    return found


def cmd_eval(args: argparse.Namespace) -> int:
    conf = _resolve(args, EVAL_DEFAULTS)
    out_dir = _require_out_dir(conf)
    if not conf["model"] or not conf["corpus"]:
        raise ConfigError("--model and --corpus are required")
    if not os.path.exists(conf["model"]):
        raise DataError(f"model file not found: {conf['model']}")

    model = load_model(conf["model"])
    corpus = _load_input_corpus(conf["corpus"])
    inputs = [conf["model"], conf["corpus"]]

    lex_table = None
    if conf["lex_table"]:
        if not os.path.exists(conf["lex_table"]):
            raise DataError(f"frequency table not found: {conf['lex_table']}")
        lex_table = load_freq_table(conf["lex_table"])
        inputs.append(conf["lex_table"])
    elif "lexicalized-relation" in model.registry.kinds():
        raise ConfigError(
            "the model has lexicalized properties; pass --lex-table")

    raw_tasks = conf["task"] or ["exact"]
    if isinstance(raw_tasks, str):
        raw_tasks = [raw_tasks]
    tasks = []
    for raw in raw_tasks:
        if raw not in TASK_ALIASES:
            raise ConfigError(f"unknown task {raw!r}")
        tasks.append(TASK_ALIASES[raw])

    tie = float(conf["tie_epsilon"])
    for task in tasks:
        outcome = evaluate(model, corpus, task=task, tie_epsilon=tie,
                           lex_table=lex_table)
        print(format_report_table(outcome))
        print()
        write_report_json(outcome, os.path.join(out_dir, f"report_{task}.json"))

        if conf["baseline"]:
            report = random_baseline(
                corpus, task, model.registry, n_models=int(conf["baseline"]),
                seed=conf["seed"] or 0, lambda_range=float(conf["lambda_range"]),
                tie_epsilon=tie, lex_table=lex_table)
            print(f"random baseline ({task}): mean precision "
                  f"{report.mean_precision:.4f} +- {report.stdev_precision:.4f}")
            with open(os.path.join(out_dir, f"baseline_{task}.json"), "w",
                      encoding="utf-8") as handle:
                json.dump(report.to_json_dict(), handle, sort_keys=True)
                handle.write("\n")

        if conf["checkpoints"]:
            models = _load_checkpoint_models(conf["checkpoints"])
            rows = sweep_checkpoints(models, corpus, task=task,
                                     tie_epsilon=tie, lex_table=lex_table)
            write_sweep_csv(rows, os.path.join(out_dir, f"sweep_{task}.csv"))
            decided = [r for r in rows if r.precision is not None]
            if decided:
                best = max(decided, key=lambda r: r.precision)
                print(f"sweep ({task}): {len(rows)} checkpoints, best "
                      f"precision {best.precision} at iteration "
                      f"{best.iteration}")
            else:
                print(f"sweep ({task}): {len(rows)} checkpoints, "
                      "precision undefined everywhere")

    write_manifest(out_dir, "eval", conf, inputs, conf["seed"])
    return 0


# ---------------------------------------------------------------------------
# cluster

CLUSTER_DEFAULTS = {
    "pairs": None, "classes": 32, "max_iterations": 100, "tolerance": 1e-6,
    "seed": None, "threads": 1, "out_dir": None,
}


def cmd_cluster(args: argparse.Namespace) -> int:
    conf = _resolve(args, CLUSTER_DEFAULTS)
    out_dir = _require_out_dir(conf)
    if not conf["pairs"]:
        raise ConfigError("--pairs is required")
    if not os.path.exists(conf["pairs"]):
        raise DataError(f"pair-counts file not found: {conf['pairs']}")

    counts = load_pair_counts(conf["pairs"])
    model, trace = train_clusters(
        counts, n_classes=int(conf["classes"]),
        max_iterations=int(conf["max_iterations"]),
        tolerance=float(conf["tolerance"]), seed=conf["seed"] or 0)
    table = build_freq_table(model, counts)

    save_cluster_model(model, os.path.join(out_dir, "cluster_model.json"))
    save_freq_table(table, os.path.join(out_dir, "freq_table.json"))
    write_manifest(out_dir, "cluster", conf, [conf["pairs"]], conf["seed"])
    print(f"clustered {len(counts)} pairs into {model.n_classes} classes in "
          f"{len(trace) - 1} iterations, final L = {trace[-1]:.6f}")
    return 0


# ---------------------------------------------------------------------------
# synth

SYNTH_DEFAULTS = {
    "sentences": 1000, "ambiguity": [1, 6], "features": 20, "relations": 4,
    "split": 0.8, "seed": 0, "threads": 1, "out_dir": None,
}


def cmd_synth(args: argparse.Namespace) -> int:
    conf = _resolve(args, SYNTH_DEFAULTS)
    out_dir = _require_out_dir(conf)
    ambiguity = conf["ambiguity"]
    if not (isinstance(ambiguity, (list, tuple)) and len(ambiguity) == 2):
        raise ConfigError("--ambiguity takes two integers: LO HI")
    split = float(conf["split"])
    if not (0.0 < split < 1.0):
        raise ConfigError("--split must lie strictly between 0 and 1")

    config = SyntheticConfig(
        n_sentences=int(conf["sentences"]),
        ambiguity_range=(int(ambiguity[0]), int(ambiguity[1])),
        n_features=int(conf["features"]),
        n_relations=int(conf["relations"]),
        seed=int(conf["seed"] if conf["seed"] is not None else 0),
    )
    corpus, description = generate_synthetic(config)

    n_train = int(split * len(corpus.entries))
    if n_train == 0 or n_train == len(corpus.entries):
        raise ConfigError("--split leaves one side of the split empty")
    train_part = build_corpus(corpus.entries[:n_train])
    test_part = build_corpus(corpus.entries[n_train:])

    save_corpus(train_part, os.path.join(out_dir, "train.jsonl"))
    save_corpus(test_part, os.path.join(out_dir, "test.jsonl"))
    with open(os.path.join(out_dir, "hidden_model.json"), "w",
              encoding="utf-8") as handle:
        json.dump(description, handle, sort_keys=True)
        handle.write("\n")
    write_manifest(out_dir, "synth", conf, [], config.seed)
    print(f"wrote {len(train_part.entries)} train / {len(test_part.entries)} "
          f"test sentences under {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# stats

STATS_DEFAULTS = {"corpus": None, "seed": None, "threads": 1, "out_dir": None}


def cmd_stats(args: argparse.Namespace) -> int:
    conf = _resolve(args, STATS_DEFAULTS)
    if not conf["corpus"]:
        raise ConfigError("--corpus is required")
    corpus = _load_input_corpus(conf["corpus"])
    stats = corpus_stats(corpus)
    doc = {"n_sentences": stats.n_sentences,
           "mean_ambiguity": stats.mean_ambiguity,
           "mean_length": stats.mean_length,
           "universe_size": stats.universe_size}
    print(json.dumps(doc, sort_keys=True, indent=1))
    if conf.get("out_dir"):
        out_dir = conf["out_dir"]
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "stats.json"), "w",
                  encoding="utf-8") as handle:
            json.dump(doc, handle, sort_keys=True)
            handle.write("\n")
        write_manifest(out_dir, "stats", conf, [conf["corpus"]], conf["seed"])
    return 0


# ---------------------------------------------------------------------------
# Wiring

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parsedisamb",
                     description="Train and evaluate log-linear parse "
                                 "disambiguation models.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="estimate a model from a corpus")
    p.add_argument("--corpus", default=argparse.SUPPRESS)
    p.add_argument("--parsebank", action="store_true", default=argparse.SUPPRESS,
                   help="train on the unique-parse subcorpus (complete data)")
    p.add_argument("--max-parses", type=int, default=argparse.SUPPRESS,
                   help="drop sentences with more candidate parses than this")
    p.add_argument("--select-cutoff", type=int, default=argparse.SUPPRESS,
                   help="drop properties active on fewer parses than this")
    p.add_argument("--lexicalized", metavar="FREQ_TABLE",
                   default=argparse.SUPPRESS,
                   help="add pre-disambiguation properties backed by this "
                        "class-based frequency table")
    p.add_argument("--init", choices=["uniform_zero", "random"],
                   default=argparse.SUPPRESS)
    p.add_argument("--init-range", type=float, default=argparse.SUPPRESS)
    p.add_argument("--max-iterations", type=int, default=argparse.SUPPRESS)
    p.add_argument("--tolerance", type=float, default=argparse.SUPPRESS)
    p.add_argument("--checkpoint-every", type=int, default=argparse.SUPPRESS)
    p.add_argument("--complete-data", action="store_true",
                   default=argparse.SUPPRESS,
                   help="use gold parses for the empirical side of the update")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a model on a gold corpus")
    p.add_argument("--model", default=argparse.SUPPRESS)
    p.add_argument("--corpus", default=argparse.SUPPRESS)
    p.add_argument("--task", action="append", choices=sorted(TASK_ALIASES),
                   default=argparse.SUPPRESS)
    p.add_argument("--tie-epsilon", type=float, default=argparse.SUPPRESS)
    p.add_argument("--baseline", type=int, metavar="N_MODELS",
                   default=argparse.SUPPRESS,
                   help="also report the random-parameter baseline")
    p.add_argument("--lambda-range", type=float, default=argparse.SUPPRESS)
    p.add_argument("--checkpoints", metavar="DIR", default=argparse.SUPPRESS,
                   help="sweep the checkpoint models in this directory")
    p.add_argument("--lex-table", default=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cluster", help="fit the latent-class pair model")
    p.add_argument("--pairs", default=argparse.SUPPRESS,
                   help="tab-separated verb/noun/count file")
    p.add_argument("--classes", type=int, default=argparse.SUPPRESS)
    p.add_argument("--max-iterations", type=int, default=argparse.SUPPRESS)
    p.add_argument("--tolerance", type=float, default=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--sentences", type=int, default=argparse.SUPPRESS)
    p.add_argument("--ambiguity", type=int, nargs=2, metavar=("LO", "HI"),
                   default=argparse.SUPPRESS)
    p.add_argument("--features", type=int, default=argparse.SUPPRESS)
    p.add_argument("--relations", type=int, default=argparse.SUPPRESS)
    p.add_argument("--split", type=float, default=argparse.SUPPRESS,
                   help="train fraction; the rest is held out")
    _add_common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="print corpus statistics")
    p.add_argument("--corpus", default=argparse.SUPPRESS)
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except InternalConsistencyError as exc:
        print(f"internal consistency failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
