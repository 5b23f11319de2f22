"""Sentence/parse-set data model, corpus I/O, filtering and synthetic generation.

A corpus is a list of sentences, each carrying a finite set of candidate
parses.  Sentences have an empirical weight (normalized to sum to one on
load), and optionally a gold parse index for evaluation or complete-data
training.  Corpus objects are treated as immutable after construction and
are safe for concurrent reads.

File format ("forest-corpus"): UTF-8 JSON Lines.  The first line is a header
``{"format": "forest-corpus", "version": 1}``; every following line is one
sentence entry::

    {"sentence_id": "s0", "tokens": [...], "weight": 0.5, "gold_index": 0,
     "parses": [{"parse_id": "p0", "cstructure": [...], "fstructure": {...},
                 "relations": [[name, verb, noun, voice, position], ...],
                 "frame": "...", "precomputed_features": {"3": 1.0}}, ...]}

c-structures are nested ``[label, [children...]]`` arrays with string leaves;
leaves align one-to-one with the sentence tokens.  f-structures carry a list
of ``[attribute-path, atomic-value]`` pairs and a list of grammatical-function
names.  Either the structural fields or ``precomputed_features`` must be
present on every parse.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError

CORPUS_FORMAT = "forest-corpus"
CORPUS_VERSION = 1

VOICES = ("active", "passive")


@dataclass(frozen=True)
class Relation:
    """A head-to-head grammatical relation annotation of one parse."""

    name: str
    verb: str
    noun: str
    voice: str
    position: int  # 1-based index of the verb occurrence within the parse


@dataclass(frozen=True)
class FStructure:
    """Simplified feature structure: atomic attribute/value pairs plus
    grammatical-function entries (both may repeat)."""

    pairs: tuple[tuple[str, str], ...] = ()
    functions: tuple[str, ...] = ()


@dataclass(frozen=True)
class ParseRecord:
    """One candidate analysis of a sentence.

    ``cstructure`` is a nested ``(label, (children...))`` tuple with string
    leaves.  ``precomputed_features`` is a sparse index->value map usable in
    place of structural extraction.
    """

    parse_id: str
    cstructure: Optional[tuple] = None
    fstructure: Optional[FStructure] = None
    relations: tuple[Relation, ...] = ()
    frame: Optional[str] = None
    precomputed_features: Optional[dict[int, float]] = None

    @property
    def has_structure(self) -> bool:
        return self.cstructure is not None and self.fstructure is not None


@dataclass(frozen=True)
class SentenceEntry:
    """A sentence with its finite candidate parse set and empirical weight."""

    sentence_id: str
    tokens: tuple[str, ...]
    parses: tuple[ParseRecord, ...]
    weight: float = 1.0
    gold_index: Optional[int] = None


@dataclass(frozen=True)
class CorpusStats:
    n_sentences: int
    mean_ambiguity: float
    mean_length: float
    universe_size: int


@dataclass(frozen=True)
class Corpus:
    """An immutable sequence of sentence entries.

    The parse universe is the union of all parse sets of entries with
    positive weight; ``universe_size`` is its cardinality.
    """

    entries: tuple[SentenceEntry, ...]
    _digest: Optional[str] = field(default=None, compare=False, repr=False)

    @property
    def universe_size(self) -> int:
        return sum(len(e.parses) for e in self.entries if e.weight > 0)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def content_digest(self) -> str:
        """SHA-256 over the canonical serialization; identifies the universe."""
        if self._digest is None:
            payload = "\n".join(
                json.dumps(_entry_to_json(e), sort_keys=True) for e in self.entries
            )
            digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()
            object.__setattr__(self, "_digest", digest)
        return self._digest


# ---------------------------------------------------------------------------
# Validation

def _validate_parse(parse: ParseRecord, n_tokens: int, where: str) -> None:
    if parse.precomputed_features is None and not parse.has_structure:
        raise DataError(
            f"{where}: parse {parse.parse_id!r} has neither structural "
            "information nor precomputed_features"
        )
    if parse.cstructure is not None:
        n_leaves = len(tree_leaves(parse.cstructure))
        if n_leaves != n_tokens:
            raise DataError(
                f"{where}: parse {parse.parse_id!r} has {n_leaves} c-structure "
                f"leaves but the sentence has {n_tokens} tokens"
            )
    position_verb: dict[int, str] = {}
    for rel in parse.relations:
        if rel.voice not in VOICES:
            raise DataError(
                f"{where}: parse {parse.parse_id!r} relation {rel.name!r} has "
                f"undefined voice {rel.voice!r}"
            )
        if rel.position < 1:
            raise DataError(
                f"{where}: parse {parse.parse_id!r} relation {rel.name!r} has "
                f"verb position {rel.position} (positions start at 1)"
            )
        seen = position_verb.setdefault(rel.position, rel.verb)
        if seen != rel.verb:
            raise DataError(
                f"{where}: parse {parse.parse_id!r} assigns verb position "
                f"{rel.position} to both {seen!r} and {rel.verb!r}"
            )
    if parse.precomputed_features is not None:
        for idx, value in parse.precomputed_features.items():
            if idx < 0 or value < 0:
                raise DataError(
                    f"{where}: parse {parse.parse_id!r} has a negative "
                    f"precomputed feature ({idx}: {value})"
                )


def _validate_entry(entry: SentenceEntry, where: str) -> None:
    if not entry.parses:
        raise DataError(f"{where}: sentence {entry.sentence_id!r} has no parses")
    if entry.weight < 0:
        raise DataError(
            f"{where}: sentence {entry.sentence_id!r} has negative weight"
        )
    ids = [p.parse_id for p in entry.parses]
    if len(set(ids)) != len(ids):
        raise DataError(
            f"{where}: sentence {entry.sentence_id!r} has duplicate parse_ids"
        )
    if entry.gold_index is not None and not (0 <= entry.gold_index < len(entry.parses)):
        raise DataError(
            f"{where}: sentence {entry.sentence_id!r} gold_index "
            f"{entry.gold_index} out of range"
        )
    for parse in entry.parses:
        _validate_parse(parse, len(entry.tokens), where)


# ---------------------------------------------------------------------------
# Trees

def tree_leaves(node) -> list[str]:
    """Leaves of a nested (label, (children...)) tree, left to right."""
    if isinstance(node, str):
        return [node]
    _, children = node
    out: list[str] = []
    for child in children:
        out.extend(tree_leaves(child))
    return out


def tree_from_json(obj):
    """Decode a nested [label, [children...]] array into tuples."""
    if isinstance(obj, str):
        return obj
    if not (isinstance(obj, list) and len(obj) == 2 and isinstance(obj[0], str)):
        raise DataError(f"malformed c-structure node: {obj!r}")
    label, children = obj
    if not isinstance(children, list):
        raise DataError(f"malformed c-structure children of {label!r}")
    return (label, tuple(tree_from_json(c) for c in children))


def tree_to_json(node):
    if isinstance(node, str):
        return node
    label, children = node
    return [label, [tree_to_json(c) for c in children]]


# ---------------------------------------------------------------------------
# JSON encoding / decoding

def _parse_to_json(parse: ParseRecord) -> dict:
    rec: dict = {"parse_id": parse.parse_id}
    rec["cstructure"] = None if parse.cstructure is None else tree_to_json(parse.cstructure)
    if parse.fstructure is None:
        rec["fstructure"] = None
    else:
        rec["fstructure"] = {
            "pairs": [list(p) for p in parse.fstructure.pairs],
            "functions": list(parse.fstructure.functions),
        }
    rec["relations"] = [
        [r.name, r.verb, r.noun, r.voice, r.position] for r in parse.relations
    ]
    rec["frame"] = parse.frame
    if parse.precomputed_features is None:
        rec["precomputed_features"] = None
    else:
        rec["precomputed_features"] = {
            str(k): parse.precomputed_features[k]
            for k in sorted(parse.precomputed_features)
        }
    return rec


def _entry_to_json(entry: SentenceEntry) -> dict:
    return {
        "sentence_id": entry.sentence_id,
        "tokens": list(entry.tokens),
        "weight": entry.weight,
        "gold_index": entry.gold_index,
        "parses": [_parse_to_json(p) for p in entry.parses],
    }


def _require(record: dict, name: str, where: str):
    if name not in record:
        raise DataError(f"{where}: missing field {name!r}")
    return record[name]


def _parse_from_json(rec: dict, where: str) -> ParseRecord:
    if not isinstance(rec, dict):
        raise DataError(f"{where}: parse record must be a JSON object")
    parse_id = _require(rec, "parse_id", where)
    cstructure = rec.get("cstructure")
    if cstructure is not None:
        cstructure = tree_from_json(cstructure)
    fstructure = rec.get("fstructure")
    if fstructure is not None:
        try:
            pairs = tuple((str(a), str(v)) for a, v in fstructure.get("pairs", []))
            functions = tuple(str(f) for f in fstructure.get("functions", []))
        except (TypeError, ValueError) as exc:
            raise DataError(f"{where}: malformed fstructure field") from exc
        fstructure = FStructure(pairs=pairs, functions=functions)
    relations = []
    for item in rec.get("relations") or []:
        if not (isinstance(item, list) and len(item) == 5):
            raise DataError(f"{where}: malformed relations field")
        relations.append(Relation(str(item[0]), str(item[1]), str(item[2]),
                                  str(item[3]), int(item[4])))
    features = rec.get("precomputed_features")
    if features is not None:
        try:
            features = {int(k): float(v) for k, v in features.items()}
        except (TypeError, ValueError, AttributeError) as exc:
            raise DataError(f"{where}: malformed precomputed_features field") from exc
    return ParseRecord(
        parse_id=str(parse_id),
        cstructure=cstructure,
        fstructure=fstructure,
        relations=tuple(relations),
        frame=rec.get("frame"),
        precomputed_features=features,
    )


def _entry_from_json(rec: dict, where: str) -> SentenceEntry:
    if not isinstance(rec, dict):
        raise DataError(f"{where}: sentence record must be a JSON object")
    sentence_id = str(_require(rec, "sentence_id", where))
    raw_tokens = _require(rec, "tokens", where)
    if not isinstance(raw_tokens, list):
        raise DataError(f"{where}: field 'tokens' must be a list")
    tokens = tuple(str(t) for t in raw_tokens)
    raw_parses = _require(rec, "parses", where)
    if not isinstance(raw_parses, list) or not raw_parses:
        raise DataError(f"{where}: field 'parses' must be a nonempty list")
    parses = tuple(_parse_from_json(p, where) for p in raw_parses)
    gold = rec.get("gold_index")
    try:
        weight = float(rec.get("weight", 1.0))
        gold = None if gold is None else int(gold)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{where}: malformed weight or gold_index field") from exc
    return SentenceEntry(
        sentence_id=sentence_id,
        tokens=tokens,
        parses=parses,
        weight=weight,
        gold_index=gold,
    )


# ---------------------------------------------------------------------------
# Loading / saving

def build_corpus(entries: Iterable[SentenceEntry],
                 normalize_weights: bool = True,
                 aggregate_duplicates: bool = False) -> Corpus:
    """Validate entries and assemble a corpus.

    Weights default to uniform when every entry still carries weight 1.
    Entries with identical token/parse payloads are merged by summing
    weights when ``aggregate_duplicates`` is set (the first sentence_id is
    kept); distinct entries reusing a sentence_id are always an error.
    """
    entries = list(entries)
    if not entries:
        raise DataError("corpus has no entries")
    for entry in entries:
        _validate_entry(entry, f"sentence {entry.sentence_id!r}")

    if aggregate_duplicates:
        merged: dict[str, SentenceEntry] = {}
        order: list[str] = []
        for entry in entries:
            key = json.dumps(
                {"tokens": list(entry.tokens),
                 "parses": [_parse_to_json(p) for p in entry.parses]},
                sort_keys=True)
            if key in merged:
                kept = merged[key]
                merged[key] = replace(kept, weight=kept.weight + entry.weight)
            else:
                merged[key] = entry
                order.append(key)
        entries = [merged[k] for k in order]

    ids = [e.sentence_id for e in entries]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate sentence_id(s): {dup}")

    if normalize_weights:
        total = sum(e.weight for e in entries)
        if total <= 0:
            raise DataError("total corpus weight is zero; cannot normalize")
        # Skip the division when already normalized, so renormalizing is
        # idempotent at the last ulp.
        if abs(total - 1.0) > 1e-12:
            entries = [replace(e, weight=e.weight / total) for e in entries]
    return Corpus(entries=tuple(entries))


def load_corpus(path, max_parses: Optional[int] = None,
                normalize_weights: bool = True) -> Corpus:
    """Load a forest-corpus file, optionally dropping high-ambiguity entries.

    Entries with more than ``max_parses`` candidate parses are removed before
    weight normalization.  Raises DataError with the offending line number on
    malformed input, and when filtering leaves the corpus empty.
    """
    entries: list[SentenceEntry] = []
    with open(path, "r", encoding="utf-8") as handle:
        header_line = handle.readline()
        if not header_line.strip():
            raise DataError(f"{path}: empty file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: line 1: invalid JSON header") from exc
        if header.get("format") != CORPUS_FORMAT:
            raise DataError(f"{path}: line 1: not a {CORPUS_FORMAT} file")
        if header.get("version") != CORPUS_VERSION:
            raise DataError(
                f"{path}: unsupported corpus version {header.get('version')!r}")
        for lineno, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            where = f"{path}: line {lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: invalid JSON") from exc
            try:
                entry = _entry_from_json(record, where)
            except DataError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise DataError(f"{where}: malformed record ({exc})") from exc
            _validate_entry(entry, where)
            entries.append(entry)

    if max_parses is not None:
        entries = [e for e in entries if len(e.parses) <= max_parses]
        if not entries:
            raise DataError(
                f"{path}: no sentences left after max_parses={max_parses} cutoff")
    if not entries:
        raise DataError(f"{path}: corpus contains no sentence entries")
    return build_corpus(entries, normalize_weights=normalize_weights,
                        aggregate_duplicates=True)


def save_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(
            {"format": CORPUS_FORMAT, "version": CORPUS_VERSION},
            sort_keys=True) + "\n")
        for entry in corpus.entries:
            handle.write(json.dumps(_entry_to_json(entry), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Filtering and statistics

def extract_parsebank(corpus: Corpus) -> Corpus:
    """Subcorpus of sentences with a unique parse, usable as complete data.

    Weights are renormalized and each retained entry's gold_index is set to
    its single parse.  Idempotent.  Raises DataError when the corpus has no
    unambiguous sentences.
    """
    kept = [replace(e, gold_index=0) for e in corpus.entries if len(e.parses) == 1]
    if not kept:
        raise DataError("no unambiguous sentences: parsebank would be empty")
    return build_corpus(kept, normalize_weights=True)


def corpus_stats(corpus: Corpus) -> CorpusStats:
    if not corpus.entries:
        raise DataError("cannot compute statistics of an empty corpus")
    ambiguities = [len(e.parses) for e in corpus.entries]
    lengths = [len(e.tokens) for e in corpus.entries]
    return CorpusStats(
        n_sentences=len(corpus.entries),
        mean_ambiguity=float(np.mean(ambiguities)),
        mean_length=float(np.mean(lengths)),
        universe_size=corpus.universe_size,
    )


# ---------------------------------------------------------------------------
# Synthetic generation

# Relation-name inventory used by the generator, in registration order.
SYNTHETIC_RELATIONS = ("subj", "dobj", "iobj", "inf-obj",
                       "obl-dat", "obl-acc", "adj-dat", "adj-acc")


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings for a desk-scale corpus with a hidden gold model."""

    n_sentences: int
    ambiguity_range: tuple[int, int] = (1, 6)
    n_features: int = 20
    n_relations: int = 4
    seed: int = 0

    def validate(self) -> None:
        lo, hi = self.ambiguity_range
        if self.n_sentences < 1:
            raise ConfigError("n_sentences must be >= 1")
        if not (1 <= lo <= hi <= 50):
            raise ConfigError("ambiguity_range must lie within [1, 50]")
        if self.n_features < 1:
            raise ConfigError("n_features must be >= 1")
        if not (1 <= self.n_relations <= len(SYNTHETIC_RELATIONS)):
            raise ConfigError(
                f"n_relations must be in [1, {len(SYNTHETIC_RELATIONS)}]")


# Per-feature value domain of a synthetic parse: 0 (inactive) or a small count.
_FEATURE_VALUES = np.array([0.0, 1.0, 2.0, 3.0])


def _feature_base_weights(n_features: int) -> np.ndarray:
    """Base probabilities over the value domain, per feature (all equal).

    A feature is active with probability ~3/n so a parse carries about three
    nonzero counts; active values are uniform over {1, 2, 3}.
    """
    q = min(0.75, 3.0 / n_features)
    weights = np.empty((n_features, len(_FEATURE_VALUES)))
    weights[:, 0] = 1.0 - q
    weights[:, 1:] = q / 3.0
    return weights


def generate_synthetic(config: SyntheticConfig,
                       true_params: Optional[Sequence[float]] = None
                       ) -> tuple[Corpus, dict]:
    """Generate a corpus whose gold parses follow a hidden log-linear model.

    Each sentence receives a parse set of size drawn from ``ambiguity_range``;
    parses carry sparse nonnegative integer feature counts, relation
    annotations over synthetic verb/noun vocabularies, and a frame drawn from
    a small per-sentence pool.

    Features factorize per index.  Distractor parses draw every feature from
    a base distribution; the gold parse draws its features from the same
    distribution exponentially tilted by ``true_params``, and the gold
    position is a uniform shuffle.  By Bayes' rule the gold index given the
    realized parse set is then distributed exactly as the hidden model's
    conditional, softmax of ``true_params . features`` over the sentence's
    parses: with all-zero parameters the gold index is uniform, and unlike a
    construction that picks the gold among i.i.d. candidates, the candidate
    sets themselves carry a learnable trace of the hidden model.

    Relation annotations mirror an attachment ambiguity with selectional
    preference: within a sentence every parse fills one shared relation slot
    with its own head noun, the gold parse usually choosing from the verb's
    affinity set while distractors choose freely (plus occasional extra
    random relations).  Class-based lexicalization therefore has a real,
    per-sentence contrast to pick up.

    Deterministic in ``config.seed``.  Returns the corpus and a description
    sufficient to recompute the hidden model.
    """
    config.validate()
    rng = np.random.default_rng(config.seed)
    if true_params is None:
        theta = rng.uniform(-1.5, 1.5, size=config.n_features)
    else:
        theta = np.asarray(true_params, dtype=float)
        if theta.shape != (config.n_features,):
            raise ConfigError(
                f"true_params must have length {config.n_features}, "
                f"got {theta.shape}")

    base = _feature_base_weights(config.n_features)
    base = base / base.sum(axis=1, keepdims=True)
    tilted = base * np.exp(np.outer(theta, _FEATURE_VALUES))
    tilted = tilted / tilted.sum(axis=1, keepdims=True)
    cum_base = base.cumsum(axis=1)
    cum_tilted = tilted.cumsum(axis=1)

    relation_names = SYNTHETIC_RELATIONS[:config.n_relations]
    lo, hi = config.ambiguity_range
    n_verbs, n_nouns, n_frames = 30, 80, 6
    entries = []
    for s in range(config.n_sentences):
        k = int(rng.integers(lo, hi + 1))
        length = int(rng.integers(5, 13))
        tokens = tuple(f"w{int(t)}" for t in rng.integers(0, 200, size=length))
        # A small per-sentence pool keeps frames shared across some parses,
        # so the frame-match task has lower effective ambiguity.
        pool_size = max(1, (k + 1) // 2)
        frame_pool = [f"f{int(i)}" for i in rng.integers(0, n_frames, size=pool_size)]
        verb_pool = [f"v{int(i)}" for i in rng.integers(0, n_verbs, size=2)]

        # One relation slot is contested by every parse of the sentence.
        shared_name = str(rng.choice(relation_names))
        shared_voice = "passive" if rng.random() < 0.25 else "active"
        shared_position = int(rng.integers(1, len(verb_pool) + 1))
        shared_verb = verb_pool[shared_position - 1]
        shared_verb_id = int(shared_verb[1:])

        gold = int(rng.integers(0, k))
        parses = []
        for j in range(k):
            cum = cum_tilted if j == gold else cum_base
            u = rng.random(config.n_features)
            # Inverse CDF against the inner thresholds only: the final
            # cumulative sum may round below 1, and the index must stay
            # within the value domain.
            drawn = _FEATURE_VALUES[(u[:, None] >= cum[:, :-1]).sum(axis=1)]
            features = {int(i): float(v) for i, v in enumerate(drawn) if v}
            if j == gold and rng.random() < 0.85:
                # Selectional preference: one of the nouns whose index is
                # congruent to the verb's index modulo 5.
                noun = f"n{(shared_verb_id % 5) + 5 * int(rng.integers(0, n_nouns // 5))}"
            else:
                noun = f"n{int(rng.integers(0, n_nouns))}"
            relations = [Relation(name=shared_name, verb=shared_verb,
                                  noun=noun, voice=shared_voice,
                                  position=shared_position)]
            if rng.random() < 0.4:
                position = int(rng.integers(1, len(verb_pool) + 1))
                relations.append(Relation(
                    name=str(rng.choice(relation_names)),
                    verb=verb_pool[position - 1],
                    noun=f"n{int(rng.integers(0, n_nouns))}",
                    voice="passive" if rng.random() < 0.25 else "active",
                    position=position,
                ))
            parses.append(ParseRecord(
                parse_id=f"p{j}",
                relations=tuple(relations),
                frame=str(rng.choice(frame_pool)),
                precomputed_features=features,
            ))
        entries.append(SentenceEntry(
            sentence_id=f"s{s}",
            tokens=tokens,
            parses=tuple(parses),
            gold_index=gold,
        ))

    corpus = build_corpus(entries, normalize_weights=True)
    description = {
        "n_features": config.n_features,
        "true_params": [float(v) for v in theta],
        "conditional": "softmax of true_params . features within each parse set",
        "seed": config.seed,
    }
    return corpus, description
