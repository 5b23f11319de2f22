"""Property-function vector: templates, extraction, correction, selection.

Properties are nonnegative real-valued functions of a parse.  A registry
holds the ordered property inventory; templates are instantiated from a
defining corpus, a correction property is appended to make the total feature
mass constant, and low-activation properties can be dropped.

Structural property semantics implemented here (all computed from the
simplified parse record):

* production: occurrence count of each local tree ``label -> child labels``
  signature (leaf children contribute their token string).
* subtree-attachment: two keys, "argument" and "adjunct"; counts of
  grammatical-function entries classified by a fixed adjunct-function set.
* fstr-attribute: occurrence count of each grammatical-function name.
* fstr-atomic-pair: occurrence count of each atomic ``path=value`` pair.
* attachment-complexity: for every internal child of a node with at least
  two children, the token count the child dominates, bucketed into
  {1, 2-3, 4-7, 8+}; values are counts per bucket.
* non-right-branching: number of internal nodes that have a sibling to
  their right.
* coord-non-parallel: number of coordination nodes (a child is a
  coordinating conjunction) whose conjunct category labels differ.

Lexical pre-disambiguation properties and the correction property are
registered here but valued elsewhere: lexicalized values depend on a whole
sentence's competitor set (see lexicalization), and the correction value is
``K - sum(other values)`` with K fixed by the defining corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .corpus import Corpus, ParseRecord, SentenceEntry
from .errors import ConfigError, DataError
from .lexicalization import LexFrequencyTable, RelationSpec, lexicalized_properties

REGISTRY_FORMAT = "property-registry"
REGISTRY_VERSION = 1

STRUCTURAL_KINDS = (
    "production",
    "subtree-attachment",
    "fstr-attribute",
    "fstr-atomic-pair",
    "attachment-complexity",
    "non-right-branching",
    "coord-non-parallel",
)
ALL_KINDS = STRUCTURAL_KINDS + ("lexicalized-relation", "passthrough", "correction")

TREE_KINDS = frozenset({
    "production", "subtree-attachment", "attachment-complexity",
    "non-right-branching", "coord-non-parallel",
})
FSTR_KINDS = frozenset({"subtree-attachment", "fstr-attribute", "fstr-atomic-pair"})

# Grammatical functions treated as adjuncts by the attachment classifier;
# every other function entry counts as an argument attachment.
ADJUNCT_FUNCTIONS = frozenset({"ADJUNCT", "ADJ", "MOD"})

# Child labels marking a coordination node.
COORDINATION_MARKERS = frozenset({"CC", "CONJ", "KON"})

COMPLEXITY_BUCKETS = ("1", "2-3", "4-7", "8+")

CORRECTION_KEY = "K"


@dataclass(frozen=True)
class PropertyDescriptor:
    index: int
    kind: str
    key: str
    activation_count: int = 0


@dataclass
class PropertyRegistry:
    """Ordered property inventory; frozen once the correction is appended."""

    properties: list[PropertyDescriptor]
    correction_K: Optional[float] = None
    frozen: bool = False
    _by_key: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        keys = [(d.kind, d.key) for d in self.properties]
        if len(set(keys)) != len(keys):
            raise ConfigError("registry descriptors must be unique by (kind, key)")
        for i, d in enumerate(self.properties):
            if d.index != i:
                raise ConfigError(
                    f"descriptor index {d.index} does not match position {i}")
        self._by_key = {(d.kind, d.key): d.index for d in self.properties}

    @property
    def size(self) -> int:
        return len(self.properties)

    def index_of(self, kind: str, key: str) -> Optional[int]:
        return self._by_key.get((kind, key))

    def kinds(self) -> set[str]:
        return {d.kind for d in self.properties}

    @property
    def correction_index(self) -> Optional[int]:
        if self.correction_K is None:
            return None
        return self.size - 1

    def to_json_dict(self) -> dict:
        return {
            "format": REGISTRY_FORMAT,
            "version": REGISTRY_VERSION,
            "correction_K": self.correction_K,
            "frozen": self.frozen,
            "properties": [
                {"index": d.index, "kind": d.kind, "key": d.key,
                 "activation_count": d.activation_count}
                for d in self.properties
            ],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PropertyRegistry":
        if doc.get("format") != REGISTRY_FORMAT:
            raise DataError("not a property-registry document")
        if doc.get("version") != REGISTRY_VERSION:
            raise DataError(f"unsupported registry version {doc.get('version')!r}")
        props = [
            PropertyDescriptor(index=p["index"], kind=p["kind"], key=p["key"],
                               activation_count=p.get("activation_count", 0))
            for p in doc["properties"]
        ]
        return cls(properties=props, correction_K=doc.get("correction_K"),
                   frozen=bool(doc.get("frozen", False)))


def save_registry(registry: PropertyRegistry, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(registry.to_json_dict(), handle, sort_keys=True, indent=1)
        handle.write("\n")


def load_registry(path) -> PropertyRegistry:
    with open(path, "r", encoding="utf-8") as handle:
        return PropertyRegistry.from_json_dict(json.load(handle))


# ---------------------------------------------------------------------------
# Structural value computation

def _iter_internal(node):
    """Yield (label, children) for every internal node, depth first."""
    if isinstance(node, str):
        return
    label, children = node
    yield label, children
    for child in children:
        yield from _iter_internal(child)


def _symbol(node) -> str:
    return node if isinstance(node, str) else node[0]


def _leaf_count(node) -> int:
    if isinstance(node, str):
        return 1
    return sum(_leaf_count(c) for c in node[1])


def _complexity_bucket(n_tokens: int) -> str:
    if n_tokens <= 1:
        return "1"
    if n_tokens <= 3:
        return "2-3"
    if n_tokens <= 7:
        return "4-7"
    return "8+"


def structural_values(parse: ParseRecord, kinds: Iterable[str]) -> dict:
    """Map (kind, key) -> value for the requested structural kinds."""
    kinds = set(kinds)
    values: dict[tuple[str, str], float] = {}

    def bump(kind: str, key: str, amount: float = 1.0) -> None:
        values[(kind, key)] = values.get((kind, key), 0.0) + amount

    tree = parse.cstructure
    if tree is not None and kinds & TREE_KINDS:
        for label, children in _iter_internal(tree):
            if "production" in kinds:
                rhs = " ".join(_symbol(c) for c in children)
                bump("production", f"{label} -> {rhs}")
            if "attachment-complexity" in kinds and len(children) >= 2:
                for child in children:
                    if not isinstance(child, str):
                        bump("attachment-complexity",
                             _complexity_bucket(_leaf_count(child)))
            if "non-right-branching" in kinds:
                for child in children[:-1]:
                    if not isinstance(child, str):
                        bump("non-right-branching", "count")
            if "coord-non-parallel" in kinds:
                marks = [i for i, c in enumerate(children)
                         if _symbol(c) in COORDINATION_MARKERS]
                if marks:
                    conjuncts = {_symbol(c) for i, c in enumerate(children)
                                 if i not in marks}
                    if len(conjuncts) > 1:
                        bump("coord-non-parallel", "count")

    fstr = parse.fstructure
    if fstr is not None and kinds & FSTR_KINDS:
        for function in fstr.functions:
            if "fstr-attribute" in kinds:
                bump("fstr-attribute", function)
            if "subtree-attachment" in kinds:
                role = "adjunct" if function in ADJUNCT_FUNCTIONS else "argument"
                bump("subtree-attachment", role)
        if "fstr-atomic-pair" in kinds:
            for path, value in fstr.pairs:
                bump("fstr-atomic-pair", f"{path}={value}")

    # Zero-valued template hits are dropped (nothing produces them above);
    # unknown structural shapes simply yield no values.
    return values


def _passthrough_key(index: int) -> str:
    return f"{index:06d}"


def _parse_template_values(parse: ParseRecord, kinds: set[str]) -> dict:
    """(kind, key) -> value for structural plus passthrough kinds."""
    values = structural_values(parse, kinds & set(STRUCTURAL_KINDS))
    if "passthrough" in kinds and parse.precomputed_features:
        for idx, value in parse.precomputed_features.items():
            if value != 0:
                values[("passthrough", _passthrough_key(idx))] = float(value)
    return values


# ---------------------------------------------------------------------------
# Registry construction

def build_registry(corpus: Corpus,
                   enabled_kinds: Optional[Iterable[str]] = None,
                   include_lexicalized: bool = False,
                   lex_table: Optional[LexFrequencyTable] = None,
                   relation_spec: Optional[RelationSpec] = None) -> PropertyRegistry:
    """Instantiate one descriptor per template observed in the corpus.

    ``enabled_kinds`` selects structural kinds (default: all of them when the
    corpus carries structural data, none otherwise).  When no structural kind
    is enabled, parses must carry precomputed features and the registry is a
    passthrough over their index range.  ``include_lexicalized`` additionally
    registers every pre-disambiguation slot observed in the corpus relations;
    this requires the class-based frequency table, because activation counts
    are the number of parses with a nonzero value.

    Descriptors are ordered by (kind, key) lexicographically; the registry is
    returned unfrozen (no correction property yet).
    """
    has_structure = all(p.has_structure for e in corpus.entries for p in e.parses)
    has_precomputed = all(p.precomputed_features is not None
                          for e in corpus.entries for p in e.parses)
    if enabled_kinds is None:
        enabled = set(STRUCTURAL_KINDS) if has_structure else set()
    else:
        enabled = set(enabled_kinds)
        unknown = enabled - set(STRUCTURAL_KINDS)
        if unknown:
            raise ConfigError(f"unknown structural kinds: {sorted(unknown)}")
    if enabled and not has_structure:
        raise DataError(
            "structural kinds enabled but some parses lack c-/f-structure")
    if not enabled:
        if not has_precomputed:
            raise ConfigError(
                "no structural kinds enabled and no precomputed features present")
        enabled = {"passthrough"}

    if include_lexicalized:
        if lex_table is None:
            raise ConfigError(
                "include_lexicalized requires a class-based frequency table")
        relation_spec = relation_spec or RelationSpec()

    activation: dict[tuple[str, str], int] = {}
    if "passthrough" in enabled:
        width = 1 + max(
            (max(p.precomputed_features) for e in corpus.entries
             for p in e.parses if p.precomputed_features),
            default=-1,
        )
        if width <= 0:
            raise DataError("precomputed features are empty on every parse")
        for i in range(width):
            activation[("passthrough", _passthrough_key(i))] = 0

    for entry in corpus.entries:
        lex_rows = None
        if include_lexicalized:
            lex_rows = lexicalized_properties(entry, lex_table, relation_spec)
        for j, parse in enumerate(entry.parses):
            for (kind, key), value in _parse_template_values(parse, enabled).items():
                if value != 0:
                    activation[(kind, key)] = activation.get((kind, key), 0) + 1
                else:
                    activation.setdefault((kind, key), 0)
            if lex_rows is not None:
                for slot, value in lex_rows[j].items():
                    slot_key = ("lexicalized-relation", slot)
                    if value != 0:
                        activation[slot_key] = activation.get(slot_key, 0) + 1
                    else:
                        activation.setdefault(slot_key, 0)

    ordered = sorted(activation)
    if not ordered:
        raise DataError("no property template was observed in the corpus")
    props = [
        PropertyDescriptor(index=i, kind=kind, key=key,
                           activation_count=activation[(kind, key)])
        for i, (kind, key) in enumerate(ordered)
    ]
    return PropertyRegistry(properties=props)


# ---------------------------------------------------------------------------
# Extraction

def extract_features(parse: ParseRecord, registry: PropertyRegistry) -> dict[int, float]:
    """Sparse feature vector of one parse against a registry.

    Pure: identical parse and registry yield the identical mapping.  Covers
    structural and passthrough kinds only; correction and lexicalized values
    are contributed by the correction rule and the sentence-level
    pre-disambiguator respectively.
    """
    kinds = registry.kinds() & (set(STRUCTURAL_KINDS) | {"passthrough"})
    out: dict[int, float] = {}
    for (kind, key), value in _parse_template_values(parse, kinds).items():
        idx = registry.index_of(kind, key)
        if idx is not None and value != 0:
            out[idx] = value
    return out


def _entry_base_rows(entry: SentenceEntry, registry: PropertyRegistry,
                     lex_table: Optional[LexFrequencyTable],
                     relation_spec: Optional[RelationSpec]) -> list[dict[int, float]]:
    """Per-parse sparse vectors including lexicalized slots, no correction."""
    rows = [extract_features(parse, registry) for parse in entry.parses]
    if "lexicalized-relation" in registry.kinds():
        if lex_table is None:
            raise ConfigError(
                "registry has lexicalized properties but no frequency table "
                "was provided")
        spec = relation_spec or RelationSpec()
        lex_rows = lexicalized_properties(entry, lex_table, spec)
        for row, lex in zip(rows, lex_rows):
            for slot, value in lex.items():
                idx = registry.index_of("lexicalized-relation", slot)
                if idx is not None and value != 0:
                    row[idx] = float(value)
    return rows


def entry_feature_rows(entry: SentenceEntry, registry: PropertyRegistry,
                       lex_table: Optional[LexFrequencyTable] = None,
                       relation_spec: Optional[RelationSpec] = None
                       ) -> list[dict[int, float]]:
    """Per-parse sparse vectors of one sentence, correction included.

    Parses whose feature mass exceeds the correction constant (possible
    outside the defining corpus) get a correction value clamped at zero.
    """
    rows = _entry_base_rows(entry, registry, lex_table, relation_spec)
    correction_idx = registry.correction_index
    if correction_idx is not None:
        for row in rows:
            slack = registry.correction_K - float(sum(row.values()))
            if slack > 0:
                row[correction_idx] = slack
    return rows


# ---------------------------------------------------------------------------
# Correction and selection

def add_correction(registry: PropertyRegistry, corpus: Corpus,
                   lex_table: Optional[LexFrequencyTable] = None,
                   relation_spec: Optional[RelationSpec] = None) -> PropertyRegistry:
    """Append the constant-mass correction property and freeze the registry.

    K is the maximum total feature value over the parses of the defining
    universe (sentences with positive weight); the correction value of a
    parse is K minus its feature total, so afterwards every universe parse
    sums to K exactly (exact for integral inputs).
    """
    if registry.correction_K is not None:
        raise ConfigError("registry already carries a correction property")
    universe = [e for e in corpus.entries if e.weight > 0]
    best = None
    for entry in universe:
        for row in _entry_base_rows(entry, registry, lex_table, relation_spec):
            total = float(sum(row.values()))
            if best is None or total > best:
                best = total
    if best is None or best <= 0:
        raise DataError(
            "cannot fix a correction constant: every parse has zero feature mass")
    activation = 0
    for entry in universe:
        for row in _entry_base_rows(entry, registry, lex_table, relation_spec):
            if best - float(sum(row.values())) != 0:
                activation += 1
    descriptor = PropertyDescriptor(index=registry.size, kind="correction",
                                    key=CORRECTION_KEY,
                                    activation_count=activation)
    return PropertyRegistry(properties=registry.properties + [descriptor],
                            correction_K=best, frozen=True)


def select_properties(registry: PropertyRegistry, cutoff: int,
                      corpus: Optional[Corpus] = None,
                      lex_table: Optional[LexFrequencyTable] = None,
                      relation_spec: Optional[RelationSpec] = None) -> PropertyRegistry:
    """Drop descriptors activated on fewer than ``cutoff`` parses.

    Must run before the correction property is added (the correction is
    re-added afterwards).  Activation counts stored at build time are used;
    pass a corpus to recount against different data.  Raises when nothing
    survives the cutoff.
    """
    if registry.correction_K is not None or registry.frozen:
        raise ConfigError("select_properties must run before add_correction")
    if cutoff < 0:
        raise ConfigError("cutoff must be nonnegative")

    counts = {d.index: d.activation_count for d in registry.properties}
    if corpus is not None:
        counts = {d.index: 0 for d in registry.properties}
        for entry in corpus.entries:
            for row in _entry_base_rows(entry, registry, lex_table, relation_spec):
                for idx, value in row.items():
                    if value != 0:
                        counts[idx] += 1

    kept = [d for d in registry.properties if counts[d.index] >= cutoff]
    if not kept:
        raise DataError(f"property selection with cutoff {cutoff} removed "
                        "every descriptor")
    props = [
        PropertyDescriptor(index=i, kind=d.kind, key=d.key,
                           activation_count=counts[d.index])
        for i, d in enumerate(kept)
    ]
    return PropertyRegistry(properties=props)


# ---------------------------------------------------------------------------
# Corpus-level feature matrices

@dataclass
class FeatureMatrix:
    """Dense per-parse feature rows for a corpus, in corpus order.

    ``offsets[s]:offsets[s+1]`` delimits sentence ``s``'s rows.  ``gold`` is
    -1 where no gold index is annotated.  ``clamped_corrections`` counts
    parses whose feature total exceeded K (possible outside the defining
    corpus); their correction value was clamped to zero.
    """

    values: np.ndarray
    offsets: np.ndarray
    weights: np.ndarray
    gold: np.ndarray
    sentence_ids: list[str]
    parse_ids: list[tuple[str, ...]]
    clamped_corrections: int
    corpus_digest: str

    @property
    def n_sentences(self) -> int:
        return len(self.offsets) - 1

    @property
    def n_parses(self) -> int:
        return int(self.offsets[-1])

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def sentence_rows(self, s: int) -> np.ndarray:
        return self.values[self.offsets[s]:self.offsets[s + 1]]

    def gold_rows(self) -> np.ndarray:
        """Absolute row index of each sentence's gold parse."""
        if np.any(self.gold < 0):
            missing = [self.sentence_ids[i] for i in np.nonzero(self.gold < 0)[0]]
            raise DataError(f"sentences without gold_index: {missing[:5]}")
        return self.offsets[:-1] + self.gold


def build_feature_matrix(corpus: Corpus, registry: PropertyRegistry,
                         lex_table: Optional[LexFrequencyTable] = None,
                         relation_spec: Optional[RelationSpec] = None,
                         strict_correction: bool = False) -> FeatureMatrix:
    """Materialize the full feature matrix of a corpus, correction included.

    Rows cover the parse universe: sentences with positive weight.  With
    ``strict_correction`` a parse whose feature total exceeds K raises (a
    stale registry for its defining corpus); otherwise such corrections are
    clamped at zero and counted.
    """
    n = registry.size
    rows: list[dict[int, float]] = []
    offsets = [0]
    weights = []
    gold = []
    sentence_ids = []
    parse_ids = []
    clamped = 0
    correction_idx = registry.correction_index

    kept = [e for e in corpus.entries if e.weight > 0]
    if not kept:
        raise DataError("every sentence has zero weight; the universe is empty")
    for entry in kept:
        base = _entry_base_rows(entry, registry, lex_table, relation_spec)
        if correction_idx is not None:
            for parse, row in zip(entry.parses, base):
                slack = registry.correction_K - float(sum(row.values()))
                if slack < 0:
                    if strict_correction:
                        raise DataError(
                            f"parse {parse.parse_id!r} of sentence "
                            f"{entry.sentence_id!r} has feature mass above the "
                            f"correction constant {registry.correction_K}; "
                            "the registry is stale for this corpus")
                    clamped += 1
                elif slack > 0:
                    row[correction_idx] = slack
        rows.extend(base)
        offsets.append(offsets[-1] + len(base))
        weights.append(entry.weight)
        gold.append(-1 if entry.gold_index is None else entry.gold_index)
        sentence_ids.append(entry.sentence_id)
        parse_ids.append(tuple(p.parse_id for p in entry.parses))

    values = np.zeros((offsets[-1], n))
    for r, row in enumerate(rows):
        for idx, value in row.items():
            values[r, idx] = value
    if values.size and values.min() < 0:
        raise DataError("negative feature value encountered")

    return FeatureMatrix(
        values=values,
        offsets=np.asarray(offsets, dtype=np.int64),
        weights=np.asarray(weights, dtype=float),
        gold=np.asarray(gold, dtype=np.int64),
        sentence_ids=sentence_ids,
        parse_ids=parse_ids,
        clamped_corrections=clamped,
        corpus_digest=corpus.content_digest(),
    )
