"""Class-based lexicalization of head-word dependencies.

A latent-class model over (verb, noun) pairs,

    p(v, n) = sum_c p(c) p(v|c) p(n|c),

is fit with EM to observed pair frequencies.  Its class-membership posterior
smooths raw pair counts into class-based estimated frequencies

    f_c(v, n) = max_c p(c|v, n) * (f(v, n) + 1),

which drive a per-relation pre-disambiguation indicator: within a sentence's
candidate parses, the parses whose (verb, noun) pair for a relation slot
maximizes f_c are marked 1, everything else 0.

Pair counts are exchanged as tab-separated "verb<TAB>noun<TAB>count" files;
cluster models and frequency tables as versioned JSON documents.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .corpus import Corpus, SentenceEntry, VOICES
from .errors import ConfigError, DataError, InternalConsistencyError

CLUSTER_FORMAT = "cluster-model"
CLUSTER_VERSION = 1
FREQ_TABLE_FORMAT = "lex-frequency-table"
FREQ_TABLE_VERSION = 1

# Relation inventory for pre-disambiguation slots.  The direct object is
# excluded under passive voice (it is promoted), which together with two
# voices and three verb positions yields the default 45 slots.
DEFAULT_RELATIONS = ("subj", "dobj", "iobj", "inf-obj",
                     "obl-dat", "obl-acc", "adj-dat", "adj-acc")
DEFAULT_EXCLUDED = frozenset({("dobj", "passive")})


@dataclass(frozen=True)
class RelationSpec:
    """Inventory of (relation, voice, verb-position) slots."""

    relations: tuple[str, ...] = DEFAULT_RELATIONS
    voices: tuple[str, ...] = VOICES
    max_verb_position: int = 3
    excluded: frozenset = DEFAULT_EXCLUDED

    def slots(self) -> list[tuple[str, str, int]]:
        out = []
        for rel in self.relations:
            for voice in self.voices:
                if (rel, voice) in self.excluded:
                    continue
                for pos in range(1, self.max_verb_position + 1):
                    out.append((rel, voice, pos))
        return out

    @staticmethod
    def slot_key(relation: str, voice: str, position: int) -> str:
        return f"{relation}/{voice}/{position}"


@dataclass
class PairCounts:
    """Observed (verb, noun) pair frequencies with their vocabularies."""

    counts: dict[tuple[str, str], int]
    verbs: tuple[str, ...] = field(init=False)
    nouns: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        for (v, n), f in self.counts.items():
            if f < 0:
                raise DataError(f"negative count for pair ({v!r}, {n!r})")
        self.verbs = tuple(sorted({v for v, _ in self.counts}))
        self.nouns = tuple(sorted({n for _, n in self.counts}))

    def __len__(self) -> int:
        return len(self.counts)


def load_pair_counts(path) -> PairCounts:
    counts: dict[tuple[str, str], int] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"{path}: line {lineno}: expected verb<TAB>noun<TAB>count")
            verb, noun, raw = parts
            try:
                count = int(raw)
            except ValueError as exc:
                raise DataError(
                    f"{path}: line {lineno}: count {raw!r} is not an integer"
                ) from exc
            key = (verb, noun)
            counts[key] = counts.get(key, 0) + count
    if not counts:
        raise DataError(f"{path}: pair-counts file is empty")
    return PairCounts(counts=counts)


def save_pair_counts(counts: PairCounts, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for (verb, noun) in sorted(counts.counts):
            handle.write(f"{verb}\t{noun}\t{counts.counts[(verb, noun)]}\n")


def pair_counts_from_corpus(corpus: Corpus) -> PairCounts:
    """Count (verb, noun) pairs over every relation of every parse."""
    counts: dict[tuple[str, str], int] = {}
    for entry in corpus.entries:
        for parse in entry.parses:
            for rel in parse.relations:
                key = (rel.verb, rel.noun)
                counts[key] = counts.get(key, 0) + 1
    if not counts:
        raise DataError("corpus carries no relation annotations")
    return PairCounts(counts=counts)


# ---------------------------------------------------------------------------
# Latent-class model

@dataclass
class ClusterModel:
    """Latent classes over (verb, noun) pairs.

    ``priors`` has shape (C,); ``verb_emissions`` (C, V) and
    ``noun_emissions`` (C, N) hold p(v|c) and p(n|c) row-wise.
    """

    priors: np.ndarray
    verb_emissions: np.ndarray
    noun_emissions: np.ndarray
    verbs: tuple[str, ...]
    nouns: tuple[str, ...]
    _verb_index: dict = field(default=None, repr=False)
    _noun_index: dict = field(default=None, repr=False)

    def __post_init__(self):
        self._verb_index = {v: i for i, v in enumerate(self.verbs)}
        self._noun_index = {n: i for i, n in enumerate(self.nouns)}
        for name, dist in (("priors", self.priors[None, :]),
                           ("verb_emissions", self.verb_emissions),
                           ("noun_emissions", self.noun_emissions)):
            if np.any(dist < 0):
                raise DataError(f"{name} contains negative entries")
            sums = dist.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > 1e-10):
                raise DataError(f"{name} rows do not sum to 1")

    @property
    def n_classes(self) -> int:
        return len(self.priors)

    def to_json_dict(self) -> dict:
        return {
            "format": CLUSTER_FORMAT,
            "version": CLUSTER_VERSION,
            "priors": self.priors.tolist(),
            "verb_emissions": self.verb_emissions.tolist(),
            "noun_emissions": self.noun_emissions.tolist(),
            "verbs": list(self.verbs),
            "nouns": list(self.nouns),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ClusterModel":
        if doc.get("format") != CLUSTER_FORMAT:
            raise DataError("not a cluster-model document")
        if doc.get("version") != CLUSTER_VERSION:
            raise DataError(f"unsupported cluster-model version {doc.get('version')!r}")
        return cls(
            priors=np.asarray(doc["priors"], dtype=float),
            verb_emissions=np.asarray(doc["verb_emissions"], dtype=float),
            noun_emissions=np.asarray(doc["noun_emissions"], dtype=float),
            verbs=tuple(doc["verbs"]),
            nouns=tuple(doc["nouns"]),
        )


def save_cluster_model(model: ClusterModel, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(model.to_json_dict(), handle, sort_keys=True)
        handle.write("\n")


def load_cluster_model(path) -> ClusterModel:
    with open(path, "r", encoding="utf-8") as handle:
        return ClusterModel.from_json_dict(json.load(handle))


def _pair_arrays(counts: PairCounts, verbs, nouns):
    verb_index = {v: i for i, v in enumerate(verbs)}
    noun_index = {n: i for i, n in enumerate(nouns)}
    pairs = sorted(counts.counts)
    vi = np.array([verb_index[v] for v, _ in pairs], dtype=np.int64)
    ni = np.array([noun_index[n] for _, n in pairs], dtype=np.int64)
    f = np.array([counts.counts[p] for p in pairs], dtype=float)
    return pairs, vi, ni, f


def _pair_likelihood(model: ClusterModel, vi, ni, f) -> float:
    joint = (model.priors[:, None]
             * model.verb_emissions[:, vi]
             * model.noun_emissions[:, ni])  # (C, P)
    totals = joint.sum(axis=0)
    if np.any(totals <= 0):
        raise InternalConsistencyError("pair with zero probability under the model")
    return float(np.dot(f, np.log(totals)))


def train_clusters(counts: PairCounts, n_classes: int,
                   max_iterations: int = 100, tolerance: float = 1e-6,
                   seed: int = 0,
                   init_model: Optional[ClusterModel] = None
                   ) -> tuple[ClusterModel, list[float]]:
    """Fit the latent-class model with EM.

    E-step responsibilities are p(c|v,n) proportional to p(c)p(v|c)p(n|c);
    the M-step reestimates all three families from responsibilities weighted
    by the observed pair frequency.  Initialization is jittered-uniform from
    ``seed`` (pass ``init_model`` to control it exactly); with a single class
    the closed-form solution is used directly, so the likelihood trace is
    constant.  Returns the model and the per-iteration log-likelihood trace,
    which is non-decreasing.
    """
    if len(counts) == 0:
        raise DataError("pair counts are empty")
    if n_classes < 1:
        raise ConfigError("n_classes must be >= 1")
    if max_iterations < 1:
        raise ConfigError("max_iterations must be >= 1")
    if tolerance <= 0:
        raise ConfigError("tolerance must be positive")

    verbs, nouns = counts.verbs, counts.nouns
    _, vi, ni, f = _pair_arrays(counts, verbs, nouns)
    total = f.sum()
    if total <= 0:
        raise DataError("all pair counts are zero")

    if init_model is not None:
        model = init_model
        if model.verbs != verbs or model.nouns != nouns:
            raise ConfigError("init_model vocabularies do not match the counts")
        if model.n_classes != n_classes:
            raise ConfigError("init_model class count does not match n_classes")
    elif n_classes == 1:
        # Closed form: marginal relative frequencies.
        ve = np.bincount(vi, weights=f, minlength=len(verbs)) / total
        ne = np.bincount(ni, weights=f, minlength=len(nouns)) / total
        model = ClusterModel(priors=np.ones(1), verb_emissions=ve[None, :],
                             noun_emissions=ne[None, :], verbs=verbs, nouns=nouns)
    else:
        rng = np.random.default_rng(seed)
        priors = np.full(n_classes, 1.0 / n_classes)
        ve = 1.0 + 0.1 * rng.random((n_classes, len(verbs)))
        ne = 1.0 + 0.1 * rng.random((n_classes, len(nouns)))
        ve /= ve.sum(axis=1, keepdims=True)
        ne /= ne.sum(axis=1, keepdims=True)
        model = ClusterModel(priors=priors, verb_emissions=ve,
                             noun_emissions=ne, verbs=verbs, nouns=nouns)

    trace = [_pair_likelihood(model, vi, ni, f)]
    for _ in range(max_iterations):
        joint = (model.priors[:, None]
                 * model.verb_emissions[:, vi]
                 * model.noun_emissions[:, ni])  # (C, P)
        resp = joint / joint.sum(axis=0, keepdims=True)
        weighted = resp * f[None, :]  # (C, P)
        mass = weighted.sum(axis=1)  # (C,)

        priors = mass / total
        ve = np.zeros((n_classes, len(verbs)))
        ne = np.zeros((n_classes, len(nouns)))
        for c in range(n_classes):
            ve[c] = np.bincount(vi, weights=weighted[c], minlength=len(verbs))
            ne[c] = np.bincount(ni, weights=weighted[c], minlength=len(nouns))
        # A class that lost all mass keeps its previous emissions with a
        # zero prior instead of dividing by zero.
        alive = mass > 0
        ve[alive] /= mass[alive, None]
        ne[alive] /= mass[alive, None]
        ve[~alive] = model.verb_emissions[~alive]
        ne[~alive] = model.noun_emissions[~alive]

        model = ClusterModel(priors=priors, verb_emissions=ve,
                             noun_emissions=ne, verbs=verbs, nouns=nouns)
        likelihood = _pair_likelihood(model, vi, ni, f)
        if likelihood < trace[-1] - 1e-10:
            raise InternalConsistencyError(
                f"EM likelihood decreased from {trace[-1]} to {likelihood}")
        delta = likelihood - trace[-1]
        trace.append(likelihood)
        if abs(delta) < tolerance:
            break
    return model, trace


def class_membership(model: ClusterModel, verb: str, noun: str) -> np.ndarray:
    """Posterior p(c|v,n); pairs with an out-of-vocabulary side fall back to
    the class priors so the posterior is defined for every pair."""
    vi = model._verb_index.get(verb)
    ni = model._noun_index.get(noun)
    if vi is None or ni is None:
        return model.priors.copy()
    joint = model.priors * model.verb_emissions[:, vi] * model.noun_emissions[:, ni]
    total = joint.sum()
    if total <= 0:
        return model.priors.copy()
    return joint / total


# ---------------------------------------------------------------------------
# Class-based estimated frequencies

@dataclass
class LexFrequencyTable:
    """Map (verb, noun) -> f_c(v, n) with on-demand values for unseen pairs."""

    entries: dict[tuple[str, str], float]
    model: ClusterModel

    def lookup(self, verb: str, noun: str) -> float:
        value = self.entries.get((verb, noun))
        if value is None:
            # Unseen pair: f(v, n) = 0, so f_c is the best class posterior.
            value = float(class_membership(self.model, verb, noun).max())
        return value

    def to_json_dict(self) -> dict:
        return {
            "format": FREQ_TABLE_FORMAT,
            "version": FREQ_TABLE_VERSION,
            "entries": [[v, n, self.entries[(v, n)]]
                        for v, n in sorted(self.entries)],
            "model": self.model.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "LexFrequencyTable":
        if doc.get("format") != FREQ_TABLE_FORMAT:
            raise DataError("not a lex-frequency-table document")
        if doc.get("version") != FREQ_TABLE_VERSION:
            raise DataError(f"unsupported table version {doc.get('version')!r}")
        model = ClusterModel.from_json_dict(doc["model"])
        entries = {(v, n): float(x) for v, n, x in doc["entries"]}
        return cls(entries=entries, model=model)


def save_freq_table(table: LexFrequencyTable, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(table.to_json_dict(), handle, sort_keys=True)
        handle.write("\n")


def load_freq_table(path) -> LexFrequencyTable:
    with open(path, "r", encoding="utf-8") as handle:
        return LexFrequencyTable.from_json_dict(json.load(handle))


def build_freq_table(model: ClusterModel, counts: PairCounts) -> LexFrequencyTable:
    """f_c(v, n) = max_c p(c|v,n) * (f(v,n) + 1) for every counted pair."""
    entries = {}
    for (verb, noun), freq in counts.counts.items():
        posterior = class_membership(model, verb, noun)
        entries[(verb, noun)] = float(posterior.max() * (freq + 1.0))
    return LexFrequencyTable(entries=entries, model=model)


# ---------------------------------------------------------------------------
# Pre-disambiguation properties

def lexicalized_properties(entry: SentenceEntry, table: LexFrequencyTable,
                           relation_spec: Optional[RelationSpec] = None
                           ) -> list[dict[str, int]]:
    """Per-parse indicator features marking the f_c-maximal parses per slot.

    For every (relation, voice, verb-position) slot of the spec, the parses
    of the sentence that carry the slot compete on the f_c value of their
    (verb, noun) pair; those attaining the maximum get 1 (ties included),
    the rest get 0, and parses lacking the slot get 0 as well.  Keys are
    ``relation/voice/position`` strings.
    """
    spec = relation_spec or RelationSpec()
    rows: list[dict[str, int]] = [{} for _ in entry.parses]
    for rel_name, voice, position in spec.slots():
        key = RelationSpec.slot_key(rel_name, voice, position)
        occupants: list[tuple[int, float]] = []
        for j, parse in enumerate(entry.parses):
            for rel in parse.relations:
                if rel.voice not in VOICES:
                    raise DataError(
                        f"sentence {entry.sentence_id!r} parse "
                        f"{parse.parse_id!r}: undefined voice {rel.voice!r}")
                if (rel.name, rel.voice, rel.position) == (rel_name, voice, position):
                    occupants.append((j, table.lookup(rel.verb, rel.noun)))
                    break
        if not occupants:
            continue
        best = max(value for _, value in occupants)
        for j, value in occupants:
            rows[j][key] = 1 if value >= best else 0
    return rows
