"""Parameter estimation from incomplete or complete data.

The estimator interleaves the E-step of EM with a generalized
iterative-scaling update, giving a closed-form parameter step.  With the
correction property in place the total feature mass of every universe parse
is a constant K, and one iteration updates every parameter by

    gamma_i = (1/K) * ln(numerator_i / denominator_i)
    lam_i  += gamma_i

where the denominator is the model expectation of feature i over the
universe and the numerator is the expectation of feature i under the
empirical sentence distribution combined with the current conditional
k(x|y) over each sentence's candidate set (incomplete data), or under the
gold parses (complete data).  For a parsebank, where every candidate set is
a singleton, both coincide with the empirical expectation and the loop is
plain iterative scaling.

The per-step likelihood is non-decreasing; the loop converges on the
likelihood delta.  Zero expected counts are floored, and features whose
numerator falls below the floor are frozen for the step, keeping the
logarithm defined without smoothing away exact moment matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .corpus import Corpus
from .errors import ConfigError, DataError, InternalConsistencyError
from .lexicalization import LexFrequencyTable, RelationSpec
from .model import (LogLinearModel, ReferenceDistribution, new_model,
                    row_scores)
from .properties import FeatureMatrix, PropertyRegistry, build_feature_matrix

DEFAULT_GAMMA_CLAMP_NUMERATOR = 20.0  # default clamp is 20/K


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs of the estimation loop.

    ``init`` is "uniform_zero" (lam = 0, the minimum-divergence start) or
    "random" (i.i.d. uniform on [-init_range, +init_range], seeded).
    ``gamma_clamp`` defaults to 20/K at training time, a safeguard against
    boundary optima; ``checkpoint_every`` controls how often the parameter
    vector is snapshotted into the trace.
    """

    init: str = "uniform_zero"
    init_range: float = 0.5
    seed: Optional[int] = None
    max_iterations: int = 100
    likelihood_tolerance: float = 1e-8
    checkpoint_every: int = 5
    expectation_floor: float = 1e-12
    gamma_clamp: Optional[float] = None

    def validate(self) -> None:
        if self.init not in ("uniform_zero", "random"):
            raise ConfigError(f"unknown init strategy {self.init!r}")
        if self.init == "random" and self.init_range <= 0:
            raise ConfigError("init_range must be positive for random init")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.likelihood_tolerance <= 0:
            raise ConfigError("likelihood_tolerance must be positive")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")
        if self.expectation_floor <= 0:
            raise ConfigError("expectation_floor must be positive")
        if self.gamma_clamp is not None and self.gamma_clamp <= 0:
            raise ConfigError("gamma_clamp must be positive")


@dataclass(frozen=True, eq=False)
class IterationRecord:
    iteration: int
    log_likelihood: float
    max_abs_gamma: float
    lam: Optional[np.ndarray] = None  # snapshot, present at checkpoints


@dataclass
class TrainingTrace:
    """Per-iteration log of the estimation run."""

    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    mode: str = "incomplete"

    @property
    def final_log_likelihood(self) -> float:
        return self.records[-1].log_likelihood

    @property
    def n_iterations(self) -> int:
        return self.records[-1].iteration

    def checkpoints(self) -> list[tuple[int, np.ndarray]]:
        return [(r.iteration, r.lam) for r in self.records if r.lam is not None]

    def likelihoods(self) -> list[float]:
        return [r.log_likelihood for r in self.records]


# ---------------------------------------------------------------------------
# Likelihood and expectations

def _sentence_log_masses(scores: np.ndarray, features: FeatureMatrix) -> np.ndarray:
    """Per-sentence logsumexp of row scores."""
    starts = features.offsets[:-1]
    shift = np.maximum.reduceat(scores, starts)
    counts = np.diff(features.offsets)
    expd = np.exp(scores - np.repeat(shift, counts))
    return shift + np.log(np.add.reduceat(expd, starts))


def incomplete_log_likelihood(model: LogLinearModel,
                              corpus: Optional[Corpus] = None, *,
                              features: Optional[FeatureMatrix] = None,
                              lex_table: Optional[LexFrequencyTable] = None) -> float:
    """L = sum_y w(y) ln sum over X(y) of p(x); at most 0 for a normalized
    model.  Raises when a sentence's inner sum underflows to zero."""
    features = _require_features(model, corpus, features, lex_table)
    scores = row_scores(model, features)
    log_z = _logsumexp(scores)
    log_masses = _sentence_log_masses(scores, features) - log_z
    if not np.all(np.isfinite(log_masses)):
        raise DataError("a sentence's parse mass underflowed to zero")
    return float(features.weights @ log_masses)


def complete_log_likelihood(model: LogLinearModel,
                            corpus: Optional[Corpus] = None, *,
                            features: Optional[FeatureMatrix] = None,
                            lex_table: Optional[LexFrequencyTable] = None) -> float:
    """Gold-parse log-likelihood sum_y w(y) ln p(x_gold(y))."""
    features = _require_features(model, corpus, features, lex_table)
    scores = row_scores(model, features)
    log_z = _logsumexp(scores)
    gold_scores = scores[features.gold_rows()] - log_z
    return float(features.weights @ gold_scores)


def _logsumexp(scores: np.ndarray) -> float:
    shift = scores.max()
    return float(shift + np.log(np.exp(scores - shift).sum()))


def _require_features(model, corpus, features, lex_table) -> FeatureMatrix:
    if features is None:
        if corpus is None:
            raise ConfigError("either a corpus or a feature matrix is required")
        features = build_feature_matrix(corpus, model.registry, lex_table=lex_table)
    if features.corpus_digest != model.universe:
        raise ConfigError(
            "corpus is not the model's universe (content digest mismatch)")
    return features


def expectations(model: LogLinearModel, corpus: Optional[Corpus] = None, *,
                 features: Optional[FeatureMatrix] = None,
                 complete_data: bool = False,
                 lex_table: Optional[LexFrequencyTable] = None
                 ) -> tuple[np.ndarray, np.ndarray]:
    """(numerator, denominator) expectation vectors of one update.

    The denominator is the model expectation over the universe.  The
    numerator weights each sentence by w(y) and each of its parses by the
    conditional k(x|y) (incomplete data) or by the gold indicator (complete
    data).  The difference numerator - denominator is the exact gradient of
    the corresponding log-likelihood.
    """
    features = _require_features(model, corpus, features, lex_table)
    scores = row_scores(model, features)
    log_z = _logsumexp(scores)
    probs = np.exp(scores - log_z)
    probs /= probs.sum()
    denominator = probs @ features.values

    counts = np.diff(features.offsets)
    if complete_data:
        gold_rows = features.gold_rows()
        row_weights = np.zeros(features.n_parses)
        row_weights[gold_rows] = features.weights
    else:
        starts = features.offsets[:-1]
        shift = np.maximum.reduceat(scores, starts)
        expd = np.exp(scores - np.repeat(shift, counts))
        mass = np.add.reduceat(expd, starts)
        conditional = expd / np.repeat(mass, counts)
        row_weights = conditional * np.repeat(features.weights, counts)
    numerator = row_weights @ features.values
    return numerator, denominator


# ---------------------------------------------------------------------------
# The update

def im_step(model: LogLinearModel, corpus: Optional[Corpus] = None, *,
            features: Optional[FeatureMatrix] = None,
            complete_data: bool = False,
            expectation_floor: float = 1e-12,
            gamma_clamp: Optional[float] = None,
            lex_table: Optional[LexFrequencyTable] = None
            ) -> tuple[LogLinearModel, np.ndarray, float]:
    """One closed-form update; returns (new model, gamma, new likelihood).

    Requires a frozen registry with the correction property (constant total
    feature mass K) and nonnegative feature values.  Numerator and
    denominator are floored at ``expectation_floor``; features whose (raw)
    numerator falls below the floor are frozen for this step; gamma is
    clamped to [-clamp, clamp] with clamp defaulting to 20/K.
    """
    registry = model.registry
    if registry.correction_K is None:
        raise ConfigError(
            "the update requires a registry frozen with the correction property")
    K = float(registry.correction_K)
    features = _require_features(model, corpus, features, lex_table)
    if features.values.min() < 0:
        raise DataError("negative feature value; the update is undefined")
    if gamma_clamp is None:
        gamma_clamp = DEFAULT_GAMMA_CLAMP_NUMERATOR / K

    numerator, denominator = expectations(
        model, features=features, complete_data=complete_data)
    frozen = numerator < expectation_floor
    num = np.maximum(numerator, expectation_floor)
    den = np.maximum(denominator, expectation_floor)
    gamma = np.log(num / den) / K
    np.clip(gamma, -gamma_clamp, gamma_clamp, out=gamma)
    gamma[frozen] = 0.0

    updated = model.with_lam(model.lam + gamma)
    if complete_data:
        likelihood = complete_log_likelihood(updated, features=features)
    else:
        likelihood = incomplete_log_likelihood(updated, features=features)
    return updated, gamma, likelihood


def _initial_lam(config: TrainingConfig, n: int) -> np.ndarray:
    if config.init == "uniform_zero":
        return np.zeros(n)
    rng = np.random.default_rng(config.seed)
    return rng.uniform(-config.init_range, config.init_range, size=n)


def train(corpus: Corpus, registry: PropertyRegistry,
          config: Optional[TrainingConfig] = None, *,
          complete_data: bool = False,
          lex_table: Optional[LexFrequencyTable] = None,
          relation_spec: Optional[RelationSpec] = None,
          reference: Optional[ReferenceDistribution] = None
          ) -> tuple[LogLinearModel, TrainingTrace]:
    """Run the estimation loop to convergence or the iteration cap.

    The trace records the likelihood and the largest update magnitude of
    every iteration (iteration 0 holds the starting likelihood) and snapshots
    the parameter vector every ``checkpoint_every`` iterations plus at the
    final one.  A likelihood decrease beyond 1e-10 aborts: the update's
    monotonicity guarantee was violated, which signals an internal bug or
    corrupted inputs.

    One symmetry to know about: on incomplete data where every sentence has
    the same number of parses and weights are uniform, the conditional and
    model expectations coincide at lam = 0, so the uniform-zero start is a
    stationary point and training stops immediately.  When that happens,
    random starts are the way to probe whether better optima exist.
    """
    config = config or TrainingConfig()
    config.validate()
    if not corpus.entries:
        raise DataError("cannot train on an empty corpus")
    if registry.correction_K is None:
        raise ConfigError("training requires a registry with the correction "
                          "property (run add_correction first)")
    features = build_feature_matrix(corpus, registry, lex_table=lex_table,
                                    relation_spec=relation_spec,
                                    strict_correction=True)
    if complete_data and np.any(features.gold < 0):
        raise DataError("complete-data training requires gold_index on every "
                        "sentence")

    model = new_model(registry, corpus, lam=_initial_lam(config, registry.size),
                      reference=reference)
    objective = complete_log_likelihood if complete_data else incomplete_log_likelihood
    likelihood = objective(model, features=features)

    trace = TrainingTrace(mode="complete" if complete_data else "incomplete")
    trace.records.append(IterationRecord(
        iteration=0, log_likelihood=likelihood, max_abs_gamma=0.0,
        lam=model.lam.copy()))

    for iteration in range(1, config.max_iterations + 1):
        model, gamma, new_likelihood = im_step(
            model, features=features, complete_data=complete_data,
            expectation_floor=config.expectation_floor,
            gamma_clamp=config.gamma_clamp)
        if new_likelihood < likelihood - 1e-10:
            raise InternalConsistencyError(
                f"log-likelihood decreased at iteration {iteration}: "
                f"{likelihood} -> {new_likelihood}")
        delta = new_likelihood - likelihood
        likelihood = new_likelihood
        at_checkpoint = (iteration % config.checkpoint_every == 0
                         or iteration == config.max_iterations)
        converged = abs(delta) < config.likelihood_tolerance
        trace.records.append(IterationRecord(
            iteration=iteration,
            log_likelihood=likelihood,
            max_abs_gamma=float(np.abs(gamma).max()),
            lam=model.lam.copy() if (at_checkpoint or converged) else None))
        if converged:
            trace.converged = True
            break
    return model, trace


@dataclass(frozen=True)
class InitComparison:
    uniform_final_L: float
    random_final_Ls: tuple[float, ...]
    win_rate: float  # fraction of random runs strictly below the uniform run


def compare_inits(corpus: Corpus, registry: PropertyRegistry,
                  config: Optional[TrainingConfig] = None,
                  n_random_seeds: int = 10, *,
                  complete_data: bool = False,
                  lex_table: Optional[LexFrequencyTable] = None
                  ) -> InitComparison:
    """Train once from lam = 0 and ``n_random_seeds`` times from random
    starts; report the final likelihoods and how often random ends lower."""
    config = config or TrainingConfig()
    config.validate()
    if n_random_seeds < 0:
        raise ConfigError("n_random_seeds must be nonnegative")

    base = replace(config, init="uniform_zero")
    _, trace = train(corpus, registry, base, complete_data=complete_data,
                     lex_table=lex_table)
    uniform_final = trace.final_log_likelihood

    seed0 = 0 if config.seed is None else config.seed
    random_finals = []
    for i in range(n_random_seeds):
        rnd = replace(config, init="random", seed=seed0 + i)
        _, rnd_trace = train(corpus, registry, rnd, complete_data=complete_data,
                             lex_table=lex_table)
        random_finals.append(rnd_trace.final_log_likelihood)

    wins = sum(1 for L in random_finals if L < uniform_final)
    rate = wins / n_random_seeds if n_random_seeds else math.nan
    return InitComparison(uniform_final_L=uniform_final,
                          random_final_Ls=tuple(random_finals),
                          win_rate=rate)
