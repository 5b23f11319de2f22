import numpy as np
import pytest
from numpy.testing import assert_allclose

from parsedisamb import (ClusterModel, ConfigError, DataError,
                         LexFrequencyTable, PairCounts, RelationSpec,
                         SentenceEntry, build_corpus, build_freq_table,
                         class_membership, lexicalized_properties,
                         load_pair_counts, pair_counts_from_corpus,
                         save_pair_counts, train_clusters)
from parsedisamb.corpus import ParseRecord
from parsedisamb.lexicalization import (load_cluster_model, load_freq_table,
                                        save_cluster_model, save_freq_table)
from conftest import relation


TOY_COUNTS = PairCounts(counts={
    ("eat", "apple"): 4,
    ("eat", "pasta"): 2,
    ("drive", "car"): 3,
})


def _uniform_two_class_model(counts: PairCounts) -> ClusterModel:
    V, N = len(counts.verbs), len(counts.nouns)
    return ClusterModel(
        priors=np.array([0.5, 0.5]),
        verb_emissions=np.full((2, V), 1.0 / V),
        noun_emissions=np.full((2, N), 1.0 / N),
        verbs=counts.verbs, nouns=counts.nouns)


class TestDefaultSlots:
    def test_forty_five_slots(self):
        spec = RelationSpec()
        slots = spec.slots()
        assert len(slots) == 45
        assert ("dobj", "passive", 1) not in slots
        assert ("dobj", "active", 3) in slots


class TestTrainClusters:
    def test_single_class_is_closed_form(self):
        model, trace = train_clusters(TOY_COUNTS, n_classes=1, max_iterations=8)
        assert model.n_classes == 1
        assert_allclose(model.priors, [1.0])
        assert_allclose(trace, trace[0])  # constant likelihood
        posterior = class_membership(model, "eat", "apple")
        assert_allclose(posterior, [1.0])

    def test_symmetric_init_preserves_the_saddle(self):
        init = _uniform_two_class_model(TOY_COUNTS)
        model, _ = train_clusters(TOY_COUNTS, n_classes=2, max_iterations=6,
                                  tolerance=1e-300, init_model=init)
        assert_allclose(model.verb_emissions[0], model.verb_emissions[1])
        assert_allclose(model.noun_emissions[0], model.noun_emissions[1])
        assert_allclose(model.priors, [0.5, 0.5])

    def test_one_step_matches_hand_computed_oracle(self):
        # Independent EM reference: explicit loops over pairs and classes.
        rng = np.random.default_rng(42)
        counts = TOY_COUNTS
        V, N = len(counts.verbs), len(counts.nouns)
        priors = np.array([0.6, 0.4])
        ve = rng.random((2, V)) + 0.5
        ve /= ve.sum(axis=1, keepdims=True)
        ne = rng.random((2, N)) + 0.5
        ne /= ne.sum(axis=1, keepdims=True)
        init = ClusterModel(priors=priors.copy(), verb_emissions=ve.copy(),
                            noun_emissions=ne.copy(),
                            verbs=counts.verbs, nouns=counts.nouns)

        model, _ = train_clusters(counts, n_classes=2, max_iterations=1,
                                  tolerance=1e-300, init_model=init)

        # Reference M-step.
        vi = {v: i for i, v in enumerate(counts.verbs)}
        ni = {n: i for i, n in enumerate(counts.nouns)}
        resp = {}
        for (v, n), f in counts.counts.items():
            joint = [priors[c] * ve[c, vi[v]] * ne[c, ni[n]] for c in range(2)]
            total = sum(joint)
            resp[(v, n)] = [j / total for j in joint]
        total_f = sum(counts.counts.values())
        ref_priors = np.zeros(2)
        ref_ve = np.zeros((2, V))
        ref_ne = np.zeros((2, N))
        for (v, n), f in counts.counts.items():
            for c in range(2):
                w = f * resp[(v, n)][c]
                ref_priors[c] += w
                ref_ve[c, vi[v]] += w
                ref_ne[c, ni[n]] += w
        mass = ref_priors.copy()
        ref_priors /= total_f
        ref_ve /= mass[:, None]
        ref_ne /= mass[:, None]

        assert_allclose(model.priors, ref_priors, atol=1e-12)
        assert_allclose(model.verb_emissions, ref_ve, atol=1e-12)
        assert_allclose(model.noun_emissions, ref_ne, atol=1e-12)

    def test_likelihood_non_decreasing(self):
        rng = np.random.default_rng(6)
        verbs = [f"v{i}" for i in range(8)]
        nouns = [f"n{i}" for i in range(12)]
        counts = {}
        for _ in range(40):
            key = (str(rng.choice(verbs)), str(rng.choice(nouns)))
            counts[key] = counts.get(key, 0) + int(rng.integers(1, 6))
        pair_counts = PairCounts(counts=counts)
        for classes in (2, 4):
            _, trace = train_clusters(pair_counts, n_classes=classes,
                                      max_iterations=60, tolerance=1e-12,
                                      seed=3)
            assert all(b >= a - 1e-10 for a, b in zip(trace, trace[1:]))

    def test_misconfiguration(self):
        with pytest.raises(ConfigError):
            train_clusters(TOY_COUNTS, n_classes=0)
        with pytest.raises(ConfigError):
            train_clusters(TOY_COUNTS, n_classes=2, max_iterations=0)
        with pytest.raises(ConfigError):
            train_clusters(TOY_COUNTS, n_classes=2, tolerance=0.0)
        with pytest.raises(DataError):
            train_clusters(PairCounts(counts={}), n_classes=1)


class TestClassMembership:
    def test_posterior_normalized(self):
        model, _ = train_clusters(TOY_COUNTS, n_classes=3, seed=1,
                                  max_iterations=30)
        for v, n in TOY_COUNTS.counts:
            posterior = class_membership(model, v, n)
            assert abs(posterior.sum() - 1.0) < 1e-12
            assert np.all(posterior >= 0)

    def test_oov_falls_back_to_priors(self):
        model, _ = train_clusters(TOY_COUNTS, n_classes=2, seed=0,
                                  max_iterations=10)
        assert_allclose(class_membership(model, "unseen-verb", "apple"),
                        model.priors)
        assert_allclose(class_membership(model, "eat", "unseen-noun"),
                        model.priors)

    def test_uniform_model_uniform_posterior(self):
        model = _uniform_two_class_model(TOY_COUNTS)
        assert_allclose(class_membership(model, "eat", "apple"), [0.5, 0.5])


class TestFreqTable:
    def test_single_class_identity(self):
        model, _ = train_clusters(TOY_COUNTS, n_classes=1)
        table = build_freq_table(model, TOY_COUNTS)
        for pair, f in TOY_COUNTS.counts.items():
            assert table.lookup(*pair) == f + 1  # max posterior is exactly 1

    def test_direct_formula(self):
        # Single verb/noun vocabulary makes the posterior equal the priors:
        # max posterior 0.7 with f = 4 gives 3.5.
        counts = PairCounts(counts={("v", "n"): 4})
        model = ClusterModel(priors=np.array([0.7, 0.3]),
                             verb_emissions=np.ones((2, 1)),
                             noun_emissions=np.ones((2, 1)),
                             verbs=("v",), nouns=("n",))
        table = build_freq_table(model, counts)
        assert_allclose(table.lookup("v", "n"), 3.5)

    def test_unseen_pair(self):
        counts = PairCounts(counts={("v", "n"): 4})
        model = ClusterModel(priors=np.array([0.6, 0.4]),
                             verb_emissions=np.ones((2, 1)),
                             noun_emissions=np.ones((2, 1)),
                             verbs=("v",), nouns=("n",))
        table = build_freq_table(model, counts)
        assert_allclose(table.lookup("x", "y"), 0.6)

    def test_bounded_by_f_plus_one(self):
        model, _ = train_clusters(TOY_COUNTS, n_classes=2, seed=9,
                                  max_iterations=40)
        table = build_freq_table(model, TOY_COUNTS)
        for pair, f in TOY_COUNTS.counts.items():
            assert 0 <= table.lookup(*pair) <= f + 1

    def test_monotone_in_frequency(self):
        # For fixed posteriors f_c grows strictly with the raw count.
        model = ClusterModel(priors=np.array([0.7, 0.3]),
                             verb_emissions=np.ones((2, 1)),
                             noun_emissions=np.ones((2, 1)),
                             verbs=("v",), nouns=("n",))
        values = [build_freq_table(
            model, PairCounts(counts={("v", "n"): f})).lookup("v", "n")
            for f in range(5)]
        assert all(b > a for a, b in zip(values, values[1:]))


def _entry_with_relations(parse_relations, sentence_id="s0"):
    parses = []
    for j, rels in enumerate(parse_relations):
        parses.append(ParseRecord(parse_id=f"p{j}", relations=tuple(rels),
                                  precomputed_features={0: 1.0}))
    return SentenceEntry(sentence_id=sentence_id, tokens=("t",),
                         parses=tuple(parses))


def _table_for(values: dict) -> LexFrequencyTable:
    model, _ = train_clusters(PairCounts(counts={k: 1 for k in values}),
                              n_classes=1)
    return LexFrequencyTable(entries=dict(values), model=model)


class TestLexicalizedProperties:
    def test_tie_yields_multiple_ones(self):
        table = _table_for({("v", "a"): 3.5, ("v", "b"): 2.0, ("v", "c"): 3.5})
        entry = _entry_with_relations([
            [relation("subj", "v", "a")],
            [relation("subj", "v", "b")],
            [relation("subj", "v", "c")],
        ])
        rows = lexicalized_properties(entry, table)
        key = RelationSpec.slot_key("subj", "active", 1)
        assert [r.get(key) for r in rows] == [1, 0, 1]

    def test_single_parse_vacuous_maximum(self):
        table = _table_for({("v", "a"): 0.5})
        entry = _entry_with_relations([[relation("subj", "v", "a")]])
        rows = lexicalized_properties(entry, table)
        assert rows[0][RelationSpec.slot_key("subj", "active", 1)] == 1

    def test_parse_without_the_slot_gets_zero(self):
        table = _table_for({("v", "a"): 1.0, ("v", "b"): 2.0})
        entry = _entry_with_relations([
            [relation("subj", "v", "a")],
            [],
            [relation("subj", "v", "b")],
        ])
        rows = lexicalized_properties(entry, table)
        key = RelationSpec.slot_key("subj", "active", 1)
        assert rows[0].get(key, 0) == 0
        assert key not in rows[1]
        assert rows[2][key] == 1

    def test_at_least_one_winner_per_occupied_slot(self):
        rng = np.random.default_rng(23)
        verbs = [f"v{i}" for i in range(4)]
        nouns = [f"n{i}" for i in range(6)]
        values = {(v, n): float(rng.integers(1, 9))
                  for v in verbs for n in nouns}
        table = _table_for(values)
        spec = RelationSpec()
        for _ in range(25):
            parse_relations = []
            for _ in range(int(rng.integers(1, 5))):
                rels = []
                for _ in range(int(rng.integers(0, 3))):
                    rel_name, voice, pos = spec.slots()[
                        int(rng.integers(0, len(spec.slots())))]
                    rels.append(relation(rel_name, str(rng.choice(verbs)),
                                         str(rng.choice(nouns)), voice, pos))
                parse_relations.append(rels)
            entry = _entry_with_relations(parse_relations)
            rows = lexicalized_properties(entry, table)
            occupied = {k for row in rows for k in row}
            for key in occupied:
                winners = sum(row.get(key, 0) for row in rows)
                assert winners >= 1
                competitors = [row[key] for row in rows if key in row]
                if len([c for c in competitors if c == 1]) == 1:
                    assert winners == 1

    def test_reordering_permutes_values(self):
        table = _table_for({("v", "a"): 1.0, ("v", "b"): 2.0, ("v", "c"): 3.0})
        rels = [[relation("subj", "v", "a")],
                [relation("subj", "v", "b")],
                [relation("subj", "v", "c")]]
        rows = lexicalized_properties(_entry_with_relations(rels), table)
        rows_rev = lexicalized_properties(_entry_with_relations(rels[::-1]), table)
        assert rows == rows_rev[::-1]

    def test_undefined_voice_is_an_error(self):
        table = _table_for({("v", "a"): 1.0})
        parse = ParseRecord(
            parse_id="p0",
            relations=(relation("subj", "v", "a", voice="middle"),),
            precomputed_features={0: 1.0})
        entry = SentenceEntry(sentence_id="s0", tokens=("t",), parses=(parse,))
        with pytest.raises(DataError, match="voice"):
            lexicalized_properties(entry, table)


class TestIO:
    def test_pair_counts_round_trip(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        save_pair_counts(TOY_COUNTS, path)
        again = load_pair_counts(path)
        assert again.counts == TOY_COUNTS.counts
        assert again.verbs == TOY_COUNTS.verbs

    def test_malformed_pair_counts(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_text("eat\tapple\n")
        with pytest.raises(DataError, match="line 1"):
            load_pair_counts(path)
        path.write_text("eat\tapple\tmany\n")
        with pytest.raises(DataError, match="integer"):
            load_pair_counts(path)
        path.write_text("")
        with pytest.raises(DataError, match="empty"):
            load_pair_counts(path)

    def test_cluster_model_round_trip(self, tmp_path):
        model, _ = train_clusters(TOY_COUNTS, n_classes=2, seed=1,
                                  max_iterations=15)
        path = tmp_path / "clusters.json"
        save_cluster_model(model, path)
        again = load_cluster_model(path)
        assert np.array_equal(again.priors, model.priors)
        assert np.array_equal(again.verb_emissions, model.verb_emissions)
        assert again.verbs == model.verbs

    def test_freq_table_round_trip(self, tmp_path):
        model, _ = train_clusters(TOY_COUNTS, n_classes=2, seed=1,
                                  max_iterations=15)
        table = build_freq_table(model, TOY_COUNTS)
        path = tmp_path / "table.json"
        save_freq_table(table, path)
        again = load_freq_table(path)
        assert again.entries == table.entries
        assert_allclose(again.lookup("zz", "yy"), table.lookup("zz", "yy"))

    def test_counts_from_corpus(self):
        entry = _entry_with_relations(
            [[relation("subj", "eat", "apple")],
             [relation("subj", "eat", "apple"), relation("dobj", "eat", "pasta")]])
        corpus = build_corpus([entry])
        counts = pair_counts_from_corpus(corpus)
        assert counts.counts == {("eat", "apple"): 2, ("eat", "pasta"): 1}
