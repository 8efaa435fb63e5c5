import numpy as np
import pytest

from seqstruct.data import PreprocessConfig, Schema, parse_interactions, preprocess
from seqstruct.rules import count_ngrams, count_rules
from seqstruct.synth import SynthConfig, gen_exchangeable, gen_markov, generate, markov_successors, write_log


def matrix(log_):
    """(users, length) generator item ids, recovered from the ``i<k>`` names."""
    gen = np.array([int(name[1:]) for name in log_.item_vocab.ids])
    return np.stack([gen[s] for s in log_.sequences()])


@pytest.fixture(scope="module")
def markov_default():
    return generate(SynthConfig(kind="markov"))


@pytest.fixture(scope="module")
def exch_default():
    return generate(SynthConfig(kind="exchangeable"))


class TestConfig:
    def test_defaults(self):
        assert SynthConfig(kind="markov").n_items == 200
        assert SynthConfig(kind="exchangeable").n_items == 500

    @pytest.mark.parametrize(
        "bad",
        [{"kind": "zipf"}, {"dominant_prob": 1.0}, {"dominant_prob": 0.0}, {"n_items": 1}, {"length": 1}, {"n_users": 0}],
    )
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            SynthConfig(**bad)

    def test_subset_bounded_by_catalog(self):
        with pytest.raises(ValueError):
            SynthConfig(kind="exchangeable", n_items=10, subset_size=11)


class TestMarkov:
    def test_deterministic(self):
        cfg = SynthConfig(kind="markov", n_users=50, n_items=20, length=10, seed=3)
        a, b = gen_markov(cfg), gen_markov(cfg)
        assert a.items.tolist() == b.items.tolist() and a.item_vocab.ids == b.item_vocab.ids
        assert gen_markov(SynthConfig(kind="markov", n_users=50, n_items=20, length=10, seed=4)).items.tolist() != a.items.tolist()

    def test_successor_map_has_no_fixed_points(self):
        succ = markov_successors(SynthConfig(kind="markov", n_items=30, seed=2))
        assert sorted(succ.tolist()) == list(range(30))
        assert not np.any(succ == np.arange(30))

    def test_dominant_frequency_within_three_sigma(self, markov_default):
        cfg = SynthConfig(kind="markov")
        seq = matrix(markov_default)
        succ = markov_successors(cfg)
        follows = succ[seq[:, :-1]] == seq[:, 1:]
        n = follows.size
        sigma = np.sqrt(n * cfg.dominant_prob * (1 - cfg.dominant_prob))
        assert abs(follows.sum() - n * cfg.dominant_prob) <= 3 * sigma

    def test_no_consecutive_repeats(self, markov_default):
        seq = matrix(markov_default)
        assert not np.any(seq[:, 1:] == seq[:, :-1])

    def test_unit_spaced_timestamps(self, markov_default):
        off = markov_default.user_offsets()
        ts = markov_default.timestamps[off[0]:off[1]]
        assert ts.tolist() == list(range(50))

    def test_bigram_rules_cover_dominant_pairs(self, markov_default):
        t = count_ngrams(markov_default.sequences(), 2, markov_default.n_items)
        assert count_rules(t, 5, 0.1) >= 200

    def test_five_core_retention(self, markov_default):
        out = preprocess(markov_default, PreprocessConfig(k_core=5))
        assert out.n_users >= 0.95 * markov_default.n_users


class TestExchangeable:
    def test_deterministic(self):
        cfg = SynthConfig(kind="exchangeable", n_users=40, n_items=60, length=10, seed=1)
        assert gen_exchangeable(cfg).items.tolist() == gen_exchangeable(cfg).items.tolist()

    def test_users_stay_in_subset(self, exch_default):
        seq = matrix(exch_default)
        assert max(len(set(row.tolist())) for row in seq) <= 20

    def test_position_marginals_match(self, exch_default):
        # i.i.d. steps: same-item rate at lag 1 equals the rate at lag 10
        seq = matrix(exch_default)
        lag1 = (seq[:, 1:] == seq[:, :-1]).mean()
        lag10 = (seq[:, 10:] == seq[:, :-10]).mean()
        n = seq.shape[0] * 40
        sigma = np.sqrt(lag1 * (1 - lag1) / n)
        assert abs(lag1 - lag10) <= 4 * np.sqrt(2) * sigma

    def test_five_core_retention(self, exch_default):
        out = preprocess(exch_default, PreprocessConfig(k_core=5, dedup=False))
        assert out.n_users >= 0.95 * exch_default.n_users


def test_written_file_parses_back(tmp_path):
    log_ = generate(SynthConfig(kind="markov", n_users=5, n_items=6, length=4))
    write_log(log_, tmp_path / "s.csv")
    back = parse_interactions((tmp_path / "s.csv").read_bytes(), Schema(user="user", item="item", timestamp="timestamp", has_header=True))
    names = lambda lg: [lg.item_vocab.ids[i] for i in lg.items]
    assert names(back) == names(log_)
    assert back.timestamps.tolist() == log_.timestamps.tolist()
