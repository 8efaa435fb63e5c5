import logging
from itertools import permutations

import numpy as np
import pytest

from seqstruct.diffcore import Tensor, no_grad, ops
from seqstruct.metrics import evaluate_split
from seqstruct.models import (
    AttentionModel,
    ConfigError,
    ModelHParams,
    RecurrentModel,
    build_model,
    load_model,
    make_batch,
    recommend_top_k,
    train,
    training_windows,
)
from seqstruct.protocol import EvalInstance, SplitBundle, build_split
from seqstruct.synth import SynthConfig, generate, markov_successors

MARKOV = SynthConfig(kind="markov", n_users=600, n_items=40, length=30, seed=0)


def small(arch, **kw):
    base = dict(architecture=arch, hidden=16, blocks=1, max_len=20, batch=64, dropout=0.0, lr=5e-3)
    base.update(kw)
    return ModelHParams(**base)


def tiny_split(n_users=20, n_items=10, length=8, val=True):
    rng = np.random.default_rng(0)
    train_seqs = {u: rng.integers(0, n_items, size=length) for u in range(n_users)}
    val_inst = [EvalInstance(100 + j, tuple(rng.integers(0, n_items, size=4).tolist()), int(rng.integers(n_items))) for j in range(5)]
    return SplitBundle(train_seqs, val_inst if val else [], [], 0.0, n_items)


@pytest.fixture(scope="module")
def markov():
    log_ = generate(MARKOV)
    split = build_split(log_, q=0.9, val_user_fraction=0.1, seed=0)
    gen_id = np.array([int(name[1:]) for name in log_.item_vocab.ids])
    to_index = {g: j for j, g in enumerate(gen_id.tolist())}
    succ = markov_successors(MARKOV)
    dominant = np.array([to_index[succ[g]] for g in gen_id])
    models = {}
    for arch in ("recurrent", "attention"):
        hp = small(arch, max_epochs=30, patience=5)
        models[arch] = train(build_model(hp, log_.n_items + 1), split)
    return split, dominant, models


class TestBuild:
    def test_attention_parameter_count(self):
        model = build_model(ModelHParams(architecture="attention"), 1001)
        d, L = 64, 128
        per_block = 4 * (d * d + d) + 2 * (d * d + d) + 2 * 2 * d
        assert model.num_parameters() == 1001 * d + L * d + 2 * per_block + 2 * d
        assert model.num_parameters() == AttentionModel.parameter_count(1001, 64, 128, 2)

    def test_recurrent_parameter_count(self):
        model = build_model(ModelHParams(architecture="recurrent"), 1001)
        h = 64
        gru = 3 * h * h * 2 + 3 * h * 2
        assert model.num_parameters() == 1001 * h + gru + h * 1001 + 1001
        assert model.num_parameters() == RecurrentModel.parameter_count(1001, 64, 1)

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ConfigError):
            ModelHParams(hidden=64, heads=3)

    @pytest.mark.parametrize("bad", [{"architecture": "cnn"}, {"max_len": 0}, {"dropout": 1.0}, {"dtype": "float16"}])
    def test_invalid_hparams(self, bad):
        with pytest.raises(ConfigError):
            ModelHParams(**bad)

    def test_catalog_needs_padding_and_item(self):
        with pytest.raises(ConfigError):
            build_model(ModelHParams(), 1)

    @pytest.mark.parametrize("arch", ["attention", "recurrent"])
    def test_same_seed_identical(self, arch):
        a = build_model(small(arch, seed=4), 30).state_arrays()
        b = build_model(small(arch, seed=4), 30).state_arrays()
        c = build_model(small(arch, seed=5), 30).state_arrays()
        assert all((a[n] == b[n]).all() for n in a)
        assert any((a[n] != c[n]).any() for n in a)

    @pytest.mark.parametrize("arch", ["attention", "recurrent"])
    def test_padding_embedding_zero(self, arch):
        assert (build_model(small(arch), 12).params["item_emb"].data[0] == 0).all()


class TestBatches:
    def test_shift_by_one(self):
        windows = training_windows([np.array([4, 5, 6, 7]), np.array([1, 2])], max_len=10)
        x, y = make_batch(windows)
        assert x.tolist() == [[5, 6, 7], [0, 0, 2]]
        assert y.tolist() == [[6, 7, 8], [0, 0, 3]]
        real = x[:, :-1] != 0
        assert (y[:, :-1][real] == x[:, 1:][real]).all()

    def test_truncates_to_max_len_plus_one(self):
        (w,) = training_windows([np.arange(10)], max_len=3)
        assert w.tolist() == [7, 8, 9, 10]

    def test_short_sequences_dropped(self):
        assert training_windows([np.array([3]), np.array([], dtype=np.int64)], 5) == []


class TestScoring:
    def test_causal_integrity(self):
        model = build_model(small("attention", seed=1), 30)
        a = np.array([[0, 3, 4, 5, 6, 7]])
        b = np.array([[0, 3, 4, 9, 1, 2]])
        with no_grad():
            ha, hb = model.hidden(a).data, model.hidden(b).data
        np.testing.assert_allclose(ha[:, :3], hb[:, :3], atol=1e-6)
        assert not np.allclose(ha[:, 3:], hb[:, 3:])

    @pytest.mark.parametrize("arch", ["attention", "recurrent"])
    def test_only_last_max_len_items_matter(self, arch):
        model = build_model(small(arch, max_len=4, seed=2), 20)
        tail = [5, 6, 7, 8]
        a = model.score_next([1, 2, 3] + tail)
        b = model.score_next([9, 0, 11] + tail)
        assert (a == b).all()
        assert not (model.score_next([1, 2, 3, 5, 6, 7]) == model.score_next(tail)).all()

    def test_recurrent_single_item_readout(self):
        model = build_model(small("recurrent", seed=3), 15)
        first = model.score_next([4])
        assert (first == model.score_next([4])).all()
        p = model.params
        with no_grad():
            x = Tensor(p["item_emb"].data[5][None, None])
            h = ops.gru(x, p["gru0.w_ih"], p["gru0.w_hh"], p["gru0.b_ih"], p["gru0.b_hh"])
            expected = ops.linear(Tensor(h.data[:, -1]), p["out.w"], p["out.b"]).data[0, 1:]
        np.testing.assert_allclose(first, expected, atol=1e-5)

    def test_score_vector_excludes_padding(self):
        model = build_model(small("attention"), 13)
        assert model.score_next([1, 2]).shape == (12,)

    def test_unseen_items_dropped(self):
        model = build_model(small("recurrent"), 6)
        model.seen = np.array([True, False, True, True, True])
        assert model.prepare_input([1, 0, 1]) == [0]
        assert model.score_next([1, 1]) is None
        assert recommend_top_k(model, EvalInstance(0, (1,), 2), 3) is None

    def test_tie_goes_to_lower_index(self):
        model = build_model(small("recurrent"), 21)
        model.score_next = lambda items: _scores_with_tie()
        assert model.recommend(0, [1], 5).items[:3] == (0, 7, 12)
        assert model.recommend(0, [1], 2).items == (0, 7)

    def test_k_larger_than_catalog(self):
        model = build_model(small("attention"), 9)
        rec = recommend_top_k(model, EvalInstance(0, (1, 2), 3), 50)
        assert sorted(rec.items) == list(range(8))
        assert list(rec.scores) == sorted(rec.scores, reverse=True)

    def test_k_must_be_positive(self):
        with pytest.raises(ValueError):
            build_model(small("attention"), 9).recommend(0, [1], 0)

    def test_checkpoint_roundtrip(self, tmp_path):
        model = build_model(small("attention", seed=8), 11)
        model.seen[3] = False
        model.save(tmp_path / "m.npz")
        back = load_model(tmp_path / "m.npz")
        assert back.hparams == model.hparams
        assert (back.seen == model.seen).all()
        assert (back.score_next([1, 2, 4]) == model.score_next([1, 2, 4])).all()


def _scores_with_tie():
    s = np.linspace(0.0, 0.5, 20)
    s[[7, 12]] = 2.0
    s[0] = 3.0
    return s


class TestTraining:
    def test_deterministic_loss_trace(self):
        hp = small("attention", max_epochs=3, patience=3)
        a = train(build_model(hp, 11), tiny_split())
        b = train(build_model(hp, 11), tiny_split())
        assert [h["loss"] for h in a.history] == [h["loss"] for h in b.history]
        assert all(np.isfinite(p.data).all() for p in a.parameter_list())

    def test_empty_validation_runs_max_epochs(self, caplog):
        hp = small("recurrent", max_epochs=4, patience=1)
        with caplog.at_level(logging.WARNING):
            model = train(build_model(hp, 11), tiny_split(val=False))
        assert len(model.history) == 4
        assert model.best_epoch == 3
        assert "empty validation set" in caplog.text

    def test_needs_training_pairs(self):
        split = SplitBundle({0: np.array([1])}, [], [], 0.0, 5)
        with pytest.raises(ValueError):
            train(build_model(small("recurrent"), 6), split)

    def test_seen_mask_from_train(self):
        split = tiny_split(n_items=12)
        split.train_sequences = {0: np.array([0, 1, 2]), 1: np.array([2, 3])}
        model = train(build_model(small("recurrent", max_epochs=1), 13), split)
        assert model.seen.tolist() == [True] * 4 + [False] * 8


class TestMarkov:
    def test_recurrent_hits(self, markov):
        split, _, models = markov
        assert len(models["recurrent"].history) <= 30
        assert evaluate_split(models["recurrent"], split.val_instances, k=10).hr >= 0.6

    @pytest.mark.parametrize("arch", ["recurrent", "attention"])
    def test_best_epoch_restored(self, markov, arch):
        split, _, models = markov
        model = models[arch]
        best = max(h["val_ndcg"] for h in model.history)
        assert model.history[model.best_epoch]["val_ndcg"] == best
        assert evaluate_split(model, split.val_instances).ndcg == pytest.approx(best, abs=1e-12)

    @pytest.mark.parametrize("arch", ["recurrent", "attention"])
    def test_top1_is_dominant_successor(self, markov, arch):
        split, dominant, models = markov
        hits = [recommend_top_k(models[arch], inst, 1).items[0] == dominant[inst.input[-1]] for inst in split.test_instances]
        assert np.mean(hits) >= 0.7

    def test_attention_permutation_sensitive(self, markov):
        split, _, models = markov
        model = models["attention"]
        items = list(split.test_instances[0].input[-3:])
        tops = {int(np.argmax(model.score_next(list(p)))) for p in permutations(items)}
        assert len(tops) > 1

    def test_seen_items_not_excluded(self, markov):
        split, dominant, models = markov
        model = models["recurrent"]
        # a history that ends with i's predecessor and contains i itself
        i = int(dominant[0])
        rec = model.recommend(0, [i, 0], 10)
        assert i in rec.items
