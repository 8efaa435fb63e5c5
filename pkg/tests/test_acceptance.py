"""Acceptance criteria, one test each, with tolerances pinned here.

Every test prints ``CRITERION <n>: PASS|FAIL <detail>``; the lines are also
collected into the terminal summary.
"""

import json
import math
import os
import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import conftest
import gradcases
import oracles
import published
from seqstruct.config import parse_config
from seqstruct.data import PreprocessConfig, Schema, compute_stats, dedup_consecutive, from_sequences, k_core_filter, parse_interactions, preprocess, read_log
from seqstruct.diffcore import grad_check
from seqstruct.metrics import jaccard_at_k, ndcg_at_k, spearman
from seqstruct.protocol import EvalInstance, shuffle_instance
from seqstruct.report import classify, run_analysis
from seqstruct.rules import count_ngrams, count_rules, rule_shuffle_delta

GRAD_TOL = 1e-4
UNIT_TOL = 1e-6

# separation run: both default corpora, three seeds
SEPARATION_MODELS = {
    "attention": {"lr": 3e-3, "max_epochs": 40, "patience": 5},
    "recurrent": {"lr": 5e-3, "max_epochs": 40, "patience": 5},
}
SEPARATION_BUDGET_S = 30 * 60
MARKOV_NDCG_AT_MOST = -0.40
MARKOV_JACCARD_AT_MOST = 1 / 3
MARKOV_RULES_AT_MOST = -0.90
EXCH_NDCG_ABS_AT_MOST = 0.10
EXCH_JACCARD_AT_LEAST = 1 / 3

BEAUTY_ENV = "SEQSTRUCT_BEAUTY_CSV"


def verdict(n, ok, detail=""):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}".rstrip()
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_criterion_1_ngram_rule_oracle():
    rng = np.random.default_rng(2024)
    started = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        seqs = oracles.random_corpus(rng, max_users=10, max_items=8, max_len=12)
        for n in (2, 3):
            table = count_ngrams(seqs, n)
            mismatches += table.as_dict() != dict(oracles.ngrams(seqs, n))
            for s, c in ((1, 0.1), (2, 0.25), (3, 0.5), (5, 0.1), (1, 1.0)):
                mismatches += count_rules(table, s, c) != oracles.rule_count(seqs, n, s, c)
    elapsed = time.perf_counter() - started
    verdict(1, mismatches == 0 and elapsed < 10, f"mismatches={mismatches} time={elapsed:.2f}s (<10s)")


def test_criterion_2_kcore_oracle():
    rng = np.random.default_rng(7)
    started = time.perf_counter()
    bad = 0
    for _ in range(200):
        rows = oracles.random_rows(rng)
        k = int(rng.integers(1, 5))
        out = k_core_filter(parse_interactions(oracles.rows_csv(rows)), k)
        bad += oracles.log_rows(out) != Counter(oracles.kcore_rows(rows, k))
        bad += oracles.log_rows(k_core_filter(out, k)) != oracles.log_rows(out)
    elapsed = time.perf_counter() - started
    verdict(2, bad == 0 and elapsed < 10, f"mismatches={bad} time={elapsed:.2f}s (<10s)")


def test_criterion_3_dedup_cases():
    def run(seq):
        log_ = dedup_consecutive(from_sequences([seq]))
        return [log_.item_vocab.ids[i] for i in log_.items]

    a, b = run(["i", "i", "j"]), run(["i", "j", "i"])
    verdict(3, a == ["i", "j"] and b == ["i", "j", "i"], f"(i,i,j)->{tuple(a)} (i,j,i)->{tuple(b)}")


def test_criterion_4_metric_units():
    top = list(range(20))
    r2 = ndcg_at_k(top, 1)
    checks = {
        "ndcg_rank1": ndcg_at_k(top, 0) == 1.0,
        "ndcg_rank2": abs(r2 - 1 / math.log2(3)) <= UNIT_TOL and abs(r2 - 0.6309) <= 1e-4,
        "ndcg_beyond_k": ndcg_at_k(top, 10, k=10) == 0.0,
        "jaccard_identical": jaccard_at_k(top, top) == 1.0,
        "jaccard_disjoint": jaccard_at_k(range(10), range(10, 20)) == 0.0,
        "jaccard_5_of_10": abs(jaccard_at_k(range(10), range(5, 15)) - 1 / 3) <= UNIT_TOL,
        "spearman_identity": abs(spearman([1, 2, 3, 4], [1, 2, 3, 4]) - 1.0) <= UNIT_TOL,
        "spearman_reverse": abs(spearman([1, 2, 3, 4], [4, 3, 2, 1]) + 1.0) <= UNIT_TOL,
        "spearman_swap": abs(spearman([1, 2, 3], [1, 3, 2]) - 0.5) <= UNIT_TOL,
    }
    failed = [k for k, ok in checks.items() if not ok]
    verdict(4, not failed, f"{len(checks) - len(failed)}/{len(checks)} exact" + (f" failed={failed}" if failed else ""))


def test_criterion_5_gradient_checks():
    started = time.perf_counter()
    errors = {name: grad_check(f, p, step=1e-5, max_coords=30) for name, (f, p) in gradcases.op_cases().items()}
    errors["gru_cell"] = grad_check(*gradcases.gru_cell_case(), step=1e-5, max_coords=None)
    errors["attention_block"] = grad_check(*gradcases.attention_block_case(), step=1e-5, max_coords=30)
    elapsed = time.perf_counter() - started
    worst = max(errors, key=errors.get)
    ok = errors[worst] < GRAD_TOL and elapsed < 60
    verdict(5, ok, f"{len(errors)} checks, worst {worst}={errors[worst]:.2e} (<{GRAD_TOL:g}) time={elapsed:.1f}s (<60s)")


_shuffle_counter = {"n": 0, "bad": 0}


@settings(max_examples=1000, database=None)
@given(
    st.integers(0, 100_000),
    st.lists(st.integers(0, 40), min_size=1, max_size=30),
    st.integers(0, 40),
    st.integers(0, 2**32 - 1),
)
def _shuffle_property(user, items, target, seed):
    inst = EvalInstance(user, tuple(items), target)
    out = shuffle_instance(inst, seed)
    ok = (
        out.target == target
        and out.user == user
        and Counter(out.input) == Counter(items)
        and out == shuffle_instance(inst, seed)
        and (len(items) > 1 or out == inst)
    )
    _shuffle_counter["n"] += 1
    _shuffle_counter["bad"] += not ok


def test_criterion_6_shuffle_invariants():
    _shuffle_counter.update(n=0, bad=0)
    _shuffle_property()
    singles = all(shuffle_instance(EvalInstance(u, (u % 9,), 1), u) == EvalInstance(u, (u % 9,), 1) for u in range(200))
    n, bad = _shuffle_counter["n"], _shuffle_counter["bad"]
    verdict(6, bad == 0 and n >= 1000 and singles, f"instances={n} violations={bad} length1_identity={singles}")


@pytest.fixture(scope="module")
def separation(tmp_path_factory):
    raw = {
        "schema_version": 1,
        "seeds": [0, 1, 2],
        "models": SEPARATION_MODELS,
        "datasets": [
            {"name": "markov", "synth": {"kind": "markov"}},
            {"name": "exchangeable", "synth": {"kind": "exchangeable"}, "preprocess": {"dedup": False}},
        ],
    }
    started = time.perf_counter()
    rep = run_analysis(parse_config(raw), tmp_path_factory.mktemp("separation"))
    return rep, time.perf_counter() - started


@pytest.mark.slow
def test_criterion_7_synthetic_separation(separation):
    rep, elapsed = separation
    ds = {d["name"]: d for d in rep["datasets"]}
    assert all(d["status"] == "ok" for d in ds.values()), ds
    parts, ok = [], elapsed <= SEPARATION_BUDGET_S
    for arch in ("attention", "recurrent"):
        m, e = ds["markov"]["models"][arch], ds["exchangeable"]["models"][arch]
        ok &= m["ndcg_change"] <= MARKOV_NDCG_AT_MOST and m["jaccard"] <= MARKOV_JACCARD_AT_MOST
        ok &= abs(e["ndcg_change"]) <= EXCH_NDCG_ABS_AT_MOST and e["jaccard"] >= EXCH_JACCARD_AT_LEAST
        parts.append(
            f"{arch}: markov ndcg {m['ndcg_change']:+.1%} jac {m['jaccard']:.3f} | "
            f"exch ndcg {e['ndcg_change']:+.1%} jac {e['jaccard']:.3f}"
        )
    rules = {n: r["relative_change"] for n, r in ds["markov"]["rules"].items()}
    ok &= all(v is not None and v <= MARKOV_RULES_AT_MOST for v in rules.values())
    parts.append("markov rules " + " ".join(f"{n}-gram {v:+.1%}" for n, v in sorted(rules.items())))
    verdict(7, bool(ok), "; ".join(parts) + f"; time={elapsed / 60:.1f}min (<=30)")


@pytest.mark.slow
def test_synthetic_ranks_and_flags(separation):
    rep, _ = separation
    ranks = rep["ranks"]
    j = ranks["names"].index("markov")
    assert all(r[j] == 1.0 for r in ranks["ranks"].values())
    exch = next(d for d in rep["datasets"] if d["name"] == "exchangeable")
    flags = exch["flags"]
    assert any(flags[f"{a}_ndcg_change"] for a in ("attention", "recurrent"))
    assert any(flags[f"{a}_jaccard"] for a in ("attention", "recurrent"))
    assert any(flags[k] for k in flags if k.startswith("rules_"))
    assert exch["verdict"] == "weak"


def test_criterion_8_classification():
    expected = {**{n: "weak" for n in published.WEAK}, **{n: "strong" for n in published.STRONG}}
    got = {n: classify(published.row(n))[0] for n in expected}
    wrong = {n: v for n, v in got.items() if v != expected[n]}
    verdict(8, not wrong, f"{len(expected) - len(wrong)}/{len(expected)} rows match" + (f" wrong={wrong}" if wrong else ""))


@pytest.mark.network
def test_criterion_9_beauty():
    path = os.environ.get(BEAUTY_ENV)
    if not path or not os.path.exists(path):
        line = f"CRITERION 9: SKIP set {BEAUTY_ENV} to a local ratings_Beauty.csv"
        print(line)
        conftest.ACCEPTANCE_LINES.append(line)
        pytest.skip(f"{BEAUTY_ENV} not set")
    started = time.perf_counter()
    log_ = preprocess(read_log(path, Schema(user=0, item=1, timestamp=3)), PreprocessConfig(k_core=5))
    s = compute_stats(log_)
    rules = rule_shuffle_delta(log_, 2, seeds=[0, 1, 2, 3, 4])
    elapsed = time.perf_counter() - started
    within = lambda got, want, tol: abs(got - want) <= tol * want
    ok = (
        within(s.n_users, 22363, 0.01)
        and within(s.n_items, 11147, 0.01)
        and within(s.n_interactions, 198502, 0.01)
        and within(rules.rules_before, 443, 0.10)
        and rules.relative_change is not None
        and rules.relative_change <= -0.90
        and elapsed <= 15 * 60
    )
    verdict(
        9,
        ok,
        f"users={s.n_users} items={s.n_items} interactions={s.n_interactions} "
        f"rules_before={rules.rules_before} change={rules.relative_change:+.1%} time={elapsed:.0f}s",
    )


def test_criterion_10_determinism(tmp_path):
    raw = {
        "schema_version": 1,
        "seeds": [0, 1],
        "models": {
            "attention": {"hidden": 16, "blocks": 1, "max_len": 20, "max_epochs": 3, "patience": 2},
            "recurrent": {"hidden": 16, "max_len": 20, "max_epochs": 3, "patience": 2},
        },
        "datasets": [
            {"name": "markov", "synth": {"kind": "markov", "n_users": 200, "n_items": 30, "length": 20}},
            {"name": "exchangeable", "synth": {"kind": "exchangeable", "n_users": 200, "n_items": 60, "length": 20}, "preprocess": {"dedup": False}},
        ],
    }
    run_analysis(parse_config(raw), tmp_path / "a")
    run_analysis(parse_config(raw), tmp_path / "b")
    same = {
        name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("report.json", "records.jsonl", "table_models.csv", "table_rules.csv")
    }
    ok_json = json.loads((tmp_path / "a" / "report.json").read_text())["datasets"][0]["status"] == "ok"
    verdict(10, all(same.values()) and ok_json, " ".join(f"{k}={'identical' if v else 'DIFFERENT'}" for k, v in same.items()))
