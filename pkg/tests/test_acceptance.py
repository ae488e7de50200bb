"""Acceptance criteria for the toolkit, one test per criterion.

Run with ``pytest tests/test_acceptance.py``; a PASS/FAIL line per
criterion is printed in the ``acceptance criteria`` summary section.
"""

import os
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from nrplm import numerics as nx
from nrplm.cli import bundled_sweeps
from nrplm.config import ExperimentConfig
from nrplm.energy import param_count
from nrplm.evaluation import load_sweep, perplexity, run_sweep
from nrplm.experiment import load_dataset, run_experiment
from nrplm.model_baseline import BaselineLM
from nrplm.model_nrp import NRPLM
from nrplm.random_index import histogram_stats, inner_product_histogram
from nrplm.synthetic import write_corpus
from nrplm.trainer import TrainConfig, TrainState, end_of_epoch

from conftest import identity_lookup, randomize
from gradcheck import max_relative_error

acceptance = pytest.mark.acceptance


@acceptance("gradient correctness")
def test_gradient_correctness(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(3):
        base = randomize(BaselineLM.create(5, 4, 3, 3, rng, dtype=np.float64), rng)
        nrp = randomize(NRPLM.create(6, 5, 2, 4, 3, 3, rng, index_seed=int(rng.integers(1e6)),
                                     dtype=np.float64), rng)
        for model, V in ((base, 5), (nrp, 6)):
            ctx, tgt = rng.integers(0, V, (8, 2)), rng.integers(0, V, 8)
            worst = max(worst, max_relative_error(model, ctx, tgt))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max rel err {worst:.2e}, {elapsed:.2f}s")
    assert worst <= 1e-4 and elapsed < 10


@acceptance("baseline-reduction oracle")
def test_baseline_reduction(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(100):
        V = int(rng.integers(2, 9))
        n = int(rng.integers(2, 5))
        base = randomize(BaselineLM.create(V, 4, 3, n, rng, dtype=np.float64), rng)
        nrp = NRPLM(base.copy_params(), n, identity_lookup(V), V)
        ctx, tgt = rng.integers(0, V, (16, n - 1)), rng.integers(0, V, 16)
        pb, pn = base.forward(ctx).probabilities, nrp.forward(ctx).probabilities
        _, gb = base.loss_and_backward(ctx, tgt)
        _, gn = nrp.loss_and_backward(ctx, tgt)
        worst = max(worst, float(np.abs(pb - pn).max()),
                    *(float(np.abs(gb[k] - gn[k]).max()) for k in gb))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"max abs diff {worst:.1e} over 100 batches, {elapsed:.2f}s")
    assert worst <= 1e-6 and elapsed < 30


@acceptance("normalization")
def test_normalization(record_property):
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(10_000):
        V = int(rng.integers(1, 40))
        n = int(rng.integers(2, 5))
        m, h = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        act = nx.ACTIVATIONS[i % 4]
        dtype = np.float32 if i % 2 else np.float64
        if i % 3:
            model = BaselineLM.create(V, m, h, n, rng, act, dtype)
        else:
            k = int(rng.integers(1, 12))
            model = NRPLM.create(V, k, int(rng.integers(1, k + 1)), m, h, n, rng,
                                 index_seed=i, activation=act, dtype=dtype)
        randomize(model, rng, scale=float(rng.choice([0.01, 1.0, 5.0])))
        P = model.forward(rng.integers(0, V, (3, n - 1))).probabilities
        worst = max(worst, float(np.abs(P.astype(np.float64).sum(axis=1) - 1).max()))
    ppl_err = 0.0
    for V in (10, 2000, 10_000):
        zero = BaselineLM.create(V, 3, 2, 3, rng)
        for p in zero.params.values():
            p[...] = 0
        rep = perplexity(zero, rng.integers(0, V, (500, 3)))
        ppl_err = max(ppl_err, abs(rep.corpus_ppl / V - 1), abs(rep.mean_batch_ppl / V - 1))
    record_property("detail", f"max |sum-1| {worst:.1e}; uniform PPL rel err {ppl_err:.1e}")
    # "exactly |V|" is read as equality up to float64 rounding of exp(ln V)
    assert worst <= 1e-6 and ppl_err <= 1e-12


# (bundled sweep, k or |V|, m, h, reference #p in millions); baseline rows use |V| = 10,000
REFERENCE_P = [
    ("table1", 5000, 128, 256, 0.8), ("table1", 5000, 256, 256, 1.6), ("table1", 5000, 512, 256, 3.2),
    ("table1", 5000, 1024, 256, 6.3), ("table1", 7500, 128, 256, 1.1), ("table1", 7500, 256, 256, 1.6),
    ("table1", 7500, 512, 256, 3.2), ("table1", 7500, 1024, 256, 8.9), ("table1", 10000, 128, 256, 1.4),
    ("table1", 10000, 256, 256, 2.8), ("table1", 10000, 512, 256, 5.7), ("table1", 10000, 1024, 256, 11),
    ("table1/baseline", 10000, 128, 256, 1.4),
    ("table2", 5000, 128, 256, 0.8), ("table2", 7500, 128, 256, 1.1), ("table2", 10000, 128, 256, 1.4),
    ("table2/baseline", 10000, 128, 256, 1.4),
    ("table3/baseline", 10000, 256, 256, 2.8), ("table3/baseline", 10000, 256, 512, 3.2),
    ("table3/baseline", 10000, 512, 256, 5.8), ("table3/baseline", 10000, 512, 512, 6.4),
    ("table4", 5000, 256, 256, 1.6), ("table4", 5000, 256, 512, 1.9), ("table4", 5000, 512, 256, 3.2),
    ("table4", 5000, 512, 512, 3.8), ("table4", 7500, 256, 256, 2.2), ("table4", 7500, 256, 512, 2.5),
    ("table4", 7500, 512, 256, 4.4), ("table4", 7500, 512, 512, 5.1),
]


@acceptance("parameter-count table")
@pytest.mark.xfail(strict=True, reason="the reference #p column is not reproducible by any single "
                   "rounding of the formula: duplicated rows and one config printed as both 5.7 and 5.8")
def test_parameter_count_table(record_property):
    bad = []
    for grid, x, m, h, expected in REFERENCE_P:
        got = round(param_count(x, m, 5, h) / 1e6, 1)
        if got != expected:
            bad.append(f"{grid} x={x} m={m} h={h}: {got} vs {expected}")
    record_property("detail", f"{len(REFERENCE_P) - len(bad)}/{len(REFERENCE_P)} cells match"
                    + (f"; first mismatch {bad[0]}" if bad else ""))
    assert not bad


@acceptance("random-index statistics")
def test_random_index_statistics(record_property):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    fractions, within = [], []
    for s in (2, 8, 16):
        st = histogram_stats(inner_product_histogram(1000, s, "ternary", 100_000, rng))
        within.append(abs(st["mean"]) <= 3 * st["stderr"])
        fractions.append(st["nonzero_fraction"])
    binary_min = min(inner_product_histogram(1000, 8, "binary", 100_000, rng))
    elapsed = time.perf_counter() - t0
    increasing = fractions[0] < fractions[1] < fractions[2]
    record_property("detail", "nonzero fractions " + ", ".join(f"{f:.4f}" for f in fractions)
                    + f"; binary min dot {binary_min}; {elapsed:.1f}s")
    assert all(within) and increasing and binary_min >= 0 and elapsed < 60


@acceptance("trainer protocol")
def test_trainer_protocol(record_property):
    c = TrainConfig()
    scripts = [
        # (val ppl sequence, expected lr after each epoch, patience_left, converged)
        ([150, 140], [0.5, 0.5], [3, 3], [False, False]),
        ([100, 110, 120, 130], [0.5, 0.25, 0.125, 0.0625], [3, 2, 1, 0], [False, False, False, True]),
        ([100, 100], [0.5, 0.25], [3, 2], [False, False]),
        ([100, 101, 99, 99.5, 98, 98, 98, 98],
         [0.5, 0.25, 0.25, 0.125, 0.125, 0.0625, 0.03125, 0.015625],
         [3, 2, 3, 2, 3, 2, 1, 0], [False] * 7 + [True]),
    ]
    checked = 0
    for vals, lrs, pats, conv in scripts:
        state, saved = TrainState.initial(c), []
        for v, lr, pat, cv in zip(vals, lrs, pats, conv):
            state = end_of_epoch(state, float(v), c, lambda s: saved.append(s.best_val_ppl))
            assert (state.lr, state.patience_left, state.converged) == (lr, pat, cv)
            checked += 1
        assert all(a > b for a, b in zip(saved, saved[1:]))
    record_property("detail", f"{checked} scripted epoch-ends matched")


def _trend_data(tmp_path_factory):
    root = Path(os.environ.get("NRPLM_TREND_CORPUS") or tmp_path_factory.mktemp("synthetic"))
    if not (root / "train.txt").exists():
        write_corpus(root, train_tokens=50_000, valid_tokens=5_000, test_tokens=5_000, seed=0)
    return root


@acceptance("scaled-down decay trend")
@pytest.mark.slow
def test_decay_trend(record_property, tmp_path_factory):
    root = _trend_data(tmp_path_factory)
    overrides = {"train_path": str(root / "train.txt"), "valid_path": str(root / "valid.txt"),
                 "test_path": str(root / "test.txt")}
    specs = load_sweep(bundled_sweeps()["trend"], overrides)
    for spec in specs:
        if spec.name == "nrp_k":
            spec.axes["k"] = (200, 1600)
    data = load_dataset(specs[0].base)
    assert len(data.vocab) == 2000 and 45_000 <= len(data.train) <= 60_000
    t0 = time.perf_counter()
    result = run_sweep(specs, data)
    elapsed = time.perf_counter() - t0
    ppl = {("baseline" if r["model"] == "baseline" else r["k"]): r["ppl_mean"] for r in result.rows}
    best_nrp = min(ppl[200], ppl[1600])
    record_property("detail", f"k=200 {ppl[200]:.1f}, k=1600 {ppl[1600]:.1f}, "
                    f"baseline {ppl['baseline']:.1f} (limit {1.15 * best_nrp:.1f}); "
                    f"{elapsed / 60:.1f} min")
    assert not result.failed
    assert ppl[200] > ppl[1600]
    assert ppl["baseline"] <= 1.15 * best_nrp
    assert elapsed < 30 * 60


@acceptance("determinism")
def test_determinism(record_property, toy_corpus):
    logs = []
    for model in ("baseline", "nrp"):
        cfg = ExperimentConfig(train_path=str(toy_corpus["train"]), valid_path=str(toy_corpus["valid"]),
                               test_path=str(toy_corpus["test"]), model=model, vocab_size=20,
                               m=6, h=6, n=4, k=10, s=2, dropout=0.2, batch_size=16, max_epochs=4,
                               dtype="float64", seed=5, init_range=0.1)
        data = load_dataset(cfg)
        a = run_experiment(cfg, data).train.log_lines
        b = run_experiment(cfg, data).train.log_lines
        logs.append(a == b)
    record_property("detail", "epoch logs bit-identical for baseline and nrp")
    assert all(logs)


@acceptance("full PTB reproduction (optional, not gating)")
@pytest.mark.slow
def test_full_ptb(record_property):
    root = os.environ.get("NRPLM_PTB_DIR")
    if not root:
        pytest.skip("set NRPLM_PTB_DIR to a directory holding ptb.{train,valid,test}.txt")
    paths = {s: str(Path(root) / f"ptb.{s}.txt") for s in ("train", "valid", "test")}
    base = ExperimentConfig(train_path=paths["train"], valid_path=paths["valid"],
                            test_path=paths["test"], m=128, h=256, dropout=0.05)
    data = load_dataset(base)
    b = run_experiment(base.replace(model="baseline"), data).test.mean_batch_ppl
    n = run_experiment(base.replace(model="nrp", k=10_000, s=8), data).test.mean_batch_ppl
    record_property("detail", f"baseline {b:.1f} (141 +- 10), nrp {n:.1f} (164 +- 12)")
    assert abs(b - 141) <= 10 and abs(n - 164) <= 12
