"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -s`` or
``python tests/test_acceptance.py``. The lines are also repeated in the
terminal summary of any pytest run that includes this module.
"""

import statistics
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from lorasculpt.adapter import LoraAdapter
from lorasculpt.cli import main
from lorasculpt.numcore import RandomStream
from lorasculpt.regularizer import cmr_frobenius, cmr_frobenius_grad, cmr_l1, cmr_l1_grad
from lorasculpt.tasks import make_tasks
from lorasculpt.theory import (BERNOULLI, SparsitySpec, expected_product_sparsity,
                               monte_carlo_validate)
from lorasculpt.trainer import (TrainConfig, dare_delta, evaluate, pretrain_base,
                                train_baseline, train_lorasculpt)

from conftest import random_matrix, record_criterion
from gradcheck import fd_grads, rel_error

SEEDS = range(5)
_bases = {}
_runs = {}


def base_for(seed):
    if seed not in _bases:
        cfg = TrainConfig(seed=seed)
        task = make_tasks(seed)
        _bases[seed] = (task, pretrain_base(seed, task, cfg.arch(task), cfg.pretrain_steps,
                                            cfg.pretrain_lr))
    return _bases[seed]


def run(seed, baseline, **kw):
    """Base evaluation and tuned evaluation for one (seed, baseline) pair, cached."""
    key = (seed, baseline, tuple(sorted(kw.items())))
    if key not in _runs:
        task, base = base_for(seed)
        cfg = replace(TrainConfig(seed=seed, baseline=baseline), **kw)
        tuned, _ = train_baseline(base, task, cfg)
        _runs[key] = (evaluate(base, task), evaluate(tuned, task))
    return _runs[key]


def test_c1_expected_sparsity():
    t0 = time.perf_counter()
    spec = SparsitySpec(256, 256, 16, 0.1, 0.1, BERNOULLI)
    rep = monte_carlo_validate(42, spec, 200, 0.05)
    elapsed = time.perf_counter() - t0
    target = 1 - 0.99 ** 16
    ok = abs(rep.empirical_mean - target) <= 0.01 and elapsed < 10
    assert rep.expected_sparsity == pytest.approx(0.148542, abs=5e-7)
    record_criterion(1, ok, f"mean={rep.empirical_mean:.6f} target={target:.6f} tol=0.01 "
                            f"time={elapsed:.2f}s (<10s)")
    assert ok


def test_c2_concentration():
    t0 = time.perf_counter()
    spec = SparsitySpec(2048, 2048, 8, 0.1, 0.1, BERNOULLI)
    rep = monte_carlo_validate(42, spec, 100, 0.12)
    elapsed = time.perf_counter() - t0
    ok = (rep.violations == 0 and elapsed < 60
          and rep.bound == pytest.approx(0.0501, abs=5e-5))
    record_criterion(2, ok, f"bound={rep.bound:.4f} violations={rep.violations}/100 "
                            f"centre={rep.expected_sparsity:.6f} max_dev="
                            f"{max(abs(v - rep.expected_sparsity) for v in rep.per_trial):.4f} "
                            f"time={elapsed:.2f}s (<60s)")
    assert ok


def test_c3_heterogeneous_jensen():
    spec = SparsitySpec(512, 512, 8, 0.1, 0.1, BERNOULLI, heterogeneous=True)
    rep = monte_carlo_validate(42, spec, 100, 0.05)
    limit = expected_product_sparsity(SparsitySpec(512, 512, 8, 0.1, 0.1)) + 0.01
    ok = rep.empirical_mean <= limit
    record_criterion(3, ok, f"mean={rep.empirical_mean:.6f} limit={limit:.6f}")
    assert ok


def test_c4_gradients():
    worst = 0.0
    stream = RandomStream(2024, 0)
    for i in range(100):
        p, q = (1 + int(v) for v in stream.integers(2, 8))
        r = 1 + int(stream.integers(1, min(p, q, 4))[0])
        ad = LoraAdapter(random_matrix(i, p, r, 1), random_matrix(i, r, q, 2))
        m = np.abs(np.tanh(random_matrix(i, p, q, 3)))
        for penalty, grad in ((cmr_frobenius, cmr_frobenius_grad), (cmr_l1, cmr_l1_grad)):
            g = grad(m, ad)
            fb, fa = fd_grads(lambda a: penalty(m, a), ad, h=1e-6)
            worst = max(worst, rel_error(g.grad_B, fb), rel_error(g.grad_A, fa))
    ok = worst < 1e-5
    record_criterion(4, ok, f"max_rel_error={worst:.2e} over 100 instances x 2 variants (<1e-5)")
    assert ok


def test_c5_algorithm_invariants(default_setup):
    cfg, task, base = default_setup
    w0_before = [l.w0.tobytes() for l in base.layers]
    leaks = []

    def watch(step, model):
        if step < cfg.warmup:
            return
        for i, layer in enumerate(model.layers):
            ad = layer.adapter
            if ad.has_masks and (ad.B[ad.mask_B == 0].any() or ad.A[ad.mask_A == 0].any()):
                leaks.append((step, i))

    tuned, _ = train_lorasculpt(base, task, cfg, on_step=watch)
    same_w0 = (w0_before == [l.w0.tobytes() for l in base.layers]
               == [l.w0.tobytes() for l in tuned.layers])
    masked_layers = sum(l.adapter.has_masks for l in tuned.layers)

    # the default layers are at most 32 wide, so (c) is also run on a 64-wide variant
    wide_cfg = TrainConfig(seed=0, hidden_dims=(64, 64))
    wide_base = pretrain_base(0, task, wide_cfg.arch(task), wide_cfg.pretrain_steps,
                              wide_cfg.pretrain_lr)
    wide, _ = train_lorasculpt(wide_base, task, wide_cfg)
    checked = []
    for model in (tuned, wide):
        rep = evaluate(model, task)
        for (p, q, r), act, exp in zip(rep.layer_shapes, rep.layer_sparsity,
                                       rep.layer_expected):
            if p >= 64 and q >= 64:
                checked.append((act, exp))
    ok_c = bool(checked) and all(act <= exp + 0.1 for act, exp in checked)
    ok = same_w0 and not leaks and masked_layers > 0 and ok_c
    detail = ", ".join(f"{a:.4f}<={e + 0.1:.4f}" for a, e in checked)
    record_criterion(5, ok, f"(a) W0 identical={same_w0} (b) mask leaks={len(leaks)} "
                            f"(c) {detail}")
    assert ok


def test_c6_reduction(default_setup):
    cfg, task, base = default_setup
    reduced = replace(cfg, retained_density=1.0, alpha=0.0, beta=0.0)
    _, t_sculpt = train_lorasculpt(base, task, reduced)
    _, t_lora = train_baseline(base, task, replace(reduced, baseline="lora"))
    ok = [r.as_tuple() for r in t_sculpt] == [r.as_tuple() for r in t_lora]
    record_criterion(6, ok, f"{len(t_sculpt)} trace rows bitwise identical={ok}")
    assert ok


def test_c7_forgetting_ordering():
    t0 = time.perf_counter()
    drops_s, drops_l, tgt_s, tgt_l = [], [], [], []
    for seed in SEEDS:
        before, sculpt = run(seed, "lorasculpt")
        _, lora = run(seed, "lora")
        drops_s.append(before.source - sculpt.source)
        drops_l.append(before.source - lora.source)
        tgt_s.append(sculpt.target)
        tgt_l.append(lora.target)
    elapsed = time.perf_counter() - t0
    med_ds, med_dl = statistics.median(drops_s), statistics.median(drops_l)
    med_ts, med_tl = statistics.median(tgt_s), statistics.median(tgt_l)
    ok = med_ds < med_dl and med_ts >= 0.9 * med_tl and elapsed < 300
    record_criterion(7, ok, f"median source drop {med_ds:.4f} < {med_dl:.4f}; median target "
                            f"{med_ts:.4f} >= 0.9*{med_tl:.4f}; time={elapsed:.0f}s (<300s)")
    assert ok


def test_c8_posthoc_pruning():
    drops_p, drops_l = [], []
    for seed in SEEDS:
        before, lora = run(seed, "lora")
        _, pruned = run(seed, "posthoc_prune")
        drops_l.append(before.source - lora.source)
        drops_p.append(before.source - pruned.source)
    med_p, med_l = statistics.median(drops_p), statistics.median(drops_l)
    ok = med_p < med_l
    record_criterion(8, ok, f"median source drop pruned {med_p:.4f} < unpruned {med_l:.4f}")
    assert ok


def _dare_distance(delta, n):
    mean = np.mean([dare_delta(delta, 0.5, RandomStream(9, i)) for i in range(n)], axis=0)
    return float(np.linalg.norm(mean - delta) / np.linalg.norm(delta))


# Averaging n independent drop-and-rescale draws leaves a relative Frobenius
# error of sqrt(p / ((1 - p) n)) in expectation, about 0.0707 for p = 0.5 and
# n = 200, whatever the delta. The 2% threshold therefore needs n >= 2500.
@pytest.mark.xfail(strict=True, reason="2% at 200 samples is below the sampling noise floor")
def test_c9_dare_unbiased():
    delta = random_matrix(9, 32, 32)
    dist = _dare_distance(delta, 200)
    ok = dist <= 0.02
    record_criterion(9, ok, f"relative Frobenius distance={dist:.4f} (<=0.02) at 200 samples; "
                            f"noise floor {np.sqrt(1 / 200):.4f}, see test_c9_dare_unbiased_attainable")
    assert ok


def test_c9_dare_unbiased_attainable():
    delta = random_matrix(9, 32, 32)
    dists = {n: _dare_distance(delta, n) for n in (200, 5000)}
    # unbiased: the error follows the 1/sqrt(n) noise law instead of levelling off
    for n, d in dists.items():
        assert d == pytest.approx(np.sqrt(1 / n), rel=0.1)
    assert dists[5000] <= 0.02
    print(f"criterion  9 (attainable form): distance {dists[200]:.4f} at 200 samples, "
          f"{dists[5000]:.4f} at 5000 samples (<=0.02), both within 10% of sqrt(1/n)")


def test_c10_determinism(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("baseline = lorasculpt\nseed = 0\n")
    codes = [main(["train", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in "ab"]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in names)
    ok = codes == [0, 0] and same and len(names) == 7
    record_criterion(10, ok, f"{len(names)} files byte-identical={same}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-s"]))
