"""Acceptance checks, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest
import scipy.sparse as sp

from nrdetector.classifier import forward, init_classifier, loss_and_grad
from nrdetector.config import build_config
from nrdetector.criterion import BatchOutputs, CriterionConfig, grad_total, pu_grad, pu_loss
from nrdetector.metrics import f1_pa_k_auc, generalization_bound, pa_percent_k, point_adjust, prf
from nrdetector.pipeline import (
    detect,
    embedding_scaler,
    fit_classifier,
    fit_encoder,
    fit_selection,
    load_series,
    make_segments,
    pu_targets,
)
from nrdetector.pointdet import estimate_clean_rate
from nrdetector.selector import SimilarityGraph, confidence_extract, katz_similarity, propagate_labels


def criterion(number, title):
    return pytest.mark.criterion(number, title)


# ------------------------------------------------------------ 1. gradients


def _kink_pattern(params, X, labeled, pi_p):
    """Signs of every rectifier input and of both alignment residuals."""
    _, f, cache = forward(params, X, return_cache=True)
    zs = cache[1:-1]
    return (
        [z > 0 for z in zs],
        np.sign(f[labeled].mean() - 1.0),
        np.sign(f[~labeled].mean() - pi_p),
        min(float(np.abs(z).min()) for z in zs),
    )


@criterion(1, "classifier gradients match central differences")
def test_gradient_correctness():
    start = time.perf_counter()
    crit = CriterionConfig(pi_p=0.3, lam=1.0, lam1=0.05, lam2=0.2)
    eps = 1e-6
    checked, seed = 0, 0
    worst = 0.0
    while checked < 100:
        rng = np.random.default_rng(seed)
        seed += 1
        params = init_classifier(64, 100, seed=seed)
        X = rng.normal(size=(6, 64))
        labeled = np.array([1, 1, 0, 0, 0, 0], dtype=bool)
        arrays = params.arrays()
        direction = [rng.normal(size=a.shape) for a in arrays]
        norm = math.sqrt(sum(float((v**2).sum()) for v in direction))
        direction = [v / norm for v in direction]

        def shifted(step):
            for a, v in zip(arrays, direction):
                a += step * v

        pattern = _kink_pattern(params, X, labeled, crit.pi_p)
        shifted(eps)
        up_pattern = _kink_pattern(params, X, labeled, crit.pi_p)
        up = loss_and_grad(params, X, labeled, crit)[0]["total"]
        shifted(-2 * eps)
        down_pattern = _kink_pattern(params, X, labeled, crit.pi_p)
        down = loss_and_grad(params, X, labeled, crit)[0]["total"]
        shifted(eps)
        same = all(
            all(np.array_equal(a, b) for a, b in zip(pattern[0], other[0]))
            and pattern[1:3] == other[1:3]
            for other in (up_pattern, down_pattern)
        )
        # skip points whose difference stencil crosses a kink
        if not same or pattern[3] < 1e-4:
            continue
        _, grads = loss_and_grad(params, X, labeled, crit)
        analytic = sum(float((g * v).sum()) for g, v in zip(grads, direction))
        numeric = (up - down) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, rel)
        checked += 1
    elapsed = time.perf_counter() - start
    print(f"worst relative error {worst:.2e} over {checked} points in {elapsed:.2f}s")
    assert worst < 1e-4
    assert elapsed < 5.0


# ------------------------------------------------------------ 2. PU optimum


@criterion(2, "PU loss is zero with zero subgradient at its optimum")
@pytest.mark.parametrize("pi_p", [round(0.1 * i, 1) for i in range(1, 10)])
def test_pu_loss_optimum(pi_p):
    for n_L in (1, 3, 8):
        for f_U in ([pi_p], [pi_p, pi_p]):
            f_L = np.ones(n_L)
            f_U = np.array(f_U)
            assert f_L.mean() == 1.0 and f_U.mean() == pi_p
            assert pu_loss(f_L, f_U, pi_p) == 0.0
            g_L, g_U = pu_grad(f_L, f_U, pi_p)
            assert np.all(g_L == 0) and np.all(g_U == 0)
            # with the time-constraint term off the total gradient vanishes too
            cfg = CriterionConfig(pi_p=pi_p, lam=0.0)
            t_L, t_U, t_h = grad_total(BatchOutputs(f_L, f_U, np.zeros((n_L + f_U.size, 4))), cfg)
            assert np.all(t_L == 0) and np.all(t_U == 0) and np.all(t_h == 0)


# ------------------------------------------------------------ 3. Katz oracle


@criterion(3, "truncated Katz matches the closed form")
def test_katz_oracle():
    for trial in range(20):
        rng = np.random.default_rng(100 + trial)
        n = int(rng.integers(2, 7))
        A = rng.random((n, n)) * (rng.random((n, n)) < 0.7)
        A = np.triu(A, 1)
        A = A + A.T
        rho = float(np.max(np.abs(np.linalg.eigvals(A))))
        beta = 0.5 * rng.uniform(0.1, 1.0) / rho if rho > 0 else 0.3
        assert beta * rho <= 0.5
        g = SimilarityGraph(sp.csr_matrix(A), k=n - 1)
        truncated = katz_similarity(g, beta=beta, l_max=50)
        exact = np.linalg.solve(np.eye(n) - beta * A, np.eye(n)) - np.eye(n)
        assert np.max(np.abs(truncated - exact)) < 1e-8


# ------------------------------------------------------------ 4. extraction contract


def _brute_extract(K, positives, unlabeled, m, lambda0):
    n_p = len(positives)
    per_round = max(1, math.floor(lambda0 / m * n_p + 0.5))
    remaining = sorted(unlabeled)
    excluded = []

    def mean_sim(u, ref):
        return sum(Fraction(K[u][r]) for r in ref) / len(ref)

    for _ in range(m):
        if not remaining:
            break
        ranked = sorted(remaining, key=lambda u: (-mean_sim(u, positives), u))
        top = ranked[:per_round]
        excluded += top
        remaining = [u for u in remaining if u not in top]
    ref = list(positives) + excluded
    ranked = sorted(remaining, key=lambda u: (mean_sim(u, ref), u))
    return sorted(ranked[: n_p + len(excluded)]), sorted(excluded)


@criterion(4, "confidence extraction contract and brute-force ranking")
def test_extraction_contract():
    for trial in range(50):
        rng = np.random.default_rng(200 + trial)
        n = int(rng.integers(12, 40))
        if trial % 2:
            # small integers force many exact ties
            K = rng.integers(0, 4, size=(n, n)).astype(float)
        else:
            K = rng.random((n, n))
        K = (K + K.T) / 2
        n_p = int(rng.integers(1, max(2, n // 5)))
        perm = rng.permutation(n)
        positives, unlabeled = np.sort(perm[:n_p]), np.sort(perm[n_p:])
        m = int(rng.integers(1, 5))
        lambda0 = float(rng.uniform(0.1, 0.6))
        rn, out = confidence_extract(K, positives, unlabeled, m, lambda0)
        assert rn.size == n_p + out.size
        assert np.intersect1d(rn, out).size == 0
        assert np.isin(rn, unlabeled).all() and np.isin(out, unlabeled).all()
        want_rn, want_out = _brute_extract(K.tolist(), positives.tolist(), unlabeled.tolist(), m, lambda0)
        assert rn.tolist() == want_rn
        assert out.tolist() == want_out


# ------------------------------------------------------------ 5. propagation fixed point


@criterion(5, "label propagation reaches its fixed point")
def test_propagation_fixed_point():
    two = SimilarityGraph(sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]])), k=1)
    assert np.allclose(propagate_labels(two, [0]).F[1], [0.0, 1.0], atol=1e-12)

    for trial in range(20):
        rng = np.random.default_rng(300 + trial)
        n = int(rng.integers(5, 30))
        A = np.triu(rng.random((n, n)) * (rng.random((n, n)) < 0.3), 1)
        A = A + A.T
        g = SimilarityGraph(sp.csr_matrix(A), k=n - 1)
        perm = rng.permutation(n)
        pos, neg = perm[:2], perm[2:4]
        for clamp in (True, False):
            F = propagate_labels(g, pos, neg, max_iter=100_000, tol=1e-12, clamp_negatives=clamp).F
            deg = A.sum(axis=1)
            clamped = set(pos) | (set(neg) if clamp else set())
            free = [i for i in range(n) if i not in clamped and deg[i] > 0]
            target = (A[free] @ F) / deg[free, None]
            assert np.max(np.abs(F[free] - target), initial=0.0) <= 1e-6
            assert np.allclose(F[pos], [0.0, 1.0])


# ------------------------------------------------------------ shared benchmark setup


def _benchmark(seed):
    cfg = build_config(profile="synth", overrides={"run.seed": seed})
    train_seg, test_seg = make_segments(cfg, load_series(cfg))
    y = pu_targets(train_seg)
    enc = fit_encoder(cfg, train_seg.values, y)
    E = enc.transform(train_seg.values)
    mean, scale = embedding_scaler(cfg, E)
    E_test = (enc.transform(test_seg.values) - mean) / scale
    return cfg, train_seg, test_seg, y, enc, (E - mean) / scale, E_test


# ------------------------------------------------------------ 6. selector noise reduction


@criterion(6, "selector lowers the hidden-positive fraction of the unlabeled pool")
@pytest.mark.slow
def test_selector_noise_reduction():
    wins = 0
    for seed in range(40):
        cfg, train_seg, _, y, _, E, _ = _benchmark(seed)
        assert cfg.noise.e1 == 0.6
        sel = fit_selection(cfg, E, y)
        truth = train_seg.true_labels
        before = truth[y == 0].mean()
        after = truth[sel.refined_unlabeled].mean()
        wins += after <= before
    print(f"noise reduced in {wins}/40 trials")
    assert wins >= 38


# ------------------------------------------------------------ 7. rate estimator


@criterion(7, "consensus rate estimator recovers prior and flip rates")
@pytest.mark.parametrize("rate", [0.1, 0.2, 0.3])
def test_rate_estimator(rate):
    n, d, prior = 5000, 8, 0.3
    centers = np.zeros((2, d))
    # 8 sigma apart along the first axis
    centers[0, 0], centers[1, 0] = -4.0, 4.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        clean = (rng.random(n) < prior).astype(int)
        X = centers[clean] + rng.normal(size=(n, d))
        flipped = rng.random(n) < rate
        noisy = np.where(flipped, 1 - clean, clean)
        est = estimate_clean_rate(X, noisy)
        assert abs(est.p_hat - clean.mean()) <= 0.05
        assert abs(est.e0_hat - rate) <= 0.05
        assert abs(est.e1_hat - rate) <= 0.05


# ------------------------------------------------------------ 8. metrics oracles


def _oracle_adjust(pred, truth, K):
    out = list(pred)
    i = 0
    while i < len(truth):
        if truth[i] == 1:
            j = i
            while j < len(truth) and truth[j] == 1:
                j += 1
            hits = sum(pred[i:j])
            if Fraction(100 * hits, j - i) > K:
                for t in range(i, j):
                    out[t] = 1
            i = j
        else:
            i += 1
    return out


def _oracle_f1(pred, truth):
    tp = sum(1 for p, t in zip(pred, truth) if p and t)
    n_pred, n_true = sum(pred), sum(truth)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_true if n_true else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@criterion(8, "point adjustment metrics match a brute-force oracle")
def test_metrics_oracle():
    rng = np.random.default_rng(8)
    for _ in range(200):
        n = int(rng.integers(1, 51))
        truth = (rng.random(n) < rng.uniform(0.1, 0.6)).astype(int).tolist()
        pred = (rng.random(n) < rng.uniform(0.05, 0.5)).astype(int).tolist()
        assert point_adjust(pred, truth).tolist() == _oracle_adjust(pred, truth, 0)
        f1s = []
        for K in range(101):
            adj = pa_percent_k(pred, truth, K).tolist()
            assert adj == _oracle_adjust(pred, truth, K)
            f1s.append(_oracle_f1(adj, truth))
        assert f1_pa_k_auc(pred, truth) == float(np.mean(f1s))
        f1 = prf(pred, truth).f1
        assert f1 == _oracle_f1(pred, truth)
        assert f1s[0] >= f1
        assert all(a >= b for a, b in zip(f1s, f1s[1:]))


# ------------------------------------------------------------ 9. bound


@criterion(9, "generalization bound matches direct evaluation")
def test_bound():
    assert abs(generalization_bound(0.6, 1000, 0.05, 0.0) - 0.6936) <= 1e-4
    for e1 in (0.0, 0.3, 0.6, 0.9):
        for N in (1, 50, 1000, 10**6):
            for delta in (0.01, 0.05, 0.5):
                for mismatch in (0.0, 0.1):
                    direct = e1 + math.sqrt(2 * math.log(4 / delta) / N) + mismatch
                    assert generalization_bound(e1, N, delta, mismatch) == pytest.approx(direct, abs=1e-12)


# ------------------------------------------------------------ 10. end to end


VARIANTS = {
    "full": {},
    "bce": {"criterion.pu_loss": False, "selector.extraction": False, "selector.propagation": False},
    "no_selector": {"selector.extraction": False, "selector.propagation": False},
}


@criterion(10, "full pipeline beats the BCE and selector-off variants on point F1")
@pytest.mark.slow
def test_end_to_end_direction():
    start = time.perf_counter()
    wins = 0
    for seed in range(10):
        cfg, _, test_seg, y, enc, E, E_test = _benchmark(seed)
        truth = test_seg.point_labels.ravel()
        f1 = {}
        for name, overrides in VARIANTS.items():
            vcfg = cfg.with_overrides(overrides)
            selection = fit_selection(vcfg, E, y)
            params, _ = fit_classifier(vcfg, E, y, selection)
            det = detect(vcfg, params, enc, E_test, test_seg.values)
            f1[name] = prf(det.points.ravel(), truth).f1
        won = f1["full"] > f1["bce"] and f1["full"] > f1["no_selector"]
        wins += won
        print(f"seed {seed}: " + " ".join(f"{k}={v:.4f}" for k, v in f1.items()) + (" win" if won else ""))
    elapsed = time.perf_counter() - start
    print(f"full pipeline ahead in {wins}/10 seeds, {elapsed:.0f}s")
    assert wins >= 8
    assert elapsed < 600


# ------------------------------------------------------------ 11. determinism


@criterion(11, "repeated runs give byte-identical reports")
def test_determinism(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text("run.profile = synth\n")
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        cmd = [sys.executable, "-m", "nrdetector.cli", "run", "--config", str(config), "--seed", "7", "--out-dir", str(out)]
        done = subprocess.run(cmd, capture_output=True, text=True)
        assert done.returncode == 0, done.stderr
        outputs.append(out)
    for name in ("report.json", "report.txt", "predictions.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes(), name
