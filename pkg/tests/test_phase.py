from __future__ import annotations

import json

import numpy as np
import pytest

from ergmlab.hamiltonian import ModelSpec, logistic
from ergmlab.motifs import EDGE, K4, K5, TRIANGLE, TWOSTAR, MotifSpec
from ergmlab.phase import (
    NEAR_CRITICAL,
    SUBCRITICAL,
    SUPERCRITICAL,
    classify,
    dobrushin_sum,
    find_roots,
    l1_norm_bound,
    phi_and_derivative,
    psi,
    psi_prime,
)


def model(n, *terms):
    return ModelSpec(n, tuple(terms))


def test_psi_examples():
    m = model(10, (EDGE, 0.4))
    assert np.allclose(psi(m, np.linspace(0, 1, 11)), 0.8)
    t = model(10, (TRIANGLE, 0.3))
    assert psi(t, 0.7) == pytest.approx(6 * 0.3 * 0.49)
    assert psi(t, 0.0) == 0
    with pytest.raises(ValueError):
        psi(t, 1.5)
    with pytest.raises(ValueError):
        phi_and_derivative(t, -0.1)


def test_phi_examples():
    f, d = phi_and_derivative(model(10, (EDGE, 0.4)), 0.3)
    assert f == pytest.approx(logistic(0.8)) and d == 0
    assert phi_and_derivative(model(10, (TRIANGLE, 0.3)), 0.0) == (0.5, 0.0)


def test_phi_derivative_matches_finite_difference():
    rng = np.random.default_rng(7)
    motifs = [EDGE, TWOSTAR, TRIANGLE, K4]
    for _ in range(30):
        k = rng.integers(1, 4)
        idx = rng.choice(len(motifs), size=k, replace=False)
        m = model(10, *[(motifs[i], float(rng.uniform(0.05, 1.0))) for i in idx])
        for p in rng.uniform(0.05, 0.95, size=5):
            h = 1e-6
            fd = (phi_and_derivative(m, p + h)[0] - phi_and_derivative(m, p - h)[0]) / (2 * h)
            d = phi_and_derivative(m, p)[1]
            assert d == pytest.approx(fd, rel=1e-5, abs=1e-9)
            assert psi_prime(m, p) >= 0


def test_psi_phi_nondecreasing():
    ps = np.linspace(0, 1, 2001)
    for m in (model(10, (TRIANGLE, 0.7), (EDGE, 0.1)), model(10, (K5, 1.0)), model(10, (TWOSTAR, 2.0))):
        assert np.all(np.diff(psi(m, ps)) >= 0)
        assert np.all(np.diff(phi_and_derivative(m, ps)[0]) >= 0)


def test_classify_edge_only():
    r = classify(model(10, (EDGE, 0.5)))
    assert r.classification == SUBCRITICAL
    assert abs(r.p_star - 0.7310585786300049) < 1e-10
    assert r.roots[0][1] == 0
    for b in (0.01, 0.3, 2.0, 7.0):
        r = classify(model(10, (EDGE, b)))
        assert r.classification == SUBCRITICAL and abs(r.p_star - logistic(2 * b)) < 1e-10


def test_classify_k5_supercritical():
    # frozen after a 10^5-point sign-change scan, see test below
    r = classify(model(10, (K5, 1.0)))
    assert r.classification == SUPERCRITICAL and r.p_star is None
    ps = [p for p, _ in r.roots]
    assert len(ps) == 3
    assert ps[0] == pytest.approx(0.5121103621, abs=1e-9)
    assert ps[1] == pytest.approx(0.7067145211, abs=1e-9)
    assert ps[2] == pytest.approx(0.99999999794, abs=1e-10)
    stable = [d for _, d in r.roots if d < 1 - 1e-3]
    assert len(stable) == 2


def test_k5_scan_oracle():
    m = model(10, (K5, 1.0))
    ps = np.linspace(0, 1, 100_001)
    g = phi_and_derivative(m, ps)[0] - ps
    assert int(np.sum(np.sign(g[1:]) != np.sign(g[:-1]))) == 3


def test_classify_triangle():
    r = classify(model(10, (TRIANGLE, 0.1)))
    assert r.classification == SUBCRITICAL and r.in_DU
    assert r.p_star == pytest.approx(0.5443271206, abs=1e-9)
    r = classify(model(16, (TRIANGLE, 0.2)))
    assert r.classification == SUBCRITICAL and r.in_DU and r.dobrushin_sum == pytest.approx(0.6)
    f, _ = phi_and_derivative(model(16, (TRIANGLE, 0.2)), r.p_star)
    assert abs(f - r.p_star) < 1e-12


def test_classify_near_critical_tangency():
    # K5: phi(p)=p and phi'(p)=1 give 180 beta p^9 (1-p) = 1 and logit(p) = 20 beta p^9,
    # so the tangency point solves logit(p) = 1/(9(1-p)); the upper solution has the smaller beta
    from scipy.optimize import brentq

    p_c = brentq(lambda p: np.log(p / (1 - p)) - 1 / (9 * (1 - p)), 0.93, 0.999)
    beta_c = 1 / (180 * p_c**9 * (1 - p_c))
    r = classify(model(10, (K5, beta_c)))
    assert r.classification == NEAR_CRITICAL
    assert any(abs(p - p_c) < 1e-3 and abs(d - 1) < 1e-2 for p, d in r.roots)
    assert classify(model(10, (K5, beta_c * 0.99))).classification == SUBCRITICAL
    assert classify(model(10, (K5, beta_c * 1.01))).classification == SUPERCRITICAL


def test_classify_always_finds_a_root_and_sorted():
    rng = np.random.default_rng(3)
    for _ in range(25):
        m = model(10, (TRIANGLE, float(rng.uniform(0.01, 3))), (TWOSTAR, float(rng.uniform(0.01, 1))))
        r = classify(m)
        ps = [p for p, _ in r.roots]
        assert len(ps) >= 1 and ps == sorted(ps)
        assert (r.p_star is not None) == (r.classification == SUBCRITICAL)


def test_classify_argument_errors():
    m = model(10, (EDGE, 1.0))
    with pytest.raises(ValueError):
        classify(m, grid=10)
    with pytest.raises(ValueError):
        classify(m, eps_crit=0.5)


def test_duplicate_term_invariance():
    for g, b in ((TRIANGLE, 0.2), (K5, 1.0), (TWOSTAR, 0.9)):
        a = classify(model(10, (g, b)))
        c = classify(model(10, (g, b / 2), (g, b / 2)))
        assert a.classification == c.classification
        assert np.allclose([p for p, _ in a.roots], [p for p, _ in c.roots], atol=1e-10)
        assert a.dobrushin_sum == pytest.approx(c.dobrushin_sum)


def test_dobrushin_examples():
    assert dobrushin_sum(model(10, (TRIANGLE, 0.2))) == (pytest.approx(0.6), True)
    assert dobrushin_sum(model(10, (EDGE, 5.0))) == (0.0, True)
    assert dobrushin_sum(model(10, (TRIANGLE, 0.4))) == (pytest.approx(1.2), False)


def test_l1_norm_bound():
    beta = 0.2
    for n in (3, 8, 16, 64, 1024):
        m = model(n, (TRIANGLE, beta))
        # |E|-1 = 2 and N(K_n, f) = 6(n-2)
        assert l1_norm_bound(m) == pytest.approx(3 * beta * (n - 2) / n)
        assert l1_norm_bound(m) < dobrushin_sum(m)[0]
    assert l1_norm_bound(model(10, (EDGE, 3.0))) == 0
    m = model(8, (TRIANGLE, 0.2), (K4, 0.1), (TWOSTAR, 0.3))
    vals = [l1_norm_bound(m, n) for n in (8, 16, 32, 64, 128, 256, 512, 1024)]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < dobrushin_sum(m)[0]
    assert dobrushin_sum(m)[0] - vals[-1] < 0.01
    with pytest.raises(ValueError):
        l1_norm_bound(m, 3)


def test_report_json_round_trip():
    r = classify(model(10, (TRIANGLE, 0.2)))
    d = json.loads(json.dumps(r.to_dict()))
    assert set(d) == {"roots", "classification", "p_star", "dobrushin_sum", "in_DU", "l1_bound"}
    assert d["roots"][0][0] == r.p_star


def test_find_roots_tangents_separate():
    roots, tangents = find_roots(model(10, (EDGE, 0.5)))
    assert len(roots) == 1 and tangents == []
    with pytest.raises(ValueError):
        MotifSpec(1, ())
