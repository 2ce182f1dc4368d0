
import numpy as np
import pytest
from hypothesis import given, strategies as st

from msalab.classify import ScaleParams
from msalab.errors import HypothesisFailure, InvalidDomain
from msalab.graph import build_box_graph, build_interval_graph
from msalab.operators import UNIFORM, Ensemble, Potential, full_hamiltonian, sample_potential
from msalab.seeding import derive_seed
from msalab.subharmonic import (
    CONFIRMED,
    NOT_APPLICABLE,
    annuli_C,
    annuli_bound,
    certify,
    exponential_profile,
    irregular_annuli,
    is_lq_subharmonic,
    is_lqr_subharmonic,
    radial_bound,
    radial_bound_weak,
    radial_descent,
    random_annular,
    random_subharmonic,
    regular_set,
    two_ball_bound,
    verify_green_subharmonicity,
)

S2 = ScaleParams.from_preset("section2")


def sharp_example(L, q):
    g = build_interval_graph(L + 2)
    return g, np.array([q ** (L + 1 - x) for x in range(L + 2)])


def test_zero_function():
    g = build_interval_graph(12)
    assert is_lq_subharmonic(np.zeros(12), g, (5, 4), 1, 0.3)
    assert regular_set(np.zeros(12), g, (5, 4), 1, 0.3) == frozenset(range(1, 10))


def test_constant_function_fails():
    g = build_interval_graph(12)
    chk = is_lq_subharmonic(np.ones(12), g, (5, 4), 1, 0.5)
    assert not chk and chk.witnesses
    x, fx, rhs = chk.witnesses[0]
    assert fx == 1.0 and rhs == 0.5


def test_whole_graph_ball_rejected():
    g = build_interval_graph(5)
    with pytest.raises(InvalidDomain):
        is_lq_subharmonic(np.ones(5), g, (2, 2), 0, 0.5)
    with pytest.raises(InvalidDomain):
        is_lq_subharmonic(-np.ones(7), build_interval_graph(7), (2, 1), 0, 0.5)


@pytest.mark.parametrize("L, q", [(5, 0.5), (10, 0.3), (31, 0.9)])
def test_sharp_example(L, q):
    g, f = sharp_example(L, q)
    chk = is_lq_subharmonic(f, g, (0, L), 0, q)
    assert chk and chk.checked == L + 1
    # equality at every step
    for x in range(L + 1):
        assert f[x] == pytest.approx(q * f[x + 1], rel=1e-14)
    assert f[0] == pytest.approx(radial_bound(L, 0, q) * f[L + 1], rel=1e-12)
    assert f[0] == pytest.approx(q ** (L + 1), rel=1e-12)
    assert regular_set(f, g, (0, L), 0, q) == frozenset(range(L + 1))


def test_radial_bound_examples():
    assert radial_bound(5, 1, 0.5) == 0.125
    for L in range(0, 8):
        assert radial_bound(L, L, 0.37) == 0.37
    with pytest.raises(ValueError):
        radial_bound(2, 3, 0.5)
    with pytest.raises(ValueError):
        radial_bound(5, 1, 1.0)


def test_two_ball_bound_examples():
    assert two_ball_bound(3, 3, 1, 0.5) == 0.0625
    assert two_ball_bound(2, 2, 2, 0.4) == pytest.approx(0.16)


@given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 10), st.floats(0.01, 0.99))
def test_bound_orderings(r1, r2, ell, q):
    if r1 < ell or r2 < ell:
        return
    assert two_ball_bound(r1, r2, ell, q) <= radial_bound(r1, ell, q)
    assert radial_bound(r1, ell, q) <= radial_bound_weak(r1, ell, q) * (1 + 1e-12)


def test_annuli_examples():
    assert annuli_bound(20, 1, 0.5, ()) == radial_bound(20, 1, 0.5)
    assert annuli_C([(3, 5)], 1) == 2
    with pytest.raises(HypothesisFailure):
        annuli_C([(3, 5, 1)], 1)
    assert annuli_bound(20, 1, 0.5, [(3, 4)]) == 0.5 ** 8
    assert annuli_bound(20, 1, 0.5, [(3, 5)]) == 0.5 ** 6
    assert annuli_bound(20, 2, 0.5, [(3, 5)]) == 0.5 ** 5
    with pytest.raises(HypothesisFailure):
        annuli_bound(8, 1, 0.5, [(1, 2), (4, 5)])
    with pytest.raises(HypothesisFailure):
        annuli_C([(3, 6, 1)], 2)


def test_annuli_C_minimal():
    assert annuli_C([(0, 7), (10, 11)], 3) == 3 + 1
    assert annuli_C([(4, 4)], 0) == 1
    with pytest.raises(HypothesisFailure):
        annuli_C([(2, 4)], 0)


def test_spike_excluded_from_regular_set():
    L, q = 10, 0.5
    g = build_interval_graph(30)
    f = exponential_profile(g, 15, L, 1, q)
    f[12] = 10.0
    reg = regular_set(f, g, (15, L), 1, q)
    assert 12 not in reg
    assert not is_lq_subharmonic(f, g, (15, L), 1, q)
    # the outer shell is not constrained by the lq test when ell >= 1
    assert irregular_annuli(f, g, (15, L), 1, q)[0] == (2, 3)
    assert set(irregular_annuli(f, g, (15, L), 1, q)[1:]) <= {(L - 1, L)}


def test_exponential_profile_subharmonic_on_box():
    g = build_box_graph(2, 15)
    c = (7, 7)
    for ell in (0, 1, 2):
        f = exponential_profile(g, c, 5, ell, 0.4)
        assert is_lq_subharmonic(f, g, (c, 5), ell, 0.4)


def test_lemma42_soundness_randomized():
    rng = np.random.default_rng(11)
    count = 0
    g = build_interval_graph(41)
    for _ in range(150):
        L = int(rng.integers(1, 18))
        ell = int(rng.integers(0, L + 1))
        q = float(rng.uniform(0.05, 0.95))
        f = random_subharmonic(rng, g, 20, L, ell, q)
        if f is None:
            continue
        count += 1
        rep = radial_descent(f, g, (20, L), ell, q)
        assert rep.value <= rep.local_bound * (1 + 1e-12)
        assert rep.local_bound <= rep.global_bound
    assert count >= 100


def test_lemma44_product_soundness():
    rng = np.random.default_rng(12)
    g = build_interval_graph(31)
    done = 0
    for _ in range(60):
        ell = int(rng.integers(0, 3))
        r1, r2 = (int(v) for v in rng.integers(ell, 12, 2))
        q = float(rng.uniform(0.1, 0.9))
        f1 = random_subharmonic(rng, g, 15, r1, ell, q)
        f2 = random_subharmonic(rng, g, 15, r2, ell, q)
        if f1 is None or f2 is None:
            continue
        done += 1
        F = np.outer(f1, f2)
        assert F[15, 15] <= two_ball_bound(r1, r2, ell, q) * F.max() * (1 + 1e-12)
    assert done >= 40


def test_annuli_soundness_randomized():
    rng = np.random.default_rng(13)
    g = build_interval_graph(61)
    done = 0
    for _ in range(80):
        L = int(rng.integers(12, 28))
        ell = int(rng.integers(1, 3))
        q = float(rng.uniform(0.2, 0.9))
        out = random_annular(rng, g, 30, L, ell, q)
        if out is None:
            continue
        f, cover = out
        try:
            bound = annuli_bound(L, ell, q, cover)
        except HypothesisFailure:
            continue
        done += 1
        local = float(f[np.abs(np.arange(61) - 30) <= L + 1].max())
        assert f[30] <= bound * local * (1 + 1e-12)
    assert done >= 30


def test_lqr_reduces_for_regular_functions():
    rng = np.random.default_rng(14)
    g = build_interval_graph(41)
    f = random_subharmonic(rng, g, 20, 10, 1, 0.5)
    assert is_lqr_subharmonic(f, g, (20, 10), 1, 0.5)
    assert all(a >= 10 - 1 for a, _ in irregular_annuli(f, g, (20, 10), 1, 0.5))


@given(st.integers(0, 2 ** 32), st.integers(2, 10), st.floats(0.1, 0.9))
def test_regular_set_full_iff_subharmonic_ell0(seed, L, q):
    rng = np.random.default_rng(seed)
    g = build_interval_graph(2 * L + 5)
    f = rng.random(len(g)) ** 3
    ball = (L + 2, L)
    full = regular_set(f, g, ball, 0, q) == frozenset(range(2, 2 * L + 3))
    assert full == bool(is_lq_subharmonic(f, g, ball, 0, q))


def test_certificate_fields():
    rng = np.random.default_rng(15)
    g = build_interval_graph(41)
    f, cover = random_annular(rng, g, 20, 16, 1, 0.5)
    cert = certify(f, g, (20, 16), 1, 0.5)
    assert cert.annuli_cover == cover and cert.lqr_subharmonic
    assert cert.width == sum(b - a for a, b in cover)
    assert cert.C == annuli_C(cover, 1)


def test_green_free_far_energy_confirmed():
    g = build_interval_graph(81)
    h = full_hamiltonian(g, Potential(g, np.zeros(81)))
    res = verify_green_subharmonicity(h, (40, 32), 14.0, S2, 8)
    assert res.status == CONFIRMED and res.y == 7


def test_green_premise_failure_is_not_applicable():
    g = build_interval_graph(81)
    h = full_hamiltonian(g, Potential(g, np.zeros(81)))
    res = verify_green_subharmonicity(h, (40, 32), 2.0, S2, 8)
    assert res.status == NOT_APPLICABLE and res.singular_balls


def test_green_strong_disorder_never_refuted():
    g = build_interval_graph(81)
    confirmed = 0
    for i in range(40):
        h = full_hamiltonian(g, sample_potential(Ensemble(UNIFORM, 100.0), g, derive_seed(3, i)))
        res = verify_green_subharmonicity(h, (40, 32), 52.0, S2, 8)
        assert res.status in (CONFIRMED, NOT_APPLICABLE)
        confirmed += res.status == CONFIRMED
    assert confirmed >= 10


def test_green_requires_positive_ell():
    g = build_interval_graph(21)
    h = full_hamiltonian(g, Potential(g, np.zeros(21)))
    with pytest.raises(ValueError):
        verify_green_subharmonicity(h, (10, 5), 10.0, S2, 0)
    with pytest.raises(InvalidDomain):
        verify_green_subharmonicity(h, (10, 5), 10.0, S2, 1, y=12)
