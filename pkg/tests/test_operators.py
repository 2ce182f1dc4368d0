import math

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, strategies as st

from msalab.errors import InvalidDomain, NearSpectrum, NumericalFailure
from msalab.graph import SubgraphView, ball_view, build_box_graph, build_interval_graph
from msalab.operators import (
    DIRICHLET,
    GAUSSIAN,
    NEUMANN,
    UNIFORM,
    Ensemble,
    Potential,
    Realization,
    assemble_hamiltonian,
    eigendecompose,
    full_hamiltonian,
    green,
    green_matrix,
    resolvent_matrix,
    restrict,
    sample_potential,
    spectral_gap,
    verify_gre,
)


def zero_potential(g):
    return Potential(g, np.zeros(len(g)))


@pytest.fixture
def p3():
    g = build_interval_graph(5)
    return assemble_hamiltonian(g, SubgraphView(g, [1, 2, 3]), zero_potential(g), DIRICHLET)


def test_zero_coupling():
    g = build_interval_graph(10)
    assert (sample_potential(Ensemble(UNIFORM, 0.0), g, 3).values == 0).all()


def test_sampling_deterministic():
    g = build_box_graph(2, 4)
    e = Ensemble(GAUSSIAN, 2.5)
    assert sample_potential(e, g, 99) == sample_potential(e, g, 99)
    assert sample_potential(e, g, 99) != sample_potential(e, g, 100)


def test_uniform_mean():
    g = build_interval_graph(10 ** 4)
    v = sample_potential(Ensemble(UNIFORM, 1.0), g, 1)
    assert 0.49 <= v.values.mean() <= 0.51


def test_potential_read_only():
    g = build_interval_graph(3)
    v = sample_potential(Ensemble(), g, 0)
    with pytest.raises(ValueError):
        v.values[0] = 1.0


def test_one_vertex_dirichlet():
    g = build_interval_graph(3)
    v = Potential(g, [2.0, 0.0, 0.0])
    h = assemble_hamiltonian(g, SubgraphView(g, [0]), v, DIRICHLET)
    assert h.matrix.tolist() == [[3.0]]


def test_p3_dirichlet(p3):
    assert np.array_equal(p3.matrix, [[2, -1, 0], [-1, 2, -1], [0, -1, 2]])


def test_p3_neumann():
    g = build_interval_graph(5)
    h = assemble_hamiltonian(g, SubgraphView(g, [1, 2, 3]), zero_potential(g), NEUMANN)
    assert np.diag(h.matrix).tolist() == [1, 2, 1]


def test_disconnected_domain():
    g = build_interval_graph(5)
    with pytest.raises(InvalidDomain):
        assemble_hamiltonian(g, SubgraphView(g, [0, 1, 3]), zero_potential(g))


def test_dirichlet_is_principal_submatrix():
    g = build_box_graph(2, 6)
    v = sample_potential(Ensemble(UNIFORM, 3.0), g, 4)
    view = ball_view(g, (2, 3), 2)
    a = assemble_hamiltonian(g, view, v, DIRICHLET).matrix
    b = restrict(full_hamiltonian(g, v), view.members).matrix
    assert np.array_equal(a, b)


def test_p3_spectrum(p3):
    s = eigendecompose(p3)
    assert np.allclose(s.eigenvalues, [2 - math.sqrt(2), 2, 2 + math.sqrt(2)], atol=1e-14)


def test_one_by_one():
    g = build_interval_graph(3)
    h = assemble_hamiltonian(g, SubgraphView(g, [0]), Potential(g, [2.0, 0, 0]))
    s = eigendecompose(h)
    assert s.eigenvalues.tolist() == [3.0] and abs(s.eigenvectors[0, 0]) == 1.0


def test_singletons_diagonal():
    g = build_interval_graph(1)
    v = Potential(g, [1.7])
    s = eigendecompose(full_hamiltonian(g, v))
    assert s.eigenvalues.tolist() == [1.7]


def test_numerical_failure_dump(monkeypatch, p3):
    def broken(_):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(np.linalg, "eigh", broken)
    with pytest.raises(NumericalFailure) as err:
        eigendecompose(p3)
    rows = err.value.dump.splitlines()
    assert len(rows) == 3 and rows[0].split() == ["2", "-1", "0"]


def test_green_scalar():
    g = build_interval_graph(3)
    h = assemble_hamiltonian(g, SubgraphView(g, [1]), Potential(g, [0.0, 0.0, 0.0]))
    assert green(eigendecompose(h), 1, 1, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_green_p3_corner(p3):
    inv = sympy.Matrix([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]).inv()
    assert inv[0, 2] == sympy.Rational(1, 4)
    assert green(eigendecompose(p3), 1, 3, 0.0) == pytest.approx(0.25, abs=1e-14)


def test_green_near_spectrum(p3):
    s = eigendecompose(p3)
    with pytest.raises(NearSpectrum):
        green(s, 1, 2, float(s.eigenvalues[1]))


@given(st.integers(0, 10 ** 6), st.floats(-3, 9))
def test_green_symmetric(seed, E):
    g = build_box_graph(2, 4)
    s = eigendecompose(full_hamiltonian(g, sample_potential(Ensemble(UNIFORM, 4.0), g, seed)))
    if spectral_gap(s, E) < 1e-6:
        return
    x, y = (0, 0), (3, 2)
    assert abs(green(s, x, y, E) - green(s, y, x, E)) <= 1e-12 * (1 + abs(green(s, x, y, E)))


def test_spectral_gap_examples(p3):
    s = eigendecompose(p3)
    assert spectral_gap(s, float(s.eigenvalues[0])) == 0.0
    assert spectral_gap(s, 5.0) == pytest.approx(3 - math.sqrt(2), abs=1e-14)
    assert spectral_gap(s, -1.0) == pytest.approx(s.eigenvalues[0] + 1.0, abs=1e-15)


def test_gre_interval4_exact():
    g = build_interval_graph(4)
    v = zero_potential(g)
    h = full_hamiltonian(g, v)
    lam = SubgraphView(g, [0, 1])
    E = -1
    # exact rational oracle
    H = sympy.Matrix(h.matrix.astype(int).tolist())
    G = (H - E * sympy.eye(4)).inv()
    GL = (H[:2, :2] - E * sympy.eye(2)).inv()
    for x in (0, 1):
        for y in (2, 3):
            assert G[x, y] == GL[x, 1] * G[2, y]
            assert verify_gre(h, lam, x, y, E) <= 1e-10


def test_gre_single_boundary_term():
    from msalab.operators import gre_terms

    g = build_interval_graph(6)
    h = full_hamiltonian(g, sample_potential(Ensemble(), g, 1))
    _, terms = gre_terms(h, SubgraphView(g, [0, 1, 2]), 0, 5, -0.5)
    assert len(terms) == 1


def test_gre_requires_geometry():
    g = build_interval_graph(5)
    h = full_hamiltonian(g, zero_potential(g))
    with pytest.raises(InvalidDomain):
        verify_gre(h, SubgraphView(g, [0, 1]), 3, 4, -1.0)


def test_gre_randomized(rng):
    worst = 0.0
    for t in range(200):
        if t % 2:
            g = build_interval_graph(int(rng.integers(6, 60)))
            lam = SubgraphView(g, list(range(int(rng.integers(1, len(g) - 1)))))
            x, y = 0, g.vertices[-1]
        else:
            side = int(rng.integers(3, 9))
            g = build_box_graph(2, side)
            lam = ball_view(g, (0, 0), int(rng.integers(1, side)))
            x, y = (0, 0), (side - 1, side - 1)
        h = full_hamiltonian(g, sample_potential(Ensemble(UNIFORM, float(rng.uniform(0, 8))), g, t))
        E = float(rng.uniform(-1, 12))
        if min(spectral_gap(eigendecompose(h), E), spectral_gap(eigendecompose(restrict(h, lam.members)), E)) < 1e-6:
            continue
        worst = max(worst, verify_gre(h, lam, x, y, E, relative=True))
    assert worst <= 1e-8


def test_resolvent_small_entries_accurate():
    g = build_interval_graph(60)
    v = sample_potential(Ensemble(UNIFORM, 10.0), g, 2)
    h = full_hamiltonian(g, v)
    s = eigendecompose(h)
    E = 5.3
    G = resolvent_matrix(s, E)
    mpmath.mp.dps = 60
    M = mpmath.matrix(h.matrix.tolist()) - E * mpmath.eye(60)
    ref = mpmath.lu_solve(M, mpmath.matrix([1] + [0] * 59))
    for j in (10, 30, 59):
        assert abs(G[j, 0] - float(ref[j])) <= 1e-9 * abs(float(ref[j]))


def test_green_matrix_matches_solve(p3):
    s = eigendecompose(p3)
    assert np.allclose(green_matrix(s, 0.3), resolvent_matrix(s, 0.3), atol=1e-13)


@given(st.integers(0, 10 ** 6))
def test_dirichlet_dominates_neumann(seed):
    g = build_box_graph(2, 6)
    v = sample_potential(Ensemble(UNIFORM, 2.0), g, seed)
    view = ball_view(g, (2, 2), 2)
    lD = eigendecompose(assemble_hamiltonian(g, view, v, DIRICHLET)).eigenvalues
    lN = eigendecompose(assemble_hamiltonian(g, view, v, NEUMANN)).eigenvalues
    assert (lD >= lN - 1e-12).all()


@given(st.integers(0, 10 ** 6), st.sampled_from([UNIFORM, GAUSSIAN]))
def test_parseval(seed, kind):
    g = build_box_graph(2, 5)
    s = eigendecompose(full_hamiltonian(g, sample_potential(Ensemble(kind, 3.0), g, seed)))
    assert np.allclose((s.eigenvectors ** 2).sum(axis=1), 1.0, atol=1e-10)


def test_green_poles():
    g = build_interval_graph(8)
    s = eigendecompose(full_hamiltonian(g, sample_potential(Ensemble(UNIFORM, 2.0), g, 5)))
    x, y = 1, 6
    kappa = s.eigenvectors[1] * s.eigenvectors[6]
    j = int(np.argmax(np.abs(kappa)))
    assert abs(kappa[j]) > 1e-8
    vals = [abs(green(s, x, y, s.eigenvalues[j] + 10.0 ** -k)) for k in range(2, 9)]
    assert all(b > a for a, b in zip(vals, vals[1:])) and vals[-1] > 1e5


def test_wegner_small(rng):
    g = build_interval_graph(64)
    e = Ensemble(UNIFORM, 1.0)
    hits = sum(spectral_gap(eigendecompose(full_hamiltonian(g, sample_potential(e, g, t))), 2.5) <= 1e-2
               for t in range(400))
    # 99% one-sided binomial margin over the bound C_W |G| eps
    bound = 64 * 1e-2
    assert hits / 400 <= bound + 2.33 * math.sqrt(bound * (1 - bound) / 400)


def test_realization_caches():
    g = build_interval_graph(20)
    r = Realization(g, sample_potential(Ensemble(), g, 0), 3.0)
    assert r.spectral(10, 3) is r.spectral(10, 3)
    assert r.contained_centers(10, 5, 2) == list(range(7, 14))


def test_ensemble_constants():
    assert Ensemble(UNIFORM, 1.0).C_W == 1.0
    assert Ensemble(GAUSSIAN, 1.0).C_W == pytest.approx(1 / math.sqrt(2 * math.pi))
    assert Ensemble(UNIFORM, 4.0).effective_C_W == 0.25
