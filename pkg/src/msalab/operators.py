"""Random potentials, Schrödinger operators on graphs and their resolvents.

``H = -Laplacian + V`` is assembled densely. The Dirichlet restriction to a
subset keeps the ambient coordination numbers on the diagonal, so it is the
principal submatrix of the ambient operator; the Neumann variant uses the
intrinsic degrees instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from .errors import InvalidDomain, NearSpectrum, NumericalFailure, UnknownVertex
from .graph import FiniteGraph, SubgraphView, ball_view, boundary

UNIFORM = "uniform01"
GAUSSIAN = "gaussian01"
DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# Declared Lipschitz constant of the marginal distribution function; for the
# Gaussian this is the density sup, recorded only as a surrogate.
_LIPSCHITZ = {UNIFORM: 1.0, GAUSSIAN: 1.0 / math.sqrt(2.0 * math.pi)}

RESIDUAL_TOL = 1e-9
GRAM_TOL = 1e-10
NEAR_SPECTRUM_TOL = 1e-12


@dataclass(frozen=True)
class Ensemble:
    """IID single-site distribution times a coupling constant."""

    kind: str = UNIFORM
    coupling: float = 1.0

    def __post_init__(self):
        if self.kind not in _LIPSCHITZ:
            raise ValueError(f"unknown ensemble kind {self.kind!r}")

    @property
    def C_W(self) -> float:
        """Lipschitz constant of the raw (uncoupled) marginal distribution function."""
        return _LIPSCHITZ[self.kind]

    @property
    def effective_C_W(self) -> float:
        """Lipschitz constant of the distribution function of ``g * raw``."""
        g = abs(self.coupling)
        return math.inf if g == 0 else self.C_W / g

    def draw(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raw = rng.random(n) if self.kind == UNIFORM else rng.standard_normal(n)
        if self.coupling == 0:
            return np.zeros(n)
        return self.coupling * raw

    def to_json(self) -> dict:
        return {"kind": self.kind, "coupling": self.coupling, "C_W": self.C_W}


@dataclass(frozen=True, eq=False)
class Potential:
    """One potential value per vertex of ``graph``, in vertex order."""

    graph: FiniteGraph
    values: np.ndarray
    seed: int | None = None
    ensemble: Ensemble | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (len(self.graph),):
            raise InvalidDomain(f"potential has shape {vals.shape}, graph has {len(self.graph)} vertices")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __getitem__(self, v) -> float:
        return float(self.values[self.graph.idx(v)])

    def on(self, vertices: Iterable) -> np.ndarray:
        return np.array([self.values[self.graph.idx(v)] for v in vertices])

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Potential)
            and self.seed == other.seed
            and self.ensemble == other.ensemble
            and np.array_equal(self.values, other.values)
        )


def sample_potential(e: Ensemble, g: FiniteGraph, seed: int) -> Potential:
    """IID draws on every vertex of ``g``, deterministic in ``(e, g, seed)``."""
    rng = np.random.default_rng(int(seed))
    return Potential(g, e.draw(rng, len(g)), seed=int(seed), ensemble=e)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    domain: SubgraphView
    matrix: np.ndarray
    boundary_kind: str = DIRICHLET
    potential: Potential | None = None

    @property
    def vertices(self) -> tuple:
        return self.domain.members

    @cached_property
    def index_map(self) -> dict:
        return {v: i for i, v in enumerate(self.domain.members)}

    def row(self, v) -> int:
        try:
            return self.index_map[v]
        except KeyError:
            raise UnknownVertex(v) from None

    @property
    def norm_inf(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max())

    def __len__(self) -> int:
        return self.matrix.shape[0]


def assemble_hamiltonian(ambient: FiniteGraph, view: SubgraphView, v: Potential, kind: str = DIRICHLET) -> Hamiltonian:
    """Matrix of ``-Laplacian + V`` on ``view`` with Dirichlet or Neumann decoupling."""
    if view.ambient is not ambient:
        raise InvalidDomain("view does not belong to this ambient graph")
    if kind not in (DIRICHLET, NEUMANN):
        raise ValueError(f"unknown boundary kind {kind!r}")
    idx = view.indices
    n = len(idx)
    pos = {int(a): r for r, a in enumerate(idx)}
    H = np.zeros((n, n))
    for r, a in enumerate(idx):
        inner = [pos[b] for b in ambient.neighbors[a] if b in pos]
        H[r, inner] = -1.0
        deg = len(ambient.neighbors[a]) if kind == DIRICHLET else len(inner)
        H[r, r] = deg + v[ambient.vertices[a]]
    H.setflags(write=False)
    return Hamiltonian(view, H, kind, v)


def full_hamiltonian(g: FiniteGraph, v: Potential) -> Hamiltonian:
    return assemble_hamiltonian(g, SubgraphView(g, g.vertices), v, DIRICHLET)


def restrict(h: Hamiltonian, members: Iterable) -> Hamiltonian:
    """Dirichlet restriction of ``h``: the principal submatrix on ``members``."""
    sub = SubgraphView(h.domain.ambient, members)
    rows = [h.row(x) for x in sub.members]
    H = h.matrix[np.ix_(rows, rows)].copy()
    H.setflags(write=False)
    return Hamiltonian(sub, H, DIRICHLET, h.potential)


def shifted(h: Hamiltonian, t: float) -> Hamiltonian:
    """``h + t * Id`` on the same domain."""
    H = h.matrix + t * np.eye(len(h))
    H.setflags(write=False)
    return Hamiltonian(h.domain, H, h.boundary_kind, None)


@dataclass(frozen=True, eq=False)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns
    source: Hamiltonian
    norm_inf: float

    @property
    def vertices(self) -> tuple:
        return self.source.vertices

    def row(self, v) -> int:
        return self.source.row(v)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def tolerance(self) -> float:
        return NEAR_SPECTRUM_TOL * (1.0 + self.norm_inf)


def _dump(matrix: np.ndarray) -> str:
    return "\n".join(" ".join(f"{x:.17g}" for x in row) for row in matrix)


def eigendecompose(h: Hamiltonian, check: bool = True) -> SpectralData:
    """Full symmetric eigendecomposition, ascending eigenvalues."""
    H = h.matrix
    if H.shape[0] < 1:
        raise InvalidDomain("empty Hamiltonian")
    norm = h.norm_inf
    try:
        w, P = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigh did not converge: {exc}", _dump(H)) from exc
    if check:
        res = np.linalg.norm(H @ P - P * w, axis=0).max()
        if not res <= RESIDUAL_TOL * (1.0 + norm):
            raise NumericalFailure(f"eigen-residual {res:.3e} too large", _dump(H))
        gram = np.abs(P.T @ P - np.eye(len(w))).max()
        if not gram <= GRAM_TOL:
            raise NumericalFailure(f"eigenvectors not orthonormal ({gram:.3e})", _dump(H))
    w.setflags(write=False)
    P.setflags(write=False)
    return SpectralData(w, P, h, norm)


def spectral_gap(s: SpectralData, E: float) -> float:
    """``dist(spectrum, E)``."""
    return float(np.min(np.abs(s.eigenvalues - E)))


def _check_off_spectrum(s: SpectralData, E: float) -> None:
    gap = spectral_gap(s, E)
    if gap <= s.tolerance:
        raise NearSpectrum(E, gap, s.tolerance)


def green(s: SpectralData, x, y, E: float) -> float:
    """``G(x, y; E) = sum_j psi_j(x) psi_j(y) / (lambda_j - E)``."""
    _check_off_spectrum(s, E)
    P = s.eigenvectors
    kappa = P[s.row(x)] * P[s.row(y)]
    return float(np.dot(kappa, 1.0 / (s.eigenvalues - E)))


def green_matrix(s: SpectralData, E: float) -> np.ndarray:
    """Whole resolvent matrix at ``E`` in the source's vertex order."""
    _check_off_spectrum(s, E)
    P = s.eigenvectors
    G = (P * (1.0 / (s.eigenvalues - E))) @ P.T
    return 0.5 * (G + G.T)


def resolvent_matrix(s: SpectralData, E: float) -> np.ndarray:
    """``(H - E)^{-1}`` by LU solve.

    Far-off-diagonal entries of the resolvent can sit many orders of magnitude
    below ``eps * ||G||``; an eigen-sum loses them, a triangular solve keeps
    them to near full relative accuracy.
    """
    _check_off_spectrum(s, E)
    H = s.source.matrix
    n = H.shape[0]
    return np.linalg.solve(H - E * np.eye(n), np.eye(n))


def gre_terms(ambient_h: Hamiltonian, lam: SubgraphView, x, y, E: float):
    """Both sides of the geometric resolvent equation.

    Returns ``(lhs, terms)`` where ``lhs = G(x, y; E)`` on the domain of
    ``ambient_h`` and ``terms`` lists ``G_lam(x, u; E) * G(u', y; E)`` over the
    edge boundary pairs ``(u, u')`` of ``lam``.
    """
    dom = ambient_h.domain
    host = dom.ambient if not dom.is_proper else dom.graph()
    inner_view = SubgraphView(host, lam.members)
    if x not in inner_view or y in inner_view:
        raise InvalidDomain("need x inside and y outside the subgraph")
    if y not in dom:
        raise UnknownVertex(y)
    edge_b = boundary(host, inner_view)
    full = eigendecompose(ambient_h)
    local = eigendecompose(restrict(ambient_h, lam.members))
    G = resolvent_matrix(full, E)
    G_lam = resolvent_matrix(local, E)
    r_full, r_loc = ambient_h.index_map, local.source.index_map
    ry = r_full[y]
    lhs = float(G[r_full[x], ry])
    terms = [float(G_lam[r_loc[x], r_loc[u]] * G[r_full[u2], ry]) for u, u2 in edge_b.edges]
    return lhs, terms


def verify_gre(ambient_h: Hamiltonian, lam: SubgraphView, x, y, E: float, relative: bool = False) -> float:
    """Residual ``|LHS - RHS|`` of the geometric resolvent equation.

    With ``relative=True`` the residual is divided by
    ``max(|LHS|, sum |terms|)``, the scale at which cancellation can occur.
    """
    lhs, terms = gre_terms(ambient_h, lam, x, y, E)
    res = abs(lhs - math.fsum(terms))
    if relative:
        scale = max(abs(lhs), math.fsum(abs(t) for t in terms))
        return res / scale if scale > 0 else res
    return res


class Realization:
    """One disorder sample on an ambient graph, with cached ball spectra.

    Balls are taken in the ambient metric and their operators are Dirichlet
    restrictions of the ambient operator. Not thread-safe for writers; each
    worker builds its own.
    """

    def __init__(self, graph: FiniteGraph, potential: Potential, C_d: float):
        self.graph = graph
        self.potential = potential
        self.C_d = float(C_d)
        self._balls: dict = {}
        self._spec: dict = {}

    @cached_property
    def hamiltonian(self) -> Hamiltonian:
        return full_hamiltonian(self.graph, self.potential)

    def ball(self, center, r: int) -> SubgraphView:
        key = (center, r)
        view = self._balls.get(key)
        if view is None:
            view = ball_view(self.graph, center, r)
            self._balls[key] = view
        return view

    def spectral(self, center, r: int) -> SpectralData:
        key = (center, r)
        s = self._spec.get(key)
        if s is None:
            s = eigendecompose(assemble_hamiltonian(self.graph, self.ball(center, r), self.potential))
            self._spec[key] = s
        return s

    def contained_centers(self, center, L: int, r: int) -> list:
        """Centres ``x`` (ambient order) with ``B_r(x)`` inside ``B_L(center)``."""
        big = self.ball(center, L).member_set
        dist = self.graph.distances_from(center)
        out = []
        for i in np.flatnonzero((dist >= 0) & (dist <= L - r)):
            x = self.graph.vertices[i]
            if self.ball(x, r).member_set <= big:
                out.append(x)
        return out
