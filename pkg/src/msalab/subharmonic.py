"""(l, q)-subharmonic functions on graphs and radial descent bounds.

Functions ``f`` are accepted as arrays in the vertex order of the host graph,
as mappings vertex -> value, or as callables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classify import ScaleParams, classify_singular, gamma
from .errors import HypothesisFailure, InvalidDomain
from .graph import FiniteGraph, lattice_ball_growth
from .operators import Hamiltonian, eigendecompose, resolvent_matrix, restrict

RTOL = 1e-12
CONFIRMED = "confirmed"
REFUTED = "refuted"
NOT_APPLICABLE = "not-applicable"


def values_on(f, g: FiniteGraph) -> np.ndarray:
    """Values of ``f`` in the vertex order of ``g``."""
    if isinstance(f, np.ndarray):
        vals = np.asarray(f, dtype=float)
        if vals.shape != (len(g),):
            raise InvalidDomain(f"f has shape {vals.shape}, graph has {len(g)} vertices")
    elif isinstance(f, Mapping):
        vals = np.array([f[v] for v in g.vertices], dtype=float)
    elif callable(f):
        vals = np.array([f(v) for v in g.vertices], dtype=float)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape != (len(g),):
            raise InvalidDomain(f"f has shape {vals.shape}, graph has {len(g)} vertices")
    if (vals < 0).any():
        raise InvalidDomain("f must be nonnegative")
    return vals


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"q must lie in (0, 1), got {q}")


def _check_ball(g: FiniteGraph, center, L: int) -> np.ndarray:
    dist = g.distances_from(center)
    if (dist <= L).all():
        raise InvalidDomain(f"B_{L}({center!r}) is the whole graph")
    return dist


def _neighborhood_max(g: FiniteGraph, vals: np.ndarray, i: int, r: int) -> float:
    dist = g.distances_from(g.vertices[i])
    return float(vals[dist <= r].max())


def _le(a: float, b: float, rtol: float) -> bool:
    return a <= b + rtol * abs(b)


@dataclass(frozen=True)
class Check:
    """Boolean outcome with the offending points ``(x, f(x), q * max)``."""

    holds: bool
    witnesses: tuple = ()
    checked: int = 0

    def __bool__(self) -> bool:
        return self.holds


def _interior(g: FiniteGraph, dist: np.ndarray, L: int, ell: int) -> list[int]:
    """Indices ``x`` with ``B_ell(x)`` inside ``B_L(center)``."""
    out = []
    for i in np.flatnonzero(dist <= L - ell):
        dx = g.distances_from(g.vertices[i])
        if (dist[dx <= ell] <= L).all():
            out.append(int(i))
    return out


def is_lq_subharmonic(f, g: FiniteGraph, ball: tuple, ell: int, q: float, rtol: float = RTOL) -> Check:
    """``f(x) <= q max_{B_(ell+1)(x)} f`` for every ``x`` with ``B_ell(x)`` in the ball."""
    center, L = ball
    if not L >= ell >= 0:
        raise ValueError(f"need L >= ell >= 0, got L={L}, ell={ell}")
    _check_q(q)
    dist = _check_ball(g, center, L)
    vals = values_on(f, g)
    bad = []
    pts = _interior(g, dist, L, ell)
    for i in pts:
        rhs = q * _neighborhood_max(g, vals, i, ell + 1)
        if not _le(vals[i], rhs, rtol):
            bad.append((g.vertices[i], float(vals[i]), rhs))
    return Check(not bad, tuple(bad), len(pts))


def radial_bound(L: int, ell: int, q: float) -> float:
    """``q^floor((L+1)/(ell+1))``: bound on ``f(center) / max f``."""
    if not L >= ell >= 0:
        raise ValueError(f"need L >= ell >= 0, got L={L}, ell={ell}")
    _check_q(q)
    return q ** ((L + 1) // (ell + 1))


def radial_bound_weak(L: int, ell: int, q: float) -> float:
    """The cruder ``q^((L - ell)/(ell + 1))``, never smaller than :func:`radial_bound`."""
    _check_q(q)
    return q ** ((L - ell) / (ell + 1))


def two_ball_bound(r1: int, r2: int, ell: int, q: float) -> float:
    """``q^(floor((r1+1)/(ell+1)) + floor((r2+1)/(ell+1)))``."""
    if not (r1 >= ell >= 0 and r2 >= ell):
        raise ValueError(f"need r1, r2 >= ell >= 0, got {r1}, {r2}, {ell}")
    _check_q(q)
    return q ** ((r1 + 1) // (ell + 1) + (r2 + 1) // (ell + 1))


@dataclass(frozen=True)
class DescentReport:
    """``f(center)`` against both forms of the radial bound.

    ``global_bound`` uses the max of ``f`` over the host graph,
    ``local_bound`` the max over ``B_(L+1)(center)`` (never larger).
    """

    value: float
    factor: float
    global_bound: float
    local_bound: float

    @property
    def holds(self) -> bool:
        return _le(self.value, self.local_bound, RTOL)


def radial_descent(f, g: FiniteGraph, ball: tuple, ell: int, q: float) -> DescentReport:
    center, L = ball
    vals = values_on(f, g)
    dist = g.distances_from(center)
    fac = radial_bound(L, ell, q)
    return DescentReport(
        value=float(vals[g.idx(center)]),
        factor=fac,
        global_bound=fac * float(vals.max()),
        local_bound=fac * float(vals[(dist >= 0) & (dist <= L + 1)].max()),
    )


def _annulus_c(a: int, b: int, ell: int, c: int | None) -> int:
    w = b - a
    if w < 0:
        raise ValueError(f"annulus ({a}, {b}) has negative width")
    if c is None:
        if ell == 0:
            if w > 0:
                raise HypothesisFailure(f"annulus ({a}, {b}) of width {w} cannot have width <= c * 0")
            return 1
        c = max(1, math.ceil(w / ell))
    if c < 1:
        raise HypothesisFailure(f"annulus multiplier must be >= 1, got {c}")
    if w > c * ell:
        raise HypothesisFailure(f"annulus ({a}, {b}) has width {w} > c * ell = {c * ell}")
    return int(c)


def annuli_C(annuli: Sequence, ell: int) -> int:
    """``C = sum c_i`` for annuli ``(a, b)`` or ``(a, b, c)``.

    Without an explicit ``c`` the smallest admissible one,
    ``max(1, ceil((b - a) / ell))``, is used.
    """
    total = 0
    for ann in annuli:
        a, b = ann[0], ann[1]
        c = ann[2] if len(ann) > 2 else None
        total += _annulus_c(a, b, ell, c)
    return total


def annuli_bound(L: int, ell: int, q: float, annuli: Sequence = ()) -> float:
    """``q^(floor((L+1)/(ell+1)) - 2C)`` for a cover of the irregular set by annuli."""
    if not L >= ell >= 0:
        raise ValueError(f"need L >= ell >= 0, got L={L}, ell={ell}")
    _check_q(q)
    C = annuli_C(annuli, ell)
    if not 2 * C * (ell + 1) < L:
        raise HypothesisFailure(f"2C(ell+1) = {2 * C * (ell + 1)} is not < L = {L}")
    return q ** ((L + 1) // (ell + 1) - 2 * C)


def regular_set(f, g: FiniteGraph, ball: tuple, ell: int, q: float, rtol: float = RTOL) -> frozenset:
    """Points of the ball with ``f(x) <= q max_{B_(ell+1)(x)} f``."""
    center, L = ball
    _check_q(q)
    dist = _check_ball(g, center, L)
    vals = values_on(f, g)
    out = []
    for i in np.flatnonzero((dist >= 0) & (dist <= L)):
        if _le(vals[i], q * _neighborhood_max(g, vals, int(i), ell + 1), rtol):
            out.append(g.vertices[i])
    return frozenset(out)


def is_lqr_subharmonic(f, g: FiniteGraph, ball: tuple, ell: int, q: float, rtol: float = RTOL) -> Check:
    """Annular variant of subharmonicity relative to the regular set.

    For every radius ``r >= 0`` with ``S_(r+ell+1)(u)`` inside ``B_(L+1)(u)``
    and ``S_r(u)`` inside the regular set, every ``x`` in ``B_r(u)`` must
    satisfy ``f(x) <= q max_{B_(r+ell+1)(u)} f``. Witnesses are
    ``(r, x, f(x), bound)``.
    """
    center, L = ball
    _check_q(q)
    dist = _check_ball(g, center, L)
    vals = values_on(f, g)
    reg = regular_set(vals, g, ball, ell, q, rtol)
    reg_mask = np.array([v in reg for v in g.vertices])
    bad = []
    checked = 0
    for r in range(0, L + 1):
        outer = dist == r + ell + 1
        if outer.any() and r + ell + 1 > L + 1:
            continue
        if not reg_mask[dist == r].all():
            continue
        checked += 1
        bound = q * float(vals[(dist >= 0) & (dist <= r + ell + 1)].max())
        inner = np.flatnonzero((dist >= 0) & (dist <= r))
        j = inner[np.argmax(vals[inner])]
        if not _le(vals[j], bound, rtol):
            bad.append((r, g.vertices[j], float(vals[j]), bound))
    return Check(not bad, tuple(bad), checked)


def irregular_annuli(f, g: FiniteGraph, ball: tuple, ell: int, q: float) -> tuple:
    """Tightest cover of the irregular points by annuli ``B_b(u) minus B_a(u)``.

    Consecutive irregular radii ``s..e`` become one annulus ``(s-1, e)``; the
    centre alone (radius 0) is covered by ``(-1, 0)``.
    """
    center, L = ball
    reg = regular_set(f, g, ball, ell, q)
    dist = g.distances_from(center)
    radii = sorted({int(dist[g.idx(v)]) for v in g.vertices if dist[g.idx(v)] <= L and v not in reg})
    out = []
    for r in radii:
        if out and out[-1][1] == r - 1:
            out[-1] = (out[-1][0], r)
        else:
            out.append((r - 1, r))
    return tuple(out)


@dataclass(frozen=True)
class SubharmonicCertificate:
    center: object
    L: int
    ell: int
    q: float
    regular_set: frozenset
    annuli_cover: tuple
    C: int
    lq_subharmonic: bool
    lqr_subharmonic: bool
    info: dict = field(default_factory=dict)

    @property
    def width(self) -> int:
        return sum(b - a for a, b in self.annuli_cover)


def certify(f, g: FiniteGraph, ball: tuple, ell: int, q: float) -> SubharmonicCertificate:
    center, L = ball
    cover = irregular_annuli(f, g, ball, ell, q)
    try:
        C = annuli_C(cover, ell)
    except HypothesisFailure:
        C = -1
    return SubharmonicCertificate(
        center, L, ell, q,
        regular_set(f, g, ball, ell, q),
        cover, C,
        is_lq_subharmonic(f, g, ball, ell, q).holds,
        is_lqr_subharmonic(f, g, ball, ell, q).holds,
    )


@dataclass(frozen=True)
class GreenSubharmonicity:
    status: str
    q: float
    y: object = None
    witnesses: tuple = ()
    singular_balls: tuple = ()


def verify_green_subharmonicity(
    ambient_h: Hamiltonian,
    ball: tuple,
    E: float,
    p: ScaleParams,
    ell: int,
    y=None,
    C_d: float | None = None,
) -> GreenSubharmonicity:
    """Check that ``x -> |G(x, y; E)|`` is (ell, q)-subharmonic when every ell-ball inside is NS.

    ``q = exp(-gamma(m, ell, tau) ell)``. Returns ``not-applicable`` when some
    ell-ball is singular. ``y`` defaults to the first vertex at distance
    ``L + 1`` from the centre.
    """
    center, L = ball
    if ell < 1:
        raise ValueError("ell must be >= 1")
    host = ambient_h.domain.graph() if ambient_h.domain.is_proper else ambient_h.domain.ambient
    dist = _check_ball(host, center, L)
    if C_d is None:
        C_d = lattice_ball_growth(host.dim_hint, ell).C_d
    q = math.exp(-gamma(p.m, ell, p.tau) * ell)
    if y is None:
        y = host.vertices[int(np.flatnonzero(dist == L + 1)[0])]
    elif dist[host.idx(y)] <= L:
        raise InvalidDomain(f"y={y!r} lies inside the ball")
    singular = []
    for i in _interior(host, dist, L, ell):
        x = host.vertices[i]
        members = [host.vertices[j] for j in np.flatnonzero((host.distances_from(x) >= 0) & (host.distances_from(x) <= ell))]
        s = eigendecompose(restrict(ambient_h, members))
        if not classify_singular(s, (x, ell), E, p, C_d).positive:
            singular.append(x)
    if singular:
        return GreenSubharmonicity(NOT_APPLICABLE, q, y, (), tuple(singular))
    full = eigendecompose(ambient_h)
    G = resolvent_matrix(full, E)
    col = G[:, ambient_h.row(y)]
    f = np.abs(np.array([col[ambient_h.row(v)] for v in host.vertices]))
    chk = is_lq_subharmonic(f, host, ball, ell, q)
    return GreenSubharmonicity(CONFIRMED if chk else REFUTED, q, y, chk.witnesses)


# Certified random test functions


def exponential_profile(g: FiniteGraph, center, L: int, ell: int, q: float) -> np.ndarray:
    """``q^((L + 1 - d(center, x)) / (ell + 1))`` inside ``B_(L+1)``, 1 outside."""
    dist = g.distances_from(center).astype(float)
    expo = np.clip((L + 1 - dist) / (ell + 1), 0.0, None)
    return q ** expo


def random_subharmonic(rng: np.random.Generator, g: FiniteGraph, center, L: int, ell: int, q: float,
                       max_tries: int = 50):
    """Exponential profile with random monotone radial damping and vertex noise.

    The candidate is returned only after :func:`is_lq_subharmonic` accepts
    it; ``None`` if no candidate passed in ``max_tries`` attempts.
    """
    dist = g.distances_from(center)
    base = exponential_profile(g, center, L, ell, q)
    for _ in range(max_tries):
        steps = rng.uniform(0.0, 1.0, L + 2)
        damp = np.cumsum(steps)
        damp = damp / damp[-1]
        radial = damp[np.minimum(dist, L + 1)] ** rng.uniform(0.0, 3.0)
        noise = 1.0 - rng.uniform(0.0, 0.5) * rng.random(len(g))
        f = base * radial * noise
        outside = dist > L + 1
        f[outside] = rng.uniform(0.0, 2.0, outside.sum())
        if f.max() == 0:
            continue
        if is_lq_subharmonic(f, g, (center, L), ell, q):
            return f
    return None


def random_annular(rng: np.random.Generator, g: FiniteGraph, center, L: int, ell: int, q: float,
                   n_spikes: int = 2, max_tries: int = 50):
    """Subharmonic profile broken by random bumps on a few spheres.

    The candidate is returned with its irregular-annuli cover after
    :func:`is_lqr_subharmonic` accepts it.
    """
    dist = g.distances_from(center)
    for _ in range(max_tries):
        f = random_subharmonic(rng, g, center, L, ell, q)
        if f is None:
            continue
        f = f.copy()
        radii = rng.choice(np.arange(1, L + 1), size=min(n_spikes, L), replace=False)
        for r in radii:
            shell = np.flatnonzero(dist == r)
            pick = shell[rng.random(len(shell)) < 0.5]
            f[pick] *= rng.uniform(1.0, 1.0 / q ** 2)
        ball = (center, L)
        if is_lqr_subharmonic(f, g, ball, ell, q):
            return f, irregular_annuli(f, g, ball, ell, q)
    return None
