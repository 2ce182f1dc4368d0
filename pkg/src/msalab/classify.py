"""Ball classification predicates and scale bookkeeping.

All predicates take spectral data of a ball operator (a Dirichlet restriction)
and return a :class:`Verdict`. A negative verdict always carries witnesses so
that audits can replay exactly why a ball failed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateScale, InvalidSize
from .graph import FiniteGraph
from .operators import Realization, SpectralData, resolvent_matrix, spectral_gap

SECTION2 = "section2"
SECTION8 = "section8"
CUSTOM = "custom"

_PRESETS = {
    SECTION2: dict(alpha=1.5, beta=0.5, tau=0.125, rho=1.0 / 6.0),
    SECTION8: dict(alpha=4.0 / 3.0, beta=1.0 / 3.0, delta=0.25, sigma=1.0 / 3.0, rho=1.0 / 3.0, tau=0.125),
}
_TABLE_FIELDS = ("alpha", "beta", "tau", "rho", "sigma", "delta")

MAX_WITNESSES = 32
EXACT_DISJOINT_LIMIT = 20


@dataclass(frozen=True)
class ScaleParams:
    """Exponent bundle of the scale induction.

    Use :meth:`preset` for the two parameter tables; overriding any table
    exponent turns the preset into ``custom``. ``m``, ``L0``, ``kappa`` and
    ``theta`` can be set on a preset without changing its name.
    """

    alpha: float = 1.5
    beta: float = 0.5
    tau: float = 0.125
    rho: float = 1.0 / 6.0
    sigma: float | None = None
    delta: float | None = None
    m: float = 1.0
    kappa: float | None = None
    theta: float | None = None
    L0: int = 8
    preset: str = CUSTOM

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")
        for name in ("beta", "tau", "rho", "sigma", "delta"):
            val = getattr(self, name)
            if val is not None and not 0.0 < val < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {val}")
        if not self.m > 0:
            raise ValueError(f"m must be positive, got {self.m}")
        if self.L0 < 1:
            raise ValueError(f"L0 must be >= 1, got {self.L0}")
        if self.preset in _PRESETS:
            for k, v in _PRESETS[self.preset].items():
                if getattr(self, k) != v:
                    raise ValueError(f"preset {self.preset} requires {k}={v}")
        elif self.preset != CUSTOM:
            raise ValueError(f"unknown preset {self.preset!r}")

    @classmethod
    def from_preset(cls, name: str = SECTION2, **overrides) -> "ScaleParams":
        if name == CUSTOM:
            return cls(**overrides)
        base = dict(_PRESETS[name])
        changed = any(k in _TABLE_FIELDS and overrides[k] != base.get(k) for k in overrides)
        base.update(overrides)
        return cls(**base, preset=CUSTOM if changed else name)

    @property
    def ns_exponent(self) -> float:
        return (1.0 + self.rho) / self.alpha

    def ns_distance(self, L: int) -> int:
        """Smallest distance at which the non-singularity bound is required."""
        return ceil_power(L, self.ns_exponent)

    def with_m(self, m: float) -> "ScaleParams":
        return replace(self, m=m)

    def section8_relations(self) -> dict:
        """Consistency relations of the sub-exponential parameter table.

        Each entry maps a relation name to ``(lhs, rhs, holds)``.
        """
        out = {}
        if self.sigma is not None:
            target = 0.5 * (self.rho - self.sigma * (self.alpha - 1.0))
            out["tau == (rho - sigma(alpha-1))/2"] = (self.tau, target, math.isclose(self.tau, target))
        if self.delta is not None and self.sigma is not None:
            bound = min(self.beta, self.sigma)
            out["delta < min(beta, sigma)"] = (self.delta, bound, self.delta < bound)
        return out

    def to_json(self) -> dict:
        return asdict(self)


def ceil_power(L: float, e: float) -> int:
    """``ceil(L**e)`` that does not round exact integer powers up by one."""
    val = float(L) ** e
    near = round(val)
    if abs(val - near) <= 1e-9 * max(1.0, val):
        return int(near)
    return math.ceil(val)


def induction_theta(alpha: float, d: int, kappa: float) -> float:
    """Bonus exponent ``theta = 2/alpha - 2d/kappa - 1`` (positive iff kappa > 2 alpha d/(2 - alpha))."""
    return 2.0 / alpha - 2.0 * d / kappa - 1.0


def gamma(m: float, L: float, tau: float) -> float:
    """Required decay rate ``m (1 + L^-tau)``."""
    return m * (1.0 + L ** (-tau))


@dataclass(frozen=True)
class ScaleSequence:
    lengths: tuple

    def __len__(self) -> int:
        return len(self.lengths)

    def __getitem__(self, k: int) -> int:
        return self.lengths[k]


def _floor_power(L: int, alpha: float) -> int:
    """Exact ``floor(L**alpha)`` when alpha is a small-denominator rational."""
    n = math.floor(L ** alpha)
    frac = Fraction(alpha).limit_denominator(1000)
    if abs(float(frac) - alpha) > 1e-12:
        return n
    p, q = frac.numerator, frac.denominator
    target = L ** p
    while (n + 1) ** q <= target:
        n += 1
    while n > 0 and n ** q > target:
        n -= 1
    return n


def scale_sequence(p: ScaleParams, K: int, L0: int | None = None) -> ScaleSequence:
    """``L_0 < L_1 < ... < L_K`` with ``L_{k+1} = floor(L_k^alpha)``."""
    L = p.L0 if L0 is None else L0
    if L < 2:
        raise DegenerateScale(f"L_0 must be >= 2, got {L}")
    if K < 0:
        raise InvalidSize(f"K must be >= 0, got {K}")
    out = [L]
    for _ in range(K):
        nxt = _floor_power(out[-1], p.alpha)
        if nxt <= out[-1]:
            raise DegenerateScale(f"floor({out[-1]}^{p.alpha}) = {nxt} does not grow")
        out.append(nxt)
    return ScaleSequence(tuple(out))


def scale_sequence_alpha(alpha: float, L0: int, K: int) -> ScaleSequence:
    """Same as :func:`scale_sequence` for a bare exponent (alpha = 1 allowed, and degenerate)."""
    if alpha <= 1.0:
        raise DegenerateScale(f"alpha={alpha} gives no growth")
    return scale_sequence(ScaleParams(alpha=alpha, L0=L0), K)


@dataclass(frozen=True)
class Verdict:
    """Outcome of one predicate.

    ``positive`` is True for the benign alternative (NR, NS, NT, CNR,
    localized). Witnesses are kept for negative verdicts, at most
    ``MAX_WITNESSES`` of them, worst first; ``info`` holds counts and the
    thresholds that were applied.
    """

    label: str
    positive: bool
    witnesses: tuple = ()
    info: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.positive


def classify_resonant(s: SpectralData, E: float, p: ScaleParams, L: int) -> Verdict:
    """Resonant iff ``dist(spectrum, E) < exp(-L^beta)``."""
    gap = spectral_gap(s, E)
    thr = math.exp(-(L ** p.beta))
    info = {"gap": gap, "threshold": thr, "L": L}
    if gap < thr:
        j = int(np.argmin(np.abs(s.eigenvalues - E)))
        return Verdict("R", False, ((j, float(s.eigenvalues[j]), gap),), info)
    return Verdict("NR", True, (), info)


def pair_distances(g: FiniteGraph, vertices: Sequence) -> np.ndarray:
    idx = np.array([g.idx(v) for v in vertices])
    if len(g) <= 4000:
        return g.distance_matrix()[np.ix_(idx, idx)]
    return np.array([g.distances_from(v)[idx] for v in vertices])


def _worst_pairs(vertices, mask, excess, D) -> tuple:
    ii, jj = np.nonzero(np.triu(mask, k=1))
    if len(ii) == 0:
        ii, jj = np.nonzero(mask)
    order = np.lexsort((jj, ii, -excess[ii, jj]))[:MAX_WITNESSES]
    return tuple(
        (vertices[ii[k]], vertices[jj[k]], int(D[ii[k], jj[k]]), float(excess[ii[k], jj[k]]))
        for k in order
    )


def classify_singular(s: SpectralData, ball: tuple, E: float, p: ScaleParams, C_d: float) -> Verdict:
    """(E, m)-non-singularity of the ball operator ``s``.

    NS iff ``C_d^2 L^d |G(x, y; E)| <= exp(-gamma(m, L) d(x, y))`` for every
    pair at distance ``>= ceil(L^((1+rho)/alpha))``. Distances are those of
    the ambient graph of the ball. Witness tuples are
    ``(x, y, d(x, y), log-excess)``.
    """
    center, L = ball
    g = s.source.domain.ambient
    d = g.dim_hint
    thr_d = p.ns_distance(L)
    # at L = 0 only the diagonal pair qualifies and the prefactor vanishes
    gam = gamma(p.m, L, p.tau) if L > 0 else 0.0
    info = {"L": L, "min_distance": thr_d, "gamma": gam, "C_d": C_d, "center": center}
    gap = spectral_gap(s, E)
    if gap <= s.tolerance:
        info["reason"] = "NearSpectrum"
        return Verdict("S", False, (("NearSpectrum", float(E), gap),), info)
    verts = s.vertices
    D = pair_distances(g, verts)
    mask = D >= thr_d
    if not mask.any():
        info["pairs_checked"] = 0
        return Verdict("NS", True, (), info)
    G = np.abs(resolvent_matrix(s, E))
    prefactor = math.log(C_d * C_d) + d * math.log(L) if L > 0 else -math.inf
    with np.errstate(divide="ignore"):
        excess = prefactor + np.log(G) + gam * D
    bad = mask & (excess > 0)
    info["pairs_checked"] = int(np.triu(mask, k=1).sum() + np.trace(mask))
    if not bad.any():
        info["max_log_excess"] = float(excess[mask].max())
        return Verdict("NS", True, (), info)
    info["violations"] = int(np.triu(bad).sum())
    return Verdict("S", False, _worst_pairs(verts, bad, excess, D), info)


def classify_m_localized(s: SpectralData, ball: tuple, p: ScaleParams) -> Verdict:
    """Eigenfunction-correlator decay on the whole ball.

    Localized iff ``sum_i |psi_i(x) psi_i(y)| <= exp(-gamma(m, L) d(x, y))``
    for all pairs at distance ``>= ceil(L^(7/8))``. Small eigenvector entries
    are only as accurate as the eigensolver resolves them.
    """
    center, L = ball
    g = s.source.domain.ambient
    thr_d = ceil_power(L, 7.0 / 8.0) if L > 0 else 0
    gam = gamma(p.m, L, p.tau) if L > 0 else math.inf
    info = {"L": L, "min_distance": thr_d, "gamma": gam, "center": center}
    verts = s.vertices
    D = pair_distances(g, verts)
    mask = (D >= thr_d) & (D > 0)
    if L < 1 or not mask.any():
        return Verdict("localized", True, (), info)
    A = np.abs(s.eigenvectors)
    S = A @ A.T
    with np.errstate(divide="ignore"):
        excess = np.log(S) + gam * D
    bad = mask & (excess > 0)
    if not bad.any():
        return Verdict("localized", True, (), info)
    info["violations"] = int(np.triu(bad).sum())
    return Verdict("not-localized", False, _worst_pairs(verts, bad, excess, D), info)


@dataclass(frozen=True)
class DisjointCount:
    count: int
    exact: bool
    chosen: tuple = ()

    def __int__(self) -> int:
        return self.count


def _conflicts(centers: Sequence, radius: int, g: FiniteGraph) -> list[int]:
    """Bitmask of centres whose radius-balls intersect (graph metric: d <= 2r)."""
    D = pair_distances(g, centers)
    n = len(centers)
    masks = []
    for i in range(n):
        m = 0
        for j in range(n):
            if i != j and D[i, j] <= 2 * radius:
                m |= 1 << j
        masks.append(m)
    return masks


def _max_independent(masks: list[int], alive: int) -> int:
    """Maximum independent set (as bitmask) inside ``alive``."""
    if alive == 0:
        return 0
    # vertex of maximum degree inside alive; isolated vertices are taken for free
    best_v, best_deg = -1, -1
    free = 0
    a = alive
    while a:
        v = (a & -a).bit_length() - 1
        a &= a - 1
        deg = bin(masks[v] & alive).count("1")
        if deg == 0:
            free |= 1 << v
        elif deg > best_deg:
            best_v, best_deg = v, deg
    if best_v < 0:
        return free
    rest = alive & ~free
    without = _max_independent(masks, rest & ~(1 << best_v))
    with_v = (1 << best_v) | _max_independent(masks, rest & ~(1 << best_v) & ~masks[best_v])
    pick = with_v if bin(with_v).count("1") > bin(without).count("1") else without
    return free | pick


def max_disjoint_singular(centers: Sequence, radius: int, g: FiniteGraph) -> DisjointCount:
    """Largest family of pairwise disjoint balls ``B_radius(x_i)``.

    Exact search for at most 20 centres, min-degree greedy (a lower bound)
    above that.
    """
    centers = list(centers)
    n = len(centers)
    if n == 0:
        return DisjointCount(0, True, ())
    masks = _conflicts(centers, radius, g)
    if n <= EXACT_DISJOINT_LIMIT:
        sel = _max_independent(masks, (1 << n) - 1)
        chosen = tuple(centers[i] for i in range(n) if sel >> i & 1)
        return DisjointCount(len(chosen), True, chosen)
    alive = set(range(n))
    chosen_idx = []
    while alive:
        v = min(alive, key=lambda i: (sum(1 for j in alive if masks[i] >> j & 1), i))
        chosen_idx.append(v)
        alive -= {v} | {j for j in alive if masks[v] >> j & 1}
    chosen_idx.sort()
    return DisjointCount(len(chosen_idx), False, tuple(centers[i] for i in chosen_idx))


def brute_force_disjoint(centers: Sequence, radius: int, g: FiniteGraph) -> int:
    """Enumerate all subsets; reference for small instances only."""
    centers = list(centers)
    D = pair_distances(g, centers) if centers else None
    for k in range(len(centers), 0, -1):
        for sub in combinations(range(len(centers)), k):
            if all(D[i, j] > 2 * radius for i, j in combinations(sub, 2)):
                return k
    return 0


PAIRWISE = "pairwise"
COUNTED = "counted"


def classify_tunneling(
    real: Realization,
    big_ball: tuple,
    E: float,
    p: ScaleParams,
    small_radius: int,
    mode: str = PAIRWISE,
) -> Verdict:
    """Tunneling test for ``B_{L_{k+1}}(u)`` from its singular ``L_k``-sub-balls.

    Pairwise mode: T iff two disjoint singular sub-balls exist. Counted mode:
    T iff the largest disjoint family exceeds ``L_k^(sigma(alpha-1))``.
    Witnesses are singular sub-ball centres (the disjoint family first).
    """
    center, L = big_ball
    if not L > 2 * small_radius:
        raise InvalidSize(f"need L_(k+1) > 2 L_k, got {L} and {small_radius}")
    centers = real.contained_centers(center, L, small_radius)
    singular = []
    for x in centers:
        v = classify_singular(real.spectral(x, small_radius), (x, small_radius), E, p, real.C_d)
        if not v.positive:
            singular.append(x)
    info = {"L": L, "small_radius": small_radius, "probed": len(centers), "singular": len(singular), "mode": mode}
    if mode == PAIRWISE:
        pair = None
        if singular:
            D = pair_distances(real.graph, singular)
            hits = np.argwhere(np.triu(D > 2 * small_radius, k=1))
            if len(hits):
                i, j = hits[0]
                pair = (singular[i], singular[j])
        count = max_disjoint_singular(singular, small_radius, real.graph)
        info["count"] = count.count
        info["exact"] = count.exact
        if pair is not None:
            rest = tuple(x for x in singular if x not in pair)
            return Verdict("T", False, pair + rest[: MAX_WITNESSES - 2], info)
        return Verdict("NT", True, tuple(singular), info)
    if mode != COUNTED:
        raise ValueError(f"unknown tunneling mode {mode!r}")
    if p.sigma is None:
        raise ValueError("counted tunneling needs sigma")
    threshold = small_radius ** (p.sigma * (p.alpha - 1.0))
    count = max_disjoint_singular(singular, small_radius, real.graph)
    info.update(count=count.count, exact=count.exact, threshold=threshold)
    if count.count > threshold:
        return Verdict("T", False, count.chosen[:MAX_WITNESSES], info)
    return Verdict("NT", True, tuple(singular), info)


def classify_cnr(real: Realization, big_ball: tuple, E: float, p: ScaleParams, small_radius: int) -> Verdict:
    """Complete non-resonance over a declared probe set.

    Probes the big ball, the concentric balls of every radius in
    ``[L_k, L_{k+1})`` and every radius-``L_k`` ball contained in the big
    ball. Witnesses are ``(center, radius, gap)`` of resonant probes.
    """
    center, L = big_ball
    probes = [(center, L)]
    probes += [(center, r) for r in range(small_radius, L)]
    probes += [(x, small_radius) for x in real.contained_centers(center, L, small_radius) if x != center]
    bad = []
    for c, r in probes:
        v = classify_resonant(real.spectral(c, r), E, p, r)
        if not v.positive:
            bad.append((c, r, v.info["gap"]))
    info = {"probes": len(probes), "probe_set": "big+concentric[L_k,L)+contained L_k-balls", "resonant": len(bad)}
    if bad:
        return Verdict("not-CNR", False, tuple(bad[:MAX_WITNESSES]), info)
    return Verdict("CNR", True, (), info)


@dataclass
class BallVerdict:
    """All flags for one (ball, E); ``None`` marks a predicate not evaluated."""

    center: object
    radius: int
    E: float
    resonant: bool | None = None
    singular: bool | None = None
    tunneling: bool | None = None
    cnr: bool | None = None
    m_localized: bool | None = None
    witnesses: dict = field(default_factory=dict)

    def record(self, name: str, v: Verdict) -> None:
        setattr(self, name, v.positive if name in ("cnr", "m_localized") else not v.positive)
        if v.witnesses:
            self.witnesses[name] = v.witnesses
