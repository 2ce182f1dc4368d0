"""Eigenfunction correlators, evolution amplitudes and decay-rate fits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np

from .classify import ScaleParams, classify_singular
from .errors import InsufficientData, InvalidGeometry
from .graph import FiniteGraph, ball, build_box_graph, lattice_ball_growth
from .operators import Ensemble, SpectralData, eigendecompose, full_hamiltonian, restrict, sample_potential
from .seeding import map_trials

BOUND_HOLDS = "bound_holds"
NOT_APPLICABLE = "not_applicable"
VIOLATION = "violation"


@dataclass(frozen=True)
class Correlator:
    x: object
    y: object
    interval: tuple | None
    value: float


def _in_interval(eigs: np.ndarray, I) -> np.ndarray:
    if I is None:
        return np.ones(len(eigs), dtype=bool)
    lo, hi = I
    return (eigs >= lo) & (eigs <= hi)


def ef_correlator(s: SpectralData, x, y, I=None) -> Correlator:
    """``sum_{lambda_i in I} |psi_i(x) psi_i(y)|``; ``I=None`` means the whole spectrum.

    This is the supremum of ``|<1_x, phi(H) 1_y>|`` over Borel ``phi`` bounded
    by 1 and supported in ``I``.
    """
    P = s.eigenvectors
    mask = _in_interval(s.eigenvalues, I)
    prod = np.abs(P[s.row(x), mask] * P[s.row(y), mask])
    return Correlator(x, y, None if I is None else tuple(I), float(math.fsum(prod)))


def spectral_function_element(s: SpectralData, x, y, phi_values: np.ndarray) -> float:
    """``<1_x, phi(H) 1_y>`` for ``phi`` given by its values on the eigenvalues."""
    P = s.eigenvectors
    return float(np.dot(phi_values, P[s.row(x)] * P[s.row(y)]))


def evolution_amplitude(s: SpectralData, x, y, t: float) -> float:
    """``|sum_i exp(-i t lambda_i) psi_i(x) psi_i(y)|``."""
    P = s.eigenvectors
    kappa = P[s.row(x)] * P[s.row(y)]
    return float(abs(np.dot(np.exp(-1j * t * s.eigenvalues), kappa)))


def evolution_row(s: SpectralData, x, t: float) -> np.ndarray:
    """Amplitudes ``|<1_y, exp(-itH) 1_x>|`` for every ``y`` of the domain."""
    P = s.eigenvectors
    return np.abs(P @ (np.exp(-1j * t * s.eigenvalues) * P[s.row(x)]))


@dataclass(frozen=True)
class GKAudit:
    """Outcome of the correlator bound audit for one sample.

    ``premise`` lists, per eigenvalue in ``I``, ``(lambda, x_ball_NS, y_ball_NS)``.
    """

    status: str
    correlator: float
    bound: float
    premise: tuple = ()
    witness: dict | None = None
    info: dict = field(default_factory=dict)


def gk_bound_audit(s: SpectralData, g: FiniteGraph, x, y, L: int, I: tuple, p: ScaleParams,
                   C_d: float | None = None) -> GKAudit:
    """Per-sample check of ``correlator <= 4 exp(-m L)`` under the NS premise.

    ``s`` is the spectral data of the operator on ``g``, which must contain
    both balls. The premise requires, for every eigenvalue ``lambda_i`` in
    ``I``, that ``B_L(x)`` or ``B_L(y)`` be ``(lambda_i, m)``-NS; when it
    fails the sample is ``not_applicable``.
    """
    if not g.distance(x, y) > 2 * L + 1:
        raise InvalidGeometry(f"d({x!r}, {y!r}) = {g.distance(x, y)} must exceed 2L+1 = {2 * L + 1}")
    if C_d is None:
        C_d = lattice_ball_growth(g.dim_hint, max(L, 1)).C_d
    h = s.source
    sx = eigendecompose(restrict(h, sorted(ball(g, x, L), key=g.idx)))
    sy = eigendecompose(restrict(h, sorted(ball(g, y, L), key=g.idx)))
    corr = ef_correlator(s, x, y, I).value
    bound = 4.0 * math.exp(-p.m * L)
    premise = []
    ok = True
    for lam in s.eigenvalues[_in_interval(s.eigenvalues, I)]:
        nx = classify_singular(sx, (x, L), float(lam), p, C_d).positive
        ny = classify_singular(sy, (y, L), float(lam), p, C_d).positive
        premise.append((float(lam), nx, ny))
        ok = ok and (nx or ny)
    info = {"eigenvalues_in_I": len(premise), "C_d": C_d, "m": p.m}
    if not ok:
        return GKAudit(NOT_APPLICABLE, corr, bound, tuple(premise), None, info)
    if corr <= bound:
        return GKAudit(BOUND_HOLDS, corr, bound, tuple(premise), None, info)
    witness = {"x": x, "y": y, "L": L, "I": tuple(I), "correlator": corr, "bound": bound}
    return GKAudit(VIOLATION, corr, bound, tuple(premise), witness, info)


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r_squared: float
    dropped: int

    @property
    def rate(self) -> float:
        return -self.slope


def decay_fit(points: Sequence[tuple]) -> DecayFit:
    """Least-squares line through ``(distance, ln value)``.

    Nonpositive values are dropped and counted; fewer than three distinct
    distances left raises :class:`InsufficientData`.
    """
    pts = [(float(d), float(v)) for d, v in points]
    kept = [(d, v) for d, v in pts if v > 0 and math.isfinite(v)]
    if len({d for d, _ in kept}) < 3:
        raise InsufficientData(f"need 3 distinct distances with positive values, got {len(kept)} points")
    x = np.array([d for d, _ in kept])
    y = np.log([v for _, v in kept])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_res = float(np.dot(resid, resid))
    ss_tot = float(np.dot(y - y.mean(), y - y.mean()))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    if abs(slope) < 1e-14:
        slope = 0.0
    return DecayFit(float(slope), float(intercept), r2, len(pts) - len(kept))


def _decay_trial(i: int, seed: int, *, n, ensemble, pairs, I):
    g = build_box_graph(1, n)
    s = eigendecompose(full_hamiltonian(g, sample_potential(ensemble, g, seed)))
    return {"trial": i, "seed": seed, "values": tuple(ef_correlator(s, x, y, I).value for x, y in pairs)}


def centred_pair(n: int, d: int) -> tuple[int, int]:
    """``(x, x + d)`` placed symmetrically in an interval of ``n`` sites."""
    x = (n - d) // 2
    return x, x + d


@dataclass(frozen=True)
class DecayCurve:
    distances: tuple
    mean: tuple
    median: tuple
    ci_low: tuple
    ci_high: tuple
    trials: int
    seed_base: int
    fit: DecayFit
    rows: tuple = field(default=(), repr=False)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["distance", "mean", "median", "ci_low", "ci_high"])
            for row in zip(self.distances, self.mean, self.median, self.ci_low, self.ci_high):
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def correlator_decay(n: int, ensemble: Ensemble, distances: Sequence[int], trials: int, seed_base: int,
                     I=None, workers: int = 1) -> DecayCurve:
    """Trial means of the correlator between ``x`` and ``x + d`` on an interval of ``n`` sites.

    The fit uses the means; medians and normal 95% intervals for the mean
    are reported alongside.
    """
    pairs = tuple(centred_pair(n, d) for d in distances)
    fn = partial(_decay_trial, n=n, ensemble=ensemble, pairs=pairs, I=I)
    rows = map_trials(fn, trials, seed_base, workers)
    vals = np.array([r["values"] for r in rows])
    mean = np.array([math.fsum(vals[:, j]) / trials for j in range(len(pairs))])
    med = np.median(vals, axis=0)
    sd = vals.std(axis=0, ddof=1) if trials > 1 else np.zeros(len(pairs))
    half = 1.96 * sd / math.sqrt(trials)
    fit = decay_fit(list(zip(distances, mean)))
    return DecayCurve(tuple(int(d) for d in distances), tuple(mean), tuple(med), tuple(mean - half),
                      tuple(mean + half), trials, seed_base, fit, tuple(rows))
