"""Monte Carlo estimators and per-sample audits of the multi-scale bounds.

Every estimator is a pure function of its arguments: trial ``i`` draws its
potential from ``derive_seed(seed_base, i)`` and results are merged in trial
order. Binomial intervals are two-sided Clopper-Pearson.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy.stats import beta as beta_dist

from .classify import (
    COUNTED,
    PAIRWISE,
    ScaleParams,
    classify_cnr,
    classify_resonant,
    classify_singular,
    classify_tunneling,
    max_disjoint_singular,
    scale_sequence,
)
from .errors import InvalidGeometry, InvalidSize, ScheduleInfeasible, Unsupported
from .graph import FiniteGraph, ball, boundary, build_box_graph, lattice_ball_growth
from .operators import (
    GAUSSIAN,
    Ensemble,
    Hamiltonian,
    Potential,
    Realization,
    SpectralData,
    eigendecompose,
    full_hamiltonian,
    resolvent_matrix,
    sample_potential,
    shifted,
    spectral_gap,
)
from .seeding import map_trials

CONFIDENCE = 0.95


def clopper_pearson(k: int, n: int, confidence: float = CONFIDENCE) -> tuple[float, float]:
    """Exact two-sided binomial interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise InvalidSize("need at least one trial")
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    tail = (1.0 - confidence) / 2.0
    lo = 0.0 if k == 0 else float(beta_dist.ppf(tail, k, n - k + 1))
    hi = 1.0 if k == n else float(beta_dist.ppf(1.0 - tail, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class EstimateReport:
    quantity: str
    point_estimate: float
    ci_low: float
    ci_high: float
    trials: int
    seed_base: int
    scale: int
    energy: object
    successes: int
    confidence: float = CONFIDENCE
    reference_bound: float | None = None
    info: dict = field(default_factory=dict)
    rows: tuple = field(default=(), repr=False)

    @property
    def below_bound(self) -> bool | None:
        if self.reference_bound is None:
            return None
        return self.point_estimate <= self.reference_bound

    def to_json(self) -> dict:
        out = asdict(self)
        out.pop("rows")
        return out


def _report(quantity, k, n, seed_base, scale, energy, factor=1.0, **kw) -> EstimateReport:
    lo, hi = clopper_pearson(k, n)
    return EstimateReport(quantity, factor * k / n, factor * lo, factor * hi, n, seed_base, scale, energy, k, **kw)


def lattice_ball_setting(L: int, d: int = 1, margin: int = 1) -> tuple[FiniteGraph, object]:
    """Box of side ``2(L + margin) + 1`` and its centre.

    Every vertex of ``B_L(centre)`` has the full lattice coordination
    number, so the ball operator is that of the infinite lattice.
    """
    side = 2 * (L + margin) + 1
    g = build_box_graph(d, side)
    c = L + margin
    return g, (c if d == 1 else (c,) * d)


# Parameter schedules

POWER_LAW = "power_law"
SUBEXP = "subexp"
FMM = "fmm"


@dataclass(frozen=True)
class ScheduleParams:
    """Scale-dependent thresholds ``a, b, c`` with the feasibility check.

    ``feasible`` records whether ``b <= min(a c^2 / N, c)``; ``slack`` is
    ``ln(min(a c^2 / N, c) / b)`` (nonnegative iff feasible).
    """

    framework: str
    a: float
    b: float
    c: float
    L: int
    N: int
    inputs: dict
    feasible: bool = True
    slack: float = 0.0
    failing_side: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _lattice_ball_size(L: int, d: int) -> int:
    return sum(2 ** k * math.comb(d, k) * math.comb(L, k) for k in range(d + 1))


def check_schedule(a: float, b: float, c: float, N: int) -> tuple[float, str | None]:
    """Log-slack of ``b <= min(a c^2/N, c)`` and the binding side if violated."""
    for name, val in (("a", a), ("b", b), ("c", c)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    left = math.log(a) + 2 * math.log(c) - math.log(N) - math.log(b)
    right = math.log(c) - math.log(b)
    slack = min(left, right)
    if slack >= 0:
        return slack, None
    return slack, ("a*c^2/N" if left < right else "c")


def parameter_schedule(framework: str, L: int, N: int | None = None, d: int = 1, strict: bool = True,
                       **inputs) -> ScheduleParams:
    """Closed-form ``a(L), b(L), c(L)`` for one of the three frameworks.

    fmm needs ``m``; subexp needs ``delta``; power_law needs ``kappa``,
    ``theta`` and ``k``. ``N`` defaults to the lattice ball size. An
    infeasible schedule raises :class:`ScheduleInfeasible`, or with
    ``strict=False`` is returned flagged ``feasible=False``.
    """
    if N is None:
        N = _lattice_ball_size(L, d)
    if framework == FMM:
        m = inputs["m"]
        a, b, c = math.exp(-m * L / 3), math.exp(-2 * m * L / 3), math.exp(-m * L / 8)
    elif framework == SUBEXP:
        s = L ** inputs["delta"]
        a, b, c = math.exp(-s / 3), math.exp(-2 * s / 3), math.exp(-s / 8)
    elif framework == POWER_LAW:
        kappa, theta, k = inputs["kappa"], inputs["theta"], inputs["k"]
        grow = (1 + theta) ** k
        a = L ** (-3 * kappa / 5 * grow)
        b = L ** (-kappa / 5 * grow)
        c = L ** (-(kappa / 5 - d / 2) * grow)
    elif framework == "explicit":
        a, b, c = inputs["a"], inputs["b"], inputs["c"]
    else:
        raise ValueError(f"unknown framework {framework!r}")
    slack, side = check_schedule(a, b, c, N)
    sched = ScheduleParams(framework, a, b, c, L, N, dict(inputs, d=d), side is None, slack, side)
    if side is not None and strict:
        raise ScheduleInfeasible(
            f"{framework} schedule at L={L}, N={N}: b={b:.3e} exceeds the {side} side (log-slack {slack:.3f})",
            side,
        )
    return sched


# Fixed-energy probabilities


def _fixed_energy_trial(i: int, seed: int, *, ensemble, L, d, E, p, C_d, kind, shifts):
    g, c0 = lattice_ball_setting(L, d, margin=1 + shifts)
    real = Realization(g, sample_potential(ensemble, g, seed), C_d)
    centers = [c0] if shifts == 0 else _shifted_centers(c0, shifts, d)
    flags = []
    for c in centers:
        s = real.spectral(c, L)
        v = classify_singular(s, (c, L), E, p, C_d) if kind == "S" else classify_resonant(s, E, p, L)
        flags.append(not v.positive)
    return {"trial": i, "seed": seed, "scale": L, "E": E, "hits": tuple(flags)}


def _shifted_centers(c0, shifts: int, d: int) -> list:
    if d == 1:
        return [c0 + s for s in range(-shifts, shifts + 1)]
    return [tuple(c0[j] + (s if j == 0 else 0) for j in range(d)) for s in range(-shifts, shifts + 1)]


def _fixed_energy(kind, quantity, L, E, p, ensemble, trials, seed_base, d, C_d, shifts, workers, factor, bound, info):
    if trials < 1:
        raise InvalidSize("trials must be >= 1")
    if C_d is None:
        C_d = lattice_ball_growth(d, max(L, 1)).C_d
    fn = partial(_fixed_energy_trial, ensemble=ensemble, L=L, d=d, E=E, p=p, C_d=C_d, kind=kind, shifts=shifts)
    rows = map_trials(fn, trials, seed_base, workers)
    counts = [sum(r["hits"][j] for r in rows) for j in range(len(rows[0]["hits"]))]
    j = int(np.argmax(counts))
    info = dict(info, C_d=C_d, centers_swept=len(counts), per_center_counts=counts)
    csv_rows = tuple({"trial": r["trial"], "seed": r["seed"], "scale": L, "E": E, "hit": int(r["hits"][j])} for r in rows)
    return _report(quantity, counts[j], trials, seed_base, L, E, factor=factor, reference_bound=bound, info=info,
                   rows=csv_rows)


def estimate_Pk(L: int, E: float, p: ScaleParams, ensemble: Ensemble, trials: int, seed_base: int, d: int = 1,
                C_d: float | None = None, sweep: int = 0, workers: int = 1) -> EstimateReport:
    """Frequency of ``B_L(x)`` being (E, m)-singular at a bulk centre.

    ``sweep > 0`` also probes the ``2 sweep`` neighbouring centres along the
    first axis and reports the maximal frequency.
    """
    return _fixed_energy("S", "P_k", L, E, p, ensemble, trials, seed_base, d, C_d, sweep, workers, 1.0, None,
                         {"m": p.m})


def estimate_Qk(L: int, E: float, p: ScaleParams, ensemble: Ensemble, trials: int, seed_base: int, d: int = 1,
                C_d: float | None = None, sweep: int = 0, workers: int = 1) -> EstimateReport:
    """Twice the frequency of ``B_L(x)`` being E-resonant.

    The factor 2 follows the induction's convention for ``Q_k`` and is
    flagged in ``info``; the reference bound is
    ``2 C_W C_d L^d exp(-L^beta)`` with ``C_W`` that of the coupled potential.
    """
    if C_d is None:
        C_d = lattice_ball_growth(d, max(L, 1)).C_d
    bound = 2 * ensemble.effective_C_W * C_d * L ** d * math.exp(-(L ** p.beta))
    return _fixed_energy("R", "Q_k", L, E, p, ensemble, trials, seed_base, d, C_d, sweep, workers, 2.0, bound,
                         {"factor_2_convention": True, "C_W": ensemble.effective_C_W})


def _wegner_trial(i: int, seed: int, *, ensemble, n, d, E, eps):
    g = build_box_graph(d, n)
    h = full_hamiltonian(g, sample_potential(ensemble, g, seed))
    gap = spectral_gap(eigendecompose(h), E)
    return {"trial": i, "seed": seed, "E": E, "gap": gap, "hits": tuple(gap <= e for e in eps)}


def estimate_wegner(n: int, E: float, eps: Sequence[float], ensemble: Ensemble, trials: int, seed_base: int,
                    d: int = 1, workers: int = 1, confidence: float = 0.99) -> list[dict]:
    """Frequency of ``dist(spectrum, E) <= eps`` on the box of side ``n``.

    One entry per ``eps`` with the Wegner bound ``C_W |G| eps`` and the
    upper end of the ``confidence`` Clopper-Pearson interval.
    """
    eps = tuple(float(e) for e in eps)
    fn = partial(_wegner_trial, ensemble=ensemble, n=n, d=d, E=E, eps=eps)
    rows = map_trials(fn, trials, seed_base, workers)
    size = n ** d
    out = []
    for j, e in enumerate(eps):
        k = sum(r["hits"][j] for r in rows)
        lo, hi = clopper_pearson(k, trials, confidence)
        bound = ensemble.effective_C_W * size * e
        out.append({
            "eps": e, "frequency": k / trials, "hits": k, "trials": trials, "ci_low": lo, "ci_high": hi,
            "confidence": confidence, "bound": bound, "holds": lo <= bound,
        })
    return out


# Energy-grid quantities


def energy_grid(I: tuple, h: float) -> np.ndarray:
    lo, hi = I
    if not h > 0:
        raise ValueError(f"grid step must be positive, got {h}")
    if not hi >= lo:
        raise ValueError(f"bad interval {I}")
    n = int(math.floor((hi - lo) / h * (1 + 1e-12))) + 1
    return lo + h * np.arange(n)


def boundary_green_max(s: SpectralData, x, grid: np.ndarray, inner_boundary: Sequence) -> np.ndarray:
    """``M_x(E) = max_{y in inner boundary} |G(x, y; E)|`` on the grid; ``inf`` near the spectrum."""
    P = s.eigenvectors
    rx = P[s.row(x)]
    K = np.array([rx * P[s.row(y)] for y in inner_boundary])
    diff = s.eigenvalues[:, None] - grid[None, :]
    near = (np.abs(diff) <= s.tolerance).any(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        G = K @ (1.0 / diff)
    M = np.abs(G).max(axis=0)
    M[near] = np.inf
    return M


@dataclass(frozen=True)
class SingularSet:
    grid: np.ndarray
    h: float
    hot_points: np.ndarray
    measure_estimate: float
    threshold: float
    values: np.ndarray = field(repr=False, default=None)


def _ball_profile(real: Realization, x, L: int, grid: np.ndarray):
    s = real.spectral(x, L)
    view = real.ball(x, L)
    inner = sorted(boundary(real.graph, view).inner, key=real.graph.idx) if view.is_proper else list(view.members)
    return s, boundary_green_max(s, x, grid, inner)


def singular_set_measure(real: Realization, x, L: int, a: float, I: tuple, h: float) -> SingularSet:
    """Grid scan of ``{E in I : M_x(E) >= a}``; measure is ``h`` times the hot count."""
    grid = energy_grid(I, h)
    _, M = _ball_profile(real, x, L, grid)
    hot = grid[M >= a]
    return SingularSet(grid, h, hot, h * len(hot), a, M)


COVERED = "covered"
VIOLATION = "violation"
PRECONDITION_FAILED = "precondition_failed"


@dataclass(frozen=True)
class CoverageResult:
    status: str
    measure: float
    b: float
    hot_2a: int
    witness: tuple | None = None
    outside_I: int = 0
    info: dict = field(default_factory=dict)


def coverage_check(real: Realization, x, L: int, schedule: ScheduleParams, I: tuple,
                   grid_step: float | None = None) -> CoverageResult:
    """Singular-width coverage on one sample.

    If the measured ``mes{M_x >= a} <= b``, every grid energy with
    ``M_x >= 2a`` must lie within ``c`` of an eigenvalue of the ball.
    ``outside_I`` counts such energies whose only nearby eigenvalues lie
    outside ``I``. The witness is ``(E, M_x(E), gap)``.
    """
    a, b, c = schedule.a, schedule.b, schedule.c
    h = c / 50 if grid_step is None else grid_step
    if h > c / 50 * (1 + 1e-12):
        raise ValueError(f"grid step {h} exceeds c/50 = {c / 50}")
    grid = energy_grid(I, h)
    s, M = _ball_profile(real, x, L, grid)
    mes = h * int((M >= a).sum())
    info = {"h": h, "feasible_schedule": schedule.feasible, "grid_points": len(grid)}
    hot2 = grid[M >= 2 * a]
    if mes > b:
        return CoverageResult(PRECONDITION_FAILED, mes, b, len(hot2), None, 0, info)
    lam = s.eigenvalues
    lam_I = lam[(lam >= I[0]) & (lam <= I[1])]
    outside_I = 0
    for E in hot2:
        gap = float(np.min(np.abs(lam - E)))
        if gap > c:
            j = int(np.flatnonzero(grid == E)[0])
            return CoverageResult(VIOLATION, mes, b, len(hot2), (float(E), float(M[j]), gap), outside_I, info)
        if len(lam_I) == 0 or np.min(np.abs(lam_I - E)) > c:
            outside_I += 1
    return CoverageResult(COVERED, mes, b, len(hot2), None, outside_I, info)


def _two_volume_trial(i: int, seed: int, *, g, x, y, L, a, grid, ensemble):
    real = Realization(g, sample_potential(ensemble, g, seed), 1.0)
    _, Mx = _ball_profile(real, x, L, grid)
    _, My = _ball_profile(real, y, L, grid)
    both = np.minimum(Mx, My) > a
    return {
        "trial": i, "seed": seed, "scale": L, "event": bool(both.any()),
        "hot_x": (Mx >= a), "hot_y": (My >= a),
    }


def two_volume_estimate(g: FiniteGraph, x, y, L: int, schedule: ScheduleParams, I: tuple, ensemble: Ensemble,
                        trials: int, seed_base: int, grid_step: float | None = None, C_d: float | None = None,
                        workers: int = 1) -> EstimateReport:
    """Frequency of ``exists E in I: min(M_x(E), M_y(E)) > a`` for disjoint balls.

    The reference bound is ``4 C_W C_d^2 L^(2d) c + 2 P_L / b`` with ``P_L``
    the largest Clopper-Pearson upper limit of ``P(M_x(E) >= a)`` over grid
    energies and both centres, estimated from the same trials.
    """
    if not g.distance(x, y) > 2 * L:
        raise InvalidGeometry(f"d({x!r}, {y!r}) = {g.distance(x, y)} does not separate two {L}-balls")
    d = g.dim_hint
    if C_d is None:
        C_d = lattice_ball_growth(d, max(L, 1)).C_d
    h = schedule.c / 50 if grid_step is None else grid_step
    grid = energy_grid(I, h)
    fn = partial(_two_volume_trial, g=g, x=x, y=y, L=L, a=schedule.a, grid=grid, ensemble=ensemble)
    rows = map_trials(fn, trials, seed_base, workers)
    k = sum(r["event"] for r in rows)
    hot_x = np.sum([r["hot_x"] for r in rows], axis=0)
    hot_y = np.sum([r["hot_y"] for r in rows], axis=0)
    worst = int(max(hot_x.max(), hot_y.max()))
    P_L = clopper_pearson(worst, trials)[1]
    bound = 4 * ensemble.effective_C_W * C_d ** 2 * L ** (2 * d) * schedule.c + 2 * P_L / schedule.b
    info = {
        "P_L": P_L, "h": h, "grid_points": len(grid), "schedule": schedule.to_json(), "C_d": C_d,
        "bound_vacuous": bound >= 1.0, "grid_rationale": "step c/50 against Lipschitz constant N/c^2",
    }
    csv_rows = tuple({"trial": r["trial"], "seed": r["seed"], "scale": L, "event": int(r["event"])} for r in rows)
    return _report("zeta", k, trials, seed_base, L, tuple(I), reference_bound=bound, info=info, rows=csv_rows)


# Induction audits

SECTION5 = "section5"
SECTION8 = "section8"


def _induction_trial(i: int, seed: int, *, ensemble, Lk, Lk1, d, E, p, C_d, mode):
    g, u = lattice_ball_setting(Lk1, d)
    real = Realization(g, sample_potential(ensemble, g, seed), C_d)
    s_big = real.spectral(u, Lk1)
    ns = classify_singular(s_big, (u, Lk1), E, p, C_d)
    res = classify_resonant(s_big, E, p, Lk1)
    tun = classify_tunneling(real, (u, Lk1), E, p, Lk, PAIRWISE if mode == SECTION5 else COUNTED)
    small = classify_singular(real.spectral(u, Lk), (u, Lk), E, p, C_d)
    row = {
        "trial": i, "seed": seed, "scale": Lk1, "E": E,
        "big_S": int(not ns.positive), "big_R": int(not res.positive), "big_T": int(not tun.positive),
        "small_S": int(not small.positive), "singular_subballs": tun.info["singular"],
        "disjoint_count": tun.info["count"],
    }
    if mode == SECTION5:
        premise = res.positive and tun.positive
    else:
        cnr = classify_cnr(real, (u, Lk1), E, p, Lk)
        row["big_CNR"] = int(cnr.positive)
        premise = cnr.positive and tun.positive
    row["premise"] = int(premise)
    row["violation"] = int(premise and not ns.positive)
    witness = None
    if row["violation"]:
        witness = {
            "trial": i, "seed": seed, "center": u, "L": Lk1, "E": E, "gap": res.info["gap"],
            "offending_pairs": ns.witnesses, "ns_info": ns.info, "singular_subballs": tun.witnesses,
        }
    return row, witness


@dataclass(frozen=True)
class InductionAudit:
    mode: str
    scales: tuple
    E: float
    trials: int
    seed_base: int
    premise_count: int
    violations: tuple
    P_k: EstimateReport
    P_k1: EstimateReport
    Q_k1: EstimateReport
    recursion_rhs: float
    recursion_holds: bool
    C_d: float
    rows: tuple = field(default=(), repr=False)

    @property
    def violation_fraction(self) -> float:
        return len(self.violations) / self.premise_count if self.premise_count else 0.0

    def to_json(self) -> dict:
        return {
            "mode": self.mode, "scales": list(self.scales), "E": self.E, "trials": self.trials,
            "seed_base": self.seed_base, "premise_count": self.premise_count,
            "violation_count": len(self.violations), "violation_fraction": self.violation_fraction,
            "violations": [_jsonable(v) for v in self.violations],
            "P_k": self.P_k.to_json(), "P_k1": self.P_k1.to_json(), "Q_k1": self.Q_k1.to_json(),
            "recursion_rhs": self.recursion_rhs, "recursion_holds": self.recursion_holds, "C_d": self.C_d,
            "factor_2_convention": True,
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def induction_audit(k: int, p: ScaleParams, ensemble: Ensemble, E: float, trials: int, seed_base: int,
                    mode: str = SECTION5, scales: tuple | None = None, d: int = 1,
                    workers: int = 1) -> InductionAudit:
    """One step of the scale induction checked sample by sample.

    ``section5``: premise NR and NT (pairwise) must imply NS. ``section8``:
    NT (counted) and CNR must imply NS. Violations are logged with full
    witnesses, never asserted away. ``P_k`` is estimated from the concentric
    ``L_k``-ball of each sample and compared through
    ``1/2 C_d^2 L_(k+1)^(2d) P_k^2 + 1/2 Q_(k+1)``.
    """
    if mode not in (SECTION5, SECTION8):
        raise ValueError(f"unknown mode {mode!r}")
    if scales is None:
        seq = scale_sequence(p, k + 1)
        scales = (seq[k], seq[k + 1])
    Lk, Lk1 = scales
    C_d = lattice_ball_growth(d, Lk1).C_d
    fn = partial(_induction_trial, ensemble=ensemble, Lk=Lk, Lk1=Lk1, d=d, E=E, p=p, C_d=C_d, mode=mode)
    out = map_trials(fn, trials, seed_base, workers)
    rows = tuple(r for r, _ in out)
    violations = tuple(w for _, w in out if w is not None)
    Pk = _report("P_k", sum(r["small_S"] for r in rows), trials, seed_base, Lk, E)
    Pk1 = _report("P_k", sum(r["big_S"] for r in rows), trials, seed_base, Lk1, E)
    Qk1 = _report("Q_k", sum(r["big_R"] for r in rows), trials, seed_base, Lk1, E, factor=2.0,
                  info={"factor_2_convention": True})
    rhs = 0.5 * C_d ** 2 * Lk1 ** (2 * d) * Pk.point_estimate ** 2 + 0.5 * Qk1.point_estimate
    return InductionAudit(
        mode, (Lk, Lk1), E, trials, seed_base, sum(r["premise"] for r in rows), violations,
        Pk, Pk1, Qk1, rhs, Pk1.point_estimate <= rhs, C_d, rows,
    )


def _disjoint_trial(i: int, seed: int, *, ensemble, Lj, Lj1, d, E, p, C_d):
    g, u = lattice_ball_setting(Lj1, d)
    real = Realization(g, sample_potential(ensemble, g, seed), C_d)
    centers = real.contained_centers(u, Lj1, Lj)
    sing = [x for x in centers if not classify_singular(real.spectral(x, Lj), (x, Lj), E, p, C_d).positive]
    cnt = max_disjoint_singular(sing, Lj, g)
    return {"trial": i, "seed": seed, "scale": Lj, "E": E, "singular": len(sing), "count": cnt.count,
            "exact": int(cnt.exact)}


def disjoint_count_tail(Lj: int, p: ScaleParams, ensemble: Ensemble, E: float, trials: int, seed_base: int,
                        d: int = 1, Lj1: int | None = None, workers: int = 1) -> EstimateReport:
    """Frequency of ``N >= L_j^(sigma(alpha-1))`` for disjoint singular ``L_j``-balls in ``B_(L_(j+1))``.

    Reference bound ``1/2 exp(-L_(j+1)^delta)``.
    """
    if p.sigma is None or p.delta is None:
        raise ValueError("needs sigma and delta (section8 parameters)")
    if Lj1 is None:
        Lj1 = scale_sequence(p, 1, L0=Lj)[1]
    C_d = lattice_ball_growth(d, Lj).C_d
    thr = Lj ** (p.sigma * (p.alpha - 1))
    fn = partial(_disjoint_trial, ensemble=ensemble, Lj=Lj, Lj1=Lj1, d=d, E=E, p=p, C_d=C_d)
    rows = tuple(map_trials(fn, trials, seed_base, workers))
    k = sum(r["count"] >= thr for r in rows)
    bound = 0.5 * math.exp(-(Lj1 ** p.delta))
    return _report("custom", k, trials, seed_base, Lj, E, reference_bound=bound,
                   info={"threshold": thr, "L_next": Lj1, "all_exact": all(r["exact"] for r in rows)}, rows=rows)


# Sample-mean decomposition and shift covariance


@dataclass(frozen=True)
class PotentialDecomposition:
    xi: float
    eta: dict
    ball: tuple

    def reconstruct(self) -> dict:
        return {v: self.xi + e for v, e in self.eta.items()}


def xi_eta_decompose(v: Potential, ball_: tuple) -> PotentialDecomposition:
    """Sample mean ``xi`` of the potential over the ball and fluctuations ``eta = V - xi``."""
    center, L = ball_
    members = sorted(ball(v.graph, center, L), key=v.graph.idx)
    if not members:
        raise InvalidSize("empty ball")
    vals = v.on(members)
    xi = math.fsum(vals) / len(vals)
    return PotentialDecomposition(xi, {x: float(val - xi) for x, val in zip(members, vals)}, (center, L))


def shift_covariance_check(h: Hamiltonian, t: float, x, y, E: float, relative: bool = False) -> float:
    """``|G_(H+t)(x, y; E+t) - G_H(x, y; E)|`` from two independent LU solves.

    LU keeps small off-diagonal entries accurate, where the spectral sum
    loses them to cancellation.
    """
    s1 = eigendecompose(shifted(h, t))
    g0 = float(resolvent_matrix(eigendecompose(h), E)[h.row(x), h.row(y)])
    g1 = float(resolvent_matrix(s1, E + t)[s1.source.row(x), s1.source.row(y)])
    res = abs(g1 - g0)
    if relative:
        scale = max(abs(g0), abs(g1))
        return res / scale if scale > 0 else res
    return res


def gaussian_modulus_bound(ball_size: int, s: float, coupling: float = 1.0) -> float:
    """``|B|^(1/2) s / (|g| sqrt(2 pi))``: window probability bound for the Gaussian sample mean."""
    return math.sqrt(ball_size) * s / (abs(coupling) * math.sqrt(2 * math.pi))


def _xi_trial(i: int, seed: int, *, ensemble, g, members):
    v = sample_potential(ensemble, g, seed)
    return math.fsum(v.on(members)) / len(members)


def continuity_modulus_probe(ensemble: Ensemble, g: FiniteGraph, ball_: tuple, s_values: Sequence[float],
                             trials: int, seed_base: int, workers: int = 1, alpha: float = 0.01) -> dict:
    """Empirical window probabilities of the sample mean against the Gaussian modulus.

    The sample mean of a centred Gaussian potential is symmetric and
    unimodal, so the worst window is ``[-s/2, s/2]``; its frequency is
    compared with the bound plus a 3-sigma binomial margin. The supremum
    over all windows of the empirical distribution is reported too, with
    the uniform DKW margin ``2 sqrt(ln(2/alpha) / (2n))`` that a pointwise
    margin cannot supply.
    """
    if ensemble.kind != GAUSSIAN:
        raise Unsupported("continuity modulus probe is defined for the Gaussian ensemble only")
    center, L = ball_
    members = sorted(ball(g, center, L), key=g.idx)
    fn = partial(_xi_trial, ensemble=ensemble, g=g, members=members)
    xi = np.sort(np.array(map_trials(fn, trials, seed_base, workers)))
    dkw = 2 * math.sqrt(math.log(2 / alpha) / (2 * trials))
    out = []
    for s in s_values:
        bound = gaussian_modulus_bound(len(members), s, ensemble.coupling)
        if s <= 0:
            emp = sup = 0.0
        else:
            emp = float(np.count_nonzero(np.abs(xi) <= s / 2)) / trials
            upto = np.searchsorted(xi, xi + s, side="right")
            sup = float((upto - np.arange(len(xi))).max()) / trials
        margin = 3 * math.sqrt(max(bound * (1 - bound), 0.0) / trials) if bound < 1 else 0.0
        out.append({"s": float(s), "empirical": emp, "bound": bound, "margin": margin,
                    "exceedance": emp - bound, "holds": emp <= bound + margin,
                    "sup_window": sup, "dkw_margin": dkw, "sup_holds": sup <= bound + dkw})
    return {"ball_size": len(members), "trials": trials, "seed_base": seed_base, "windows": out,
            "max_exceedance": max(w["exceedance"] for w in out)}
