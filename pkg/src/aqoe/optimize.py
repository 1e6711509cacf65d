"""Asymmetry optimisation: r_u sweeps, optima, discontinuities, co-optimal times.

For every cycle time tau_u the figures of merit are evaluated on a fixed r_u
grid; the global grid argmax (engine-regime points only) is then polished by
a golden-section search inside its bracketing grid interval. The landscapes
have several local maxima, so the global scan always comes first.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cycle import statistics_finite, statistics_finite_grid
from .errors import AqoeError, NotEngineError, ValidationError
from .model import EngineConfig
from .nonadiabatic import adiabaticity_pair
from .stats import CycleStatistics, statistics_perfect, statistics_perfect_grid

R_SPACING = 0.005
REFINE_TOL = 1e-4
JUMP_THRESHOLD = 0.05
MATCH_TOL = 2 * REFINE_TOL
MODES = ("perfect", "finite")

# optimum name -> CycleStatistics field it maximises
FIGURES = {
    "r_star": "work_output",
    "r_circ": "reliability_w",
    "r_odot": "efficiency",
    "r_delta": "reliability_eta",
}
COOPTIMAL_PAIRS = (("r_star", "r_circ"), ("r_odot", "r_delta"))


def default_r_grid(spacing: float = R_SPACING) -> np.ndarray:
    """Interior grid spacing, 2 spacing, ..., 1 - spacing (199 points by default)."""
    n = int(round(1.0 / spacing))
    if n < 2 or not math.isclose(n * spacing, 1.0, rel_tol=1e-9):
        raise ValidationError(f"r spacing must divide 1, got {spacing}")
    return np.arange(1, n) / n


def check_r_grid(r_grid) -> np.ndarray:
    r = np.asarray(r_grid, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValidationError("r grid must be a non-empty 1-d sequence")
    if np.any(r <= 0) or np.any(r >= 1):
        raise ValidationError("r grid must lie strictly inside (0, 1)")
    if np.any(np.diff(r) <= 0):
        raise ValidationError("r grid must be strictly ascending")
    return r


@dataclass(frozen=True)
class SweepRecord:
    """One (tau_u, r_u) grid point. ``stats`` is None when evaluation failed."""

    tau_u: float
    r_u: float
    q_f: float
    q_b: float
    stats: CycleStatistics | None
    error: str | None = None

    @property
    def engine_regime(self) -> bool:
        return self.stats is not None and self.stats.engine_regime

    def figure(self, name: str) -> float:
        """Value of a CycleStatistics field; -inf outside the engine regime."""
        if not self.engine_regime:
            return -math.inf
        return getattr(self.stats, name)


def _evaluate_point(config: EngineConfig, mode: str) -> tuple[float, float, CycleStatistics]:
    pair = adiabaticity_pair(config)
    if mode == "perfect":
        return pair.q_f, pair.q_b, statistics_perfect(config, pair)
    return pair.q_f, pair.q_b, statistics_finite(config, pair)


def _mode_config(config: EngineConfig, mode: str) -> EngineConfig:
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "perfect" and not config.perfect:
        return config.with_(tau_b=math.inf)
    if mode == "finite" and config.perfect:
        raise ValidationError("finite mode needs a finite tau_b")
    return config


def sweep_r_u(config: EngineConfig, tau_u: float, r_grid, mode: str = "perfect") -> list[SweepRecord]:
    """Statistics at every r_u of ``r_grid`` for cycle time ``tau_u``.

    Failures at individual grid points are recorded on the record instead
    of aborting the sweep.
    """
    r = check_r_grid(r_grid)
    cfg = _mode_config(config.with_(tau_u=float(tau_u)), mode)
    try:
        if mode == "perfect":
            q_f, q_b, results = statistics_perfect_grid(cfg, r)
        else:
            q_f, q_b, results = statistics_finite_grid(cfg, r)
    except AqoeError:
        # Fall back to point-by-point evaluation to localise the failure.
        q_f, q_b, results = np.full(r.size, np.nan), np.full(r.size, np.nan), []
        for i, value in enumerate(r):
            try:
                q_f[i], q_b[i], st = _evaluate_point(cfg.with_(r_u=float(value)), mode)
                results.append(st)
            except AqoeError as exc:
                results.append(exc)
    records = []
    for value, qf, qb, res in zip(r, q_f, q_b, results):
        if isinstance(res, Exception):
            records.append(SweepRecord(cfg.tau_u, float(value), float(qf), float(qb), None,
                                       f"{type(res).__name__}: {res}"))
        else:
            records.append(SweepRecord(cfg.tau_u, float(value), float(qf), float(qb), res))
    return records


# --- optima ------------------------------------------------------------------

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max_many(f_batch: Callable[[np.ndarray, list[int]], Sequence[float]],
                            brackets: Sequence[tuple[float, float]],
                            tol: float = REFINE_TOL) -> list[tuple[float, float]]:
    """Run independent golden-section maximisations in lockstep.

    ``f_batch(xs, ids)`` evaluates search ``ids[j]``'s objective at
    ``xs[j]``; batching lets one expensive call serve every search per
    iteration. Returns (x, f(x)) per bracket, each to interval width ``tol``.
    """
    if tol <= 0:
        raise ValidationError("tol must be > 0")
    st = []
    for a, b in brackets:
        if not b > a:
            raise ValidationError("golden-section bracket must have b > a")
        st.append([a, b, b - _INV_PHI * (b - a), a + _INV_PHI * (b - a), None, None])
    ids = list(range(len(st)))
    xs = [st[i][2] for i in ids] + [st[i][3] for i in ids]
    vals = f_batch(np.array(xs), ids + ids)
    for j, i in enumerate(ids):
        st[i][4], st[i][5] = vals[j], vals[j + len(ids)]
    while True:
        active = [i for i in ids if st[i][1] - st[i][0] > tol]
        if not active:
            break
        xs = []
        for i in active:
            a, b, c, d, fc, fd = st[i]
            # >= keeps the left point on ties, biasing towards smaller x.
            if fc >= fd:
                b, d, fd = d, c, fc
                c = b - _INV_PHI * (b - a)
                st[i] = [a, b, c, d, None, fd]
                xs.append(c)
            else:
                a, c, fc = c, d, fd
                d = a + _INV_PHI * (b - a)
                st[i] = [a, b, c, d, fc, None]
                xs.append(d)
        vals = f_batch(np.array(xs), active)
        for i, v in zip(active, vals):
            if st[i][4] is None:
                st[i][4] = v
            else:
                st[i][5] = v
    return [(c, fc) if fc >= fd else (d, fd) for a, b, c, d, fc, fd in st]


def golden_section_max(f: Callable[[float], float], a: float, b: float,
                       tol: float = REFINE_TOL) -> tuple[float, float]:
    """Maximise f on [a, b] to an interval width of ``tol``; returns (x, f(x))."""
    def f_batch(xs, ids):
        return [f(float(x)) for x in xs]
    return golden_section_max_many(f_batch, [(a, b)], tol)[0]


@dataclass(frozen=True)
class Optimum:
    """Refined optimum and the grid point it was refined from.

    ``boundary`` marks a grid argmax at the first or last grid point, i.e. a
    maximum pinned to the edge of the scanned r_u range.
    """

    r: float
    value: float
    grid_r: float
    grid_value: float
    boundary: bool = False


NO_OPTIMUM = Optimum(math.nan, math.nan, math.nan, math.nan)


def _grid_argmax(r: np.ndarray, values: np.ndarray):
    values = np.where(np.isfinite(values), values, -np.inf)
    if not np.any(np.isfinite(values)):
        raise NotEngineError("no engine operation at this tau_u")
    i = int(np.argmax(values))  # first occurrence, i.e. the smaller r_u on ties
    best = Optimum(float(r[i]), float(values[i]), float(r[i]), float(values[i]),
                   boundary=bool(r.size > 1 and i in (0, r.size - 1)))
    bracket = None
    if r.size > 1:
        bracket = (float(r[max(i - 1, 0)]), float(r[min(i + 1, r.size - 1)]))
    return best, bracket


def locate_optimum(r: np.ndarray, values: np.ndarray,
                   objective: Callable[[float], float] | None = None,
                   refine_tol: float = REFINE_TOL) -> Optimum:
    """Grid argmax of ``values`` over ascending ``r``, optionally refined.

    Non-finite values (non-engine points) never win. With ``objective`` the
    grid optimum is polished by golden section in the bracketing grid
    interval; the refined point is kept only if it is at least as good.
    """
    best, bracket = _grid_argmax(np.asarray(r, dtype=float), np.asarray(values, dtype=float))
    if objective is None or bracket is None:
        return best
    x, fx = golden_section_max(objective, *bracket, refine_tol)
    if fx > best.value:
        return Optimum(float(x), float(fx), best.grid_r, best.grid_value, best.boundary)
    return best


def locate_optima(records: Sequence[SweepRecord],
                  evaluate_many: Callable[[np.ndarray], list] | None = None,
                  refine_tol: float = REFINE_TOL, figures: dict | None = None) -> dict[str, Optimum]:
    """Optimum r_u for each figure of merit from one tau_u sweep.

    ``evaluate_many(r_array)`` returning CycleStatistics (or None on
    failure) per point enables golden-section refinement; all figures are
    refined together so each iteration costs one batched evaluation.
    Figures without engine-regime points get NaN optima.
    """
    figures = FIGURES if figures is None else figures
    recs = sorted(records, key=lambda rec: rec.r_u)
    if not any(rec.engine_regime for rec in recs):
        raise NotEngineError("no engine operation at this tau_u")
    r = np.array([rec.r_u for rec in recs])
    out, pending = {}, []
    for name, attr in figures.items():
        values = np.array([rec.figure(attr) for rec in recs])
        try:
            best, bracket = _grid_argmax(r, values)
        except NotEngineError:
            out[name] = NO_OPTIMUM
            continue
        out[name] = best
        if evaluate_many is not None and bracket is not None:
            pending.append((name, attr, bracket))
    if not pending:
        return out

    def f_batch(xs, ids):
        results = evaluate_many(xs)
        vals = []
        for st, i in zip(results, ids):
            ok = st is not None and st.engine_regime
            vals.append(getattr(st, pending[i][1]) if ok else -math.inf)
        return vals

    refined = golden_section_max_many(f_batch, [p[2] for p in pending], refine_tol)
    for (name, _, _), (x, fx) in zip(pending, refined):
        best = out[name]
        if fx > best.value:
            out[name] = Optimum(float(x), float(fx), best.grid_r, best.grid_value, best.boundary)
    return out


def min_sigma_w(records: Sequence[SweepRecord], engine_only: bool = True) -> float:
    """Grid r_u minimising sigma_w (smallest r_u on ties)."""
    recs = sorted(records, key=lambda rec: rec.r_u)
    ok = [rec for rec in recs if rec.stats is not None and (rec.engine_regime or not engine_only)]
    if not ok:
        return math.nan
    var = np.array([rec.stats.w_var for rec in ok])
    return ok[int(np.argmin(var))].r_u


def make_evaluator(config: EngineConfig, tau_u: float, mode: str):
    """r_u array -> list of CycleStatistics (None where evaluation failed)."""
    cfg = _mode_config(config.with_(tau_u=float(tau_u)), mode)

    def evaluate_many(rs):
        rs = np.asarray(rs, dtype=float)
        try:
            if mode == "perfect":
                results = statistics_perfect_grid(cfg, rs)[2]
            else:
                results = statistics_finite_grid(cfg, rs)[2]
        except AqoeError:
            results = []
            for value in rs:
                try:
                    results.append(_evaluate_point(cfg.with_(r_u=float(value)), mode)[2])
                except AqoeError as exc:
                    results.append(exc)
        return [None if isinstance(res, Exception) else res for res in results]
    return evaluate_many


# --- series over tau_u -------------------------------------------------------

@dataclass(frozen=True)
class Discontinuity:
    curve: str
    tau_left: float
    tau_right: float
    jump: float

    @property
    def tau(self) -> float:
        return 0.5 * (self.tau_left + self.tau_right)


@dataclass(frozen=True)
class CoOptimum:
    tau_u: float
    pair: tuple[str, str]
    r_a: float
    r_b: float
    refined: bool = False

    @property
    def r(self) -> float:
        return 0.5 * (self.r_a + self.r_b)


@dataclass
class OptimaSeries:
    """Optimal r_u and optimal values per tau_u (NaN where no engine regime).

    ``r_sigma`` is the grid r_u minimising sigma_w, kept for comparing its
    jumps with those of ``r_circ``.
    """

    tau_grid: np.ndarray
    r_star: np.ndarray
    r_circ: np.ndarray
    r_odot: np.ndarray
    r_delta: np.ndarray
    values: dict[str, np.ndarray]
    r_sigma: np.ndarray | None = None
    boundary: dict[str, np.ndarray] = field(default_factory=dict)
    discontinuities: list[Discontinuity] = field(default_factory=list)
    cooptimal: list[CoOptimum] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)

    def curve(self, name: str) -> np.ndarray:
        return getattr(self, name)

    @property
    def cooptimal_times(self) -> list[float]:
        return [c.tau_u for c in self.cooptimal]

    @classmethod
    def from_optima(cls, taus, optima: Sequence[dict[str, Optimum]], r_sigma=None) -> "OptimaSeries":
        taus = np.asarray(taus, dtype=float)
        if taus.ndim != 1 or taus.size == 0:
            raise ValidationError("tau grid must be non-empty")
        if np.any(np.diff(taus) <= 0):
            raise ValidationError("tau grid must be strictly ascending")
        curves = {name: np.array([o[name].r for o in optima]) for name in FIGURES}
        values = {name: np.array([o[name].value for o in optima]) for name in FIGURES}
        edge = {name: np.array([o[name].boundary for o in optima]) for name in FIGURES}
        rs = None if r_sigma is None else np.asarray(r_sigma, dtype=float)
        return cls(taus, curves["r_star"], curves["r_circ"], curves["r_odot"],
                   curves["r_delta"], values, rs, edge)


def find_jumps(taus, r, threshold: float = JUMP_THRESHOLD, curve: str = "r") -> list[Discontinuity]:
    """Consecutive-point jumps |r[i+1] - r[i]| >= threshold (NaN gaps skipped)."""
    taus, r = np.asarray(taus, dtype=float), np.asarray(r, dtype=float)
    out = []
    for i in range(taus.size - 1):
        jump = r[i + 1] - r[i]
        if np.isfinite(jump) and abs(jump) >= threshold:
            out.append(Discontinuity(curve, float(taus[i]), float(taus[i + 1]), float(jump)))
    return out


def detect_discontinuities(series: OptimaSeries, jump_threshold: float = JUMP_THRESHOLD,
                           curves: Sequence[str] | None = None) -> list[Discontinuity]:
    """Jumps of every optimum curve (and of r_sigma when present)."""
    if jump_threshold <= 0:
        raise ValidationError("jump_threshold must be > 0")
    if curves is None:
        curves = list(FIGURES) + (["r_sigma"] if series.r_sigma is not None else [])
    out = []
    for name in curves:
        out.extend(find_jumps(series.tau_grid, series.curve(name), jump_threshold, name))
    return out


def jump_sets_coincide(a: Sequence[Discontinuity], b: Sequence[Discontinuity], tol: float) -> bool:
    """Every jump in ``a`` has a partner in ``b`` within ``tol`` in tau, and vice versa."""
    ta, tb = [d.tau for d in a], [d.tau for d in b]

    def covered(xs, ys):
        return all(any(abs(x - y) <= tol + 1e-12 for y in ys) for x in xs)
    return covered(ta, tb) and covered(tb, ta)


def find_cooptimal_times(series: OptimaSeries, match_tol: float = MATCH_TOL,
                         pair: tuple[str, str] = ("r_star", "r_circ"),
                         optima_at: Callable[[float], dict[str, Optimum]] | None = None,
                         jump_threshold: float = JUMP_THRESHOLD,
                         max_bisect: int = 40, include_boundary: bool = False) -> list[CoOptimum]:
    """tau_u where the two optima of ``pair`` agree within ``match_tol``.

    Grid times that already agree are returned directly. When ``optima_at``
    is supplied, every grid interval across which r_a - r_b changes sign
    while both curves stay continuous is bisected in tau_u until the two
    optima agree, which catches crossings that fall between grid times.
    Optima pinned to the edge of the r_u grid coincide trivially and are
    skipped unless ``include_boundary``.
    """
    name_a, name_b = pair
    taus = series.tau_grid
    ra, rb = series.curve(name_a), series.curve(name_b)
    diff = ra - rb
    if include_boundary or not series.boundary:
        edge = np.zeros(taus.size, dtype=bool)
    else:
        edge = series.boundary[name_a] | series.boundary[name_b]
    diff = np.where(edge, np.nan, diff)
    out = [CoOptimum(float(t), pair, float(x), float(y))
           for t, x, y, d in zip(taus, ra, rb, diff) if np.isfinite(d) and abs(d) <= match_tol]
    if optima_at is None:
        return out
    hit = {c.tau_u for c in out}
    for i in range(taus.size - 1):
        t0, t1 = float(taus[i]), float(taus[i + 1])
        d0, d1 = diff[i], diff[i + 1]
        if not (np.isfinite(d0) and np.isfinite(d1)) or t0 in hit or t1 in hit:
            continue
        if d0 * d1 >= 0:
            continue
        if abs(ra[i + 1] - ra[i]) >= jump_threshold or abs(rb[i + 1] - rb[i]) >= jump_threshold:
            continue
        found = _bisect_crossing(optima_at, pair, t0, t1, ra[i], rb[i], ra[i + 1], rb[i + 1],
                                 match_tol, jump_threshold, max_bisect, include_boundary)
        if found is not None:
            out.append(found)
    return sorted(out, key=lambda c: c.tau_u)


def _bisect_crossing(optima_at, pair, t0, t1, a0, b0, a1, b1, match_tol, jump_threshold,
                     max_bisect, include_boundary):
    name_a, name_b = pair
    d0 = a0 - b0
    for _ in range(max_bisect):
        tm = 0.5 * (t0 + t1)
        opt = optima_at(tm)
        am, bm = opt[name_a].r, opt[name_b].r
        if not (np.isfinite(am) and np.isfinite(bm)):
            return None
        if not include_boundary and (opt[name_a].boundary or opt[name_b].boundary):
            return None
        # A jump inside the interval means the curves do not actually cross here.
        if min(abs(am - a0), abs(am - a1)) >= jump_threshold or \
                min(abs(bm - b0), abs(bm - b1)) >= jump_threshold:
            return None
        dm = am - bm
        if abs(dm) <= match_tol:
            return CoOptimum(tm, pair, float(am), float(bm), refined=True)
        if dm * d0 > 0:
            t0, a0, b0, d0 = tm, am, bm, dm
        else:
            t1, a1, b1 = tm, am, bm
    return None


# --- tau scan driver ---------------------------------------------------------

@dataclass(frozen=True)
class ScanSettings:
    mode: str = "perfect"
    r_spacing: float = R_SPACING
    refine: bool = True
    refine_tol: float = REFINE_TOL
    jump_threshold: float = JUMP_THRESHOLD
    match_tol: float = MATCH_TOL
    sigma_engine_only: bool = True
    # When set, tau_b follows tau_u as tau_b = tau_b_ratio * tau_u.
    tau_b_ratio: float | None = None


def analyse_tau(config: EngineConfig, tau_u: float, settings: ScanSettings = ScanSettings(),
                r_grid=None):
    """Sweep r_u at one tau_u; returns (records, optima, argmin-sigma_w r_u)."""
    r = default_r_grid(settings.r_spacing) if r_grid is None else check_r_grid(r_grid)
    if settings.tau_b_ratio is not None:
        config = config.with_(tau_b=settings.tau_b_ratio * tau_u)
    records = sweep_r_u(config, tau_u, r, settings.mode)
    evaluate = make_evaluator(config, tau_u, settings.mode) if settings.refine else None
    if any(rec.engine_regime for rec in records):
        optima = locate_optima(records, evaluate, settings.refine_tol)
    else:
        optima = {name: NO_OPTIMUM for name in FIGURES}
    return records, optima, min_sigma_w(records, settings.sigma_engine_only)


def _analyse_job(args):
    config, tau, settings, r_grid = args
    return analyse_tau(config, tau, settings, r_grid)


@dataclass
class ScanResult:
    records: list[SweepRecord]
    series: OptimaSeries


def scan_tau(config: EngineConfig, tau_grid, settings: ScanSettings = ScanSettings(),
             r_grid=None, jobs: int = 1, cooptimal_refine: bool = True) -> ScanResult:
    """Optima over a tau_u grid plus discontinuities and co-optimal times.

    With ``jobs > 1`` tau points are evaluated in worker processes; results
    are assembled in grid order so output does not depend on ``jobs``.
    """
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or taus.size == 0:
        raise ValidationError("tau grid must be non-empty")
    if np.any(np.diff(taus) <= 0) or np.any(taus <= 0):
        raise ValidationError("tau grid must be positive and strictly ascending")
    args = [(config, float(t), settings, r_grid) for t in taus]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_analyse_job, args))
    else:
        results = [_analyse_job(a) for a in args]
    records = [rec for res in results for rec in res[0]]
    series = OptimaSeries.from_optima(taus, [res[1] for res in results],
                                      [res[2] for res in results])
    series.errors = [f"tau_u={rec.tau_u:g} r_u={rec.r_u:g}: {rec.error}"
                     for rec in records if rec.error]
    series.discontinuities = detect_discontinuities(series, settings.jump_threshold)

    def optima_at(tau):
        return analyse_tau(config, tau, settings, r_grid)[1]

    for pair in COOPTIMAL_PAIRS:
        series.cooptimal.extend(find_cooptimal_times(
            series, settings.match_tol, pair, optima_at if cooptimal_refine else None,
            settings.jump_threshold))
    return ScanResult(records, series)
