"""Noise renormalization: the per-level strength recursion and its closed
form, level-count sizing, Monte Carlo sparsity estimation over cycle
trajectories, and memory-lifetime experiments.

The flow iterates strength[l+1] = A * strength[l]**(t+1) with threshold
A**(-1/t); below threshold the closed form
threshold * (strength0/threshold)**((t+1)**level) shows the double-exponential
suppression.  The sparsity scan reports raw bad-exRec probabilities and, in a
separately labeled column, their strength-convention square roots: fitting
log sqrt(P) against log eta keeps both axes in strength units, where the
power law's slope is t+1 (a raw-probability fit would read 2(t+1) because
eta ~ sqrt(p)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lattice import ScheduleParams, new_lattice
from .noise import FaultPath, NoiseParams, eta_from_p
from .exrec import partition_exrecs, start_health_map
from .schedule import identity_schedule, run_cycle


# ------------------------------------------------------------------ flow


@dataclass
class RenormFlow:
    amplification: float  # A
    tolerance: int  # t
    eta0: float
    levels: int
    eta_per_level: list
    closed_form: list
    log_eta_per_level: list
    log_closed_form: list
    threshold: float
    max_rel_err: float
    suppressed: bool  # eta0 below threshold


def renorm_flow(eta0: float, amplification: float, tolerance: int, levels: int) -> RenormFlow:
    """Iterate the strength recursion and compare with the closed form.

    Both sequences are evaluated in log space (the recursion is a multiply-add
    there) at extended precision, which keeps the relative agreement well
    inside 1e-12 even when (t+1)**k reaches the hundreds of thousands and the
    linear values underflow; the linear columns are the exponentials of the
    log sequences.
    """
    if amplification <= 0 or tolerance < 1 or levels < 0 or eta0 < 0:
        raise ConfigurationError("flow needs A>0, t>=1, k>=0, eta0>=0")
    a, t = amplification, tolerance
    ld = np.longdouble
    log_a = np.log(ld(a))
    log_th = -log_a / ld(t)
    threshold = float(np.exp(log_th))
    if eta0 == 0.0:
        zeros = [0.0] * (levels + 1)
        return RenormFlow(a, t, eta0, levels, zeros, zeros,
                          [-math.inf] * (levels + 1), [-math.inf] * (levels + 1),
                          threshold, 0.0, True)
    log_etas = [np.log(ld(eta0))]
    for _ in range(levels):
        log_etas.append(log_a + ld(t + 1) * log_etas[-1])
    log_closed = [
        log_th + ld(t + 1) ** k * (np.log(ld(eta0)) - log_th)
        for k in range(levels + 1)
    ]
    # |difference of logs| is the relative error for small differences
    rel = float(max(abs(x - y) for x, y in zip(log_etas, log_closed)))
    log_etas = [float(v) for v in log_etas]
    log_closed = [float(v) for v in log_closed]
    def safe_exp(v):
        return math.exp(v) if v < 700 else math.inf
    return RenormFlow(
        amplification=a,
        tolerance=t,
        eta0=eta0,
        levels=levels,
        eta_per_level=[safe_exp(v) for v in log_etas],
        closed_form=[safe_exp(v) for v in log_closed],
        log_eta_per_level=log_etas,
        log_closed_form=log_closed,
        threshold=threshold,
        max_rel_err=rel,
        suppressed=eta0 < threshold,
    )


def required_levels(
    n_qubits: float,
    depth: float,
    accuracy: float,
    eta0: float,
    amplification: float,
    tolerance: int,
    level_cap: int = 64,
):
    """Smallest level count with n_qubits*depth*eta_level <= accuracy; None when
    the flow never suppresses (eta0 at or above threshold)."""
    target = accuracy / (n_qubits * depth)
    if eta0 <= target:
        return 0
    threshold = amplification ** (-1.0 / tolerance)
    if eta0 >= threshold:
        return None
    eta = eta0
    for k in range(1, level_cap + 1):
        eta = amplification * eta ** (tolerance + 1)
        if eta <= target:
            return k
    return None


# ---------------------------------------------------------------- fitting


def wilson_interval(successes: int, total: int, z: float = 1.96):
    if total == 0:
        return (0.0, 1.0)
    phat = successes / total
    denom = 1 + z**2 / total
    center = (phat + z**2 / (2 * total)) / denom
    half = z * math.sqrt(phat * (1 - phat) / total + z**2 / (4 * total**2)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


@dataclass
class ScanRow:
    p: float
    eta: float
    n_exrecs: int
    n_direct_bad: int
    n_bad: int

    @property
    def p_direct_bad(self):
        return self.n_direct_bad / self.n_exrecs if self.n_exrecs else 0.0

    @property
    def p_bad(self):
        return self.n_bad / self.n_exrecs if self.n_exrecs else 0.0

    def ci_direct(self):
        return wilson_interval(self.n_direct_bad, self.n_exrecs)

    def ci_bad(self):
        return wilson_interval(self.n_bad, self.n_exrecs)

    def eta_direct(self):
        # strength-convention derived column
        return math.sqrt(self.p_direct_bad)

    def eta_bad_root_r(self, influence_size: int):
        # the 1/R-rooted relation, applied only in this labeled derived column
        return math.sqrt(self.p_bad) ** (1.0 / influence_size) if self.p_bad else 0.0


@dataclass
class ScanResult:
    rows: list
    slope: float | None
    intercept: float | None
    amplification_est: float | None
    points_used: int
    tolerance: int


def fit_strength_slope(rows, min_events: int = 50):
    """Weighted least squares of log eta_direct on log eta over rows with at
    least min_events direct-bad observations; weights are inverse squared
    relative Wilson half-widths propagated to the log-strength scale."""
    xs, ys, ws = [], [], []
    for row in rows:
        if row.n_direct_bad < min_events or row.p_direct_bad <= 0:
            continue
        lo, hi = row.ci_direct()
        if lo <= 0:
            continue
        xs.append(math.log(row.eta))
        ys.append(0.5 * math.log(row.p_direct_bad))
        half_log = 0.25 * (math.log(hi) - math.log(lo))
        ws.append(1.0 / max(half_log, 1e-9) ** 2)
    if len(xs) < 2:
        return None, None, len(xs)
    x = np.array(xs)
    y = np.array(ys)
    w = np.array(ws)
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    slope = float(np.sum(w * (x - xm) * (y - ym)) / np.sum(w * (x - xm) ** 2))
    intercept = float(ym - slope * xm)
    return slope, intercept, len(xs)


def scan_params(tolerance: int) -> ScheduleParams:
    """Reduced-tolerance cycle geometry for measurable bad-exRec statistics."""
    width = 3 if tolerance == 1 else 1
    refresh = max(width * tolerance, 2)
    p = ScheduleParams(
        block_size=4,
        refresh_steps=refresh,
        code_steps=1,
        structure_tolerance=tolerance,
        cluster_width=width,
    )
    return p.validate(strict=False)


def estimate_level_noise(
    params: ScheduleParams,
    p_grid,
    trials_per_point=None,
    seed: int = 0,
    n: int | None = None,
    cycles_per_trial: int = 4,
    target_events: int = 80,
    max_cycles_per_point: int = 500_000,
) -> ScanResult:
    """Monte Carlo over cycle trajectories with i.i.d. structure noise: counts
    direct-bad and bad exRecs per rate, with trial counts pre-sized from the
    binomial prediction so the retained points carry enough events.

    Health chains across the cycles of one trial (the start-of-cycle cluster
    map feeds classification); faults are partitioned with the truncation
    fixpoint before counting.
    """
    n = n or 2 * params.block_size
    nb_sq = (n // params.block_size) ** 2
    locations_per_exrec = params.block_size**2 * params.cycle_steps
    t = params.structure_tolerance
    rows = []
    for pi, p in enumerate(p_grid):
        lam = locations_per_exrec * p
        # predicted direct-bad probability (Poisson tail at t+1)
        tail = 1.0
        acc = 0.0
        term = math.exp(-lam)
        for k in range(t + 1):
            acc += term
            term *= lam / (k + 1)
        tail = max(1e-12, 1.0 - acc)
        if trials_per_point is None:
            cycles_needed = int(target_events / (tail * nb_sq)) + 1
            n_trials = min(
                max(1, cycles_needed // cycles_per_trial + 1),
                max_cycles_per_point // cycles_per_trial,
            )
        else:
            n_trials = trials_per_point
        noise = NoiseParams(rate=p, layers=frozenset({"structure"}))
        n_exrecs = n_direct = n_bad = 0
        schedule = identity_schedule()
        for trial in range(n_trials):
            lat = new_lattice(n, params)
            health = {}
            seg = FaultPath(seed=seed, rate=p)
            for cyc in range(cycles_per_trial):
                health.update(start_health_map(lat, cyc))
                lat, seg, _ = run_cycle(
                    lat,
                    noise,
                    seed=hash((seed, pi, trial)) & 0xFFFFFFFF,
                    schedule=schedule,
                    fault_path=seg,
                )
            part = partition_exrecs(
                seg, params, n, health_map=health, n_slices=cycles_per_trial
            )
            for rep in part.reports.values():
                n_exrecs += 1
                n_direct += rep.direct_bad
                n_bad += rep.classification == "Bad"
        rows.append(
            ScanRow(p=p, eta=eta_from_p(p), n_exrecs=n_exrecs, n_direct_bad=n_direct, n_bad=n_bad)
        )
    slope, intercept, used = fit_strength_slope(rows)
    amp = math.exp(intercept) if intercept is not None else None
    return ScanResult(
        rows=rows,
        slope=slope,
        intercept=intercept,
        amplification_est=amp,
        points_used=used,
        tolerance=t,
    )


# ---------------------------------------------------------------- lifetime


@dataclass
class LifetimeRow:
    size: int
    p: float
    trial: int
    lifetime: int
    censored: bool


def lifetime_trials(size: int, p: float, trials: int, cap: int, seed: int):
    """Vectorized batch of memory-lifetime trials: plain Toom on the data bit
    plane with per-site-per-step flips; a trial ends when the global majority
    leaves the stored value (ties count as failure) or at the cap."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, size, int(p * 10**9))))
    plane = np.zeros((trials, size, size), dtype=np.uint8)
    alive = np.ones(trials, dtype=bool)
    life = np.full(trials, cap, dtype=np.int64)
    half = size * size / 2
    for step in range(1, cap + 1):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        sub = plane[idx]
        north = np.roll(sub, -1, axis=1)
        east = np.roll(sub, -1, axis=2)
        sub = np.where(north == east, north, sub)
        sub ^= (rng.random(sub.shape) < p).astype(np.uint8)
        plane[idx] = sub
        ones = sub.sum(axis=(1, 2))
        dead = ones >= half
        if dead.any():
            life[idx[dead]] = step
            alive[idx[dead]] = False
    return life, life >= cap


def _lifetime_task(task):
    size, p, trials, cap, seed = task
    return lifetime_trials(size, p, trials, cap, seed)


def lifetime_experiment(size_grid, p_grid, trials: int, cap: int, seed: int = 0,
                        params: ScheduleParams | None = None):
    """Median lifetimes per (size, rate); right-censored runs are flagged, and
    the largest encoding level that fits is reported as floor(log_blk size).

    Independent (size, rate) batches fan out to the worker pool (the
    TOOMQCA_WORKERS environment variable bounds it); result rows are assembled
    in grid order regardless of completion order.
    """
    from .manifest import pool_map

    params = params or ScheduleParams()
    grid = [(size, p) for size in size_grid for p in p_grid]
    results = pool_map(_lifetime_task, [(s, p, trials, cap, seed) for (s, p) in grid])
    rows = []
    summary = []
    for (size, p), (life, censored) in zip(grid, results):
        for k in range(trials):
            rows.append(
                LifetimeRow(size=size, p=p, trial=k, lifetime=int(life[k]),
                            censored=bool(censored[k]))
            )
        summary.append(
            {
                "size": size,
                "p": p,
                "median": float(np.median(life)),
                "median_censored": bool(np.median(life) >= cap),
                "n_censored": int(censored.sum()),
                "level_capacity": int(math.floor(math.log(size, params.block_size)))
                if size >= params.block_size
                else 0,
                "ci": median_interval(life),
            }
        )
    return rows, summary


def median_interval(values, confidence: float = 0.95):
    """Distribution-free order-statistic interval for the median."""
    from scipy import stats as sps

    v = np.sort(np.asarray(values))
    n = len(v)
    lo_k = int(sps.binom.ppf((1 - confidence) / 2, n, 0.5))
    hi_k = int(sps.binom.ppf(1 - (1 - confidence) / 2, n, 0.5))
    hi_k = min(hi_k, n - 1)
    return (float(v[lo_k]), float(v[hi_k]))
