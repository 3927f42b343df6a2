"""Three execution regimes over one rule set: synchronous discrete time,
asynchronous marching-soldier updates, and continuous-time Poisson trajectories.

The asynchronous regimes process one site-event at a time.  A correction
attempt at a site is *accepted* only if its update counter is a weak minimum
among its four neighbors, which keeps neighboring counters within one step of
each other and makes same-counter slices of the trajectory well defined.  An
accepted update applies the same local rule as the synchronous schedulers,
reading every neighbor at the matching slice (the neighbor's current state if
its counter equals the site's, its one-step-old state if it is one ahead);
the plus/minus-one lag makes that two-deep history sufficient.

Noise enters per accepted update in the discrete asynchronous mode (keyed by
site and counter, so replay is independent of event order) and as an explicit
Poisson jump channel in continuous time.  One trajectory is one sequential
event stream, deterministic given its seed; parallelism belongs at the level
of independent trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .lattice import LatticeState
from .noise import FaultPath, FaultSampler, NoiseParams, apply_fault, keyed_stream, sample_lattice_faults
from .structure import structural_toom_planes, toom_step

_CH_ASYNC_FAULT = 3

RULES = ("structure", "structure+data", "data")


@dataclass
class AsyncEvent:
    site: tuple
    kind: str  # "correction" | "noise" | "sample"
    event_time: float
    accepted: bool


@dataclass
class CTParams:
    """Continuous-time rates: correction attempts at rate 1 per site, noise
    jumps at total rate `noise_rate` per site, observable sampling at
    `sample_rate` globally (Poisson-thinned to avoid synchronization bias)."""

    noise_rate: float = 0.0
    duration: float = 10.0
    sample_rate: float = 0.0

    def __post_init__(self):
        if self.noise_rate < 0 or self.duration < 0 or self.sample_rate < 0:
            raise ConfigurationError("continuous-time rates must be nonnegative")


@dataclass
class SliceView:
    counter: int
    planes: dict  # name -> array, valid where recorded mask is set
    recorded: np.ndarray


@dataclass
class Trajectory:
    lattice: LatticeState
    fault_path: FaultPath
    snapshots: list = field(default_factory=list)
    ev_time: np.ndarray = None
    ev_site: np.ndarray = None
    ev_kind: np.ndarray = None  # 0 correction, 1 noise, 2 sample
    ev_accepted: np.ndarray = None
    samples: list = field(default_factory=list)  # (time, local-min fraction)
    slices: dict = field(default_factory=dict)  # counter -> SliceView
    accepts: int = 0
    rejects: int = 0
    noise_events: int = 0
    faulted_accepts: int = 0
    ct: CTParams | None = None

    def slice(self, c: int) -> SliceView:
        return self.slices[c]

    def event_log_text(self) -> str:
        kinds = {0: "correction", 1: "noise", 2: "sample"}
        lines = [
            f"{t:.9g} {int(s)} {kinds[int(k)]} {int(a)}"
            for t, s, k, a in zip(self.ev_time, self.ev_site, self.ev_kind, self.ev_accepted)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


# ------------------------------------------------------------ synchronous


def run_sync(
    lat: LatticeState,
    n_steps: int,
    noise: NoiseParams,
    seed: int = 0,
    rule: str = "structure",
    stride: int = 0,
) -> Trajectory:
    """n_steps synchronous applications of the configured rule with per-step
    fault sampling keyed by absolute time (so runs compose when split)."""
    if rule not in RULES:
        raise ConfigurationError(f"unknown step rule {rule!r}")
    sampler = FaultSampler(seed, noise)
    path = FaultPath(seed=seed, rate=noise.rate)
    snapshots = []
    for _ in range(n_steps):
        t = lat.global_time
        if rule != "data":
            lat.tau, lat.x, lat.y = structural_toom_planes(lat.tau, lat.x, lat.y, lat.params)
        if rule != "structure":
            lat.data["bit"] = toom_step(lat.data["bit"])
        for kind, lane in (("structure", 11), ("data", 12)):
            if rule == "structure" and kind == "data":
                continue
            if rule == "data" and kind == "structure":
                continue
            for ev in sample_lattice_faults(sampler, t, lat, kind, lane):
                apply_fault(lat, ev)
                path.events.append(ev)
        lat.global_time += 1
        if stride and lat.global_time % stride == 0:
            snapshots.append(lat.copy())
    return Trajectory(lattice=lat, fault_path=path, snapshots=snapshots)


# ----------------------------------------------------------- asynchronous


class _AsyncCore:
    """Shared per-site update machinery for the event-driven schedulers."""

    def __init__(self, lat: LatticeState, rule: str, seed: int, noise: NoiseParams,
                 record_slices=()):
        if rule not in ("structure", "structure+data"):
            raise ConfigurationError(f"async rule must be structural, got {rule!r}")
        self.lat = lat
        self.rule = rule
        self.seed = seed
        self.noise = noise
        self.n = lat.n
        self.params = lat.params
        lat.snapshot_prev()
        self.counter = lat.counter
        self.noise_since = np.zeros((self.n, self.n), dtype=np.int64)
        self.accepts = 0
        self.rejects = 0
        self.faulted_accepts = 0
        self.path = FaultPath(seed=seed, rate=noise.rate)
        self.slices = {}
        for c in record_slices:
            planes = {nm: lat.get_plane(nm).copy() for nm in self._plane_names()}
            rec = np.full((self.n, self.n), c == 0, dtype=bool)
            self.slices[c] = SliceView(counter=c, planes=planes, recorded=rec)

    def _plane_names(self):
        names = ["tau", "x", "y"]
        if self.rule == "structure+data":
            names.append("bit")
        return names

    def _read(self, name, i, j, c):
        # neighbor value at slice c; the neighbor is at counter c or c+1
        if self.counter[i, j] == c:
            return self.lat.get_plane(name)[i, j]
        return self.lat.prev[name][i, j]

    def is_weak_min(self, i, j) -> bool:
        c = self.counter[i, j]
        n = self.n
        return (
            c <= self.counter[(i + 1) % n, j]
            and c <= self.counter[(i - 1) % n, j]
            and c <= self.counter[i, (j + 1) % n]
            and c <= self.counter[i, (j - 1) % n]
        )

    def attempt(self, i, j) -> bool:
        """One correction attempt; applies the site-local rule when accepted."""
        if not self.is_weak_min(i, j):
            self.rejects += 1
            return False
        lat, n = self.lat, self.n
        c = int(self.counter[i, j])
        ni, ej = (i + 1) % n, (j + 1) % n
        t0, blk = self.params.cycle_steps, self.params.block_size

        tau_c = lat.tau[i, j]
        x_c = lat.x[i, j]
        y_c = lat.y[i, j]
        tau_n = self._read("tau", ni, j, c)
        tau_e = self._read("tau", i, ej, c)
        x_n = self._read("x", ni, j, c)
        x_e = self._read("x", i, ej, c)
        y_n = self._read("y", ni, j, c)
        y_e = self._read("y", i, ej, c)

        new_tau = (_maj3(tau_c, tau_n, tau_e) + 1) % t0
        new_x = _maj3(x_c, (x_n - 1) % blk, x_e)
        new_y = _maj3(y_c, y_n, (y_e - 1) % blk)
        if self.rule == "structure+data":
            b_c = lat.data["bit"][i, j]
            b_n = self._read("bit", ni, j, c)
            b_e = self._read("bit", i, ej, c)
            new_bit = _maj3(b_c, b_n, b_e)

        for name in ("tau", "x", "y"):
            lat.prev[name][i, j] = lat.get_plane(name)[i, j]
        lat.tau[i, j], lat.x[i, j], lat.y[i, j] = new_tau, new_x, new_y
        if self.rule == "structure+data":
            lat.prev["bit"][i, j] = lat.data["bit"][i, j]
            lat.data["bit"][i, j] = new_bit
        self.counter[i, j] = c + 1
        self.accepts += 1
        if self.noise_since[i, j] > 0:
            self.faulted_accepts += 1
            self.noise_since[i, j] = 0
        self._audit_gap(i, j)
        self._maybe_record_slice(i, j, c + 1)
        return True

    def apply_update_noise(self, i, j):
        """Discrete-async noise: fault the accepted update with probability
        rate, keyed by (seed, site, counter) for order independence."""
        if self.noise.rate == 0.0 or "structure" not in self.noise.layers:
            return
        c = int(self.counter[i, j])
        stream = keyed_stream(self.seed, _CH_ASYNC_FAULT, i * self.n + j, c)
        if stream.random() < self.noise.rate:
            self.scramble_site(i, j, stream, time_tag=c)

    def scramble_site(self, i, j, stream, time_tag):
        from .noise import FaultEvent, Location

        t0, blk = self.params.cycle_steps, self.params.block_size
        payload = (
            int(stream.integers(0, t0)),
            int(stream.integers(0, blk)),
            int(stream.integers(0, blk)),
        )
        loc = Location(time_tag, f"toom:{i}:{j}", ((i, j),), "structure")
        ev = FaultEvent(loc, "scramble", payload)
        apply_fault(self.lat, ev)
        self.path.events.append(ev)
        # the slice the site currently sits at is corrupted in place
        self._maybe_record_slice(i, j, int(self.counter[i, j]))

    def _audit_gap(self, i, j):
        c = self.counter[i, j]
        n = self.n
        for (a, b) in ((i + 1) % n, j), ((i - 1) % n, j), (i, (j + 1) % n), (i, (j - 1) % n):
            if abs(int(c) - int(self.counter[a, b])) > 1:
                raise InvariantViolation(
                    f"marching-soldier gap broken at {(i, j)} vs {(a, b)}"
                )

    def _maybe_record_slice(self, i, j, c):
        view = self.slices.get(c)
        if view is not None:
            for name in self._plane_names():
                view.planes[name][i, j] = self.lat.get_plane(name)[i, j]
            view.recorded[i, j] = True

    def local_min_fraction(self) -> float:
        c = self.counter
        m = (
            (c <= np.roll(c, -1, 0))
            & (c <= np.roll(c, 1, 0))
            & (c <= np.roll(c, -1, 1))
            & (c <= np.roll(c, 1, 1))
        )
        return float(m.mean())


def _maj3(a, b, c):
    return b if b == c else a


def run_async(
    lat: LatticeState,
    n_events: int,
    noise: NoiseParams,
    seed: int = 0,
    rule: str = "structure",
    record_slices=(),
    site_sequence=None,
) -> Trajectory:
    """Process n_events site-selection events sequentially; each is a
    correction attempt accepted under the weak-minimum counter rule.

    site_sequence overrides the seeded uniform site choice (used by the
    order-commutation tests); entries are flat site indices.
    """
    core = _AsyncCore(lat, rule, seed, noise, record_slices)
    rng = np.random.default_rng(seed)
    n = lat.n
    if site_sequence is None:
        site_sequence = rng.integers(0, n * n, size=n_events)
    else:
        site_sequence = np.asarray(site_sequence)
        n_events = len(site_sequence)
    ev_site = np.asarray(site_sequence, dtype=np.int64)
    ev_acc = np.zeros(n_events, dtype=bool)
    for k in range(n_events):
        s = int(ev_site[k])
        i, j = divmod(s, n)
        if core.attempt(i, j):
            ev_acc[k] = True
            core.apply_update_noise(i, j)
    traj = Trajectory(
        lattice=lat,
        fault_path=core.path,
        ev_time=np.arange(n_events, dtype=np.float64),
        ev_site=ev_site,
        ev_kind=np.zeros(n_events, dtype=np.int8),
        ev_accepted=ev_acc,
        slices=core.slices,
        accepts=core.accepts,
        rejects=core.rejects,
        faulted_accepts=core.faulted_accepts,
    )
    return traj


def run_ct(
    lat: LatticeState,
    ct: CTParams,
    seed: int = 0,
    rule: str = "structure",
    record_slices=(),
) -> Trajectory:
    """Next-event continuous-time simulation: per-site correction attempts at
    rate 1 and noise jumps at rate noise_rate, executed in time order under
    the asynchronous acceptance semantics."""
    noise = NoiseParams(rate=0.0)  # CT noise arrives via the jump channel below
    core = _AsyncCore(lat, rule, seed, noise, record_slices)
    rng = np.random.default_rng(seed)
    n = lat.n
    site_rate = 1.0 + ct.noise_rate
    total = n * n * site_rate + ct.sample_rate
    p_noise = ct.noise_rate / site_rate
    p_sample = ct.sample_rate / total

    times, sites, kinds, accs = [], [], [], []
    samples = []
    t = 0.0
    chunk = 1 << 12
    done = False
    while not done:
        dts = rng.exponential(1.0 / total, size=chunk)
        u_kind = rng.random(size=chunk)
        u_site = rng.integers(0, n * n, size=chunk)
        u_noise = rng.random(size=chunk)
        for k in range(chunk):
            t += dts[k]
            if t > ct.duration:
                done = True
                break
            if u_kind[k] < p_sample:
                samples.append((t, core.local_min_fraction()))
                continue
            s = int(u_site[k])
            i, j = divmod(s, n)
            is_noise = u_noise[k] < p_noise
            if is_noise:
                core.noise_since[i, j] += 1
                core.scramble_site(i, j, rng, time_tag=int(core.counter[i, j]))
                acc = True
            else:
                acc = core.attempt(i, j)
            times.append(t)
            sites.append(s)
            kinds.append(1 if is_noise else 0)
            accs.append(acc)
    traj = Trajectory(
        lattice=lat,
        fault_path=core.path,
        ev_time=np.array(times),
        ev_site=np.array(sites, dtype=np.int64),
        ev_kind=np.array(kinds, dtype=np.int8),
        ev_accepted=np.array(accs, dtype=bool),
        samples=samples,
        slices=core.slices,
        accepts=core.accepts,
        rejects=core.rejects,
        noise_events=int(np.sum(np.array(kinds, dtype=np.int8) == 1)),
        faulted_accepts=core.faulted_accepts,
        ct=ct,
    )
    return traj


# ------------------------------------------------------------- estimators


def local_min_density(traj: Trajectory, time_window=None):
    """Fraction of (site, sample-time) pairs where the counter is a weak local
    minimum, with a batched-means confidence interval."""
    samples = traj.samples
    if time_window is not None:
        lo, hi = time_window
        samples = [(t, v) for (t, v) in samples if lo <= t <= hi]
    if not samples:
        raise ConfigurationError("trajectory carries no density samples in the window")
    vals = np.array([v for _, v in samples])
    nb = max(2, min(10, len(vals) // 4)) if len(vals) >= 8 else 1
    if nb == 1:
        return float(vals.mean()), (float(vals.min()), float(vals.max()))
    batches = np.array_split(vals, nb)
    means = np.array([b.mean() for b in batches])
    half = 1.96 * means.std(ddof=1) / np.sqrt(nb)
    mu = float(vals.mean())
    return mu, (mu - float(half), mu + float(half))


def effective_fault_rate(traj: Trajectory):
    """Fraction of accepted correction updates preceded, since the same site's
    previous accepted update, by at least one noise event."""
    if traj.accepts == 0:
        return 0.0
    return traj.faulted_accepts / traj.accepts


def inter_event_times(traj: Trajectory) -> np.ndarray:
    """Pooled per-site inter-event times of a continuous-time trajectory."""
    out = []
    order = np.argsort(traj.ev_site, kind="stable")
    sites = traj.ev_site[order]
    times = traj.ev_time[order]
    start = 0
    for k in range(1, len(sites) + 1):
        if k == len(sites) or sites[k] != sites[start]:
            ts = np.sort(times[start:k])
            if len(ts) > 1:
                out.append(np.diff(ts))
            start = k
    if not out:
        return np.array([])
    return np.concatenate(out)
