"""Stochastic and adversarial fault injection per space-time location.

A location is one local operation at a fixed space-time position (a two-site
gate is one location, not two).  Fault decisions come from counter-based
Philox streams keyed by (seed, time), with locations mapped to fixed lanes in
canonical enumeration order, so identical (seed, rate, run parameters) give
identical fault paths regardless of scheduler or platform and runs compose
when split at any step boundary.  Asynchronous events key their own stream by
(seed, site, counter) instead, which makes replay independent of event order.

Only the independent stochastic specialization of the noise model is sampled;
the strength bridge is strength = sqrt(rate) with the proportionality constant
fixed to one.  Adversarial mode takes an explicit event list so worst-case
placements can be scripted.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .lattice import LatticeState

_MASK64 = (1 << 64) - 1

# channel tags for keyed sub-streams
_CH_STEP = 1
_CH_EFFECT = 2
_CH_ASYNC = 3


_PHILOX_TEMPLATE = np.random.Philox(key=np.uint64(0))
_ZERO4 = np.zeros(4, dtype=np.uint64)


def keyed_stream(seed: int, *words) -> np.random.Generator:
    """Generator on a Philox stream addressed by (seed, words); order-free.

    The counter-based construction makes any location's draws computable
    independently of every other location.  State is injected into a shared
    template bit generator (constructing one from scratch costs an OS entropy
    pull); callers must finish with a stream before keying the next one, which
    the single-writer concurrency model already guarantees.
    """
    counter = _ZERO4.copy()
    for k, w in enumerate(words[:3]):
        counter[3 - k] = np.uint64(int(w) & _MASK64)
    _PHILOX_TEMPLATE.state = {
        "bit_generator": "Philox",
        "state": {
            "counter": counter,
            "key": np.array([int(seed) & _MASK64, 0], dtype=np.uint64),
        },
        "buffer": _ZERO4,
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(_PHILOX_TEMPLATE)


def eta_from_p(p: float) -> float:
    """Local noise strength for i.i.d. rate p: sqrt(p), constant fixed to 1."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"fault rate must be in [0, 1], got {p}")
    return float(np.sqrt(p))


@dataclass(frozen=True)
class Location:
    """One local operation: time step, op identifier within the step, support sites."""

    time: int
    op_id: str
    support: tuple
    kind: str = "structure"  # "structure" | "data"


@dataclass(frozen=True)
class FaultEvent:
    location: Location
    effect: str  # "scramble" | "bitflip" | "pauli" | "custom"
    payload: tuple = ()


@dataclass
class FaultPath:
    """Time-ordered fault record of one trajectory; the unit of exRec accounting."""

    seed: int
    rate: float
    events: list = field(default_factory=list)

    def extend(self, events):
        self.events.extend(events)

    def by_time(self):
        return sorted(self.events, key=lambda e: (e.location.time, e.location.op_id))

    def serialize(self) -> str:
        lines = []
        for e in self.by_time():
            sites = ";".join(f"{i},{j}" for (i, j) in e.location.support)
            payload = ",".join(str(int(v)) for v in e.payload) or "-"
            lines.append(
                f"{e.location.time} {e.location.op_id} {sites} {e.effect} {payload}"
            )
        return "\n".join(lines) + ("\n" if lines else "")

    @staticmethod
    def parse(text: str, seed: int = 0, rate: float = 0.0) -> "FaultPath":
        path = FaultPath(seed=seed, rate=rate)
        for line in text.splitlines():
            if not line.strip():
                continue
            t, op_id, sites, effect, payload = line.split(" ", 4)
            support = tuple(
                tuple(int(v) for v in s.split(",")) for s in sites.split(";")
            )
            pl = () if payload == "-" else tuple(int(v) for v in payload.split(","))
            kind = "structure" if op_id.startswith("toom") else "data"
            path.events.append(
                FaultEvent(Location(int(t), op_id, support, kind), effect, pl)
            )
        return path


@dataclass
class NoiseParams:
    """Per-location i.i.d. rate, exposure layers, or an explicit adversarial script."""

    rate: float = 0.0
    mode: str = "iid"  # "iid" | "adversarial"
    events: list = field(default_factory=list)
    layers: frozenset = frozenset({"structure", "data"})

    @property
    def strength(self) -> float:
        return eta_from_p(self.rate)

    def __post_init__(self):
        if self.mode not in ("iid", "adversarial"):
            raise ConfigurationError(f"unknown noise mode {self.mode!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise ConfigurationError(f"fault rate must be in [0, 1], got {self.rate}")


def _draw_effect(loc: Location, rng, lat: LatticeState) -> FaultEvent:
    """Uniform effect on the location's support; scramble values may repeat the
    current register by chance (the location still counts as faulted)."""
    k = len(loc.support)
    if loc.kind == "structure":
        t0, blk = lat.params.cycle_steps, lat.params.block_size
        payload = []
        for _ in loc.support:
            payload += [
                int(rng.integers(0, t0)),
                int(rng.integers(0, blk)),
                int(rng.integers(0, blk)),
            ]
        return FaultEvent(loc, "scramble", tuple(payload))
    if lat.data_rule == "pauli":
        code = int(rng.integers(1, 4**k))  # non-identity Pauli on the support
        payload = []
        for q in range(k):
            pq = (code // 4**q) % 4
            payload += [pq & 1, pq >> 1]  # (x bit, z bit)
        return FaultEvent(loc, "pauli", tuple(payload))
    mask = int(rng.integers(1, 2**k))  # non-identity flip pattern
    return FaultEvent(loc, "bitflip", tuple((mask >> q) & 1 for q in range(k)))


def sample_faults(step_locations, p: float, rng_stream, lat: LatticeState):
    """Independently fault each location with probability p; effects drawn
    uniformly from the non-identity effects on the support.

    One uniform per location is consumed in list order, so the canonical
    enumeration order of a step's locations is part of the replay contract.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"fault rate must be in [0, 1], got {p}")
    if not step_locations:
        return []
    u = rng_stream.random(len(step_locations))
    events = []
    for loc, uu in zip(step_locations, u):
        if uu < p:
            events.append(_draw_effect(loc, rng_stream, lat))
    return events


def apply_fault(lat: LatticeState, event: FaultEvent) -> LatticeState:
    """Apply one fault effect; only the support's registers change."""
    for (i, j) in event.location.support:
        if not (0 <= i < lat.n and 0 <= j < lat.n):
            raise ConfigurationError(
                f"fault support site {(i, j)} outside {lat.n}x{lat.n} lattice"
            )
    if event.effect == "scramble":
        for k, (i, j) in enumerate(event.location.support):
            vt, vx, vy = event.payload[3 * k : 3 * k + 3]
            lat.tau[i, j], lat.x[i, j], lat.y[i, j] = vt, vx, vy
    elif event.effect == "bitflip":
        plane = lat.data["bit"] if lat.data_rule == "bit" else lat.data["sym"]
        for k, (i, j) in enumerate(event.location.support):
            if event.payload[k]:
                if lat.data_rule == "bit":
                    plane[i, j] ^= 1
                else:
                    plane[i, j] = (plane[i, j] + 1) % lat.opaque_alphabet
    elif event.effect == "pauli":
        for k, (i, j) in enumerate(event.location.support):
            xb, zb = event.payload[2 * k], event.payload[2 * k + 1]
            lat.data["xmask"][i, j] ^= xb
            lat.data["zmask"][i, j] ^= zb
    elif event.effect == "custom":
        pass  # carrier for externally-scripted effects; applied by the caller
    else:
        raise ConfigurationError(f"unknown fault effect {event.effect!r}")
    return lat


class FaultSampler:
    """Per-run fault source: binds (seed, NoiseParams) and hands out step events.

    iid mode samples from the (seed, time)-keyed stream; adversarial mode
    replays the scripted events whose location.time matches the step.
    """

    def __init__(self, seed: int, noise: NoiseParams):
        self.seed = seed
        self.noise = noise
        if noise.mode == "adversarial":
            self._by_time = {}
            for e in noise.events:
                self._by_time.setdefault(e.location.time, []).append(e)

    def step_events(self, time: int, locations, lat: LatticeState):
        if self.noise.mode == "adversarial":
            return list(self._by_time.get(time, []))
        if self.noise.rate == 0.0:
            return []
        exposed = [loc for loc in locations if loc.kind in self.noise.layers]
        stream = keyed_stream(self.seed, _CH_STEP, time)
        return sample_faults(exposed, self.noise.rate, stream, lat)

    def async_event_stream(self, site_index: int, counter: int) -> np.random.Generator:
        return keyed_stream(self.seed, _CH_ASYNC, site_index, counter)


def sample_lattice_faults(sampler, t, lat, kind, lane):
    """Vectorized per-site fault sampling for one register layer of one step.

    One location per site, keyed by (seed, lane, time); adversarial mode
    returns the scripted events for this step and layer instead.
    """
    noise = sampler.noise
    if noise.mode == "adversarial":
        return [
            e
            for e in noise.events
            if e.location.time == t and e.location.kind == kind
        ]
    if noise.rate == 0.0 or kind not in noise.layers:
        return []
    stream = keyed_stream(sampler.seed, lane, t)
    u = stream.random(lat.n * lat.n)
    hit = np.nonzero(u < noise.rate)[0]
    events = []
    t0, blk = lat.params.cycle_steps, lat.params.block_size
    for flat in hit:
        i, j = int(flat) // lat.n, int(flat) % lat.n
        if kind == "structure":
            payload = (
                int(stream.integers(0, t0)),
                int(stream.integers(0, blk)),
                int(stream.integers(0, blk)),
            )
            loc = Location(t, f"toom:{i}:{j}", ((i, j),), "structure")
            events.append(FaultEvent(loc, "scramble", payload))
        else:
            loc = Location(t, f"data:{i}:{j}", ((i, j),), "data")
            if lat.data_rule == "pauli":
                code = int(stream.integers(1, 4))
                events.append(FaultEvent(loc, "pauli", (code & 1, code >> 1)))
            else:
                events.append(FaultEvent(loc, "bitflip", (1,)))
    return events
