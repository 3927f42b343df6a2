"""The error-correcting cycle: refresh phase, simulation phase with
coordinate-consistency gating, macro-steps, and the parameter feasibility
solver.

Every step applies the structural Toom rule.  Data operations are selected
per site by the *believed* (time_stamp, row_coord, col_coord) after that
step's structure update: a site whose time stamp falls in the refresh range
idles its data register, one in the simulation range looks its gate up in the
schedule table.  With ideal structure this reproduces the nominal two-phase
cycle exactly; with corrupted structure it produces the miscontrolled data
locations the gating and fault-localization machinery is about.

A data gate whose support crosses a block boundary executes only if the two
sites' registers satisfy the nearest-neighbor relation modulo block_size (and
agree on the time stamp); otherwise it is replaced by identity.  The
instrumentation counters audit this independently of the gating decision.

Schedule tables are loaded from a line-oriented text format::

    # phase  tau  x-class  y-class  gate
    sim      *    *        *        TOOMD
    sim      20   *        23%24    CE

phase must be `sim` (data registers are idle in the refresh phase by
definition); tau is `*` or an exact believed time stamp; the coordinate
classes are `*`, an exact value, or `r%m` (matches register % m == r); the
first matching row wins and unmatched sites idle.  Gates: ID (storage),
TOOMD (majority with the north and east data neighbors), FLIP (bit/X flip),
CE/CN (copy onto the east/north neighbor), SE/SN (swap with the east/north
neighbor).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .lattice import LatticeState, ScheduleParams, ideal_planes
from .noise import (
    FaultPath,
    FaultSampler,
    NoiseParams,
    apply_fault,
    sample_lattice_faults,
)
from .structure import shift_east, shift_north, structural_toom_planes, toom_step

GATE_TAGS = ("ID", "TOOMD", "FLIP", "CE", "CN", "SE", "SN")
_TWO_SITE = {"CE": "E", "CN": "N", "SE": "E", "SN": "N"}


@dataclass(frozen=True)
class CyclePhase:
    kind: str  # "Refresh" | "Simulation"
    step_in_cycle: int


def phase_of(step_in_cycle: int, params: ScheduleParams) -> CyclePhase:
    kind = "Refresh" if step_in_cycle < params.refresh_steps else "Simulation"
    return CyclePhase(kind=kind, step_in_cycle=step_in_cycle)


@dataclass(frozen=True)
class GateCall:
    op_id: str
    support: tuple
    crosses_block_boundary: bool
    gated: bool = False

    def __post_init__(self):
        if self.gated and not self.crosses_block_boundary:
            raise ConfigurationError("only block-crossing gates can be gated")


def coord_consistent(cell_a, cell_b, direction: str, params: ScheduleParams) -> bool:
    """True iff cell_b's registers are the unit-offset continuation of cell_a's.

    cell_b must be cell_a's neighbor in `direction`; the check requires equal
    time stamps and the coordinate offset of the direction modulo block_size.
    Stricter than the bare coordinate relation on purpose: requiring the time
    stamps to agree prevents cross-cycle gate execution.
    """
    blk = params.block_size
    ta, xa, ya = cell_a
    tb, xb, yb = cell_b
    if ta != tb:
        return False
    if direction == "E":
        return xb == xa and yb == (ya + 1) % blk
    if direction == "N":
        return xb == (xa + 1) % blk and yb == ya
    raise ConfigurationError(f"unsupported gate direction {direction!r}")


# ------------------------------------------------------------ schedule table


def _parse_selector(tok: str):
    if tok == "*":
        return None
    if "%" in tok:
        r, m = tok.split("%")
        return (int(r), int(m))
    return int(tok)


def _selector_mask(sel, plane: np.ndarray) -> np.ndarray:
    if sel is None:
        return np.ones_like(plane, dtype=bool)
    if isinstance(sel, tuple):
        r, m = sel
        return plane % m == r
    return plane == sel


@dataclass
class ScheduleTable:
    """(tau, x-class, y-class) -> gate tag rows, first match wins."""

    rows: list  # (tau_sel, x_sel, y_sel, tag)

    @staticmethod
    def from_text(text: str) -> "ScheduleTable":
        rows = []
        for ln, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            if len(toks) != 5:
                raise ConfigurationError(f"schedule line {ln}: want 5 columns, got {len(toks)}")
            phase, tau, xc, yc, tag = toks
            if phase != "sim":
                raise ConfigurationError(
                    f"schedule line {ln}: phase must be 'sim' (refresh data is idle)"
                )
            if tag not in GATE_TAGS:
                raise ConfigurationError(f"schedule line {ln}: unknown gate {tag!r}")
            rows.append((_parse_selector(tau), _parse_selector(xc), _parse_selector(yc), tag))
        return ScheduleTable(rows=rows)

    def to_text(self) -> str:
        def fmt(sel):
            if sel is None:
                return "*"
            if isinstance(sel, tuple):
                return f"{sel[0]}%{sel[1]}"
            return str(sel)

        return "\n".join(
            f"sim {fmt(t)} {fmt(x)} {fmt(y)} {tag}" for (t, x, y, tag) in self.rows
        ) + "\n"

    def gate_planes(self, lat: LatticeState):
        """Row-ordered (tag, mask) pairs of sites selecting each gate this step,
        evaluated on the believed registers; refresh believers and ID rows idle."""
        sim_believers = lat.tau >= lat.params.refresh_steps
        unmatched = sim_believers.copy()
        out = []
        for (tsel, xsel, ysel, tag) in self.rows:
            m = (
                unmatched
                & _selector_mask(tsel, lat.tau)
                & _selector_mask(xsel, lat.x)
                & _selector_mask(ysel, lat.y)
            )
            if m.any():
                unmatched &= ~m
                if tag != "ID":
                    out.append((tag, m))
        return out


def identity_schedule() -> ScheduleTable:
    return ScheduleTable(rows=[(None, None, None, "ID")])


def repetition_schedule() -> ScheduleTable:
    """Classical repetition data layer: majority correction each simulation step."""
    return ScheduleTable(rows=[(None, None, None, "TOOMD")])


def boundary_gate_schedule(params: ScheduleParams) -> ScheduleTable:
    """Cross-block copies along both block edges at the first simulation step,
    repetition correction otherwise; exercises the gating path."""
    blk = params.block_size
    t = params.refresh_steps
    return ScheduleTable(
        rows=[
            (t, None, (blk - 1, blk), "CE"),
            (t, (blk - 1, blk), None, "CN"),
            (None, None, None, "TOOMD"),
        ]
    )


# ---------------------------------------------------------------- run cycle


@dataclass
class CycleStats:
    """Instrumentation of one cycle (or macro-step)."""

    executed_gates: int = 0
    gated_gates: int = 0
    cross_block_executions: int = 0
    inconsistent_cross_executions: int = 0
    miscontrolled_data_locations: int = 0
    calls: list = field(default_factory=list)

    def merge(self, other: "CycleStats"):
        self.executed_gates += other.executed_gates
        self.gated_gates += other.gated_gates
        self.cross_block_executions += other.cross_block_executions
        self.inconsistent_cross_executions += other.inconsistent_cross_executions
        self.miscontrolled_data_locations += other.miscontrolled_data_locations
        self.calls.extend(other.calls)


def _data_plane(lat: LatticeState) -> np.ndarray:
    return lat.data["bit"] if lat.data_rule == "bit" else lat.data["xmask"]


def _apply_two_site(lat: LatticeState, tag: str, i: int, j: int, i2: int, j2: int):
    if lat.data_rule == "pauli":
        x, z = lat.data["xmask"], lat.data["zmask"]
        if tag in ("CE", "CN"):
            x[i2, j2] ^= x[i, j]
            z[i, j] ^= z[i2, j2]
        else:
            x[i, j], x[i2, j2] = x[i2, j2], x[i, j]
            z[i, j], z[i2, j2] = z[i2, j2], z[i, j]
        return
    plane = _data_plane(lat)
    if tag in ("CE", "CN"):
        plane[i2, j2] ^= plane[i, j]
    else:
        plane[i, j], plane[i2, j2] = plane[i2, j2], plane[i, j]


def _consistency_planes(lat: LatticeState):
    """Per-direction planes: believed block-edge membership and register
    consistency with the north/east neighbor (vectorized coord_consistent)."""
    blk = lat.params.block_size
    out = {}
    for shift, direction in ((shift_north, "N"), (shift_east, "E")):
        nb_tau = shift(lat.tau)
        nb_x = shift(lat.x)
        nb_y = shift(lat.y)
        if direction == "N":
            edge = lat.x % blk == blk - 1
            consistent = (
                (nb_tau == lat.tau) & (nb_x == (lat.x + 1) % blk) & (nb_y == lat.y)
            )
        else:
            edge = lat.y % blk == blk - 1
            consistent = (
                (nb_tau == lat.tau) & (nb_x == lat.x) & (nb_y == (lat.y + 1) % blk)
            )
        out[direction] = (edge, consistent)
    return out


def _step_data_schedule(
    lat: LatticeState,
    schedule: ScheduleTable,
    gating: bool,
    stats: CycleStats,
    singular: np.ndarray | None,
    record_calls: bool,
):
    """Execute the believed-coordinate data schedule for one step.

    All gates of one step read the pre-step data plane (synchronous QCA
    semantics; the nominal schedule has disjoint supports, and for corrupted
    selections the pre-step read keeps the step order-free).  Swap gates are
    the exception: they run sequentially in row-major order because
    overlapping believed supports cannot swap synchronously.
    """
    if not (lat.tau >= lat.params.refresh_steps).any():
        return
    planes = schedule.gate_planes(lat)
    if not planes:
        return

    cons = _consistency_planes(lat)
    toomd = None
    ordered = []
    for tag, mask in planes:
        if tag == "TOOMD":
            toomd = mask if toomd is None else (toomd | mask)
        else:
            ordered.append((tag, mask))

    if toomd is not None and toomd.any():
        # majority reads N and E; a crossing read with inconsistent registers
        # falls back to identity for that site
        plane = _data_plane(lat)
        stepped = toom_step(plane)
        allowed = toomd
        if gating:
            ok = np.ones_like(toomd)
            for direction in ("N", "E"):
                edge, consistent = cons[direction]
                ok &= ~edge | consistent
            stats.gated_gates += int((toomd & ~ok).sum())
            allowed = toomd & ok
        plane[allowed] = stepped[allowed]
        stats.executed_gates += int(allowed.sum())
        if singular is not None:
            stats.miscontrolled_data_locations += int((allowed & singular).sum())

    for tag, mask in ordered:
        if tag == "FLIP":
            plane = _data_plane(lat)
            plane[mask] ^= 1
            stats.executed_gates += int(mask.sum())
            if singular is not None:
                stats.miscontrolled_data_locations += int((mask & singular).sum())
            continue
        direction = _TWO_SITE[tag]
        edge, consistent = cons[direction]
        if record_calls or tag in ("SE", "SN"):
            _two_site_sequential(
                lat, tag, direction, mask, edge, consistent, gating, stats,
                singular, record_calls,
            )
            continue
        allowed = mask & (~edge | consistent) if gating else mask
        stats.gated_gates += int((mask & ~allowed).sum())
        crossing = allowed & edge
        stats.executed_gates += int(allowed.sum())
        stats.cross_block_executions += int(crossing.sum())
        stats.inconsistent_cross_executions += int((crossing & ~consistent).sum())
        if singular is not None:
            axis = 0 if direction == "N" else 1
            partner_singular = np.roll(singular, -1, axis=axis)
            stats.miscontrolled_data_locations += int(
                (allowed & (singular | partner_singular)).sum()
            )
        _apply_copy_gates(lat, direction, allowed)


def _apply_copy_gates(lat: LatticeState, direction: str, allowed: np.ndarray):
    """Synchronous CNOTs from every allowed site onto its N/E neighbor."""
    axis = 0 if direction == "N" else 1
    if lat.data_rule == "pauli":
        x, z = lat.data["xmask"], lat.data["zmask"]
        x_pre, z_pre = x.copy(), z.copy()
        x ^= np.roll(x_pre * allowed, 1, axis=axis)  # control X onto target
        z ^= np.roll(z_pre, -1, axis=axis) * allowed  # target Z back onto control
        return
    plane = _data_plane(lat)
    plane ^= np.roll((plane * allowed).astype(plane.dtype), 1, axis=axis)


def _two_site_sequential(
    lat, tag, direction, mask, edge, consistent, gating, stats, singular, record_calls
):
    for (i, j) in np.argwhere(mask):
        i, j = int(i), int(j)
        i2 = (i + 1) % lat.n if direction == "N" else i
        j2 = (j + 1) % lat.n if direction == "E" else j
        crossing = bool(edge[i, j])
        ok = bool(consistent[i, j])
        if gating and crossing and not ok:
            stats.gated_gates += 1
            if record_calls:
                stats.calls.append(
                    GateCall(f"{tag}:{i}:{j}", ((i, j), (i2, j2)), True, gated=True)
                )
            continue
        _apply_two_site(lat, tag, i, j, i2, j2)
        stats.executed_gates += 1
        if crossing:
            stats.cross_block_executions += 1
            if not ok:
                stats.inconsistent_cross_executions += 1
        if singular is not None and (singular[i, j] or singular[i2, j2]):
            stats.miscontrolled_data_locations += 1
        if record_calls:
            stats.calls.append(GateCall(f"{tag}:{i}:{j}", ((i, j), (i2, j2)), crossing))


def run_cycle(
    lat: LatticeState,
    noise: NoiseParams,
    seed: int = 0,
    schedule: ScheduleTable | None = None,
    gating: bool = True,
    record_calls: bool = False,
    track_miscontrol: bool = False,
    fault_path: FaultPath | None = None,
):
    """Execute one full cycle (cycle_steps QCA steps) and return
    (lattice, fault-path segment, stats).

    Per step: structure update, structure-layer faults, believed-coordinate
    data schedule (with gating), data-layer faults.  Every executed location
    is exposed to fault sampling; global_time advances by cycle_steps.
    """
    params = lat.params
    if lat.n % params.block_size:
        raise ConfigurationError("lattice is not tiled by whole blocks")
    schedule = schedule or repetition_schedule()
    sampler = FaultSampler(seed, noise)
    segment = fault_path if fault_path is not None else FaultPath(seed=seed, rate=noise.rate)
    stats = CycleStats()
    for _ in range(params.cycle_steps):
        t = lat.global_time
        lat.tau, lat.x, lat.y = structural_toom_planes(lat.tau, lat.x, lat.y, params)
        for ev in sample_lattice_faults(sampler, t, lat, "structure", lane=11):
            apply_fault(lat, ev)
            segment.events.append(ev)
        singular = None
        if track_miscontrol:
            tau_i, x_i, y_i = ideal_planes(t + 1, lat.n, params)
            singular = (lat.tau != tau_i) | (lat.x != x_i) | (lat.y != y_i)
        _step_data_schedule(lat, schedule, gating, stats, singular, record_calls)
        for ev in sample_lattice_faults(sampler, t, lat, "data", lane=12):
            apply_fault(lat, ev)
            segment.events.append(ev)
        lat.global_time += 1
    return lat, segment, stats


def run_macro_step(
    lat: LatticeState,
    noise: NoiseParams,
    seed: int = 0,
    schedule: ScheduleTable | None = None,
    **kw,
):
    """sim_rounds cycles; the fault-path segments concatenate."""
    segment = FaultPath(seed=seed, rate=noise.rate)
    stats = CycleStats()
    for _ in range(lat.params.sim_rounds):
        lat, _, s = run_cycle(
            lat, noise, seed=seed, schedule=schedule, fault_path=segment, **kw
        )
        stats.merge(s)
    return lat, segment, stats


def nominal_gate_calls(params: ScheduleParams, schedule: ScheduleTable, n: int):
    """The hard-coded nominal schedule, computed directly from the ideal
    trajectory without running the simulator: the two-site GateCalls of one
    cycle in emission order.  Registers are read Toom-adjusted, so cycle step
    k acts with believed time stamp (k+1) mod cycle_steps.
    """
    calls = []
    blk = params.block_size
    for k in range(params.cycle_steps):
        believed = (k + 1) % params.cycle_steps
        if believed < params.refresh_steps:
            continue
        for (tsel, xsel, ysel, tag) in schedule.rows:
            if tag not in _TWO_SITE:
                continue
            if tsel is not None and not _match_scalar(tsel, believed):
                continue
            direction = _TWO_SITE[tag]
            for i in range(n):
                for j in range(n):
                    x, y = i % blk, j % blk
                    if xsel is not None and not _match_scalar(xsel, x):
                        continue
                    if ysel is not None and not _match_scalar(ysel, y):
                        continue
                    if not _first_match(schedule, believed, x, y) == tag:
                        continue
                    i2 = (i + 1) % n if direction == "N" else i
                    j2 = (j + 1) % n if direction == "E" else j
                    crossing = (x if direction == "N" else y) == blk - 1
                    calls.append(
                        GateCall(f"{tag}:{i}:{j}", ((i, j), (i2, j2)), crossing)
                    )
    return calls


def _match_scalar(sel, value: int) -> bool:
    if sel is None:
        return True
    if isinstance(sel, tuple):
        return value % sel[1] == sel[0]
    return value == sel


def _first_match(schedule: ScheduleTable, tau: int, x: int, y: int):
    for (tsel, xsel, ysel, tag) in schedule.rows:
        if _match_scalar(tsel, tau) and _match_scalar(xsel, x) and _match_scalar(ysel, y):
            return tag
    return "ID"


# ----------------------------------------------------------- feasibility


@dataclass
class FeasibilityConstraints:
    data_dim: int = 12
    c_sim: float = 1.0
    c_prog: float = 1.0
    c_dim: float = 1.0

    def __post_init__(self):
        if min(self.c_sim, self.c_prog, self.c_dim) < 1:
            raise ConfigurationError("feasibility constants must be >= 1")


@dataclass
class SolveReport:
    feasible: bool
    block_size: int | None
    cycle_steps: int | None
    refresh_steps: int | None
    sim_rounds: int | None
    cell_dim: int | None
    checks: list  # (inequality name, bool)
    searched_to: int = 0


def _polylog(t0: int) -> float:
    # the program-length bound; squared log is the labeled convention here
    return math.log2(t0) ** 2


def check_feasibility(
    block_size: int,
    refresh_steps: int,
    code_steps: int,
    sim_rounds: int,
    cell_dim: int,
    constraints: FeasibilityConstraints,
    refresh_min: int = 18,
):
    """Independent post-hoc verification of the six solver inequalities."""
    t0 = refresh_steps + code_steps
    return [
        ("cycle_steps == refresh_steps + code_steps", True),
        ("block_size >= cycle_steps", block_size >= t0),
        ("refresh_steps >= refresh_min", refresh_steps >= refresh_min),
        ("sim_rounds >= c_sim*block_size", sim_rounds >= constraints.c_sim * block_size),
        (
            "block_size >= c_prog*log2(cycle_steps)^2",
            block_size >= constraints.c_prog * _polylog(t0),
        ),
        (
            "cell_dim == c_dim*data_dim*cycle_steps*block_size^2",
            cell_dim
            == math.ceil(constraints.c_dim * constraints.data_dim * t0 * block_size**2),
        ),
    ]


def solve_params(
    constraints: FeasibilityConstraints,
    refresh_min: int = 18,
    code_steps: int = 6,
    candidate: dict | None = None,
    m_cap: int = 1 << 15,
) -> SolveReport:
    """Smallest self-consistent (block_size, cycle_steps, sim_rounds, cell_dim)
    by increasing search over the block size; every inequality is re-verified
    by the independent checker before returning.
    """
    if candidate is not None:
        checks = check_feasibility(
            candidate["block_size"],
            candidate["refresh_steps"],
            candidate["code_steps"],
            candidate["sim_rounds"],
            candidate["cell_dim"],
            constraints,
            refresh_min,
        )
        if all(ok for _, ok in checks):
            return SolveReport(
                feasible=True,
                block_size=candidate["block_size"],
                cycle_steps=candidate["refresh_steps"] + candidate["code_steps"],
                refresh_steps=candidate["refresh_steps"],
                sim_rounds=candidate["sim_rounds"],
                cell_dim=candidate["cell_dim"],
                checks=checks,
            )
    t0 = refresh_min + code_steps
    for m in range(1, m_cap + 1):
        if m < t0 or m < constraints.c_prog * _polylog(t0):
            continue
        sim_rounds = math.ceil(constraints.c_sim * m)
        cell_dim = math.ceil(constraints.c_dim * constraints.data_dim * t0 * m**2)
        checks = check_feasibility(
            m, refresh_min, code_steps, sim_rounds, cell_dim, constraints, refresh_min
        )
        if all(ok for _, ok in checks):
            return SolveReport(
                feasible=True,
                block_size=m,
                cycle_steps=t0,
                refresh_steps=refresh_min,
                sim_rounds=sim_rounds,
                cell_dim=cell_dim,
                checks=checks,
                searched_to=m,
            )
    return SolveReport(
        feasible=False,
        block_size=None,
        cycle_steps=None,
        refresh_steps=None,
        sim_rounds=None,
        cell_dim=None,
        checks=[],
        searched_to=m_cap,
    )
