"""Extended-rectangle accounting: partitioning fault paths into block-slices,
influence neighborhoods, good/bad classification, boundary truncation, and
the desk-scale sweep that checks good structure exRecs end close to the
codeword.

An exRec is one block's worth of lattice over one cycle; its influence
neighborhood is itself plus the north and east block-slices, the region from
which structure defects can drift in within one cycle (defects move only
south-west, at most one site per step, so with block_size >= cycle_steps the
neighborhood closes at three exRecs).

Block-crossing faulty locations sitting between a good candidate and a bad
exRec are charged to the bad one.  The assignment is the fixpoint of a
simultaneous reassignment rule (a crossing fault moves off its geometric
owner exactly when the other side is bad and the owner is not), which makes
the result independent of evaluation order; ties keep the geometric owner,
the conservative choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation, UnsupportedGeometryError
from .lattice import LatticeState, ScheduleParams, new_lattice
from .noise import FaultEvent, FaultPath, Location, NoiseParams
from .schedulers import run_sync
from .structure import (
    decompose_clusters,
    min_box_cover,
    scramble_structure,
    singular_mask,
)


@dataclass(frozen=True)
class ExRecId:
    level: int
    block: tuple  # (block-row, block-col)
    slice_index: int  # absolute cycle index; within-macro index is mod sim_rounds


@dataclass
class ExRecReport:
    exrec: ExRecId
    initial_health: int
    fault_count: int
    classification: str  # "Good" | "Bad"
    direct_bad: bool
    truncated_locations: list = field(default_factory=list)


def influence_neighborhood(exrec: ExRecId, params: ScheduleParams, n: int):
    """{self, north block-slice, east block-slice}; needs block_size >= cycle_steps."""
    if params.block_size < params.cycle_steps:
        raise UnsupportedGeometryError(
            "influence neighborhood needs block_size >= cycle_steps"
        )
    nb = n // params.block_size
    bi, bj = exrec.block
    return [
        exrec,
        ExRecId(exrec.level, ((bi + 1) % nb, bj), exrec.slice_index),
        ExRecId(exrec.level, (bi, (bj + 1) % nb), exrec.slice_index),
    ]


def _block_of(site, params: ScheduleParams, n: int):
    return (site[0] % n) // params.block_size, (site[1] % n) // params.block_size


def _geometric_owner(ev: FaultEvent, params: ScheduleParams, n: int) -> ExRecId:
    anchor = ev.location.support[0]
    return ExRecId(1, _block_of(anchor, params, n), ev.location.time // params.cycle_steps)


def _crossing_sides(ev: FaultEvent, params: ScheduleParams, n: int):
    blocks = {_block_of(s, params, n) for s in ev.location.support}
    if len(blocks) < 2:
        return None
    m = ev.location.time // params.cycle_steps
    return [ExRecId(1, b, m) for b in sorted(blocks)]


@dataclass
class Partition:
    assignment: dict  # event index -> ExRecId
    reports: dict  # ExRecId -> ExRecReport
    iterations: int
    converged: bool


def classify_exrec(
    exrec: ExRecId,
    assignment: dict,
    events: list,
    health_map: dict,
    params: ScheduleParams,
    n: int,
) -> ExRecReport:
    """Goodness per the influence-neighborhood budget.

    initial_health is the maximum of the member exRecs' start-of-cycle cluster
    counts (a straddling cluster contributes to every region it touches);
    fault_count sums the assigned faults over the neighborhood; Good means
    health + faults <= structure_tolerance.  direct_bad ignores neighborhoods:
    own start clusters + own assigned faults exceeding the tolerance.
    """
    neigh = influence_neighborhood(exrec, params, n)
    counts = {}
    for idx, owner in assignment.items():
        counts[owner] = counts.get(owner, 0) + 1
    r = sum(counts.get(e, 0) for e in neigh)
    h = max(health_map.get(e, 0) for e in neigh)
    own_h = health_map.get(exrec, 0)
    own_r = counts.get(exrec, 0)
    t = params.structure_tolerance
    good = h + r <= t
    return ExRecReport(
        exrec=exrec,
        initial_health=h,
        fault_count=r,
        classification="Good" if good else "Bad",
        direct_bad=own_h + own_r > t,
    )


def partition_exrecs(
    fault_path: FaultPath,
    params: ScheduleParams,
    n: int,
    health_map: dict | None = None,
    n_slices: int | None = None,
    max_iters: int = 64,
) -> Partition:
    """Assign every faulty location to exactly one exRec and classify them all.

    Starts from geometric ownership and iterates the truncation rule to a
    fixpoint with simultaneous updates.  Every location always has exactly one
    owner; totality is asserted.
    """
    health_map = health_map or {}
    events = fault_path.by_time()
    nb = n // params.block_size
    if n_slices is None:
        n_slices = 1 + max((e.location.time // params.cycle_steps for e in events), default=0)
    all_ids = [
        ExRecId(1, (bi, bj), m)
        for m in range(n_slices)
        for bi in range(nb)
        for bj in range(nb)
    ]
    assignment = {k: _geometric_owner(e, params, n) for k, e in enumerate(events)}
    crossing = {
        k: sides
        for k, e in enumerate(events)
        if (sides := _crossing_sides(e, params, n)) is not None
    }
    iterations = 0
    converged = True
    reports = {}
    while True:
        reports = {
            x: classify_exrec(x, assignment, events, health_map, params, n)
            for x in all_ids
        }
        if not crossing or iterations >= max_iters:
            converged = not crossing or iterations < max_iters
            break
        bad = {x for x, rep in reports.items() if rep.classification == "Bad"}
        new_assignment = dict(assignment)
        for k, sides in crossing.items():
            geo = _geometric_owner(events[k], params, n)
            others = [s for s in sides if s != geo]
            flags = [s in bad for s in sides]
            if sum(flags) == 1:
                new_assignment[k] = sides[flags.index(True)]
            else:
                new_assignment[k] = geo
        iterations += 1
        if new_assignment == assignment:
            break
        assignment = new_assignment
    if len(assignment) != len(events):
        raise InvariantViolation("partition lost or duplicated a location")
    for k, owner in assignment.items():
        if owner != _geometric_owner(events[k], params, n):
            reports[owner].truncated_locations.append(events[k].location)
    return Partition(
        assignment=assignment, reports=reports, iterations=iterations, converged=converged
    )


def block_region_sites(block, params: ScheduleParams, n: int, mask: np.ndarray):
    bi, bj = block
    m = params.block_size
    sub = mask[bi * m : (bi + 1) * m, bj * m : (bj + 1) * m]
    return [(bi * m + i, bj * m + j) for (i, j) in np.argwhere(sub)]


def start_health_map(lat: LatticeState, slice_index: int, reference_time=None) -> dict:
    """Greedy cluster count per block at a cycle start, keyed by ExRecId."""
    params, n = lat.params, lat.n
    mask = singular_mask(lat, reference_time)
    nb = n // params.block_size
    out = {}
    for bi in range(nb):
        for bj in range(nb):
            sites = block_region_sites((bi, bj), params, n, mask)
            out[ExRecId(1, (bi, bj), slice_index)] = decompose_clusters(sites, n=n).h_value
    return out


def verify_good_correct(
    exrec: ExRecId, lat: LatticeState, params: ScheduleParams
) -> bool:
    """True iff the exRec's output block carries at most structure_tolerance
    clusters (exact minimal 3x3-box cover) relative to the codeword."""
    mask = singular_mask(lat)
    sites = block_region_sites(exrec.block, params, lat.n, mask)
    limit = params.structure_tolerance
    return min_box_cover(sites, n=lat.n, limit=limit) <= limit


def count_C_bound(stats_list) -> int:
    """Maximum miscontrolled-data-location count over a macro-location's cycles."""
    return max((s.miscontrolled_data_locations for s in stats_list), default=0)


# --------------------------------------------------- adversarial sweep


@dataclass
class SweepResult:
    trials: int
    passed: int
    failures: list  # (trial, h, r, final cluster count)
    max_final_clusters: int = 0


def _independent_cluster_anchors(rng, count, regions, min_gap=5, tries=200):
    anchors = []
    for _ in range(count):
        for _ in range(tries):
            region = regions[int(rng.integers(0, len(regions)))]
            (i0, j0, m) = region
            a = (int(rng.integers(i0, i0 + m)), int(rng.integers(j0, j0 + m)))
            if all(
                max(abs(a[0] - b[0]), abs(a[1] - b[1])) >= min_gap for b in anchors
            ):
                anchors.append(a)
                break
        else:
            return None
    return anchors


def _box_subset(rng, anchor, n, full_prob=0.5):
    sites = [
        ((anchor[0] + di) % n, (anchor[1] + dj) % n)
        for di in range(3)
        for dj in range(3)
    ]
    if rng.random() < full_prob:
        return sites
    k = int(rng.integers(1, 10))
    idx = rng.choice(9, size=min(k, 9), replace=False)
    return [sites[q] for q in idx]


def good_exrec_sweep(
    params: ScheduleParams,
    trials: int,
    seed: int = 0,
    n: int | None = None,
    budget: int | None = None,
) -> SweepResult:
    """Adversarial placements of (h initial clusters, r single-operation faults)
    with h + r <= structure_tolerance inside the influence neighborhood of one
    exRec; after the cycle the exRec's own block must be within
    structure_tolerance clusters of the codeword (exact minimal box cover).

    Faults land at uniform random steps with random <=3x3 supports, positioned
    by a mixture of uniform, boundary-biased, and near-existing-cluster draws
    so interacting and truncation-relevant cases are well represented.
    """
    n = n or 2 * params.block_size
    budget = params.structure_tolerance if budget is None else budget
    m = params.block_size
    target = ExRecId(1, (0, 0), 0)
    # regions: own block, north block, east block (anchor boxes stay inside)
    regions = [(0, 0, m), (m % n, 0, m), (0, m % n, m)]
    result = SweepResult(trials=trials, passed=0, failures=[])
    for trial in range(trials):
        rng = np.random.default_rng(np.random.SeedSequence((seed, trial)))
        h = int(rng.integers(0, budget + 1))
        r = budget - h
        anchors = _independent_cluster_anchors(rng, h, regions)
        if anchors is None:
            h, r = 0, budget
            anchors = []
        lat = new_lattice(n, params)
        for a in anchors:
            scramble_structure(lat, _box_subset(rng, a, n), rng)
        events = []
        cluster_anchors = list(anchors)
        for _ in range(r):
            t = int(rng.integers(0, params.cycle_steps))
            mode = rng.random()
            if mode < 0.5 or not cluster_anchors:
                region = regions[int(rng.integers(0, len(regions)))]
                (i0, j0, mm) = region
                a = (int(rng.integers(i0, i0 + mm)), int(rng.integers(j0, j0 + mm)))
            elif mode < 0.75:
                # hug the own-block north/east boundary
                if rng.random() < 0.5:
                    a = (int(m - 1 - rng.integers(0, 3)) % n, int(rng.integers(0, m)))
                else:
                    a = (int(rng.integers(0, m)), int(m - 1 - rng.integers(0, 3)) % n)
            else:
                base = cluster_anchors[int(rng.integers(0, len(cluster_anchors)))]
                a = (
                    (base[0] + int(rng.integers(-4, 5))) % n,
                    (base[1] + int(rng.integers(-4, 5))) % n,
                )
            cluster_anchors.append(a)
            support = tuple(_box_subset(rng, a, n))
            t0b, blk = params.cycle_steps, params.block_size
            payload = []
            for _ in support:
                payload += [
                    int(rng.integers(0, t0b)),
                    int(rng.integers(0, blk)),
                    int(rng.integers(0, blk)),
                ]
            loc = Location(t, f"adv:{a[0]}:{a[1]}", support, "structure")
            events.append(FaultEvent(loc, "scramble", tuple(payload)))
        noise = NoiseParams(mode="adversarial", events=events)
        traj = run_sync(lat, params.cycle_steps, noise, seed=trial, rule="structure")
        mask = singular_mask(traj.lattice)
        sites = block_region_sites(target.block, params, n, mask)
        limit = params.structure_tolerance
        final = min_box_cover(sites, n=n, limit=limit)
        result.max_final_clusters = max(result.max_final_clusters, min(final, limit + 1))
        if final <= limit:
            result.passed += 1
        else:
            result.failures.append((trial, h, r, final))
    return result
