"""Periodic 2D lattice of cells and the ideal structure trajectory.

Each cell carries a structure register (time_stamp, row_coord, col_coord) --
the locally *believed* space-time position, stored as three separate integer
planes -- plus a data register and an asynchronous update counter.  Storage is
struct-of-arrays so that the Toom updates vectorize; nothing in the public
contract depends on that.

Index convention (used everywhere in this package): the "north" neighbor of
(i, j) is (i+1, j) and the "east" neighbor is (i, j+1), with periodic wrap.

The ideal (noiseless) trajectory assigns to site (i, j) at global time t the
structure codeword

    (time_stamp, row_coord, col_coord) = (t mod cycle_steps, i mod block_size, j mod block_size).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import ConfigurationError

NORTH, EAST, SOUTH, WEST = "N", "E", "S", "W"

#: data rules supported by the lattice data plane
DATA_RULES = ("bit", "opaque", "pauli")

SNAPSHOT_MAGIC = "toomqca-snapshot v1"


@dataclass(frozen=True)
class ScheduleParams:
    """All scale constants of one run.

    block_size            linear block size (sites per block edge)
    refresh_steps         structure-only correction steps at the head of each cycle
    code_steps            data-schedule steps in the tail of each cycle
    sim_rounds            cycles per macro-step
    base_tolerance        errors corrected per block at the combined level
    structure_tolerance   cluster budget for structure exRec goodness
    data_tolerance        correctable errors of the data code
    cluster_width         triangle-norm increase allowed per fault
    influence_size        number of exRecs in one influence neighborhood
    control_fault_bound   bound constant for miscontrolled data locations
    data_dim / structure_dim / cell_dim   local dimensions, bookkeeping only
    code_block_size       physical qudits per data code block
    """

    block_size: int = 24
    refresh_steps: int = 18
    code_steps: int = 6
    sim_rounds: int = 1
    base_tolerance: int = 1
    structure_tolerance: int = 6
    data_tolerance: int = 1
    cluster_width: int = 3
    influence_size: int = 3
    control_fault_bound: int = 0
    data_dim: int = 2
    structure_dim: int = 0
    cell_dim: int = 0
    code_block_size: int = 1

    @property
    def cycle_steps(self) -> int:
        """Length of one correction cycle (refresh + simulation phase)."""
        return self.refresh_steps + self.code_steps

    @property
    def total_steps(self) -> int:
        """Steps in one macro-step: cycle_steps * sim_rounds."""
        return self.cycle_steps * self.sim_rounds

    def __post_init__(self):
        # bookkeeping dims default to the sizes the structure register implies
        if self.structure_dim == 0:
            object.__setattr__(
                self, "structure_dim", self.cycle_steps * self.block_size**2
            )
        if self.cell_dim == 0:
            object.__setattr__(self, "cell_dim", self.data_dim * self.structure_dim)

    def validate(self, strict: bool = True) -> "ScheduleParams":
        """Check the parameter inequalities; raise ConfigurationError naming the violated one.

        With strict=False the renormalization-side condition
        structure_tolerance >= 2*influence_size is skipped: reduced-tolerance
        scan configurations are allowed to break it on purpose.
        """
        checks = [
            (self.block_size >= 1, "block_size >= 1"),
            (self.refresh_steps >= 0, "refresh_steps >= 0"),
            (self.code_steps >= 1, "code_steps >= 1"),
            (self.sim_rounds >= 1, "sim_rounds >= 1"),
            (
                self.block_size >= self.cycle_steps,
                "block_size >= cycle_steps (M >= T0)",
            ),
            (
                self.refresh_steps >= self.cluster_width * self.structure_tolerance,
                "refresh_steps >= cluster_width*structure_tolerance (T_ref >= w*t_EC_S)",
            ),
            (
                self.data_tolerance
                >= self.control_fault_bound * self.structure_tolerance
                + self.base_tolerance,
                "data_tolerance >= control_fault_bound*structure_tolerance + base_tolerance",
            ),
        ]
        if strict:
            checks.append(
                (
                    self.structure_tolerance >= 2 * self.influence_size,
                    "structure_tolerance >= 2*influence_size (t_EC_S >= 2R)",
                )
            )
        for ok, name in checks:
            if not ok:
                raise ConfigurationError(f"parameter invariant violated: {name}")
        return self

    def with_overrides(self, **kw) -> "ScheduleParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def ideal_structure(t: int, i: int, j: int, params: ScheduleParams):
    """The unique structural codeword value at space-time point (t, i, j)."""
    return (t % params.cycle_steps, i % params.block_size, j % params.block_size)


def ideal_planes(t: int, n: int, params: ScheduleParams):
    """Codeword planes (time_stamp, row_coord, col_coord) for an n x n lattice at time t."""
    rows = np.arange(n, dtype=np.int64) % params.block_size
    tau = np.full((n, n), t % params.cycle_steps, dtype=np.int64)
    x = np.repeat(rows[:, None], n, axis=1)
    y = np.repeat(rows[None, :], n, axis=0)
    return tau, x, y


def neighbor(site, direction: str, n: int):
    """Periodic neighbor of site=(i, j); north increments i, east increments j."""
    i, j = site
    if direction == NORTH:
        return ((i + 1) % n, j)
    if direction == SOUTH:
        return ((i - 1) % n, j)
    if direction == EAST:
        return (i, (j + 1) % n)
    if direction == WEST:
        return (i, (j - 1) % n)
    raise ValueError(f"unknown direction {direction!r}")


@dataclass
class LatticeState:
    """n x n torus of cells with struct-of-arrays register planes.

    Planes: tau/x/y hold the believed (time_stamp, row_coord, col_coord);
    the data planes depend on data_rule ("bit": one uint8 plane, "opaque": one
    int plane over a finite alphabet, "pauli": xmask/zmask uint8 planes);
    counter holds per-site asynchronous update counts (all zero in synchronous
    runs).  prev_* planes hold the one-step-old registers that asynchronous
    slice semantics need; they mirror the current planes at construction.

    The state is an inert value: operations take it and return/overwrite it,
    one writer per step, parallel reads allowed.
    """

    n: int
    params: ScheduleParams
    data_rule: str = "bit"
    global_time: int = 0
    opaque_alphabet: int = 4
    tau: np.ndarray = None
    x: np.ndarray = None
    y: np.ndarray = None
    data: dict = field(default_factory=dict)
    counter: np.ndarray = None
    prev: dict = field(default_factory=dict)

    def plane_names(self):
        names = ["tau", "x", "y"]
        if self.data_rule == "bit":
            names.append("bit")
        elif self.data_rule == "opaque":
            names.append("sym")
        else:
            names.extend(["xmask", "zmask"])
        return names

    def structure_planes(self):
        return self.tau, self.x, self.y

    def get_plane(self, name: str) -> np.ndarray:
        if name in ("tau", "x", "y"):
            return getattr(self, name)
        return self.data[name]

    def set_plane(self, name: str, arr: np.ndarray):
        if name in ("tau", "x", "y"):
            setattr(self, name, arr)
        else:
            self.data[name] = arr

    def snapshot_prev(self):
        """Store the current registers as the previous slice (async history depth 2)."""
        for name in self.plane_names():
            self.prev[name] = self.get_plane(name).copy()

    def copy(self) -> "LatticeState":
        out = LatticeState(
            n=self.n,
            params=self.params,
            data_rule=self.data_rule,
            global_time=self.global_time,
            opaque_alphabet=self.opaque_alphabet,
            tau=self.tau.copy(),
            x=self.x.copy(),
            y=self.y.copy(),
            data={k: v.copy() for k, v in self.data.items()},
            counter=self.counter.copy(),
            prev={k: v.copy() for k, v in self.prev.items()},
        )
        return out

    def structure_cell(self, i: int, j: int):
        return (int(self.tau[i, j]), int(self.x[i, j]), int(self.y[i, j]))


def new_lattice(
    n: int,
    params: ScheduleParams,
    init: str = "ideal",
    data_rule: str = "bit",
    custom: dict | None = None,
    opaque_alphabet: int = 4,
) -> LatticeState:
    """Build an n x n lattice; n must be a positive multiple of block_size.

    init="ideal" sets every site to the structural codeword at t=0 and the
    data plane to all-zeros.  init="custom" takes plane arrays in `custom`
    (missing planes default to the ideal/zero values).
    """
    if n < params.block_size:
        raise ConfigurationError(
            f"lattice size {n} smaller than block_size {params.block_size}"
        )
    if n % params.block_size != 0:
        raise ConfigurationError(
            f"lattice size {n} not divisible by block_size {params.block_size}"
        )
    if data_rule not in DATA_RULES:
        raise ConfigurationError(f"unknown data rule {data_rule!r}")
    if init not in ("ideal", "custom"):
        raise ConfigurationError(f"unknown init mode {init!r}")

    tau, x, y = ideal_planes(0, n, params)
    lat = LatticeState(
        n=n,
        params=params,
        data_rule=data_rule,
        global_time=0,
        opaque_alphabet=opaque_alphabet,
        tau=tau,
        x=x,
        y=y,
        counter=np.zeros((n, n), dtype=np.int64),
    )
    if data_rule == "bit":
        lat.data["bit"] = np.zeros((n, n), dtype=np.uint8)
    elif data_rule == "opaque":
        lat.data["sym"] = np.zeros((n, n), dtype=np.int64)
    else:
        lat.data["xmask"] = np.zeros((n, n), dtype=np.uint8)
        lat.data["zmask"] = np.zeros((n, n), dtype=np.uint8)

    if init == "custom":
        for name, arr in (custom or {}).items():
            arr = np.asarray(arr)
            if arr.shape != (n, n):
                raise ConfigurationError(
                    f"custom plane {name!r} has shape {arr.shape}, want {(n, n)}"
                )
            lat.set_plane(name, arr.astype(lat.get_plane(name).dtype).copy())
    lat.snapshot_prev()
    return lat


def save_snapshot(lat: LatticeState, path) -> None:
    """Write a versioned text dump of (n, params, global_time, per-plane arrays)."""
    buf = io.StringIO()
    buf.write(SNAPSHOT_MAGIC + "\n")
    buf.write(f"n={lat.n} global_time={lat.global_time} data_rule={lat.data_rule} ")
    buf.write(f"opaque_alphabet={lat.opaque_alphabet}\n")
    p = lat.params.to_dict()
    buf.write("params " + " ".join(f"{k}={v}" for k, v in sorted(p.items())) + "\n")
    for name in lat.plane_names() + ["counter"]:
        arr = lat.counter if name == "counter" else lat.get_plane(name)
        buf.write(f"plane {name}\n")
        buf.write(" ".join(str(int(v)) for v in arr.ravel()) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def load_snapshot(path) -> LatticeState:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != SNAPSHOT_MAGIC:
        raise ConfigurationError(f"not a {SNAPSHOT_MAGIC!r} file: {path}")
    head = dict(tok.split("=", 1) for tok in lines[1].split())
    ptoks = dict(tok.split("=", 1) for tok in lines[2].split()[1:])
    params = ScheduleParams(**{k: int(v) for k, v in ptoks.items()})
    n = int(head["n"])
    lat = new_lattice(
        n, params, data_rule=head["data_rule"], opaque_alphabet=int(head["opaque_alphabet"])
    )
    lat.global_time = int(head["global_time"])
    k = 3
    while k < len(lines):
        assert lines[k].startswith("plane ")
        name = lines[k].split()[1]
        arr = np.array([int(v) for v in lines[k + 1].split()], dtype=np.int64).reshape(n, n)
        if name == "counter":
            lat.counter = arr
        else:
            lat.set_plane(name, arr.astype(lat.get_plane(name).dtype))
        k += 2
    lat.snapshot_prev()
    return lat
