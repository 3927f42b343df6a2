"""Pluggable data rules: classical repetition with Toom correction, and
Pauli-frame simulation of measurement-free error-correction gadgets.

Frames track accumulated X/Z errors through Clifford circuits; the gadget
alphabet additionally allows ancilla-controlled Pauli corrections (ccx with
optionally negated controls).  Those are exactly frame-simulable in the
bit-flip sector, where control ancillas prepared in |0> and written by CNOTs
stay classical; phase-sensitive codes reject them.  Ancilla dissipative
resets clear frame bits, so majority-style correction becomes expressible
without measurements: copy the syndrome coherently onto ancillas, apply
ancilla-controlled corrections, reset the ancillas.

The condition checker operationalizes the EC gadget requirements as

  A1-style (r + s <= t): output decodes to the same logical as the input and
     carries at most s residual errors;
  A2-style (s <= t, any input): output lies within s errors of the code space;

and gate gadgets as decoder commutation (output logical equals the ideal gate
applied to the input logical) plus r + s error propagation.  All checks are
exhaustive enumerations over inputs and fault placements for small codes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UnsupportedGateError
from .lattice import LatticeState
from .structure import toom_step

TIE = "tie"

_FRAME_GATES = ("prep0", "reset", "cnot", "h", "swap", "x", "z", "id", "ccx")


# ----------------------------------------------------------------- codes


def _parse_pauli(word: str):
    x = np.zeros(len(word), dtype=np.uint8)
    z = np.zeros(len(word), dtype=np.uint8)
    for q, ch in enumerate(word.upper()):
        if ch == "X":
            x[q] = 1
        elif ch == "Z":
            z[q] = 1
        elif ch == "Y":
            x[q] = z[q] = 1
        elif ch != "I":
            raise ConfigurationError(f"bad Pauli letter {ch!r} in {word!r}")
    return x, z


def _sympl(ax, az, bx, bz) -> int:
    return int((np.sum(ax * bz) + np.sum(az * bx)) % 2)


@dataclass
class CodeSpec:
    """Stabilizer code over one block, with its logical pair (one logical qubit)."""

    name: str
    qubits: int
    corrects: int  # errors correctable per block
    stabilizers: list  # list of (xmask, zmask) arrays
    logical_x: tuple
    logical_z: tuple
    phase_sensitive: bool = True
    _decode_table: dict = field(default=None, repr=False)

    def __post_init__(self):
        if self.corrects < 1:
            raise ConfigurationError("corrects must be >= 1")
        for a in range(len(self.stabilizers)):
            for b in range(a + 1, len(self.stabilizers)):
                ax, az = self.stabilizers[a]
                bx, bz = self.stabilizers[b]
                if _sympl(ax, az, bx, bz):
                    raise ConfigurationError(
                        f"stabilizers {a} and {b} of {self.name} do not commute"
                    )

    @staticmethod
    def from_text(text: str) -> "CodeSpec":
        """Parse the generator-table format::

            name <label>
            qubits <n>
            corrects <t>
            phase_sensitive <0|1>
            stabilizer <pauli word>    (repeated)
            logical_x <pauli word>
            logical_z <pauli word>
        """
        fields_ = {"stabilizer": []}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, val = line.partition(" ")
            if key == "stabilizer":
                fields_["stabilizer"].append(val.strip())
            else:
                fields_[key] = val.strip()
        try:
            return CodeSpec(
                name=fields_["name"],
                qubits=int(fields_["qubits"]),
                corrects=int(fields_["corrects"]),
                stabilizers=[_parse_pauli(w) for w in fields_["stabilizer"]],
                logical_x=_parse_pauli(fields_["logical_x"]),
                logical_z=_parse_pauli(fields_["logical_z"]),
                phase_sensitive=bool(int(fields_.get("phase_sensitive", "1"))),
            )
        except KeyError as exc:
            raise ConfigurationError(f"code table missing field {exc}") from exc

    def syndrome(self, fx, fz):
        return tuple(_sympl(sx, sz, fx, fz) for (sx, sz) in self.stabilizers)

    def _table(self):
        # coset-leader and logical-class lookup over all Paulis, by weight
        if self._decode_table is None:
            table = {}
            n = self.qubits
            for weight_order in sorted(range(4**n), key=lambda c: _pauli_weight(c, n)):
                fx, fz = _code_to_masks(weight_order, n)
                syn = self.syndrome(fx, fz)
                if syn not in table:
                    table[syn] = (fx, fz)
            self._decode_table = table
        return self._decode_table

    def coset_weight(self, fx, fz) -> int:
        """Min weight of the frame modulo the stabilizer group and logicals."""
        best = None
        lx, lz = self.logical_x, self.logical_z
        for kx, kz in itertools.product((0, 1), repeat=2):
            gx = fx ^ (lx[0] if kx else 0) ^ (lz[0] if kz else 0)
            gz = fz ^ (lx[1] if kx else 0) ^ (lz[1] if kz else 0)
            w = self._min_weight_mod_stabilizers(gx, gz)
            best = w if best is None else min(best, w)
        return best

    def _min_weight_mod_stabilizers(self, fx, fz) -> int:
        best = None
        m = len(self.stabilizers)
        for combo in range(2**m):
            gx, gz = fx.copy(), fz.copy()
            for b in range(m):
                if combo >> b & 1:
                    gx ^= self.stabilizers[b][0]
                    gz ^= self.stabilizers[b][1]
            w = int(np.sum((gx | gz) != 0))
            best = w if best is None else min(best, w)
        return best


def _pauli_weight(code: int, n: int) -> int:
    return sum((code // 4**q) % 4 != 0 for q in range(n))


def _code_to_masks(code: int, n: int):
    fx = np.zeros(n, dtype=np.uint8)
    fz = np.zeros(n, dtype=np.uint8)
    for q in range(n):
        pq = (code // 4**q) % 4
        fx[q] = pq & 1
        fz[q] = pq >> 1
    return fx, fz


def repetition_code() -> CodeSpec:
    """3-bit repetition (bit-flip, corrects 1), the desk-scale default."""
    return CodeSpec(
        name="repetition3",
        qubits=3,
        corrects=1,
        stabilizers=[_parse_pauli("ZZI"), _parse_pauli("IZZ")],
        logical_x=_parse_pauli("XXX"),
        logical_z=_parse_pauli("ZII"),
        phase_sensitive=False,
    )


def five_qubit_code() -> CodeSpec:
    """[[5,1,3]] code; exercises the general decoder, no gadget set shipped."""
    return CodeSpec(
        name="five_qubit",
        qubits=5,
        corrects=1,
        stabilizers=[
            _parse_pauli("XZZXI"),
            _parse_pauli("IXZZX"),
            _parse_pauli("XIXZZ"),
            _parse_pauli("ZXIXZ"),
        ],
        logical_x=_parse_pauli("XXXXX"),
        logical_z=_parse_pauli("ZZZZZ"),
    )


@dataclass
class DecodeResult:
    logical: tuple  # (x component, z component) of the residual logical Pauli
    syndrome: tuple


def ideal_decode(block_frame, code: CodeSpec) -> DecodeResult:
    """Minimum-weight coset decoding; errors of weight <= corrects decode trivially.

    The syndrome is recorded alongside the logical result (the unitary
    decoder's separate record).
    """
    fx, fz = block_frame
    fx = np.asarray(fx, dtype=np.uint8)
    fz = np.asarray(fz, dtype=np.uint8)
    if fx.shape != (code.qubits,) or fz.shape != (code.qubits,):
        raise ConfigurationError("frame defined on wrong block width")
    syn = code.syndrome(fx, fz)
    lx_mask, lz_mask = code.logical_x, code.logical_z
    leader = code._table()[syn]
    rx, rz = fx ^ leader[0], fz ^ leader[1]
    logical = (_sympl(rx, rz, *lz_mask), _sympl(rx, rz, *lx_mask))
    return DecodeResult(logical=logical, syndrome=syn)


# ----------------------------------------------------------------- frames


@dataclass
class PauliFrameState:
    """X and Z masks per qubit of the simulated block(s) plus ancillas."""

    xmask: np.ndarray
    zmask: np.ndarray

    @staticmethod
    def zeros(width: int) -> "PauliFrameState":
        return PauliFrameState(
            np.zeros(width, dtype=np.uint8), np.zeros(width, dtype=np.uint8)
        )

    def copy(self) -> "PauliFrameState":
        return PauliFrameState(self.xmask.copy(), self.zmask.copy())

    def __xor__(self, other: "PauliFrameState") -> "PauliFrameState":
        return PauliFrameState(self.xmask ^ other.xmask, self.zmask ^ other.zmask)

    def restrict(self, qubits) -> "PauliFrameState":
        q = list(qubits)
        return PauliFrameState(self.xmask[q].copy(), self.zmask[q].copy())


@dataclass(frozen=True)
class GateOp:
    tag: str
    qubits: tuple
    negated: tuple = ()  # ccx controls that fire on 0 instead of 1


@dataclass
class GadgetCircuit:
    """Ordered list of locations; measurement-free (no classical branching)."""

    name: str
    width: int
    data_qubits: tuple  # per block: tuple of tuples
    ancilla_qubits: tuple
    ops: list
    role: str = "EC"  # Prep | Gate1 | Gate2 | EC | Measure
    phase_sensitive: bool = True

    def locations(self):
        return list(enumerate(self.ops))


@dataclass(frozen=True)
class GadgetFault:
    """Pauli effect injected right after op `op_index` on that op's support."""

    op_index: int
    xbits: tuple
    zbits: tuple = None

    def masks(self, op: GateOp):
        z = self.zbits if self.zbits is not None else tuple(0 for _ in op.qubits)
        return self.xbits, z


def _apply_op(frame: PauliFrameState, op: GateOp, phase_sensitive: bool):
    x, z = frame.xmask, frame.zmask
    if op.tag in ("prep0", "reset"):
        (q,) = op.qubits
        x[q] = 0
        z[q] = 0
    elif op.tag == "cnot":
        c, t = op.qubits
        x[t] ^= x[c]
        z[c] ^= z[t]
    elif op.tag == "h":
        (q,) = op.qubits
        x[q], z[q] = z[q], x[q]
    elif op.tag == "swap":
        a, b = op.qubits
        x[a], x[b] = x[b], x[a]
        z[a], z[b] = z[b], z[a]
    elif op.tag in ("x", "z", "id"):
        pass  # deterministic Paulis / storage do not move the frame
    elif op.tag == "ccx":
        if phase_sensitive:
            raise UnsupportedGateError(
                "ccx correction is frame-simulable only for phase-insensitive codes"
            )
        c1, c2, t = op.qubits
        e1 = x[c1] ^ (1 if c1 in op.negated else 0)
        e2 = x[c2] ^ (1 if c2 in op.negated else 0)
        x[t] ^= e1 & e2
    else:
        raise UnsupportedGateError(f"gate tag {op.tag!r} is not frame-simulable")


def run_gadget(
    gadget: GadgetCircuit,
    input_frame: PauliFrameState,
    faults=(),
    phase_sensitive: bool | None = None,
) -> PauliFrameState:
    """Propagate a frame through the gadget with faults injected at their locations."""
    frame = input_frame.copy()
    if frame.xmask.shape != (gadget.width,):
        raise ConfigurationError("input frame width does not match the gadget")
    ps = gadget.phase_sensitive if phase_sensitive is None else phase_sensitive
    by_op = {}
    for f in faults:
        by_op.setdefault(f.op_index, []).append(f)
    for idx, op in enumerate(gadget.ops):
        _apply_op(frame, op, ps)
        for f in by_op.get(idx, ()):
            xb, zb = f.masks(op)
            for q, bx, bz in zip(op.qubits, xb, zb):
                frame.xmask[q] ^= bx
                frame.zmask[q] ^= bz
    return frame


# ----------------------------------------------------------------- gadgets


def repetition_ec_gadget(include_correction: bool = True) -> GadgetCircuit:
    """Measurement-free EC for the 3-bit repetition code that survives any
    single internal fault: the syndrome is copied coherently onto three
    independent ancilla pairs, each pair triggers exactly one correction via
    a scratch bit, and all ancillas are dissipatively reset.

    One syndrome copy is not enough: a bit flip on the middle data qubit
    between its two parity couplings leaves an inconsistent held syndrome, and
    any correction table that handles the weight-1 inputs then adds a second
    error and flips the logical.  Three copies with per-copy triggers fix
    this; the coupling order inside each copy is chosen so the mixed syndrome
    such a gap fault produces never equals that copy's own trigger pattern.

    include_correction=False deletes the correction stage, giving the broken
    mutant used as a negative control by the condition checker.
    """
    d0, d1, d2 = 0, 1, 2
    a0, a1, b0, b1, c0, c1 = 3, 4, 5, 6, 7, 8
    t0, t1, t2 = 9, 10, 11
    ancillas = (a0, a1, b0, b1, c0, c1, t0, t1, t2)
    ops = [GateOp("reset", (q,)) for q in ancillas]
    ops += [
        # copy A -> trigger (1,0): extract f0^f1 then f1^f2
        GateOp("cnot", (d0, a0)),
        GateOp("cnot", (d1, a0)),
        GateOp("cnot", (d1, a1)),
        GateOp("cnot", (d2, a1)),
        # copy B -> trigger (1,1): same order (gap fault gives (0,1), harmless)
        GateOp("cnot", (d0, b0)),
        GateOp("cnot", (d1, b0)),
        GateOp("cnot", (d1, b1)),
        GateOp("cnot", (d2, b1)),
        # copy C -> trigger (0,1): extract f1^f2 first so a gap fault gives (1,0)
        GateOp("cnot", (d1, c1)),
        GateOp("cnot", (d2, c1)),
        GateOp("cnot", (d0, c0)),
        GateOp("cnot", (d1, c0)),
    ]
    if include_correction:
        ops += [
            GateOp("ccx", (a0, a1, t0), negated=(a1,)),
            GateOp("ccx", (b0, b1, t1)),
            GateOp("ccx", (c0, c1, t2), negated=(c0,)),
            GateOp("cnot", (t0, d0)),
            GateOp("cnot", (t1, d1)),
            GateOp("cnot", (t2, d2)),
        ]
    ops += [GateOp("reset", (q,)) for q in ancillas]
    return GadgetCircuit(
        name="rep3-ec" if include_correction else "rep3-ec-no-correction",
        width=12,
        data_qubits=((d0, d1, d2),),
        ancilla_qubits=ancillas,
        ops=ops,
        role="EC",
        phase_sensitive=False,
    )


def naive_repetition_ec_gadget() -> GadgetCircuit:
    """The textbook two-ancilla majority gadget (syndrome copy + controlled
    corrections + reset).  Not single-fault tolerant: kept as a documented
    negative control; the condition checker exhibits the gap-fault
    counterexample described in repetition_ec_gadget's docstring.
    """
    d0, d1, d2, a0, a1 = range(5)
    ops = [GateOp("reset", (a0,)), GateOp("reset", (a1,))]
    ops += [
        GateOp("cnot", (d0, a0)),
        GateOp("cnot", (d1, a0)),
        GateOp("cnot", (d1, a1)),
        GateOp("cnot", (d2, a1)),
        GateOp("ccx", (a0, a1, d0), negated=(a1,)),
        GateOp("ccx", (a0, a1, d1)),
        GateOp("ccx", (a0, a1, d2), negated=(a0,)),
        GateOp("reset", (a0,)),
        GateOp("reset", (a1,)),
    ]
    return GadgetCircuit(
        name="rep3-ec-naive",
        width=5,
        data_qubits=((d0, d1, d2),),
        ancilla_qubits=(a0, a1),
        ops=ops,
        role="EC",
        phase_sensitive=False,
    )


def identity_gadget(code: CodeSpec) -> GadgetCircuit:
    block = tuple(range(code.qubits))
    return GadgetCircuit(
        name="identity",
        width=code.qubits,
        data_qubits=(block,),
        ancilla_qubits=(),
        ops=[GateOp("id", (q,)) for q in block],
        role="Gate1",
    )


def transversal_x_gadget(code: CodeSpec) -> GadgetCircuit:
    block = tuple(range(code.qubits))
    return GadgetCircuit(
        name="transversal-x",
        width=code.qubits,
        data_qubits=(block,),
        ancilla_qubits=(),
        ops=[GateOp("x", (q,)) for q in block],
        role="Gate1",
    )


def transversal_cnot_gadget(code: CodeSpec) -> GadgetCircuit:
    n = code.qubits
    a = tuple(range(n))
    b = tuple(range(n, 2 * n))
    return GadgetCircuit(
        name="transversal-cnot",
        width=2 * n,
        data_qubits=(a, b),
        ancilla_qubits=(),
        ops=[GateOp("cnot", (a[q], b[q])) for q in range(n)],
        role="Gate2",
    )


def prep_zero_gadget(code: CodeSpec) -> GadgetCircuit:
    block = tuple(range(code.qubits))
    return GadgetCircuit(
        name="prep-zero",
        width=code.qubits,
        data_qubits=(block,),
        ancilla_qubits=(),
        ops=[GateOp("prep0", (q,)) for q in block],
        role="Prep",
    )


# ------------------------------------------------------ condition checking


def _fault_effects(op: GateOp, phase_sensitive: bool):
    """All non-identity Pauli effects on the op's support."""
    k = len(op.qubits)
    if phase_sensitive:
        for code in range(1, 4**k):
            xb = tuple((code // 4**q) % 4 & 1 for q in range(k))
            zb = tuple(((code // 4**q) % 4) >> 1 for q in range(k))
            yield GadgetFault(0, xb, zb)
    else:
        for mask in range(1, 2**k):
            yield GadgetFault(0, tuple(mask >> q & 1 for q in range(k)))


def enumerate_fault_sets(gadget: GadgetCircuit, size: int, phase_sensitive: bool):
    """Every fault placement of exactly `size` faults in the gadget."""
    if size == 0:
        yield ()
        return
    per_op = []
    for idx, op in enumerate(gadget.ops):
        per_op.append(
            [GadgetFault(idx, f.xbits, f.zbits) for f in _fault_effects(op, phase_sensitive)]
        )
    for idxs in itertools.combinations(range(len(gadget.ops)), size):
        for combo in itertools.product(*[per_op[i] for i in idxs]):
            yield combo


def _block_frames(code: CodeSpec, weight_at_most=None, exactly=None):
    """All input frames on one block (x-only unless the code is phase sensitive)."""
    n = code.qubits
    codes = range(4**n) if code.phase_sensitive else range(2**n)
    for c in codes:
        if code.phase_sensitive:
            fx, fz = _code_to_masks(c, n)
        else:
            fx = np.array([(c >> q) & 1 for q in range(n)], dtype=np.uint8)
            fz = np.zeros(n, dtype=np.uint8)
        w = int(np.sum((fx | fz) != 0))
        if weight_at_most is not None and w > weight_at_most:
            continue
        if exactly is not None and w != exactly:
            continue
        yield fx, fz


def _embed(gadget: GadgetCircuit, fx, fz, block=0) -> PauliFrameState:
    frame = PauliFrameState.zeros(gadget.width)
    for q, bx, bz in zip(gadget.data_qubits[block], fx, fz):
        frame.xmask[q] = bx
        frame.zmask[q] = bz
    return frame


@dataclass
class ConditionReport:
    gadget: str
    passed: bool
    n_cases: int
    failures: list  # (condition, description) of first few counterexamples
    truncated: bool = False


def check_gadget_conditions(
    gadget: GadgetCircuit,
    code: CodeSpec,
    t: int | None = None,
    max_faults: int | None = None,
    max_failures: int = 4,
) -> ConditionReport:
    """Exhaustive fault-tolerance conditions for one gadget.

    EC role: the A1-style check runs over inputs with r errors and fault sets
    of size s for all r + s <= t (output must decode like the input and carry
    at most s residual errors); the A2-style check runs over all inputs and
    s <= t faults (output within s of the code space).  Gate roles check
    decoder commutation and r + s error propagation.  Enumeration caps follow
    the code size; blocks beyond 7 qubits are rejected.
    """
    t = code.corrects if t is None else t
    if max_faults is not None:
        t = min(t, max_faults)
    if code.qubits > 7:
        raise ConfigurationError("exhaustive checks support blocks of <= 7 qudits")
    ps = code.phase_sensitive
    failures = []
    cases = 0

    def note(cond, msg):
        if len(failures) < max_failures:
            failures.append((cond, msg))

    if gadget.role == "EC":
        lx = code.logical_x
        for r in range(t + 1):
            for s in range(t + 1 - r):
                for fx, fz in _block_frames(code, exactly=r):
                    for base in (0, 1):
                        bx = fx ^ (lx[0] if base else 0)
                        bz = fz ^ (lx[1] if base else 0)
                        want = ideal_decode((bx, bz), code).logical
                        for faults in enumerate_fault_sets(gadget, s, ps):
                            cases += 1
                            out = run_gadget(
                                gadget, _embed(gadget, bx, bz), faults, ps
                            )
                            ox = out.xmask[list(gadget.data_qubits[0])]
                            oz = out.zmask[list(gadget.data_qubits[0])]
                            got = ideal_decode((ox, oz), code)
                            if got.logical != want:
                                note(
                                    "A1",
                                    f"r={r} s={s} input x={bx.tolist()} z={bz.tolist()} "
                                    f"faults={faults}: logical {got.logical} != {want}",
                                )
                                continue
                            # residual errors beyond the decoded codeword
                            rx = ox ^ (lx[0] if got.logical[0] else 0)
                            rz = oz ^ (lx[1] if got.logical[0] else 0)
                            if code._min_weight_mod_stabilizers(rx, rz) > s:
                                note(
                                    "A1",
                                    f"r={r} s={s} input x={bx.tolist()}: residual weight "
                                    f"> {s} after faults={faults}",
                                )
        for s in range(t + 1):
            for fx, fz in _block_frames(code):
                for faults in enumerate_fault_sets(gadget, s, ps):
                    cases += 1
                    out = run_gadget(gadget, _embed(gadget, fx, fz), faults, ps)
                    ox = out.xmask[list(gadget.data_qubits[0])]
                    oz = out.zmask[list(gadget.data_qubits[0])]
                    if code.coset_weight(ox, oz) > s:
                        note(
                            "A2",
                            f"s={s} input x={fx.tolist()} z={fz.tolist()} "
                            f"faults={faults}: output {ox.tolist()} not {s}-correctable",
                        )

    elif gadget.role in ("Gate1", "Gate2", "Prep"):
        n_blocks = len(gadget.data_qubits)
        n_in = 0 if gadget.role == "Prep" else n_blocks
        logical_map = _ideal_logical_map(gadget)
        for total in range(t + 1):
            for r_split in _splits(total, n_in + 1):
                *rs, s = r_split
                frame_iters = [list(_block_frames(code, exactly=rk)) for rk in rs]
                for frames in itertools.product(*frame_iters):
                    frame = PauliFrameState.zeros(gadget.width)
                    ins = []
                    for blk, (fx, fz) in enumerate(frames):
                        for q, bx, bz in zip(gadget.data_qubits[blk], fx, fz):
                            frame.xmask[q] = bx
                            frame.zmask[q] = bz
                        ins.append(ideal_decode((fx, fz), code).logical[0])
                    want = logical_map(tuple(ins))
                    for faults in enumerate_fault_sets(gadget, s, ps):
                        cases += 1
                        out = run_gadget(gadget, frame, faults, ps)
                        ok_logical = True
                        for blk in range(n_blocks):
                            ox = out.xmask[list(gadget.data_qubits[blk])]
                            oz = out.zmask[list(gadget.data_qubits[blk])]
                            got = ideal_decode((ox, oz), code)
                            if got.logical[0] != want[blk]:
                                ok_logical = False
                            lxm = code.logical_x
                            rx = ox ^ (lxm[0] if got.logical[0] else 0)
                            rz = oz ^ (lxm[1] if got.logical[0] else 0)
                            if code._min_weight_mod_stabilizers(rx, rz) > total:
                                note(
                                    "propagation",
                                    f"{r_split}: block {blk} carries more than "
                                    f"{total} errors after faults={faults}",
                                )
                        if not ok_logical:
                            note(
                                "correctness",
                                f"{r_split} faults={faults}: logical map broken",
                            )
    else:
        raise ConfigurationError(f"no conditions defined for role {gadget.role!r}")

    return ConditionReport(
        gadget=gadget.name, passed=not failures, n_cases=cases, failures=failures
    )


def _splits(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _splits(total - head, parts - 1):
            yield (head,) + rest


def _ideal_logical_map(gadget: GadgetCircuit):
    if gadget.role == "Prep":
        return lambda ins: tuple(0 for _ in gadget.data_qubits)
    # the map acts on logical *error* classes (frame picture): deterministic
    # Paulis conjugate errors trivially, CNOT copies X-type classes forward
    if gadget.name == "transversal-cnot":
        return lambda ins: (ins[0], ins[0] ^ ins[1])
    return lambda ins: ins  # identity, Pauli, and other storage gadgets


# -------------------------------------------------------------- exRec check


@dataclass
class ExRecCheckReport:
    passed: bool
    n_cases: int
    failures: list


def check_exrec_commutation(
    gate_gadget: GadgetCircuit,
    ec_gadget: GadgetCircuit,
    code: CodeSpec,
    t: int | None = None,
    max_failures: int = 4,
) -> ExRecCheckReport:
    """Full exRec (leading EC per block, gate, trailing EC per block), exhaustive
    over fault placements with at most t total faults: the decoder commuted to
    the Rec input must give the same logical map as the noisy Rec output.
    """
    t = code.corrects if t is None else t
    ps = code.phase_sensitive
    n_blocks = len(gate_gadget.data_qubits)
    segments = (
        [("lead", b) for b in range(n_blocks)]
        + [("gate", None)]
        + [("trail", b) for b in range(n_blocks)]
    )
    seg_ops = {
        seg: (gate_gadget if seg[0] == "gate" else ec_gadget) for seg in segments
    }
    logical_map = _ideal_logical_map(gate_gadget)
    failures = []
    cases = 0

    def run_segment(seg, frames, faults):
        kind, blk = seg
        if kind == "gate":
            frame = PauliFrameState.zeros(gate_gadget.width)
            for b in range(n_blocks):
                for q, bx, bz in zip(gate_gadget.data_qubits[b], *frames[b]):
                    frame.xmask[q] = bx
                    frame.zmask[q] = bz
            out = run_gadget(gate_gadget, frame, faults, ps)
            return [
                (
                    out.xmask[list(gate_gadget.data_qubits[b])],
                    out.zmask[list(gate_gadget.data_qubits[b])],
                )
                for b in range(n_blocks)
            ]
        fx, fz = frames[blk]
        out = run_gadget(ec_gadget, _embed(ec_gadget, fx, fz), faults, ps)
        new = list(frames)
        new[blk] = (
            out.xmask[list(ec_gadget.data_qubits[0])],
            out.zmask[list(ec_gadget.data_qubits[0])],
        )
        return new

    # fault placements: at most t faults distributed over the segments
    placements = [()]
    for total in range(1, t + 1):
        for seg_combo in itertools.combinations_with_replacement(segments, total):
            seg_counts = {}
            for seg in seg_combo:
                seg_counts[seg] = seg_counts.get(seg, 0) + 1
            iters = []
            for seg, cnt in seg_counts.items():
                iters.append(
                    [
                        (seg, fs)
                        for fs in enumerate_fault_sets(seg_ops[seg], cnt, ps)
                    ]
                )
            for combo in itertools.product(*iters):
                placements.append(tuple(combo))

    all_inputs = list(_block_frames(code))
    for in_frames in itertools.product(all_inputs, repeat=n_blocks):
        for placement in placements:
            cases += 1
            by_seg = dict(placement)
            frames = [tuple(f) for f in in_frames]
            # leading ECs, then commute the decoder: logical content at Rec input
            for seg in segments[:n_blocks]:
                frames = run_segment(seg, frames, by_seg.get(seg, ()))
            ins = tuple(
                ideal_decode(frames[b], code).logical[0] for b in range(n_blocks)
            )
            frames = run_segment(("gate", None), frames, by_seg.get(("gate", None), ()))
            for seg in segments[n_blocks + 1 :]:
                frames = run_segment(seg, frames, by_seg.get(seg, ()))
            got = tuple(
                ideal_decode(frames[b], code).logical[0] for b in range(n_blocks)
            )
            if got != logical_map(ins):
                if len(failures) < max_failures:
                    failures.append(
                        f"inputs={[(f[0].tolist()) for f in in_frames]} "
                        f"placement={placement}: {got} != {logical_map(ins)}"
                    )
    return ExRecCheckReport(passed=not failures, n_cases=cases, failures=failures)


# ----------------------------------------------------------- lattice rules


def classical_data_step(lat: LatticeState) -> LatticeState:
    """Repetition-code correction of the data plane: one plain Toom step."""
    if lat.data_rule != "bit":
        raise ConfigurationError("classical_data_step requires the bit data rule")
    lat.data["bit"] = toom_step(lat.data["bit"])
    return lat


def logical_readout(lat: LatticeState, code: CodeSpec | None = None):
    """Decode the stored logical value; exact ties return TIE.

    bit rule: global majority of the data plane.  pauli rule: ideal_decode per
    block of `code.qubits` consecutive sites (row-major), then majority over
    blocks.  opaque rule: plurality symbol.
    """
    if lat.data_rule == "bit":
        ones = int(lat.data["bit"].sum())
        total = lat.n * lat.n
        if 2 * ones == total:
            return TIE
        return int(2 * ones > total)
    if lat.data_rule == "opaque":
        counts = np.bincount(lat.data["sym"].ravel(), minlength=lat.opaque_alphabet)
        top = np.flatnonzero(counts == counts.max())
        return TIE if len(top) > 1 else int(top[0])
    if code is None:
        raise ConfigurationError("pauli readout needs a CodeSpec")
    xf = lat.data["xmask"].ravel()
    zf = lat.data["zmask"].ravel()
    nblk = xf.size // code.qubits
    votes = [0, 0]
    for b in range(nblk):
        sl = slice(b * code.qubits, (b + 1) * code.qubits)
        votes[ideal_decode((xf[sl], zf[sl]), code).logical[0]] += 1
    if votes[0] == votes[1]:
        return TIE
    return int(votes[1] > votes[0])
