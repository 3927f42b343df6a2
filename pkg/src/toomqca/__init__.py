"""toomqca: desk-scale simulator and analysis toolkit for a two-dimensional
self-correcting cellular automaton built on Toom-corrected structure registers
and a measurement-free data code.

Subpackages by concern:

    lattice     torus state, schedule parameters, ideal trajectory, snapshots
    structure   plain/structural Toom rule, clusters, triangles, erosion
    noise       locations, fault paths, counter-based sampling streams
    schedule    the two-phase correction cycle, gating, feasibility solver
    datalayer   codes, Pauli frames, measurement-free gadgets, condition checks
    schedulers  synchronous / marching-soldier / continuous-time execution
    exrec       extended-rectangle partitioning and classification
    renorm      strength recursion, sparsity scans, lifetime experiments
    cli         batch experiment driver with reproducible manifests
"""

from .errors import (
    ConfigurationError,
    InvariantViolation,
    UnsupportedGateError,
    UnsupportedGeometryError,
)
from .lattice import (
    LatticeState,
    ScheduleParams,
    ideal_structure,
    load_snapshot,
    neighbor,
    new_lattice,
    save_snapshot,
)
from .structure import (
    Triangle,
    decompose_clusters,
    erosion_check,
    erosion_trials,
    is_h_healthy,
    maj,
    min_box_cover,
    singular_mask,
    singular_sites,
    structural_toom_step,
    toom_step,
    triangle_norm,
)
from .noise import (
    FaultEvent,
    FaultPath,
    FaultSampler,
    Location,
    NoiseParams,
    apply_fault,
    eta_from_p,
    keyed_stream,
    sample_faults,
)
from .schedule import (
    CyclePhase,
    FeasibilityConstraints,
    GateCall,
    ScheduleTable,
    boundary_gate_schedule,
    coord_consistent,
    identity_schedule,
    nominal_gate_calls,
    phase_of,
    repetition_schedule,
    run_cycle,
    run_macro_step,
    solve_params,
)
from .datalayer import (
    TIE,
    CodeSpec,
    DecodeResult,
    GadgetCircuit,
    GadgetFault,
    GateOp,
    PauliFrameState,
    check_exrec_commutation,
    check_gadget_conditions,
    classical_data_step,
    five_qubit_code,
    ideal_decode,
    identity_gadget,
    logical_readout,
    naive_repetition_ec_gadget,
    prep_zero_gadget,
    repetition_code,
    repetition_ec_gadget,
    run_gadget,
    transversal_cnot_gadget,
    transversal_x_gadget,
)
from .schedulers import (
    CTParams,
    Trajectory,
    effective_fault_rate,
    inter_event_times,
    local_min_density,
    run_async,
    run_ct,
    run_sync,
)
from .exrec import (
    ExRecId,
    ExRecReport,
    classify_exrec,
    count_C_bound,
    good_exrec_sweep,
    influence_neighborhood,
    partition_exrecs,
    verify_good_correct,
)
from .renorm import (
    estimate_level_noise,
    fit_strength_slope,
    lifetime_experiment,
    renorm_flow,
    required_levels,
    scan_params,
)

__version__ = "0.1.0"
