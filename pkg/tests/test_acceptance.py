"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s`.  Criterion 9's sub-threshold
half runs at its stated rate p=0.01; at that rate the memory sits so deep in
the ordered phase that every trial right-censors at any desk-scale cap (the
failure threshold of this dynamics is near p~0.08), so the strict
CI-separated growth assertion fails honestly.  The saturation half at p=0.5
and a near-threshold growth demonstration both pass; see the repository notes
for the measurements.
"""

import itertools
import math

import numpy as np
import pytest
from scipy import stats as sps

from toomqca.lattice import ScheduleParams, new_lattice
from toomqca.noise import NoiseParams
from toomqca.datalayer import (
    check_exrec_commutation,
    check_gadget_conditions,
    identity_gadget,
    repetition_code,
    repetition_ec_gadget,
    transversal_cnot_gadget,
    transversal_x_gadget,
)
from toomqca.exrec import good_exrec_sweep
from toomqca.renorm import (
    estimate_level_noise,
    lifetime_experiment,
    renorm_flow,
    required_levels,
    scan_params,
)
from toomqca.schedule import boundary_gate_schedule, run_cycle
from toomqca.schedulers import (
    CTParams,
    effective_fault_rate,
    inter_event_times,
    local_min_density,
    run_async,
    run_ct,
    run_sync,
)
from toomqca.structure import erosion_trials, singular_mask, structural_toom_step
from toomqca.cli import dispatch

SEED = 20260810
DEFAULTS = ScheduleParams()


def report(num, ok, detail):
    print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {num}: {detail}"


def test_criterion_01_triangle_erosion():
    passes, rows = erosion_trials(32, 1000, seed=SEED)
    report(1, passes == 1000, f"erosion containment {passes}/1000 on 32x32")


def test_criterion_02_codeword_stationarity():
    ok = True
    for blk, t0 in ((24, 24), (9, 8), (32, 20)):
        ref = t0 - 4 if t0 > 4 else 1
        p = ScheduleParams(block_size=blk, refresh_steps=ref, code_steps=t0 - ref)
        lat = new_lattice(blk, p)
        for _ in range(t0 + 2):
            structural_toom_step(lat)
            ok &= not singular_mask(lat).any()
    report(2, ok, "ideal configuration maps to ideal with stamp incremented, exactly")


def test_criterion_03_cluster_erasure_exhaustive():
    p = ScheduleParams(block_size=16, refresh_steps=12, code_steps=4,
                       structure_tolerance=4)
    rng = np.random.default_rng(SEED)
    offsets = [off for off in itertools.product((0, 1), repeat=3) if any(off)]
    checked = 0
    worst = 0
    ok = True
    for mask_bits in range(1, 512):
        values = [offsets[mask_bits % len(offsets)]]
        values.append(tuple(int(rng.integers(0, m)) for m in (p.cycle_steps, 16, 16)))
        for dv in values:
            lat = new_lattice(16, p)
            for b in range(9):
                if mask_bits >> b & 1:
                    i, j = 6 + b // 3, 6 + b % 3
                    lat.tau[i, j] = (lat.tau[i, j] + dv[0]) % p.cycle_steps
                    lat.x[i, j] = (lat.x[i, j] + dv[1]) % 16
                    lat.y[i, j] = (lat.y[i, j] + dv[2]) % 16
            steps = 0
            while singular_mask(lat).any() and steps < 6:
                structural_toom_step(lat)
                steps += 1
            worst = max(worst, steps)
            ok &= steps <= 5 and not singular_mask(lat).any()
            checked += 1
    report(3, ok, f"all {checked} two-value 3x3 patterns erased within {worst} <= 5 steps")


def test_criterion_04_good_exrec_sweep():
    res = good_exrec_sweep(DEFAULTS, trials=10**4, seed=SEED, n=48)
    report(
        4,
        res.passed == res.trials,
        f"{res.passed}/{res.trials} adversarial h+r<=6 placements end "
        f"<= 6 clusters (max seen {res.max_final_clusters}); failures: {res.failures[:3]}",
    )


def test_criterion_05_gadget_conditions():
    code = repetition_code()
    good = check_gadget_conditions(repetition_ec_gadget(), code, t=1)
    mutant = check_gadget_conditions(
        repetition_ec_gadget(include_correction=False), code, t=1
    )
    counterexample = next((m for c, m in mutant.failures if c == "A1"), "")
    ok = good.passed and not mutant.passed and "r=1" in counterexample
    report(
        5,
        ok,
        f"EC gadget passes {good.n_cases} exhaustive cases; correction-deleted "
        f"mutant fails with: {counterexample[:80]}",
    )


def test_criterion_06_exrec_decoder_commutation():
    code = repetition_code()
    ec = repetition_ec_gadget()
    ok = True
    cases = 0
    for gate in (identity_gadget(code), transversal_x_gadget(code),
                 transversal_cnot_gadget(code)):
        rep = check_exrec_commutation(gate, ec, code, t=1)
        ok &= rep.passed
        cases += rep.n_cases
    report(6, ok, f"decoder commutes through every good exRec ({cases} exhaustive cases)")


def test_criterion_07_sparsity_slopes():
    details = []
    ok = True
    for t in (1, 2):
        params = scan_params(t)
        grid = (list(np.geomspace(1e-3, 1e-2, 4)) if t == 1
                else list(np.geomspace(2e-3, 1e-2, 3)))
        res = estimate_level_noise(params, grid, seed=SEED + t, target_events=80)
        ok &= res.slope is not None and abs(res.slope - (t + 1)) <= 0.5
        ok &= res.points_used >= 2
        ok &= all(r.p_bad >= r.p_direct_bad for r in res.rows)
        details.append(f"t={t}: slope {res.slope:.2f} vs {t + 1} ({res.points_used} pts)")
    report(7, ok, "; ".join(details))


def test_criterion_08_threshold_flow():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        t = int(rng.integers(1, 4))
        a = float(rng.uniform(2.0, 1000.0))
        k = int(rng.integers(0, 11))
        hi = min(600.0 / (t + 1) ** k, 5.0)
        ratio = math.exp(-rng.uniform(0.01 * hi, hi))
        flow = renorm_flow(a ** (-1.0 / t) * ratio, a, t, k)
        worst = max(worst, flow.max_rel_err)
    exact_th = renorm_flow(0.005, 100.0, 1, 1).threshold
    growth_ok = True
    prev = None
    for lg in (16, 32, 64, 128, 256):
        k = required_levels(1e4, 1.0, 1e4 * math.exp(-lg), 0.005, 100.0, 1)
        if prev is not None:
            growth_ok &= 0 <= k - prev <= 1
        prev = k
    ok = worst < 1e-12 and exact_th == pytest.approx(0.01, rel=1e-12) and growth_ok
    report(8, ok, f"flow matches closed form to {worst:.1e} rel; threshold exact; "
                  f"level count grows <= 1 per doubling")


def test_criterion_09_memory_lifetime_scaling():
    cap = 10_000
    _, sat = lifetime_experiment([16, 32, 64], [0.5], trials=200, cap=cap, seed=SEED)
    sat_medians = [s["median"] for s in sat]
    sat_ok = max(sat_medians) <= 10 and (max(sat_medians) - min(sat_medians)) <= 4

    _, sub = lifetime_experiment([16, 32, 64], [0.01], trials=200, cap=cap, seed=SEED)
    by_size = {s["size"]: s for s in sub}
    sep_ok = True
    for a, b in ((16, 32), (32, 64)):
        lo_b = by_size[b]["ci"][0]
        hi_a = by_size[a]["ci"][1]
        med_a, med_b = by_size[a]["median"], by_size[b]["median"]
        sep_ok &= med_b > med_a and lo_b > hi_a
    detail = (
        f"p=0.5 medians {sat_medians} flat/O(1): {'ok' if sat_ok else 'fail'}; "
        f"p=0.01 medians {[by_size[L]['median'] for L in (16, 32, 64)]} with "
        f"{[by_size[L]['n_censored'] for L in (16, 32, 64)]}/200 censored at cap={cap} — "
        "strict CI-separated growth "
        + ("confirmed" if sep_ok else
           "NOT observable: p=0.01 is ~8x below the measured failure threshold "
           "(p~0.08) and every trial right-censors at any desk-scale cap")
    )
    report(9, sat_ok and sep_ok, detail)


def test_criterion_09_surrogate_near_threshold_growth():
    # not a spec criterion: demonstrates the machinery resolves sub-threshold
    # growth where medians are finite (just below the measured threshold)
    _, summary = lifetime_experiment([8, 16], [0.085], trials=60, cap=30_000, seed=SEED)
    m8 = [s for s in summary if s["size"] == 8][0]
    m16 = [s for s in summary if s["size"] == 16][0]
    assert m16["median"] > m8["median"]
    assert m16["ci"][0] > m8["ci"][1]
    print(f"\n[criterion  9*] near-threshold growth check: median(8)={m8['median']:.0f} "
          f"< median(16)={m16['median']:.0f}, CI-separated")


def test_criterion_10_marching_soldier_and_slices():
    n = 32
    p = ScheduleParams(block_size=32, refresh_steps=18, code_steps=6)
    lat = new_lattice(n, p)
    # gap audit runs on every accepted event and raises on violation
    traj = run_async(lat, 10**6, NoiseParams(rate=0.0), seed=SEED,
                     record_slices=(5, 150))
    gaps_ok = True
    c = lat.counter
    for axis in (0, 1):
        gaps_ok &= int(np.abs(c - np.roll(c, 1, axis)).max()) <= 1

    slices_ok = True
    for cval in (5, 150):
        view = traj.slice(cval)
        slices_ok &= bool(view.recorded.all())
        ref = run_sync(new_lattice(n, p), cval, NoiseParams(rate=0.0)).lattice
        for name in ("tau", "x", "y"):
            slices_ok &= bool(np.array_equal(view.planes[name], ref.get_plane(name)))

    # same accepted multiset in a different order reaches the same state
    mult = np.bincount(traj.ev_site[traj.ev_accepted], minlength=n * n)
    lat2 = new_lattice(n, p)
    from toomqca.schedulers import _AsyncCore

    core = _AsyncCore(lat2, "structure", 0, NoiseParams(rate=0.0))
    remaining = mult.copy()
    progress = True
    while progress and remaining.any():
        progress = False
        for s in range(n * n):
            if remaining[s]:
                i, j = divmod(s, n)
                if core.attempt(i, j):
                    remaining[s] -= 1
                    progress = True
    commute_ok = not remaining.any() and np.array_equal(lat.counter, lat2.counter)
    for name in ("tau", "x", "y"):
        commute_ok &= bool(np.array_equal(lat.get_plane(name), lat2.get_plane(name)))

    ok = gaps_ok and slices_ok and commute_ok
    report(10, ok, f"1e6 events: gap<=1 {gaps_ok}, slices==sync {slices_ok}, "
                   f"order-commutation {commute_ok} (accepts={traj.accepts})")


def test_criterion_11_continuous_time():
    # exponential inter-event times at 1% KS level on >= 1e4 samples
    p8 = ScheduleParams(block_size=8, refresh_steps=4, code_steps=2)
    rate = 0.5
    traj = run_ct(new_lattice(8, p8), CTParams(noise_rate=rate, duration=300.0),
                  seed=SEED)
    deltas = inter_event_times(traj)
    ks = sps.kstest(deltas, "expon", args=(0, 1.0 / (1.0 + rate)))
    ks_ok = len(deltas) >= 10**4 and ks.pvalue > 0.01

    # local-minimum density converges, sizes agree within 10%, bounded from 0
    vs = {}
    for size in (64, 128):
        psz = ScheduleParams(block_size=size, refresh_steps=18, code_steps=6)
        t = run_ct(new_lattice(size, psz),
                   CTParams(noise_rate=0.0, duration=240.0, sample_rate=3.0),
                   seed=SEED + size)
        vs[size], _ = local_min_density(t, time_window=(120.0, 240.0))
    v_ok = abs(vs[64] - vs[128]) / vs[128] <= 0.10 and min(vs.values()) > 0.05

    # effective fault rate within a factor 3 of p/v
    eff_ok = True
    effs = []
    p32 = ScheduleParams(block_size=32, refresh_steps=18, code_steps=6)
    for rate in (1e-3, 1e-2):
        t = run_ct(new_lattice(32, p32),
                   CTParams(noise_rate=rate, duration=400.0, sample_rate=2.0),
                   seed=SEED + int(rate * 1e6))
        v, _ = local_min_density(t, time_window=(100.0, 400.0))
        got = effective_fault_rate(t)
        want = rate / v
        effs.append((rate, got, want))
        eff_ok &= want / 3 < got < want * 3

    ok = ks_ok and v_ok and eff_ok
    report(11, ok, f"KS p={ks.pvalue:.3f} on {len(deltas)} gaps; "
                   f"v64={vs[64]:.3f} v128={vs[128]:.3f}; eff-rate ratios "
                   + str([f"{g / w:.2f}" for _, g, w in effs]))


def test_criterion_12_gating_soundness():
    params = DEFAULTS
    sched = boundary_gate_schedule(params)
    noise = NoiseParams(rate=2e-3, layers=frozenset({"structure"}))
    lat = new_lattice(24, params)
    cross = incons = gated = 0
    for cycle in range(10**5):
        lat, _, st = run_cycle(lat, noise, seed=cycle, schedule=sched, gating=True)
        cross += st.cross_block_executions
        incons += st.inconsistent_cross_executions
        gated += st.gated_gates
    sound = incons == 0 and cross > 0 and gated > 0

    lat = new_lattice(24, params)
    neg = 0
    for cycle in range(2000):
        lat, _, st = run_cycle(lat, noise, seed=cycle, schedule=sched, gating=False)
        neg += st.inconsistent_cross_executions
        if neg:
            break
    ok = sound and neg > 0
    report(12, ok, f"1e5 gated cycles: {cross} cross-block executions, "
                   f"{incons} inconsistent, {gated} gated; ungated control hits {neg}")


def test_criterion_13_reproducibility(tmp_path):
    jobs = [
        ["run-sync", "--n", "24", "--steps", "30", "--p", "0.004"],
        ["run-async", "--n", "32", "--block-size", "32", "--events", "20000",
         "--p", "0.001"],
        ["run-ct", "--n", "32", "--block-size", "32", "--duration", "40",
         "--p", "0.002"],
        ["exrec-scan", "--tec", "1", "--p-grid", "0.005,0.01", "--target-events", "30"],
        ["threshold-flow", "--A", "100", "--eta0", "0.005", "--k", "4"],
        ["gadget-check", "--gadget", "rep3-ec"],
        ["lifetime", "--L", "8,12", "--p", "0.5", "--trials", "8", "--cap", "200"],
        ["solve-params"],
        ["erosion-test", "--n", "32", "--trials", "40"],
    ]
    ok = True
    details = []
    for k, job in enumerate(jobs):
        a = tmp_path / f"a{k}"
        b = tmp_path / f"b{k}"
        rc = dispatch(job + ["--seed", str(SEED), "--outdir", str(a)])
        manifest = next(a.glob("*.manifest.json"))
        rc2 = dispatch(["replay", "--manifest", str(manifest), "--outdir", str(b)])
        same = rc == rc2
        for csv in sorted(a.glob("*.csv")):
            same &= (b / csv.name).read_bytes() == csv.read_bytes()
        ok &= same
        if not same:
            details.append(job[0])
    report(13, ok, "replay from manifest reproduces byte-identical CSV bodies for "
                   f"{len(jobs)} experiment families"
                   + (f"; mismatches: {details}" if details else ""))
