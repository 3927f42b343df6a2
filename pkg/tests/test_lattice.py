import numpy as np
import pytest

from toomqca.errors import ConfigurationError
from toomqca.lattice import (
    EAST,
    NORTH,
    SOUTH,
    WEST,
    ScheduleParams,
    ideal_structure,
    load_snapshot,
    neighbor,
    new_lattice,
    save_snapshot,
)

P = ScheduleParams()  # desk defaults M=24, T_ref=18, T_code=6


def test_defaults_satisfy_invariants():
    P.validate()
    assert P.cycle_steps == 24
    assert P.total_steps == 24


def test_ideal_structure_examples():
    p = ScheduleParams(block_size=9, refresh_steps=18, code_steps=6)
    assert ideal_structure(0, 3, 5, p) == (0, 3, 5)
    assert ideal_structure(24, 0, 0, p) == (0, 0, 0)
    assert ideal_structure(7, 11, 2, p) == (7, 2, 2)


def test_new_lattice_ideal_codeword():
    p = ScheduleParams(block_size=9, refresh_steps=3, code_steps=2)
    lat = new_lattice(9, p)
    for i in range(9):
        for j in range(9):
            assert lat.structure_cell(i, j) == (0, i, j)


def test_new_lattice_tiles_with_period_m():
    p = ScheduleParams(block_size=9, refresh_steps=3, code_steps=2)
    lat = new_lattice(18, p)
    assert np.array_equal(lat.x[:9, :], lat.x[9:, :])
    assert np.array_equal(lat.y[:, :9], lat.y[:, 9:])
    assert lat.structure_cell(10, 3) == (0, 1, 3)


def test_new_lattice_divisibility_errors():
    p = ScheduleParams(block_size=9, refresh_steps=3, code_steps=2)
    with pytest.raises(ConfigurationError):
        new_lattice(10, p)
    with pytest.raises(ConfigurationError):
        new_lattice(8, p)


def test_neighbor_examples_and_roundtrip():
    assert neighbor((0, 0), NORTH, 4) == (1, 0)
    assert neighbor((3, 3), EAST, 4) == (3, 0)
    assert neighbor(neighbor((2, 1), WEST, 4), EAST, 4) == (2, 1)
    # round-trip property on every site and direction
    for i in range(4):
        for j in range(4):
            for d, inv in ((NORTH, SOUTH), (EAST, WEST), (SOUTH, NORTH), (WEST, EAST)):
                assert neighbor(neighbor((i, j), d, 4), inv, 4) == (i, j)


def test_validate_names_violated_inequality():
    with pytest.raises(ConfigurationError, match="refresh_steps >= cluster_width"):
        ScheduleParams(refresh_steps=10, code_steps=6, block_size=24).validate()
    with pytest.raises(ConfigurationError, match="block_size >= cycle_steps"):
        ScheduleParams(block_size=20, refresh_steps=18, code_steps=6).validate()
    # reduced-tolerance scan configs pass only with strict=False
    scan = ScheduleParams(block_size=4, refresh_steps=3, code_steps=1,
                          structure_tolerance=1)
    with pytest.raises(ConfigurationError, match="structure_tolerance >= 2"):
        scan.validate()
    scan.validate(strict=False)


def test_snapshot_roundtrip_and_determinism(tmp_path):
    lat = new_lattice(24, P)
    lat.tau[3, 5] = 7
    lat.data["bit"][1, 2] = 1
    lat.global_time = 13
    f1, f2 = tmp_path / "a.snap", tmp_path / "b.snap"
    save_snapshot(lat, f1)
    back = load_snapshot(f1)
    assert back.n == lat.n and back.global_time == 13
    assert np.array_equal(back.tau, lat.tau)
    assert np.array_equal(back.data["bit"], lat.data["bit"])
    assert back.params == lat.params
    save_snapshot(back, f2)
    assert f1.read_bytes() == f2.read_bytes()


def test_two_lattices_same_config_bit_identical():
    a = new_lattice(24, P)
    b = new_lattice(24, P)
    for name in a.plane_names():
        assert np.array_equal(a.get_plane(name), b.get_plane(name))
