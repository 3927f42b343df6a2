"""Toom's rule (plain and structural), defect clusters, health, and triangle erosion.

The plain rule replaces each cell by the majority of itself, its northern and
its eastern neighbor.  The structural rule applies the same majority per
register with the offsets that make the moving codeword
(t mod cycle_steps, i mod block_size, j mod block_size) a fixed point of the
corrected dynamics:

    time_stamp' = Maj(c, N, E) + 1            (mod cycle_steps)
    row_coord'  = Maj(c, N - 1 mod blk, E)
    col_coord'  = Maj(c, N, E - 1 mod blk)

Defect bookkeeping follows two complementary measures.  Clusters are 3x3-box
coverings of the singular set (greedy for fast conservative health counts,
exact branch-and-bound for closeness checks).  The triangle norm measures sets
by minimal covers with corner triangles {(i,j): i >= -a, j >= -b, i+j <= c},
whose defining property is erosion: one noiseless step shrinks c by one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lattice import LatticeState, ScheduleParams, ideal_planes, new_lattice

# site offsets whose update stencils overlap; two singular sites closer than
# this can influence each other within one Toom step
_STENCIL_COUPLING = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1))


def shift_north(a: np.ndarray) -> np.ndarray:
    """Plane of north-neighbor values: out[i, j] = a[i+1 mod n, j].

    Slice-copy form of np.roll(a, -1, axis=0); the rolls dominate the hot
    loops and this shaves their python overhead.
    """
    out = np.empty_like(a)
    out[:-1] = a[1:]
    out[-1] = a[0]
    return out


def shift_east(a: np.ndarray) -> np.ndarray:
    """Plane of east-neighbor values: out[i, j] = a[i, j+1 mod n]."""
    out = np.empty_like(a)
    out[:, :-1] = a[:, 1:]
    out[:, -1] = a[:, 0]
    return out


def maj(a, b, c):
    """Majority vote: shared value if at least two arguments coincide, else the first.

    Works elementwise on arrays: Maj(a,b,c) == b if b == c else a covers all cases.
    """
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray) or isinstance(c, np.ndarray):
        return np.where(b == c, b, a)
    return b if b == c else a


def toom_step(fld: np.ndarray) -> np.ndarray:
    """One synchronous plain-Toom update with periodic wrap; returns a new array."""
    north = shift_north(fld)
    east = shift_east(fld)
    return np.where(north == east, north, fld)


def structural_toom_planes(tau, x, y, params: ScheduleParams):
    """One synchronous structural-Toom update on raw register planes."""
    blk = params.block_size
    t0 = params.cycle_steps
    tau_n, tau_e = shift_north(tau), shift_east(tau)
    x_n, x_e = shift_north(x), shift_east(x)
    y_n, y_e = shift_north(y), shift_east(y)
    tau2 = (maj(tau, tau_n, tau_e) + 1) % t0
    x2 = maj(x, (x_n - 1) % blk, x_e)
    y2 = maj(y, y_n, (y_e - 1) % blk)
    return tau2, x2, y2


def structural_toom_step(lat: LatticeState) -> LatticeState:
    """Apply the structural rule to the lattice's registers; advances global_time."""
    lat.tau, lat.x, lat.y = structural_toom_planes(lat.tau, lat.x, lat.y, lat.params)
    lat.global_time += 1
    return lat


def singular_mask(lat: LatticeState, reference_time: int | None = None) -> np.ndarray:
    """Boolean plane marking sites whose structure register disagrees with the ideal trajectory."""
    t = lat.global_time if reference_time is None else reference_time
    tau_i, x_i, y_i = ideal_planes(t, lat.n, lat.params)
    return (lat.tau != tau_i) | (lat.x != x_i) | (lat.y != y_i)


def singular_sites(lat: LatticeState, reference_time: int | None = None):
    """Sorted list of (i, j) sites singular relative to the ideal trajectory."""
    mask = singular_mask(lat, reference_time)
    return [tuple(p) for p in np.argwhere(mask)]


@dataclass
class Cluster:
    """Singular sites assigned to one 3x3 box, anchored at its row-major-first site."""

    anchor: tuple
    sites: frozenset


@dataclass
class HealthReport:
    clusters: list
    residual: set
    h_value: int


def decompose_clusters(sites, n: int | None = None) -> HealthReport:
    """Greedy cover of a singular set by 3x3 boxes in row-major scan order.

    Each box is anchored at the first (row-major) still-uncovered site and
    absorbs every uncovered site it contains; with torus size n the box wraps.
    The greedy count never undercounts the true minimal box cover.  Residual
    is always empty (every site fits in some box).
    """
    remaining = set(map(tuple, sites))
    order = sorted(remaining)
    clusters = []
    for anchor in order:
        if anchor not in remaining:
            continue
        ai, aj = anchor
        box = {
            ((ai + di) % n if n else ai + di, (aj + dj) % n if n else aj + dj)
            for di in range(3)
            for dj in range(3)
        }
        members = frozenset(remaining & box)
        remaining -= members
        clusters.append(Cluster(anchor=anchor, sites=members))
    return HealthReport(clusters=clusters, residual=set(), h_value=len(clusters))


def _components(sites, n=None, reach=2):
    """Split sites into components linked by Chebyshev distance <= reach (wrapped if n)."""
    sites = list(map(tuple, sites))
    comp = []
    unseen = set(sites)
    while unseen:
        stack = [unseen.pop()]
        cur = [stack[0]]
        while stack:
            i, j = stack.pop()
            near = []
            for s in unseen:
                di = abs(s[0] - i)
                dj = abs(s[1] - j)
                if n:
                    di = min(di, n - di)
                    dj = min(dj, n - dj)
                if di <= reach and dj <= reach:
                    near.append(s)
            for s in near:
                unseen.discard(s)
                stack.append(s)
                cur.append(s)
        comp.append(cur)
    return comp


def min_box_cover(sites, n: int | None = None, limit: int | None = None) -> int:
    """Exact minimal number of 3x3 boxes covering the sites.

    Branch-and-bound on the row-major-first uncovered site (it must lie in one
    of the nine boxes anchored within distance 2); proximity components are
    solved independently.  With `limit`, search stops once the total provably
    exceeds it and limit+1 is returned.
    """
    total = 0
    comps = _components(sites, n=n)
    budget = None if limit is None else limit
    for comp in comps:
        best = decompose_clusters(comp, n=n).h_value
        comp_set = frozenset(comp)

        def candidates(site):
            si, sj = site
            seen = set()
            for di in range(3):
                for dj in range(3):
                    ai, aj = si - di, sj - dj
                    if n:
                        ai, aj = ai % n, aj % n
                    box = frozenset(
                        s
                        for s in comp_set
                        if _in_box(s, (ai, aj), n)
                    )
                    if box not in seen:
                        seen.add(box)
                        yield box

        def search(remaining, used):
            nonlocal best
            if not remaining:
                best = min(best, used)
                return
            if used + 1 >= best:
                return
            if used + (len(remaining) + 8) // 9 >= best:
                return
            first = min(remaining)
            for box in sorted(candidates(first), key=len, reverse=True):
                if first in box:
                    search(remaining - box, used + 1)

        search(comp_set, 0)
        total += best
        if budget is not None and total > budget:
            return budget + 1
    return total


def _in_box(site, anchor, n):
    di = site[0] - anchor[0]
    dj = site[1] - anchor[1]
    if n:
        di %= n
        dj %= n
    return 0 <= di <= 2 and 0 <= dj <= 2


def is_h_healthy(
    region,
    lat: LatticeState,
    reference_time: int | None,
    h: int,
) -> bool:
    """True iff the region's singular sites greedily decompose into at most h clusters.

    region is (i0, j0, height, width) on the torus, or None for the whole
    lattice.  The greedy box budget equals cumulative spatial extent 3h.
    """
    if h < 0:
        raise ConfigurationError("h must be >= 0")
    mask = singular_mask(lat, reference_time)
    if region is not None:
        sel = np.zeros_like(mask)
        i0, j0, hgt, wid = region
        ii = (np.arange(i0, i0 + hgt) % lat.n)[:, None]
        jj = (np.arange(j0, j0 + wid) % lat.n)[None, :]
        sel[ii, jj] = True
        mask = mask & sel
    sites = [tuple(p) for p in np.argwhere(mask)]
    return decompose_clusters(sites, n=lat.n).h_value <= h


@dataclass(frozen=True)
class Triangle:
    """Corner triangle {(i,j): i >= -a, j >= -b, i+j <= c} translated by anchor."""

    a: int
    b: int
    c: int
    anchor: tuple = (0, 0)

    @property
    def norm(self) -> int:
        return self.a + self.b + self.c

    @property
    def empty(self) -> bool:
        return self.norm < 0

    def contains(self, i: int, j: int) -> bool:
        di, dj = i - self.anchor[0], j - self.anchor[1]
        return di >= -self.a and dj >= -self.b and di + dj <= self.c

    def strictly_contains(self, i: int, j: int) -> bool:
        di, dj = i - self.anchor[0], j - self.anchor[1]
        return di > -self.a and dj > -self.b and di + dj < self.c

    def eroded(self, steps: int) -> "Triangle":
        return Triangle(self.a, self.b, self.c - steps, self.anchor)

    def sites(self):
        out = []
        for di in range(-self.a, self.c + self.b + 1):
            for dj in range(-self.b, self.c - di + 1):
                out.append((self.anchor[0] + di, self.anchor[1] + dj))
        return out

    @staticmethod
    def enclosing(sites) -> "Triangle":
        sites = list(map(tuple, sites))
        imin = min(s[0] for s in sites)
        jmin = min(s[1] for s in sites)
        smax = max(s[0] + s[1] for s in sites)
        return Triangle(a=-imin, b=-jmin, c=smax)

    def _bounds(self):
        # (imin, jmin, smax) of the region in absolute coordinates
        return (
            self.anchor[0] - self.a,
            self.anchor[1] - self.b,
            self.anchor[0] + self.anchor[1] + self.c,
        )


def _regions_intersect(r1, r2) -> bool:
    # regions of the form {i >= A, j >= B, i+j <= S}
    return max(r1[0], r2[0]) + max(r1[1], r2[1]) <= min(r1[2], r2[2])


def triangles_independent(t1: Triangle, t2: Triangle) -> bool:
    """True iff no 3-site Toom update stencil touches both triangles.

    Independent triangles erode without influencing each other, which is the
    covering notion that makes the triangle norm of a spread-out set the sum
    of its parts (a literal disjoint cover by singleton triangles would give
    every set norm zero).
    """
    if t1.empty or t2.empty:
        return True
    closures = []
    for t in (t1, t2):
        imin, jmin, smax = t._bounds()
        closures.append(
            (
                (imin, jmin, smax),
                (imin - 1, jmin, smax - 1),  # sites whose north neighbor is inside
                (imin, jmin - 1, smax - 1),  # sites whose east neighbor is inside
            )
        )
    for r1 in closures[0]:
        for r2 in closures[1]:
            if _regions_intersect(r1, r2):
                return False
    return True


@dataclass
class TriangleCover:
    norm: int
    triangles: list
    exact: bool


def triangle_norm(sites, cap: int = 32) -> TriangleCover:
    """Minimal total norm of a cover of `sites` by pairwise-independent triangles.

    Forced-merge fixpoint: groups start as singletons; any two groups whose
    enclosing triangles share an update stencil must share a triangle in every
    valid cover, and merging already-independent groups strictly increases the
    total norm, so the fixpoint is the unique optimum.  Above `cap` sites the
    same computation runs but the result is flagged as an upper bound.
    """
    sites = sorted(set(map(tuple, sites)))
    if not sites:
        return TriangleCover(norm=0, triangles=[], exact=True)
    groups = [[s] for s in sites]
    tris = [Triangle.enclosing(g) for g in groups]
    merged = True
    while merged:
        merged = False
        k = 0
        while k < len(groups):
            m = k + 1
            while m < len(groups):
                if not triangles_independent(tris[k], tris[m]):
                    groups[k] = groups[k] + groups[m]
                    tris[k] = Triangle.enclosing(groups[k])
                    del groups[m], tris[m]
                    merged = True
                else:
                    m += 1
            k += 1
    return TriangleCover(
        norm=sum(t.norm for t in tris),
        triangles=tris,
        exact=len(sites) <= cap,
    )


def scramble_structure(lat: LatticeState, sites, rng) -> None:
    """Overwrite the structure registers at `sites` with uniform non-ideal values."""
    t0, blk = lat.params.cycle_steps, lat.params.block_size
    for (i, j) in sites:
        while True:
            vt = int(rng.integers(0, t0))
            vx = int(rng.integers(0, blk))
            vy = int(rng.integers(0, blk))
            if (vt, vx, vy) != (
                lat.global_time % t0,
                i % blk,
                j % blk,
            ):
                break
        lat.tau[i, j], lat.x[i, j], lat.y[i, j] = vt, vx, vy


def erosion_check(
    sites,
    cover,
    steps: int,
    params: ScheduleParams,
    n: int,
    rng=None,
) -> bool:
    """Fact-style erosion: corrupt `sites`, run noiseless structural Toom steps,
    and require the singular set to stay inside the cover with every triangle's
    c shrunk by the number of steps taken (checked after each step).

    Precondition: every site lies strictly inside some cover triangle.
    """
    sites = [tuple(s) for s in sites]
    for s in sites:
        if not any(t.strictly_contains(*s) for t in cover):
            raise ConfigurationError(f"site {s} not strictly interior to the cover")
    rng = np.random.default_rng(0) if rng is None else rng
    lat = new_lattice(n, params)
    scramble_structure(lat, sites, rng)
    for s in range(1, steps + 1):
        structural_toom_step(lat)
        eroded = [t.eroded(s) for t in cover]
        for (i, j) in np.argwhere(singular_mask(lat)):
            if not any(t.contains(i, j) for t in eroded):
                return False
    return True


def random_interior_triangle_case(rng, n: int, max_norm: int = 8):
    """A random triangle fitting the torus fundamental domain with margin,
    plus a random nonempty strictly-interior site set."""
    while True:
        norm = int(rng.integers(3, max_norm + 1))
        a = int(rng.integers(0, norm - 1))
        b = int(rng.integers(0, norm - a - 1))
        c = norm - a - b
        tri = Triangle(a, b, c)
        inner = [s for s in tri.sites() if tri.strictly_contains(*s)]
        if not inner:
            continue
        i0 = int(rng.integers(a + 1, n - (b + c) - 2))
        j0 = int(rng.integers(b + 1, n - (a + c) - 2))
        tri = Triangle(a, b, c, anchor=(i0, j0))
        inner = [s for s in tri.sites() if tri.strictly_contains(*s)]
        k = int(rng.integers(1, len(inner) + 1))
        pick = rng.choice(len(inner), size=k, replace=False)
        return tri, [inner[q] for q in pick]


def erosion_trials(n: int, trials: int, seed: int = 0, params: ScheduleParams | None = None):
    """Randomized erosion containment sweep: per trial a random triangle with
    random interior corruptions is eroded for its full norm plus one step,
    containment checked after every step.  Returns (passes, rows)."""
    params = params or ScheduleParams(
        block_size=n, refresh_steps=max(18, n - 6), code_steps=6
    )
    rng = np.random.default_rng(seed)
    rows = []
    passes = 0
    for trial in range(trials):
        tri, sites = random_interior_triangle_case(rng, n)
        ok = erosion_check(sites, [tri], tri.norm + 1, params, n, rng=rng)
        passes += ok
        rows.append((trial, len(sites), tri.norm, bool(ok)))
    return passes, rows
