"""Structured hexahedral grid: geometry, activity, depths, Hilbert
space-filling-curve partitioning, and geometric transmissibility factors.

Cells are numbered in natural order (i fastest, then j, then k) and depth
increases with k (z positive downward).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridError(Exception):
    pass


@dataclass
class Grid:
    nx: int
    ny: int
    nz: int
    dx: np.ndarray        # per-cell ft, flat natural order
    dy: np.ndarray
    dz: np.ndarray
    top_depth: float
    active: np.ndarray    # per-cell bool
    z: np.ndarray         # per-cell center depth, ft

    @property
    def ncell(self):
        return self.nx * self.ny * self.nz

    @property
    def dims(self):
        return (self.nx, self.ny, self.nz)

    def index(self, i, j, k):
        """0-based (i, j, k) -> flat natural index."""
        return i + self.nx * (j + self.ny * k)

    def ijk(self, idx):
        i = idx % self.nx
        j = (idx // self.nx) % self.ny
        k = idx // (self.nx * self.ny)
        return i, j, k

    def volumes(self):
        return self.dx * self.dy * self.dz

    def centers(self):
        """Cell centers (x, y, z); x/y accumulate from the origin."""
        nx, ny, nz = self.dims
        dx3 = self.dx.reshape(nz, ny, nx)
        dy3 = self.dy.reshape(nz, ny, nx)
        x = np.cumsum(dx3, axis=2) - 0.5 * dx3
        y = np.cumsum(dy3, axis=1) - 0.5 * dy3
        return x.reshape(-1), y.reshape(-1), self.z.copy()


@dataclass
class Partition:
    owner: np.ndarray     # per-cell part id, -1 for unowned (never for active)
    nparts: int


@dataclass
class FaceConnections:
    """Interior faces between active cells (struct-of-arrays)."""
    cell_a: np.ndarray
    cell_b: np.ndarray
    direction: np.ndarray   # 0=x 1=y 2=z
    factor: np.ndarray      # geometric transmissibility, md*ft

    def __len__(self):
        return len(self.cell_a)


def _expand_axis(values, n_axis, ncell, name):
    vals = np.asarray(values, dtype=float).ravel()
    if vals.size == 1:
        vals = np.full(n_axis, vals[0])
    if vals.size == ncell:
        return vals.copy()
    if vals.size != n_axis:
        raise GridError(
            f"{name}: expected 1, {n_axis} or {ncell} values, got {vals.size}")
    return vals


def build_grid(dims, dx, dy, dz, top_depth=0.0, active=None):
    """Build a grid from per-axis (or per-cell) size lists."""
    nx, ny, nz = dims
    if nx <= 0 or ny <= 0 or nz <= 0:
        raise GridError(f"grid dims must be positive, got {dims}")
    ncell = nx * ny * nz
    ax = _expand_axis(dx, nx, ncell, "dx")
    ay = _expand_axis(dy, ny, ncell, "dy")
    az = _expand_axis(dz, nz, ncell, "dz")
    if np.any(ax <= 0) or np.any(ay <= 0) or np.any(az <= 0):
        raise GridError("cell sizes must be positive")

    full = np.empty((nz, ny, nx))
    if ax.size == ncell:
        dxc = ax.copy()
    else:
        full[:] = ax[None, None, :]
        dxc = full.reshape(-1).copy()
    if ay.size == ncell:
        dyc = ay.copy()
    else:
        full[:] = ay[None, :, None]
        dyc = full.reshape(-1).copy()
    if az.size == ncell:
        dzc = az.copy()
    else:
        full[:] = az[:, None, None]
        dzc = full.reshape(-1).copy()

    # depth accumulates downward per column
    dz3 = dzc.reshape(nz, ny, nx)
    z3 = np.cumsum(dz3, axis=0) - 0.5 * dz3 + top_depth
    z = z3.reshape(-1)

    if active is None:
        act = np.ones(ncell, dtype=bool)
    else:
        act = np.asarray(active, dtype=bool).ravel().copy()
        if act.size != ncell:
            raise GridError("activity flag length mismatch")
    if not act.any():
        raise GridError("grid has no active cells")
    return Grid(nx, ny, nz, dxc, dyc, dzc, float(top_depth), act, z)


# ----------------------------------------------------------------------
# Hilbert space-filling curve
# ----------------------------------------------------------------------

def _axes_to_hilbert(coords, level):
    """Skilling transform: integer axis coords -> Hilbert index (vectorized)."""
    x = [c.astype(np.int64).copy() for c in coords]
    ndim = len(x)
    m = np.int64(1) << (level - 1)

    q = m
    while q > 1:
        p = q - 1
        for i in range(ndim):
            hit = (x[i] & q).astype(bool)
            x[0] = np.where(hit, x[0] ^ p, x[0])
            t = np.where(~hit, (x[0] ^ x[i]) & p, 0)
            x[0] ^= t
            x[i] ^= t
        q >>= 1

    for i in range(1, ndim):
        x[i] ^= x[i - 1]
    t = np.zeros_like(x[0])
    q = m
    while q > 1:
        t = np.where((x[ndim - 1] & q).astype(bool), t ^ (q - 1), t)
        q >>= 1
    for i in range(ndim):
        x[i] ^= t

    # interleave bits, x[0] highest
    idx = np.zeros_like(x[0])
    for b in range(level - 1, -1, -1):
        for i in range(ndim):
            idx = (idx << 1) | ((x[i] >> b) & 1)
    return idx


def hilbert_key(centers, bbox, level):
    """Map points in a bounding box to curve positions in (0, 1).

    ``centers`` is (n, 3); ``bbox`` is ((xmin, ymin, zmin), (xmax, ymax,
    zmax)).  Distinct cells get distinct keys once the level resolves the
    grid spacing.
    """
    pts = np.asarray(centers, dtype=float)
    lo = np.asarray(bbox[0], dtype=float)
    hi = np.asarray(bbox[1], dtype=float)
    span = np.where(hi > lo, hi - lo, 1.0)
    nbin = 1 << level
    u = (pts - lo) / span
    q = np.clip((u * nbin).astype(np.int64), 0, nbin - 1)
    idx = _axes_to_hilbert([q[:, 0], q[:, 1], q[:, 2]], level)
    return (idx.astype(float) + 0.5) / float(nbin) ** 3


def default_level(dims):
    return int(np.ceil(np.log2(max(dims)))) + 2


def grid_hilbert_keys(grid, level=None):
    if level is None:
        level = default_level(grid.dims)
    cx, cy, cz = grid.centers()
    pts = np.column_stack([cx, cy, cz])
    lo = (0.0, 0.0, float(np.min(cz - 0.5 * grid.dz)))
    hi = (float(np.max(cx + 0.5 * grid.dx)),
          float(np.max(cy + 0.5 * grid.dy)),
          float(np.max(cz + 0.5 * grid.dz)))
    return hilbert_key(pts, (lo, hi), level)


def _split_interval(w_ordered, nparts):
    """Split curve-ordered weights into contiguous balanced parts.

    Each boundary lands on the first prefix reaching its ideal share, so
    every part's weight is within one max cell weight of the mean.
    """
    cum = np.cumsum(w_ordered)
    total = cum[-1]
    targets = total * np.arange(1, nparts) / nparts
    cuts = np.searchsorted(cum, targets, side="left") + 1
    bounds = np.concatenate([[0], cuts, [len(w_ordered)]])
    part = np.empty(len(w_ordered), dtype=np.int64)
    for p in range(nparts):
        part[bounds[p]:bounds[p + 1]] = p
    return part


def partition(grid, nparts, weights=None, level=None,
              inactive_split_fraction=0.25):
    """Hilbert partition; deterministic for a given (grid, nparts, weights).

    When inactive cells are numerous the 1-D split runs twice, once over
    active and once over inactive cells, so both populations balance.
    """
    if nparts < 1:
        raise GridError("nparts must be >= 1")
    n_active = int(grid.active.sum())
    if nparts > n_active:
        raise GridError(
            f"nparts {nparts} exceeds active cell count {n_active}")
    keys = grid_hilbert_keys(grid, level)
    if weights is None:
        weights = np.ones(grid.ncell)
    else:
        weights = np.asarray(weights, dtype=float)
        if np.any(weights[grid.active] <= 0):
            raise GridError("cell weights must be positive")

    owner = np.full(grid.ncell, -1, dtype=np.int64)
    n_inactive = grid.ncell - n_active
    two_rounds = 0 < n_inactive and n_inactive >= inactive_split_fraction * grid.ncell
    if two_rounds:
        for mask in (grid.active, ~grid.active):
            idx = np.flatnonzero(mask)
            order = idx[np.argsort(keys[idx], kind="stable")]
            owner[order] = _split_interval(weights[order], nparts)
    else:
        order = np.argsort(keys, kind="stable")
        owner[order] = _split_interval(weights[order], nparts)
    return Partition(owner, nparts)


def well_weights(grid, perf_cells):
    """Unit cell weights plus one extra per perforation in the cell."""
    w = np.ones(grid.ncell)
    for c in perf_cells:
        w[c] += 1.0
    return w


# ----------------------------------------------------------------------
# transmissibility
# ----------------------------------------------------------------------

def _half_term(k, area, d):
    """k*A/(d/2) with sealing (k=0) handled."""
    return np.where(k > 0.0, 2.0 * k * area / d, 0.0)


def geometric_transmissibility(grid, permx, permy, permz):
    """Harmonic-mean geometric factors for all interior active-active faces.

    Boundary faces (and faces touching inactive cells) carry factor 0 and
    are omitted from the connection list; the no-flow boundary condition
    is implied by their absence.
    """
    for name, arr in (("permx", permx), ("permy", permy), ("permz", permz)):
        if np.any(np.asarray(arr) < 0):
            raise GridError(f"{name}: negative permeability")
    nx, ny, nz = grid.dims
    perm = {0: np.asarray(permx, dtype=float),
            1: np.asarray(permy, dtype=float),
            2: np.asarray(permz, dtype=float)}
    d_of = {0: grid.dx, 1: grid.dy, 2: grid.dz}
    area_of = {0: grid.dy * grid.dz, 1: grid.dx * grid.dz, 2: grid.dx * grid.dy}

    cell = np.arange(grid.ncell).reshape(nz, ny, nx)
    conns = []
    for direction in (0, 1, 2):
        if direction == 0:
            a = cell[:, :, :-1].reshape(-1)
            b = cell[:, :, 1:].reshape(-1)
        elif direction == 1:
            a = cell[:, :-1, :].reshape(-1)
            b = cell[:, 1:, :].reshape(-1)
        else:
            a = cell[:-1, :, :].reshape(-1)
            b = cell[1:, :, :].reshape(-1)
        both = grid.active[a] & grid.active[b]
        a, b = a[both], b[both]
        k, d, ar = perm[direction], d_of[direction], area_of[direction]
        ha = _half_term(k[a], ar[a], d[a])
        hb = _half_term(k[b], ar[b], d[b])
        num = ha * hb
        den = ha + hb
        t = np.where(den > 0.0, num / np.where(den > 0.0, den, 1.0), 0.0)
        conns.append((a, b, np.full(len(a), direction, dtype=np.int64), t))
    cell_a = np.concatenate([c[0] for c in conns])
    cell_b = np.concatenate([c[1] for c in conns])
    direc = np.concatenate([c[2] for c in conns])
    fact = np.concatenate([c[3] for c in conns])
    return FaceConnections(cell_a, cell_b, direc, fact)


def conduction_geometry(grid):
    """Per-face (A/d) half-terms for thermal conduction, as index arrays.

    Returns (cell_a, cell_b, half_a, half_b) where half = A/(d/2); the
    face conductance is the harmonic combination with per-cell K_T.
    """
    nx, ny, nz = grid.dims
    d_of = {0: grid.dx, 1: grid.dy, 2: grid.dz}
    area_of = {0: grid.dy * grid.dz, 1: grid.dx * grid.dz, 2: grid.dx * grid.dy}
    cell = np.arange(grid.ncell).reshape(nz, ny, nx)
    out_a, out_b, out_ha, out_hb = [], [], [], []
    for direction in (0, 1, 2):
        if direction == 0:
            a = cell[:, :, :-1].reshape(-1)
            b = cell[:, :, 1:].reshape(-1)
        elif direction == 1:
            a = cell[:, :-1, :].reshape(-1)
            b = cell[:, 1:, :].reshape(-1)
        else:
            a = cell[:-1, :, :].reshape(-1)
            b = cell[1:, :, :].reshape(-1)
        both = grid.active[a] & grid.active[b]
        a, b = a[both], b[both]
        d, ar = d_of[direction], area_of[direction]
        out_a.append(a)
        out_b.append(b)
        out_ha.append(2.0 * ar[a] / d[a])
        out_hb.append(2.0 * ar[b] / d[b])
    return (np.concatenate(out_a), np.concatenate(out_b),
            np.concatenate(out_ha), np.concatenate(out_hb))
