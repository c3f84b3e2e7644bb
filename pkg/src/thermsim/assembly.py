"""Fully-implicit residual and block Jacobian assembly.

Per active cell the unknowns are [p, T, Sw, Sg, x_1..x_{no-1}, y_1..y_ncg]
(the last oil fraction is eliminated by sum(x) = 1) and the equations are
[water moles, oil component moles, NCG moles, energy, phase constraint].
Well bottom-hole pressures append as trailing scalar unknowns/equations.

Derivatives come from evaluating the same residual expressions on seeded
dual numbers: cell terms carry their own cell's seeds, face terms a
two-cell seed space, perforation terms the cell seeds plus the well's
bottom-hole pressure.  The sparsity is exactly the 7-point stencil plus
the well coupling columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as D
from . import props as P
from . import units
from . import wells as W
from .grid import conduction_geometry, geometric_transmissibility
from .linsol.blockmat import BlockMatrix, block_pattern_from_faces


class AssemblyError(Exception):
    pass


# ----------------------------------------------------------------------
# layout
# ----------------------------------------------------------------------

@dataclass
class Layout:
    """Index bookkeeping for the per-cell unknown/equation block."""
    no: int
    ncg: int

    IP, IT, ISW, ISG = 0, 1, 2, 3

    @property
    def nb(self):
        return 4 + (self.no - 1) + self.ncg

    def ix(self, c):
        if c >= self.no - 1:
            raise AssemblyError("last oil fraction is eliminated")
        return 4 + c

    def iy(self, j):
        return 4 + (self.no - 1) + j

    # equation rows
    EQ_WATER = 0

    def eq_oil(self, c):
        return 1 + c

    def eq_ncg(self, j):
        return 1 + self.no + j

    @property
    def eq_energy(self):
        return 1 + self.no + self.ncg

    @property
    def eq_cons(self):
        return self.nb - 1


@dataclass
class HeatLossConfig:
    conductivity: float          # Btu/ft-day-degF
    heat_capacity: float         # Btu/ft^3-degF
    t_initial: np.ndarray        # cap-rock initial temperature per cell

    def __post_init__(self):
        if self.conductivity <= 0 or self.heat_capacity <= 0:
            raise AssemblyError("heat-loss properties must be positive")


@dataclass
class State:
    p: np.ndarray
    T: np.ndarray
    Sw: np.ndarray
    Sg: np.ndarray
    x: np.ndarray            # (n, no) full oil mole fractions
    y: np.ndarray            # (n, ncg)
    gas: np.ndarray          # (n,) bool
    pbh: np.ndarray          # (nwell,)
    # Vinsome heat-loss history per cell per interface (0 top, 1 bottom)
    hl_theta: np.ndarray = None
    hl_I: np.ndarray = None
    t: float = 0.0

    def __post_init__(self):
        n = len(self.p)
        if self.hl_theta is None:
            self.hl_theta = np.zeros((n, 2))
        if self.hl_I is None:
            self.hl_I = np.zeros((n, 2))

    def copy(self):
        return State(self.p.copy(), self.T.copy(), self.Sw.copy(),
                     self.Sg.copy(), self.x.copy(), self.y.copy(),
                     self.gas.copy(), self.pbh.copy(),
                     self.hl_theta.copy(), self.hl_I.copy(), self.t)

    def so(self):
        return 1.0 - self.Sw - self.Sg


class Model:
    """A deck bound to a grid: everything assembly needs, precomputed."""

    def __init__(self, grid, pset, wells, permx, permy, permz, phi_ref,
                 heat_loss=None):
        self.grid = grid
        self.pset = pset
        self.wells = wells
        self.layout = Layout(no=len(pset.oils), ncg=len(pset.ncgs))

        self.active = np.flatnonzero(grid.active)
        self.ncell = len(self.active)
        self.full_of_active = self.active
        self.active_of_full = -np.ones(grid.ncell, dtype=np.int64)
        self.active_of_full[self.active] = np.arange(self.ncell)

        self.vb = grid.volumes()[self.active]
        self.z = grid.z[self.active]
        self.phi_ref = np.asarray(phi_ref, dtype=float)[self.active]
        self.permx = np.asarray(permx, dtype=float)
        self.permy = np.asarray(permy, dtype=float)
        self.permz = np.asarray(permz, dtype=float)

        fc = geometric_transmissibility(grid, permx, permy, permz)
        keep = fc.factor > 0.0
        self.face_a = self.active_of_full[fc.cell_a[keep]]
        self.face_b = self.active_of_full[fc.cell_b[keep]]
        self.face_t = fc.factor[keep]
        ca, cb, ha, hb = conduction_geometry(grid)
        self.cond_a = self.active_of_full[ca]
        self.cond_b = self.active_of_full[cb]
        self.cond_ha = ha
        self.cond_hb = hb

        (self.indptr, self.indices, self.diag_pos,
         self.pos_ab, self.pos_ba) = block_pattern_from_faces(
            self.ncell, self.face_a, self.face_b)

        # conduction faces may include faces sealed to flow; map them to
        # pattern slots as well (same cell pairs superset check)
        key = {}
        for f in range(len(self.face_a)):
            key[(self.face_a[f], self.face_b[f])] = (self.pos_ab[f],
                                                     self.pos_ba[f])
        cond_slots_ab = np.empty(len(self.cond_a), dtype=np.int64)
        cond_slots_ba = np.empty(len(self.cond_a), dtype=np.int64)
        cond_keep = np.ones(len(self.cond_a), dtype=bool)
        for f in range(len(self.cond_a)):
            pair = key.get((self.cond_a[f], self.cond_b[f]))
            if pair is None:
                cond_keep[f] = False
            else:
                cond_slots_ab[f], cond_slots_ba[f] = pair
        # conduction through flow-sealed faces still happens; extend the
        # pattern only when such faces exist
        if not cond_keep.all():
            extra_a = self.cond_a[~cond_keep]
            extra_b = self.cond_b[~cond_keep]
            all_a = np.concatenate([self.face_a, extra_a])
            all_b = np.concatenate([self.face_b, extra_b])
            (self.indptr, self.indices, self.diag_pos,
             pos_ab_all, pos_ba_all) = block_pattern_from_faces(
                self.ncell, all_a, all_b)
            self.pos_ab = pos_ab_all[:len(self.face_a)]
            self.pos_ba = pos_ba_all[:len(self.face_a)]
            cond_slots_ab[~cond_keep] = pos_ab_all[len(self.face_a):]
            cond_slots_ba[~cond_keep] = pos_ba_all[len(self.face_a):]
        self.cond_ab = cond_slots_ab
        self.cond_ba = cond_slots_ba

        self.heat_loss = heat_loss
        nz = grid.nz
        k_of = self.active // (grid.nx * grid.ny)
        self.top_cells = np.flatnonzero(k_of == 0)
        self.bot_cells = np.flatnonzero(k_of == nz - 1)
        self.area_xy = (grid.dx * grid.dy)[self.active]

        # gas-capable components in gas-phase order: water, light oils, NCG
        self.gas_comps = ([pset.water]
                          + [c for c in pset.oils if c.klass == P.LIGHT]
                          + list(pset.ncgs))
        self.light_idx = [i for i, c in enumerate(pset.oils)
                          if c.klass == P.LIGHT]

    @property
    def nwell(self):
        return len(self.wells)

    def perf_active_cells(self, well):
        return np.array([self.active_of_full[p.cell] for p in well.perfs],
                        dtype=np.int64)


# ----------------------------------------------------------------------
# state <-> unknown vector
# ----------------------------------------------------------------------

def pack_unknowns(model, state):
    lay = model.layout
    u = np.empty((model.ncell, lay.nb))
    u[:, lay.IP] = state.p
    u[:, lay.IT] = state.T
    u[:, lay.ISW] = state.Sw
    u[:, lay.ISG] = state.Sg
    for c in range(lay.no - 1):
        u[:, lay.ix(c)] = state.x[:, c]
    for j in range(lay.ncg):
        u[:, lay.iy(j)] = state.y[:, j]
    return u


def unpack_unknowns(model, state, u):
    lay = model.layout
    state.p = u[:, lay.IP].copy()
    state.T = u[:, lay.IT].copy()
    state.Sw = u[:, lay.ISW].copy()
    state.Sg = u[:, lay.ISG].copy()
    for c in range(lay.no - 1):
        state.x[:, c] = u[:, lay.ix(c)]
    state.x[:, -1] = 1.0 - state.x[:, :-1].sum(axis=1) if lay.no > 1 \
        else 1.0
    for j in range(lay.ncg):
        state.y[:, j] = u[:, lay.iy(j)]
    return state


# ----------------------------------------------------------------------
# property bundle evaluation
# ----------------------------------------------------------------------

class CellProps:
    """Phase/rock properties of every cell, optionally dual-seeded."""

    __slots__ = (
        "p", "T", "Sw", "Sg", "So", "x", "y", "rho_w", "rho_o", "rho_g",
        "mu_w", "mu_o", "mu_g", "krw", "kro", "krg", "pcow", "pcog",
        "H_w", "H_o", "H_g", "U_w", "U_o", "U_g", "U_r", "phi", "phi_rock",
        "kt", "gamma_w", "gamma_o", "gamma_g", "y_all", "y_sum", "mob_w",
        "mob_o", "mob_g",
    )


def eval_cell_props(model, p, T, Sw, Sg, x, y):
    """Evaluate the full property stack; inputs may be Duals.

    ``x`` is a list of per-oil-component fractions (length no, the last
    one already eliminated by the caller), ``y`` the NCG fractions.
    """
    pset = model.pset
    lay = model.layout
    cp = CellProps()
    cp.p, cp.T, cp.Sw, cp.Sg = p, T, Sw, Sg
    So = 1.0 - Sw - Sg
    cp.So = So
    cp.x, cp.y = x, y
    w = pset.water
    eps = pset.per.eps
    t_r = units.t_abs(T)

    # gas mole fractions: water and light oils from pseudo K-values
    y_all = [P.pseudo_k(P.k_value(p, T, w.kv), Sw, eps)]
    for i in model.light_idx:
        comp = pset.oils[i]
        y_all.append(P.pseudo_k(P.k_value(p, T, comp.kv), So, eps) * x[i])
    y_all.extend(y)
    cp.y_all = y_all
    y_sum = D.stack_sum(y_all) if y_all else 0.0 * Sw
    cp.y_sum = y_sum

    # normalized gas composition for intensive gas-phase properties
    denom = D.maximum(y_sum, 1e-8)
    y_norm = [yi / denom for yi in y_all]

    cp.rho_w = P.liquid_component_density(w, p, T)
    cp.rho_o = P.oil_phase_density(pset.oils, x, p, T)
    tc_r = [units.t_abs(c.tcrit) for c in model.gas_comps]
    pc = [c.pcrit for c in model.gas_comps]
    if pset.ideal_gas:
        cp.rho_g = P.gas_phase_density(p, t_r, 1.0)
    else:
        z = P.rk_z_factor(p, t_r, y_norm, tc_r, pc)
        cp.rho_g = P.gas_phase_density(p, t_r, z)

    cp.mu_w = P.water_viscosity(pset, T)
    cp.mu_o = P.oil_phase_viscosity(pset.oils, x, t_r)
    cp.mu_g = P.gas_phase_viscosity(pset, T, y_norm, model.gas_comps)

    method = pset.interp_method
    cp.krw, cp.kro, cp.krg = P.relative_permeabilities(
        Sw, Sg, pset.relperm, method)
    cp.pcow, cp.pcog = P.capillary_pressures(Sw, Sg, pset.relperm, method)
    cp.mob_w = cp.krw / cp.mu_w
    cp.mob_o = cp.kro / cp.mu_o
    cp.mob_g = cp.krg / cp.mu_g

    cp.H_w, cp.H_o, cp.H_g = P.phase_enthalpies(
        pset, p, T, x, y_norm, model.gas_comps)
    cp.U_w = P.internal_energy(cp.H_w, p, cp.rho_w)
    cp.U_o = P.internal_energy(cp.H_o, p, cp.rho_o)
    cp.U_g = P.internal_energy(cp.H_g, p, cp.rho_g)
    cp.U_r = P.rock_internal_energy(pset.rock, T, pset.t_ref_enthalpy)

    cp.phi = P.porosity(model.phi_ref, p, T, pset.rock)
    if pset.rock.volume_rule == "rock-constant":
        cp.phi_rock = model.phi_ref
    else:
        cp.phi_rock = cp.phi
    cp.kt = P.thermal_conductivity(Sw, So, Sg, cp.phi, pset.rock)

    mw_o = D.stack_sum([x[i] * pset.oils[i].mw for i in range(lay.no)])
    mw_g = D.stack_sum([y_norm[i] * model.gas_comps[i].mw
                        for i in range(len(model.gas_comps))])
    cp.gamma_w = cp.rho_w * w.mw * units.LB_FT3_TO_PSI_FT
    cp.gamma_o = cp.rho_o * mw_o * units.LB_FT3_TO_PSI_FT
    cp.gamma_g = cp.rho_g * mw_g * units.LB_FT3_TO_PSI_FT
    return cp


def seeded_props(model, state):
    """Cell props with each cell's own unknowns as seed directions."""
    lay = model.layout
    nb = lay.nb
    p = D.seed(state.p, nb, lay.IP)
    T = D.seed(state.T, nb, lay.IT)
    Sw = D.seed(state.Sw, nb, lay.ISW)
    Sg = D.seed(state.Sg, nb, lay.ISG)
    x = []
    for c in range(lay.no - 1):
        x.append(D.seed(state.x[:, c], nb, lay.ix(c)))
    if lay.no > 0:
        if lay.no == 1:
            x = [1.0 + 0.0 * Sw]
        else:
            last = 1.0 - D.stack_sum(x)
            x = x + [last]
    y = [D.seed(state.y[:, j], nb, lay.iy(j)) for j in range(lay.ncg)]
    return eval_cell_props(model, p, T, Sw, Sg, x, y)


def value_props(model, state):
    lay = model.layout
    x = [state.x[:, c] for c in range(lay.no)]
    y = [state.y[:, j] for j in range(lay.ncg)]
    return eval_cell_props(model, state.p, state.T, state.Sw, state.Sg, x, y)


# ----------------------------------------------------------------------
# accumulation terms
# ----------------------------------------------------------------------

def accumulation_rows(model, cp):
    """Per-cell conserved quantities in equation order (list of nb-1
    entries: components then energy)."""
    lay = model.layout
    pset = model.pset
    vphi = model.vb * cp.phi
    rows = []
    # water: liquid water plus water vapor
    m_w = vphi * (cp.rho_w * cp.Sw + cp.rho_g * cp.Sg * cp.y_all[0])
    rows.append(m_w)
    gas_slot = {}
    for pos, i in enumerate(model.light_idx):
        gas_slot[i] = 1 + pos
    for c in range(lay.no):
        m = vphi * (cp.rho_o * cp.So * cp.x[c])
        if c in gas_slot:
            m = m + vphi * (cp.rho_g * cp.Sg * cp.y_all[gas_slot[c]])
        rows.append(m)
    n_light = len(model.light_idx)
    for j in range(lay.ncg):
        rows.append(vphi * (cp.rho_g * cp.Sg * cp.y_all[1 + n_light + j]))
    energy = (vphi * (cp.rho_w * cp.Sw * cp.U_w + cp.rho_o * cp.So * cp.U_o
                      + cp.rho_g * cp.Sg * cp.U_g)
              + model.vb * (1.0 - cp.phi_rock) * cp.U_r)
    rows.append(energy)
    return rows


def accumulation_values(model, state):
    rows = accumulation_rows(model, value_props(model, state))
    return np.stack([np.asarray(r) for r in rows], axis=1)


# ----------------------------------------------------------------------
# heat loss (Vinsome-style semi-analytic overburden/underburden model)
# ----------------------------------------------------------------------

def heat_loss_rate(theta_f, theta_old, I_old, dt, t_end, conductivity,
                   heat_capacity):
    """Instantaneous loss per unit area and the profile coefficient p.

    The cap-rock temperature profile (theta_f + p xi + q xi^2) e^(-xi/d)
    is fitted so stored energy and the interface conduction equation are
    both honored; d grows like sqrt(alpha t)/2.
    """
    alpha = conductivity / heat_capacity
    d = np.sqrt(alpha * max(t_end, 1e-12)) / 2.0
    adt = alpha * dt
    p_fit = (I_old + adt * theta_f / d
             - d ** 3 * (theta_f - theta_old) / adt) / (3.0 * d * d + adt)
    q_rate = conductivity * (theta_f / d - p_fit)
    return q_rate, p_fit, d


def advance_heat_loss(model, state, T_new):
    """Update the per-interface history after an accepted step."""
    cfg = model.heat_loss
    if cfg is None:
        return
    dt_days = state.t_pending_dt if hasattr(state, "t_pending_dt") else None
    raise AssemblyError("use advance_heat_loss_explicit")


def advance_heat_loss_explicit(model, state, T_new, dt, t_end):
    cfg = model.heat_loss
    if cfg is None:
        return
    alpha = cfg.conductivity / cfg.heat_capacity
    for side, cells in ((0, model.top_cells), (1, model.bot_cells)):
        theta_f = T_new[cells] - cfg.t_initial[cells]
        q, p_fit, d = heat_loss_rate(
            theta_f, state.hl_theta[cells, side], state.hl_I[cells, side],
            dt, t_end, cfg.conductivity, cfg.heat_capacity)
        q_fit = 0.5 * ((theta_f - state.hl_theta[cells, side]) / (alpha * dt)
                       - theta_f / d ** 2 + 2.0 * p_fit / d)
        state.hl_I[cells, side] = (theta_f * d + p_fit * d * d
                                   + 2.0 * q_fit * d ** 3)
        state.hl_theta[cells, side] = theta_f


# ----------------------------------------------------------------------
# phase change
# ----------------------------------------------------------------------

GAS_APPEAR_SG = 1.0e-3


def phase_change_update(model, state):
    """Gas appearance/disappearance checks after a Newton update."""
    pset = model.pset
    lay = model.layout

    # disappearance: non-positive gas saturation
    vanish = state.gas & (state.Sg <= 0.0)
    if np.any(vanish):
        state.gas[vanish] = False
        state.Sg[vanish] = 0.0
        if lay.ncg:
            state.y[vanish, :] = 0.0

    # appearance: hypothetical gas composition exceeds unity
    absent = ~state.gas
    if np.any(absent):
        cp = value_props(model, state)
        y_sum = np.asarray(D.value(cp.y_sum))
        appear = absent & (y_sum > 1.0)
        if np.any(appear):
            state.gas[appear] = True
            state.Sg[appear] = GAS_APPEAR_SG
            if lay.ncg:
                # water/light-oil fractions come from K-values; NCG takes
                # the remaining gas capacity, split by prior weights
                n_light = len(model.light_idx)
                kv_sum = np.zeros(model.ncell)
                for arr in cp.y_all[:1 + n_light]:
                    kv_sum += np.asarray(D.value(arr))
                room = np.maximum(1.0 - kv_sum, 0.0)
                prior = state.y[appear, :]
                tot = prior.sum(axis=1, keepdims=True)
                share = np.where(tot > 0, prior / np.where(tot > 0, tot, 1.0),
                                 1.0 / max(lay.ncg, 1))
                state.y[appear, :] = room[appear][:, None] * share
    return state


# ----------------------------------------------------------------------
# assembly
# ----------------------------------------------------------------------

@dataclass
class Assembled:
    r_cells: np.ndarray          # (n, nb)
    r_well: np.ndarray           # (nw,)
    A: BlockMatrix | None
    well_measures: list          # per-well dict target -> value
    comp_well_rates: np.ndarray  # (nw, ncomp) molar rates into reservoir
    energy_well_rate: np.ndarray  # (nw,)
    heater_rate: np.ndarray      # (nw,)
    heat_loss_total: float = 0.0


def _scatter_face_jacobian(A, model, eq_rows, ders, nb):
    nf = ders.shape[0]
    emb_l = np.zeros((nf, nb, nb))
    emb_r = np.zeros((nf, nb, nb))
    emb_l[:, eq_rows, :] = ders[:, :, :nb]
    emb_r[:, eq_rows, :] = ders[:, :, nb:]
    np.add.at(A.data, model.diag_pos[model.face_a], emb_l)
    np.add.at(A.data, model.pos_ab, emb_r)
    np.add.at(A.data, model.diag_pos[model.face_b], -emb_r)
    np.add.at(A.data, model.pos_ba, -emb_l)


def assemble(model, state, acc_prev, dt, jac=True):
    """Residual (and Jacobian) of the implicit step equations.

    ``acc_prev`` are the conserved quantities at the previous time level
    (from :func:`accumulation_values`).  ``dt`` in days.
    """
    if dt <= 0:
        raise AssemblyError("dt must be positive")
    lay = model.layout
    nb = lay.nb
    n = model.ncell
    nw = model.nwell
    pset = model.pset

    cp = seeded_props(model, state) if jac else value_props(model, state)
    A = BlockMatrix.empty(n, nb, model.indptr, model.indices, nw) if jac \
        else None
    r = np.zeros((n, nb))
    r_well = np.zeros(nw)

    # ---------------- accumulation
    acc = accumulation_rows(model, cp)
    n_eq_bal = len(acc)           # components + energy
    for row, term in enumerate(acc):
        val = D.value(term)
        r[:, row] += (val - acc_prev[:, row]) / dt
        if jac:
            A.data[model.diag_pos, row, :] += D.deriv(term, nb) / dt

    # ---------------- phase constraint row
    cons = D.where(state.gas, cp.y_sum - 1.0, cp.Sg)
    r[:, lay.eq_cons] = D.value(cons)
    if jac:
        A.data[model.diag_pos, lay.eq_cons, :] = D.deriv(cons, nb)

    # ---------------- flux divergence
    if len(model.face_a):
        _face_fluxes(model, state, cp, r, A, jac)

    # ---------------- conduction
    _conduction(model, cp, r, A, jac)

    # ---------------- heat loss
    hl_total = 0.0
    if model.heat_loss is not None:
        hl_total = _heat_losses(model, state, cp, dt, r, A, jac)

    # ---------------- wells
    measures = []
    comp_rates = np.zeros((nw, n_eq_bal - 1))
    energy_rates = np.zeros(nw)
    heater_rates = np.zeros(nw)
    for iw, well in enumerate(model.wells):
        meas = _assemble_well(model, state, cp, iw, well, r, r_well, A, jac,
                              comp_rates, energy_rates, heater_rates)
        measures.append(meas)

    # ---------------- NCG rows in gas-absent cells pin y_j = 0
    if lay.ncg:
        absent = ~state.gas
        if np.any(absent):
            cells = np.flatnonzero(absent)
            for j in range(lay.ncg):
                row = lay.eq_ncg(j)
                r[cells, row] = state.y[cells, j]
                if jac:
                    for c in cells:
                        A.data[model.indptr[c]:model.indptr[c + 1], row, :] = 0.0
                        A.data[model.diag_pos[c], row, lay.iy(j)] = 1.0
                    A.wb[cells, row, :] = 0.0

    return Assembled(r, r_well, A, measures, comp_rates, energy_rates,
                     heater_rates, hl_total)


def _gather(arr, idx, offset, jac, width):
    """Gather cells ``idx`` of a cell-level Dual/array, lifting seeds."""
    part = arr[idx] if not np.isscalar(arr) else arr
    if jac and isinstance(part, D.Dual):
        return part.lift(width, offset)
    return part


def _face_fluxes(model, state, cp, r, A, jac):
    lay = model.layout
    nb = lay.nb
    fa, fb = model.face_a, model.face_b
    width = 2 * nb

    def side(arr, idx, offset):
        return _gather(arr, idx, offset, jac, width)

    zl = model.z[fa]
    zr = model.z[fb]
    tgeo = model.face_t

    p_l, p_r = side(cp.p, fa, 0), side(cp.p, fb, nb)
    pcow_l, pcow_r = side(cp.pcow, fa, 0), side(cp.pcow, fb, nb)
    pcog_l, pcog_r = side(cp.pcog, fa, 0), side(cp.pcog, fb, nb)

    phase_defs = []
    for phase, (pl, pr) in (("w", (p_l - pcow_l, p_r - pcow_r)),
                            ("o", (p_l, p_r)),
                            ("g", (p_l + pcog_l, p_r + pcog_r))):
        gam_l = side(getattr(cp, f"gamma_{phase}"), fa, 0)
        gam_r = side(getattr(cp, f"gamma_{phase}"), fb, nb)
        gam = 0.5 * (gam_l + gam_r)
        dphi = (pl - pr) - gam * (zl - zr)
        upwind = D.value(dphi) >= 0.0
        phase_defs.append((phase, dphi, upwind))

    # upstream-weighted molar phase flux carriers
    carriers = {}
    enth = {}
    for phase, dphi, up in phase_defs:
        mob = getattr(cp, f"mob_{phase}")
        rho = getattr(cp, f"rho_{phase}")
        mobrho_up = D.where(up, side(mob * rho, fa, 0),
                            side(mob * rho, fb, nb))
        carriers[phase] = units.DARCY_CF * tgeo * mobrho_up * dphi
        h = getattr(cp, f"H_{phase}")
        enth[phase] = D.where(up, side(h, fa, 0), side(h, fb, nb))

    def upstream_fraction(arr, up):
        return D.where(up, side(arr, fa, 0), side(arr, fb, nb))

    up_of = {phase: up for phase, _, up in phase_defs}

    rows = []
    flux_terms = []
    # water component: water phase plus water vapor in gas
    f_w = carriers["w"] + carriers["g"] * upstream_fraction(
        cp.y_all[0], up_of["g"])
    rows.append(lay.EQ_WATER)
    flux_terms.append(f_w)
    gas_slot = {}
    for posn, i in enumerate(model.light_idx):
        gas_slot[i] = 1 + posn
    for c in range(lay.no):
        term = carriers["o"] * upstream_fraction(cp.x[c], up_of["o"])
        if c in gas_slot:
            term = term + carriers["g"] * upstream_fraction(
                cp.y_all[gas_slot[c]], up_of["g"])
        rows.append(lay.eq_oil(c))
        flux_terms.append(term)
    n_light = len(model.light_idx)
    for j in range(lay.ncg):
        rows.append(lay.eq_ncg(j))
        flux_terms.append(carriers["g"] * upstream_fraction(
            cp.y_all[1 + n_light + j], up_of["g"]))
    f_e = (enth["w"] * carriers["w"] + enth["o"] * carriers["o"]
           + enth["g"] * carriers["g"])
    rows.append(lay.eq_energy)
    flux_terms.append(f_e)

    vals = np.stack([D.value(t) for t in flux_terms], axis=1)
    for k, row in enumerate(rows):
        np.add.at(r[:, row], fa, vals[:, k])
        np.add.at(r[:, row], fb, -vals[:, k])
    if jac:
        ders = np.stack([D.deriv(t, width) for t in flux_terms], axis=1)
        _scatter_face_jacobian(A, model, rows, ders, nb)


def _conduction(model, cp, r, A, jac):
    lay = model.layout
    nb = lay.nb
    ca, cb = model.cond_a, model.cond_b
    if not len(ca):
        return
    width = 2 * nb

    def side(arr, idx, offset):
        return _gather(arr, idx, offset, jac, width)

    kt_l = side(cp.kt, ca, 0) * model.cond_ha
    kt_r = side(cp.kt, cb, nb) * model.cond_hb
    denom = kt_l + kt_r
    cond = D.where(D.value(denom) > 0.0, kt_l * kt_r /
                   D.maximum(denom, 1e-30), 0.0 * denom)
    t_l = side(cp.T, ca, 0)
    t_r = side(cp.T, cb, nb)
    f = cond * (t_l - t_r)
    row = lay.eq_energy
    np.add.at(r[:, row], ca, D.value(f))
    np.add.at(r[:, row], cb, -D.value(f))
    if jac:
        ders = D.deriv(f, width)[:, None, :]
        dl = ders[:, :, :nb]
        dr = ders[:, :, nb:]
        np.add.at(A.data, model.diag_pos[ca], _row_embed(dl, row, nb))
        np.add.at(A.data, model.cond_ab, _row_embed(dr, row, nb))
        np.add.at(A.data, model.diag_pos[cb], -_row_embed(dr, row, nb))
        np.add.at(A.data, model.cond_ba, -_row_embed(dl, row, nb))


def _row_embed(d, row, nb):
    out = np.zeros((d.shape[0], nb, nb))
    out[:, row, :] = d[:, 0, :]
    return out


def _heat_losses(model, state, cp, dt, r, A, jac):
    cfg = model.heat_loss
    lay = model.layout
    total = 0.0
    t_end = state.t + dt
    for side_ix, cells in ((0, model.top_cells), (1, model.bot_cells)):
        if not len(cells):
            continue
        T_cells = cp.T[cells] if isinstance(cp.T, D.Dual) else cp.T[cells]
        theta_f = T_cells - cfg.t_initial[cells]
        q_area, _, _ = heat_loss_rate(
            theta_f, state.hl_theta[cells, side_ix],
            state.hl_I[cells, side_ix], dt, t_end,
            cfg.conductivity, cfg.heat_capacity)
        q = q_area * model.area_xy[cells]
        r[cells, lay.eq_energy] += D.value(q)
        total += float(np.sum(D.value(q)))
        if jac:
            A.data[model.diag_pos[cells], lay.eq_energy, :] += \
                D.deriv(q, lay.nb)
    return total


# ----------------------------------------------------------------------
# wells
# ----------------------------------------------------------------------

def _assemble_well(model, state, cp, iw, well, r, r_well, A, jac,
                   comp_rates, energy_rates, heater_rates):
    """Perforation terms plus the well constraint row."""
    lay = model.layout
    nb = lay.nb
    width = nb + 1        # + bottom-hole pressure seed
    pset = model.pset
    cells = model.perf_active_cells(well)
    npf = len(cells)

    if well.shut_in:
        r_well[iw] = 0.0
        if jac:
            A.ww[iw, iw] = 1.0
        return {"bhp": well.pbh}

    def lifted(arr):
        part = arr[cells]
        if jac and isinstance(part, D.Dual):
            return part.lift(width, 0)
        return part

    if jac:
        pbh = D.Dual(np.full(npf, state.pbh[iw]),
                     np.tile(np.eye(width)[-1], (npf, 1)))
    else:
        pbh = np.full(npf, state.pbh[iw])

    z = model.z[cells]
    dz = z - well.ref_depth
    wi = np.array([p.wi for p in well.perfs])
    open_mask = np.array([p.open for p in well.perfs])
    wi = wi * open_mask

    p_cell = lifted(cp.p)
    T_cell = lifted(cp.T)

    meas = {}
    rates_eq = [0.0] * (1 + lay.no + lay.ncg)   # molar source per component
    energy_src = 0.0

    if well.kind == "injector":
        h_stream = W.injection_enthalpy(pset, well.qual, well.tinjw)
        # hydrostatic correction via the flashed-stream density at pbh
        _, _, _, gamma0 = W.perf_injection_state(pset, h_stream, pbh)
        p_wb = pbh + gamma0 * dz
        mob_t = lifted(cp.mob_w + cp.mob_o + cp.mob_g)
        if well.weight == "explicit" and well.explicit_mobility is not None:
            mob_t = well.explicit_mobility
        _, _, rho_mix, _ = W.perf_injection_state(pset, h_stream, p_wb)
        dp = p_wb - lifted(cp.p)
        vol = W.injector_volumetric(wi, mob_t, dp,
                                    unweighted=well.unweighted)
        q_w = W.molar_rate(vol, rho_mix)        # lbmol/day, >= 0
        rates_eq[lay.EQ_WATER] = q_w
        energy_src = q_w * h_stream
        steam_term = well.qual * q_w            # vapor part, CWE-reported
        q_wat_total = float(np.sum(D.value(q_w)))
        meas["stw"] = float(D.value(W.cwe_rate(pset, q_wat_total)))
        meas["bhw"] = float(np.sum(D.value(vol)))
        meas["sto"] = meas["stg"] = meas["bho"] = meas["bhg"] = 0.0
        meas["steam"] = well.qual * meas["stw"]
        phase_vols = {"w": vol, "o": 0.0 * vol, "g": 0.0 * vol}
    else:
        # produced-mixture gravity from the perforation's own cell
        mob_w = lifted(cp.mob_w)
        mob_o = lifted(cp.mob_o)
        mob_g = lifted(cp.mob_g)
        if well.weight == "explicit" and well.explicit_mobility is not None:
            mob_w, mob_o, mob_g = well.explicit_mobility
        mob_sum = mob_w + mob_o + mob_g
        gam = (mob_w * lifted(cp.gamma_w) + mob_o * lifted(cp.gamma_o)
               + mob_g * lifted(cp.gamma_g)) / D.maximum(mob_sum, 1e-12)
        p_wb = pbh + gam * dz
        vol_w = W.producer_phase_volumetric(wi, mob_w,
                                            p_wb - lifted(cp.p - cp.pcow))
        vol_o = W.producer_phase_volumetric(wi, mob_o, p_wb - lifted(cp.p))
        vol_g = W.producer_phase_volumetric(wi, mob_g,
                                            p_wb - lifted(cp.p + cp.pcog))
        q_w = W.molar_rate(vol_w, lifted(cp.rho_w))
        q_o = W.molar_rate(vol_o, lifted(cp.rho_o))
        q_g = W.molar_rate(vol_g, lifted(cp.rho_g))

        y_all = [lifted(arr) for arr in cp.y_all]
        x_all = [lifted(cp.x[c]) for c in range(lay.no)]
        rates_eq[lay.EQ_WATER] = q_w + q_g * y_all[0]
        gas_slot = {}
        for posn, i in enumerate(model.light_idx):
            gas_slot[i] = 1 + posn
        for c in range(lay.no):
            term = q_o * x_all[c]
            if c in gas_slot:
                term = term + q_g * y_all[gas_slot[c]]
            rates_eq[lay.eq_oil(c)] = term
        n_light = len(model.light_idx)
        for j in range(lay.ncg):
            rates_eq[lay.eq_ncg(j)] = q_g * y_all[1 + n_light + j]
        energy_src = (q_w * lifted(cp.H_w) + q_o * lifted(cp.H_o)
                      + q_g * lifted(cp.H_g))
        steam_term = q_g * y_all[0]             # live steam leaving
        phase_vols = {"w": vol_w, "o": vol_o, "g": vol_g}

        comp_molar = {}
        comp_molar[pset.water.name] = -float(np.sum(D.value(
            rates_eq[lay.EQ_WATER])))
        for c in range(lay.no):
            comp_molar[pset.oils[c].name] = -float(np.sum(D.value(
                rates_eq[lay.eq_oil(c)])))
        for j in range(lay.ncg):
            comp_molar[pset.ncgs[j].name] = -float(np.sum(D.value(
                rates_eq[lay.eq_ncg(j)])))
        stw, sto, stg = W.surface_flash_segregated(pset, comp_molar)
        meas["stw"], meas["sto"], meas["stg"] = float(stw), float(sto), float(stg)
        meas["bhw"] = -float(np.sum(D.value(vol_w)))
        meas["bho"] = -float(np.sum(D.value(vol_o)))
        meas["bhg"] = -float(np.sum(D.value(vol_g)))
        live_steam = -float(np.sum(D.value(q_g * y_all[0])))
        meas["steam"] = float(D.value(W.cwe_rate(pset, live_steam)))

    meas["stl"] = meas["stw"] + meas["sto"]
    meas["stf"] = meas["stl"] + meas["stg"]
    meas["bhl"] = meas["bhw"] + meas["bho"]
    meas["bhf"] = meas["bhl"] + meas["bhg"]
    meas["bhp"] = float(state.pbh[iw])

    # heater source terms (HTWELL per perforation; box heaters per cell)
    heater_q = _heater_terms(model, state, cp, well, cells, T_cell, r, A, jac)
    heater_rates[iw] = heater_q

    # subcool measure
    w_kv = pset.water.kv
    if any(op.target == "steamtrap" for op in well.operations) or \
            well.steamtrap_default is not None:
        subcool, trap_idx = _subcool(model, state, well, cells,
                                     np.asarray(D.value(p_wb)), cp)
        meas["steamtrap"] = subcool
    else:
        trap_idx = None

    # scatter perforation sources into cell equations (sources subtract)
    for row, term in enumerate(rates_eq):
        if isinstance(term, float):
            continue
        vals = D.value(term)
        np.add.at(r[:, row], cells, -vals)
        comp_rates[iw, row] = float(np.sum(vals))
        if jac:
            ders = D.deriv(term, width)
            np.add.at(A.data, model.diag_pos[cells],
                      -_row_embed(ders[:, None, :nb], row, nb))
            np.add.at(A.wb[:, row, iw], cells, -ders[:, nb])

    ev = D.value(energy_src)
    np.add.at(r[:, lay.eq_energy], cells, -ev)
    energy_rates[iw] = float(np.sum(ev))
    if jac:
        ders = D.deriv(energy_src, width)
        np.add.at(A.data, model.diag_pos[cells],
                  -_row_embed(ders[:, None, :nb], lay.eq_energy, nb))
        np.add.at(A.wb[:, lay.eq_energy, iw], cells, -ders[:, nb])

    # ------------- well constraint row
    op = well.operations[well.active_op]
    if op.target == "bhp":
        r_well[iw] = state.pbh[iw] - op.value
        if jac:
            A.ww[iw, iw] = 1.0
    elif op.target == "steamtrap":
        resid = _subcool_residual(model, state, well, cells, p_wb, cp,
                                  trap_idx, jac, width)
        r_well[iw] = float(D.value(resid))
        if jac:
            ders = D.deriv(resid, width)
            A.bw[iw, cells[trap_idx], :] += ders[:nb]
            A.ww[iw, iw] += ders[nb]
    else:
        resid = _rate_residual(model, well, op, rates_eq, phase_vols,
                               steam_term, pset, lay)
        if isinstance(resid, D.Dual):
            r_well[iw] = float(np.sum(resid.val)) - op.value
            if jac:
                ders = resid.der
                np.add.at(A.bw[iw], cells, ders[:, :nb])
                A.ww[iw, iw] += float(np.sum(ders[:, nb]))
        else:
            r_well[iw] = float(np.sum(resid)) - op.value
            if jac and A.ww[iw, iw] == 0.0:
                A.ww[iw, iw] = 1e-12
    return meas


def _rate_residual(model, well, op, rates_eq, phase_vols, steam_term,
                   pset, lay):
    """Rate measure matching op.target, sign-positive, Dual-valued."""
    sign = 1.0 if well.kind == "injector" else -1.0
    t = op.target
    if t in ("bhw", "bho", "bhg", "bhl", "bhf"):
        sel = {"bhw": ["w"], "bho": ["o"], "bhg": ["g"],
               "bhl": ["w", "o"], "bhf": ["w", "o", "g"]}[t]
        return sign * D.stack_sum([phase_vols[s] for s in sel])
    if t == "steam":
        # cold-water equivalent of the vapor stream
        return sign * W.cwe_rate(pset, steam_term)
    if t in ("stw", "sto", "stg", "stl", "stf"):
        w = pset.water
        rho_w_std = P.liquid_component_density(
            w, units.STD_PRESSURE, units.STD_TEMPERATURE)
        stw = sign * rates_eq[lay.EQ_WATER] / rho_w_std / units.CF_PER_BBL
        sto = 0.0
        for c in range(lay.no):
            rho_std = P.liquid_component_density(
                pset.oils[c], units.STD_PRESSURE, units.STD_TEMPERATURE)
            sto = sto + sign * rates_eq[lay.eq_oil(c)] / rho_std / units.CF_PER_BBL
        v_molar = (units.R_GAS * units.t_abs(units.STD_TEMPERATURE)
                   / units.STD_PRESSURE)
        stg = 0.0
        for j in range(lay.ncg):
            stg = stg + sign * rates_eq[lay.eq_ncg(j)] * v_molar
        if t == "stw":
            return stw
        if t == "sto":
            return sto
        if t == "stg":
            return stg
        if t == "stl":
            return stw + sto
        return stw + sto + stg
    raise AssemblyError(f"unhandled rate target {t!r}")


def _subcool(model, state, well, cells, p_wb_vals, cp):
    """Min subcool margin over perforations (values only)."""
    w_kv = model.pset.water.kv
    t_sat = W.saturation_temperature(p_wb_vals, w_kv)
    T_cells = np.asarray(D.value(cp.T))[cells]
    margins = np.atleast_1d(t_sat) - T_cells
    cs = np.array([p.steamtrap_c if p.steamtrap_c is not None
                   else (well.steamtrap_default or 0.0)
                   for p in well.perfs])
    rel = margins - cs
    idx = int(np.argmin(rel))
    return float(rel[idx]), idx


def _subcool_residual(model, state, well, cells, p_wb, cp, trap_idx, jac,
                      width):
    w_kv = model.pset.water.kv
    p_sel = p_wb[trap_idx] if isinstance(p_wb, D.Dual) else \
        np.asarray(p_wb)[trap_idx]
    t_sat = W.saturation_temperature(p_sel, w_kv)
    T_sel = cp.T[cells[trap_idx]]
    if jac and isinstance(T_sel, D.Dual):
        T_sel = T_sel.lift(width, 0)
    c = well.perfs[trap_idx].steamtrap_c
    if c is None:
        c = well.steamtrap_default or 0.0
    return t_sat - T_sel - c


# ----------------------------------------------------------------------
# initial conditions
# ----------------------------------------------------------------------

def apply_initial_conditions(model, mode="explicit", p=None, T=None, Sw=None,
                             Sg=None, x=None, y=None, ref_depth=None,
                             ref_pressure=None, gravity=True):
    """Build the initial State.

    ``explicit`` takes per-cell (or scalar) fields directly; ``gravity``
    integrates pressure away from a reference depth using the local
    saturation-weighted phase gradient, with temperature/saturations/
    compositions still taken from the deck.
    """
    n = model.ncell
    lay = model.layout

    def field_of(v, name):
        if v is None:
            raise AssemblyError(f"initial condition missing {name!r}")
        arr = np.asarray(v, dtype=float)
        if arr.ndim == 0:
            return np.full(n, float(arr))
        if arr.size == model.grid.ncell:
            return arr[model.active].astype(float)
        if arr.size == n:
            return arr.astype(float)
        raise AssemblyError(f"initial field {name!r} has wrong length")

    T0 = field_of(T, "temp")
    Sw0 = field_of(Sw, "sw")
    Sg0 = field_of(Sg, "sg") if Sg is not None else np.zeros(n)
    x_list = np.asarray(x if x is not None else [1.0], dtype=float)
    if len(x_list) != lay.no:
        raise AssemblyError("oil mole fraction count mismatch")
    if lay.no and abs(x_list.sum() - 1.0) > 1e-8:
        raise AssemblyError("initial oil fractions must sum to 1")
    y_list = np.asarray(y if y is not None else [], dtype=float)
    if len(y_list) != lay.ncg:
        raise AssemblyError("NCG gas fraction count mismatch")

    x0 = np.tile(x_list, (n, 1)) if lay.no else np.zeros((n, 0))
    y0 = np.tile(y_list, (n, 1)) if lay.ncg else np.zeros((n, 0))

    if mode == "explicit":
        p0 = field_of(p, "pres")
    elif mode == "gravity":
        if ref_depth is None or ref_pressure is None:
            raise AssemblyError("gravity init needs refdepth and refpres")
        p0 = np.full(n, float(ref_pressure))
        if gravity:
            for _ in range(3):  # fixed-point on the density profile
                st = State(p0, T0, Sw0, Sg0, x0.copy(), y0.copy(),
                           Sg0 > 0.0, np.zeros(model.nwell))
                cp = value_props(model, st)
                gam = (np.asarray(D.value(cp.gamma_w)) * Sw0
                       + np.asarray(D.value(cp.gamma_o)) * st.so()
                       + np.asarray(D.value(cp.gamma_g)) * Sg0)
                p0 = ref_pressure + gam * (model.z - ref_depth)
    else:
        raise AssemblyError(f"unknown initial-condition mode {mode!r}")

    state = State(p0, T0, Sw0, Sg0, x0, y0, Sg0 > 0.0,
                  np.zeros(model.nwell))
    for iw, well in enumerate(model.wells):
        cell0 = model.active_of_full[well.perfs[0].cell]
        state.pbh[iw] = p0[cell0] + (50.0 if well.kind == "injector"
                                     else -5.0)
        well.pbh = state.pbh[iw]
    return state


def _heater_terms(model, state, cp, well, cells, T_cell, r, A, jac):
    """Constant/convective box heaters and the HTWELL perforation model."""
    lay = model.layout
    nb = lay.nb
    width = nb + 1
    total = 0.0

    def add_energy(cell_ids, q):
        nonlocal total
        vals = np.atleast_1d(D.value(q))
        np.add.at(r[:, lay.eq_energy], cell_ids, -vals)
        total += float(np.sum(vals))
        if jac and isinstance(q, D.Dual):
            ders = q.der
            if ders.shape[-1] == width:
                ders = ders[..., :nb]
            np.add.at(A.data, model.diag_pos[cell_ids],
                      -_row_embed(ders[:, None, :], lay.eq_energy, nb))

    for full_cells, rate in well.heater.constant:
        ids = model.active_of_full[full_cells]
        ids = ids[ids >= 0]
        if len(ids):
            add_energy(ids, np.full(len(ids), rate))

    for full_cells, uhtr, tmpset in well.heater.convective:
        ids = model.active_of_full[full_cells]
        ids = ids[ids >= 0]
        if not len(ids):
            continue
        T_ids = cp.T[ids]
        q = W.convective_heat_rate(uhtr, tmpset, T_ids)
        add_energy(ids, q)

    if well.heater.mode != "off":
        lengths = np.array([p.length for p in well.perfs])
        lw = lengths.sum()
        his = np.array([p.heat_index for p in well.perfs])
        q = W.htwell_rate(well.heater, his, lengths / lw, T_cell)
        add_energy(cells, q)
    return total
