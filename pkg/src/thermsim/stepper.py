"""Newton time stepping: update limiting, well constraint switching,
adaptive dt with cuts, schedule execution and restart files."""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import assembly as ASM
from . import dual as D
from .linsol import CPRPreconditioner, decouple, krylov_solve
from .grid import partition, well_weights


class StepError(Exception):
    pass


@dataclass
class RunStats:
    steps: int = 0
    cuts: int = 0
    newtons: int = 0
    linears: int = 0
    wall_seconds: float = 0.0
    step_log: list = field(default_factory=list)

    @property
    def avg_newton(self):
        return self.newtons / max(self.steps, 1)

    @property
    def avg_linear(self):
        return self.linears / max(self.newtons, 1)


# ----------------------------------------------------------------------
# update limiting
# ----------------------------------------------------------------------

def limit_update(model, state, delta, numerics, mode="modified-appleyard"):
    """Scale the Newton update so per-unknown changes stay within limits.

    Each cell block is scaled as one unit (preserving the Newton
    direction locally); appleyard modes additionally truncate gas
    saturation changes that cross the phase endpoint.
    """
    lay = model.layout
    d = delta.reshape(model.ncell, lay.nb)
    limits = np.full(lay.nb, numerics.max_dx)
    limits[lay.IP] = numerics.max_dp
    limits[lay.IT] = numerics.max_dt_change
    limits[lay.ISW] = numerics.max_ds
    limits[lay.ISG] = numerics.max_ds
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(d) / limits
    worst = ratio.max(axis=1)
    scale = np.where(worst > 1.0, 1.0 / np.maximum(worst, 1e-300), 1.0)
    d = d * scale[:, None]

    if mode in ("appleyard", "modified-appleyard"):
        # truncate gas-saturation updates at the phase endpoint
        sg_new = state.Sg + d[:, lay.ISG]
        crossing = state.gas & (sg_new < 0.0)
        d[crossing, lay.ISG] = -state.Sg[crossing]
        if mode == "appleyard":
            sw_new = state.Sw + d[:, lay.ISW]
            low = sw_new < 0.0
            d[low, lay.ISW] = -state.Sw[low]
    return d.reshape(delta.shape)


def _clamp_state(state):
    state.p = np.maximum(state.p, 1e-2)
    state.T = np.clip(state.T, 33.0, 704.0)
    state.Sw = np.clip(state.Sw, 1e-9, 1.0)
    state.Sg = np.clip(state.Sg, 0.0 if not state.gas.any() else -0.2, 1.0)
    state.Sg[~state.gas] = np.maximum(state.Sg[~state.gas], 0.0)
    np.clip(state.x, 0.0, 1.0, out=state.x)
    if state.x.shape[1]:
        tot = state.x.sum(axis=1, keepdims=True)
        state.x /= np.where(tot > 0, tot, 1.0)
    np.clip(state.y, 0.0, 1.0, out=state.y)
    state.pbh = np.maximum(state.pbh, 1e-2)
    return state


# ----------------------------------------------------------------------
# well constraint switching
# ----------------------------------------------------------------------

def select_well_constraints(model, state, measures):
    """Switch violated min/max bounds to equality; returns switch count."""
    switched = 0
    for iw, well in enumerate(model.wells):
        if well.shut_in or len(well.operations) < 2:
            continue
        meas = measures[iw]
        cur = well.active_op
        for k, op in enumerate(well.operations):
            if k == cur:
                continue
            if op.target == "steamtrap":
                violated = meas.get("steamtrap", 1.0) < -1e-3
            else:
                v = meas.get(op.target)
                if v is None:
                    continue
                tol = 1e-6 * max(1.0, abs(op.value))
                if op.specifier == "min":
                    violated = v < op.value - tol
                elif op.specifier == "max":
                    violated = v > op.value + tol
                else:
                    continue
            if violated:
                well.active_op = k
                if op.target == "bhp":
                    state.pbh[iw] = op.value
                switched += 1
                break
    return switched


# ----------------------------------------------------------------------
# Newton
# ----------------------------------------------------------------------

def _residual_norms(model, r_cells, r_well):
    lay = model.layout
    ncomp = 1 + lay.no + lay.ncg
    comp = float(np.linalg.norm(r_cells[:, :ncomp]))
    energy = float(np.linalg.norm(r_cells[:, lay.eq_energy]))
    cons = float(np.linalg.norm(r_cells[:, lay.eq_cons]))
    wellr = float(np.linalg.norm(r_well)) if len(r_well) else 0.0
    return np.array([comp, energy, cons, wellr])


ABS_FLOOR = 1e-12


def _class_floors(model, acc_prev, dt):
    """Attainable absolute residual floors per equation class.

    Rounding noise in the residual scales with the magnitude of the
    accumulation terms being differenced over dt.
    """
    lay = model.layout
    ncomp = 1 + lay.no + lay.ncg
    comp = 1e-14 * np.linalg.norm(acc_prev[:, :ncomp]) / dt
    energy = 1e-14 * np.linalg.norm(acc_prev[:, ncomp]) / dt
    return np.array([max(comp, ABS_FLOOR), max(energy, ABS_FLOOR),
                     ABS_FLOOR, 1e-9])


def newton_step(model, state, dt, numerics, workspace=None):
    """One implicit step attempt; returns (state', converged, info)."""
    ws = workspace if workspace is not None else {}
    acc_prev = ASM.accumulation_values(model, state)
    floors = _class_floors(model, acc_prev, dt)
    st = state.copy()
    ref = None
    iters = 0
    linears = 0
    last = None
    converged = False
    switch_budget = 4 * max((len(w.operations) for w in model.wells),
                            default=1)

    for iters in range(1, numerics.maxnew + 1):
        out = ASM.assemble(model, st, acc_prev, dt, jac=True)
        if select_well_constraints(model, st, out.well_measures):
            switch_budget -= 1
            if switch_budget <= 0:
                for well in model.wells:
                    if not well.shut_in:
                        well.shut_in = True
                raise StepError("well constraints mutually infeasible; "
                                "wells shut in")
            out = ASM.assemble(model, st, acc_prev, dt, jac=True)
        if not (np.all(np.isfinite(out.r_cells))
                and np.all(np.isfinite(out.r_well))
                and np.all(np.isfinite(out.A.data))):
            raise StepError("non-finite residual or Jacobian")
        norms = _residual_norms(model, out.r_cells, out.r_well)
        if ref is None:
            ref = np.maximum(norms, floors)
        rel = norms / ref
        if np.all((rel <= numerics.tolnew) | (norms <= floors)):
            converged = True
            last = out
            iters -= 1  # this assembly only confirmed convergence
            break

        A, rc, rw = decouple(out.A, -out.r_cells, -out.r_well,
                             numerics.decouple)
        rhs = np.concatenate([rc.reshape(-1), rw])
        owner = ws.get("owner")
        if owner is None:
            owner = _row_owner(model, numerics)
            ws["owner"] = owner
        pc = CPRPreconditioner(
            A, kind=numerics.pc, owner=owner, overlap=numerics.overlap,
            local_solver=numerics.ras_solver, iluk_level=numerics.iluk_level,
            ilut_p=numerics.ilut_p, ilut_tol=numerics.ilut_tol,
            symbolic_cache=ws.get("symbolic"))
        ws["symbolic"] = pc.symbolic_cache
        res = krylov_solve(A, rhs, method=numerics.solver, pc=pc,
                           tol=numerics.tolsol, maxit=numerics.maxsol)
        linears += max(res.iterations, 1)
        if not np.all(np.isfinite(res.x)):
            raise StepError("linear solve returned non-finite update")
        if res.status == "breakdown":
            raise StepError("linear solver breakdown")

        nb = model.layout.nb
        ncell_dof = model.ncell * nb
        du = limit_update(model, st, res.x[:ncell_dof], numerics)
        u0 = ASM.pack_unknowns(model, st).reshape(-1)
        pbh0 = st.pbh.copy()
        cur = float(np.max(norms / ref))
        # backtracking breaks upstream-switch chatter; a fresh constraint
        # selection legitimately jumps the residual, so skip it then
        scale = 1.0
        for bt in range(4):
            ASM.unpack_unknowns(
                model, st, (u0 + scale * du).reshape(model.ncell, nb))
            st.pbh = pbh0 + scale * res.x[ncell_dof:]
            ASM.phase_change_update(model, st)
            _clamp_state(st)
            if bt == 3 or iters <= 1:
                break
            r_try = ASM.assemble(model, st, acc_prev, dt, jac=False)
            norms_try = _residual_norms(model, r_try.r_cells, r_try.r_well)
            if not np.all(np.isfinite(norms_try)):
                scale *= 0.25
                continue
            if float(np.max(norms_try / ref)) < cur * (1.0 - 1e-3 * scale) \
                    or float(np.max(norms_try / ref)) <= numerics.tolnew:
                break
            scale *= 0.5
        last = out

    if not converged:
        return st, False, {"iters": iters, "linears": linears}

    info = {
        "iters": iters,
        "linears": linears,
        "assembled": last,
        "acc_prev": acc_prev,
        "acc_new": ASM.accumulation_values(model, st),
    }
    return st, True, info


def _row_owner(model, numerics):
    """Scalar-row subdomain map from the grid partition."""
    nparts = max(1, min(numerics.parts, model.ncell))
    perf_cells = [p.cell for w in model.wells for p in w.perfs]
    weights = well_weights(model.grid, perf_cells)
    part = partition(model.grid, nparts, weights=weights)
    cell_owner = part.owner[model.active]
    nb = model.layout.nb
    owner = np.repeat(cell_owner, nb)
    well_owner = np.array(
        [cell_owner[model.active_of_full[w.perfs[0].cell]]
         for w in model.wells], dtype=np.int64)
    return np.concatenate([owner, well_owner])


# ----------------------------------------------------------------------
# schedule execution
# ----------------------------------------------------------------------

def _next_dt(dt, du_max, numerics):
    """Grow dt by target-change ratios, capped by the growth factor."""
    grow = numerics.dtgrow
    for change, limit in du_max:
        if change > 1e-14:
            grow = min(grow, max(limit / change, 0.1))
    return min(dt * max(grow, 0.1), numerics.dtmax)


def advance(model, state, schedule, numerics, on_report=None,
            on_restart=None, on_step=None, rebuild_well=None,
            dt_init=None):
    """Run the schedule from state.t; returns (state, RunStats)."""
    stats = RunStats()
    t0_wall = time.perf_counter()
    dt = dt_init if dt_init is not None else numerics.dtinit
    workspace = {}
    lay = model.layout

    for entry in schedule:
        if entry.at <= state.t + 1e-12:
            continue
        target = entry.at
        while state.t < target - 1e-12:
            dt = min(dt, numerics.dtmax, target - state.t)
            cuts = 0
            while True:
                try:
                    new_state, ok, info = newton_step(
                        model, state, dt, numerics, workspace)
                except StepError:
                    ok = False
                    info = {"iters": numerics.maxnew, "linears": 0}
                stats.newtons += info["iters"]
                stats.linears += info["linears"]
                if ok:
                    break
                cuts += 1
                stats.cuts += 1
                if cuts > numerics.maxcuts:
                    raise StepError(
                        f"time step failed after {numerics.maxcuts} cuts "
                        f"at day {state.t:.6g}")
                dt *= numerics.dtcut

            # bookkeeping against the converged assembly
            out = info["assembled"]
            d_acc = (info["acc_new"] - info["acc_prev"]).sum(axis=0)
            net = out.comp_well_rates.sum(axis=0) * dt
            energy_net = (out.energy_well_rate.sum()
                          + out.heater_rate.sum()
                          - out.heat_loss_total) * dt
            ncomp = 1 + lay.no + lay.ncg
            comp_err = np.abs(d_acc[:ncomp] - net)
            comp_scale = np.maximum(np.abs(d_acc[:ncomp]),
                                    np.abs(net)) + 1e-30
            energy_err = abs(d_acc[ncomp] - energy_net)
            energy_scale = max(abs(d_acc[ncomp]), abs(energy_net), 1e-30)

            du = np.abs(ASM.pack_unknowns(model, new_state)
                        - ASM.pack_unknowns(model, state))
            changes = [(du[:, lay.IP].max(), numerics.max_dp),
                       (du[:, lay.IT].max(), numerics.max_dt_change),
                       (max(du[:, lay.ISW].max(), du[:, lay.ISG].max()),
                        numerics.max_ds)]

            new_t = state.t + dt
            if abs(new_t - target) < 1e-9:
                new_t = target
            ASM.advance_heat_loss_explicit(model, new_state, new_state.T,
                                           dt, new_t)
            new_state.t = new_t
            state = new_state
            for iw, well in enumerate(model.wells):
                well.pbh = state.pbh[iw]
            _refresh_explicit_mobility(model, state)
            stats.steps += 1
            stats.step_log.append({
                "t": state.t, "dt": dt, "newton": info["iters"],
                "linear": info["linears"],
                "balance": (comp_err / comp_scale).max(),
                "energy_balance": energy_err / energy_scale,
                "measures": out.well_measures,
            })
            if on_step:
                on_step(state, stats.step_log[-1])
            dt = _next_dt(dt, changes, numerics)

        # at the time point: report, then apply its actions
        if on_report:
            on_report(state)
        for action in entry.actions:
            kind = action[0]
            if kind == "stop":
                stats.wall_seconds = time.perf_counter() - t0_wall
                return state, stats
            if kind == "restart":
                if on_restart:
                    on_restart(state, dt)
            elif kind == "numerical":
                numerics.apply_tokens(action[1])
                workspace.clear()
            elif kind == "well":
                if rebuild_well is None:
                    raise StepError(
                        "schedule redefines a well but no rebuild hook set")
                rebuild_well(action[1], state)
                workspace.clear()
    stats.wall_seconds = time.perf_counter() - t0_wall
    return state, stats


def _refresh_explicit_mobility(model, state):
    needs = [w for w in model.wells if w.weight == "explicit"]
    if not needs:
        return
    cp = ASM.value_props(model, state)
    mob_w = np.asarray(D.value(cp.mob_w))
    mob_o = np.asarray(D.value(cp.mob_o))
    mob_g = np.asarray(D.value(cp.mob_g))
    for well in needs:
        cells = model.perf_active_cells(well)
        if well.kind == "injector":
            well.explicit_mobility = (mob_w + mob_o + mob_g)[cells]
        else:
            well.explicit_mobility = (mob_w[cells], mob_o[cells],
                                      mob_g[cells])


# ----------------------------------------------------------------------
# restart files
# ----------------------------------------------------------------------

RESTART_MAGIC = b"TSIMRST1"
RESTART_VERSION = 2


def write_restart(path, model, state, dt_next):
    """Versioned binary restart snapshot; round-trips bit-identically."""
    lay = model.layout
    comp_names = ",".join(c.name for c in model.pset.components).encode()
    with open(path, "wb") as fh:
        fh.write(RESTART_MAGIC)
        fh.write(struct.pack("<iiiii", RESTART_VERSION, model.grid.nx,
                             model.grid.ny, model.grid.nz, model.nwell))
        fh.write(struct.pack("<i", len(comp_names)))
        fh.write(comp_names)
        fh.write(struct.pack("<dd", state.t, dt_next))
        fh.write(struct.pack("<i", model.ncell))
        for arr in (state.p, state.T, state.Sw, state.Sg):
            fh.write(arr.astype("<f8").tobytes())
        fh.write(state.x.astype("<f8").tobytes())
        fh.write(state.y.astype("<f8").tobytes())
        fh.write(state.gas.astype("<u1").tobytes())
        fh.write(state.pbh.astype("<f8").tobytes())
        fh.write(state.hl_theta.astype("<f8").tobytes())
        fh.write(state.hl_I.astype("<f8").tobytes())
        ops = np.array([w.active_op for w in model.wells], dtype="<i8")
        shut = np.array([w.shut_in for w in model.wells], dtype="<u1")
        fh.write(ops.tobytes())
        fh.write(shut.tobytes())


def load_restart(path, model):
    """Read a restart file back into a State; validates grid/components."""
    lay = model.layout
    with open(path, "rb") as fh:
        magic = fh.read(len(RESTART_MAGIC))
        if magic != RESTART_MAGIC:
            raise StepError(f"{path}: not a restart file")
        ver, nx, ny, nz, nw = struct.unpack("<iiiii", fh.read(20))
        if ver != RESTART_VERSION:
            raise StepError(f"{path}: restart version {ver} unsupported")
        if (nx, ny, nz) != model.grid.dims:
            raise StepError(
                f"{path}: grid dims {(nx, ny, nz)} do not match model "
                f"{model.grid.dims}")
        if nw != model.nwell:
            raise StepError(f"{path}: well count mismatch")
        (nlen,) = struct.unpack("<i", fh.read(4))
        names = fh.read(nlen).decode()
        want = ",".join(c.name for c in model.pset.components)
        if names != want:
            raise StepError(f"{path}: component list mismatch")
        t, dt_next = struct.unpack("<dd", fh.read(16))
        (n,) = struct.unpack("<i", fh.read(4))
        if n != model.ncell:
            raise StepError(f"{path}: active cell count mismatch")

        def arr(count):
            return np.frombuffer(fh.read(8 * count), dtype="<f8").copy()

        p = arr(n)
        T = arr(n)
        Sw = arr(n)
        Sg = arr(n)
        x = arr(n * lay.no).reshape(n, lay.no)
        y = arr(n * lay.ncg).reshape(n, lay.ncg)
        gas = np.frombuffer(fh.read(n), dtype="<u1").astype(bool)
        pbh = arr(nw)
        hl_theta = arr(n * 2).reshape(n, 2)
        hl_I = arr(n * 2).reshape(n, 2)
        ops = np.frombuffer(fh.read(8 * nw), dtype="<i8")
        shut = np.frombuffer(fh.read(nw), dtype="<u1").astype(bool)
    state = ASM.State(p, T, Sw, Sg, x, y, gas, pbh.copy(), hl_theta, hl_I, t)
    for iw, well in enumerate(model.wells):
        well.active_op = int(ops[iw])
        well.shut_in = bool(shut[iw])
        well.pbh = state.pbh[iw]
    return state, dt_next
