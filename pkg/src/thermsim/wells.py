"""Well physics: Peaceman indices, perforation rates, operating
constraints with min/max switching, heater models, subcool control and
injection/surface flash.

Rate sign convention: positive into the reservoir.  Producers report
surface/reservoir rates as positive production (the negation of the
perforation sums).  All rate formulas accept Dual inputs so the well
rows of the Jacobian come from the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import dual as D
from . import props as P
from . import units
from .keywords import DeckError, WellSpec


class WellError(Exception):
    pass


RATE_TARGETS = ("stw", "sto", "stg", "stl", "stf",
                "bhw", "bho", "bhg", "bhl", "bhf", "steam")


@dataclass
class Perforation:
    cell: int              # active-cell index
    wi: float              # md*ft
    z: float               # perforation depth, ft
    length: float          # completion length in the cell, ft
    heat_index: float = 0.0
    steamtrap_c: float | None = None
    open: bool = True


@dataclass
class Operation:
    target: str
    specifier: str         # min | max | equality
    value: float


@dataclass
class HeaterConfig:
    mode: str = "off"                 # off | rate | temp | dual
    qhspec: float = 0.0               # Btu/day
    twspec: float | None = None       # degF
    direction: str = "unidirect"      # unidirect | bidirect
    htwi: bool = False
    constant: list = field(default_factory=list)     # [(cells, rate)]
    convective: list = field(default_factory=list)   # [(cells, uhtr, tmpset)]

    def validate(self):
        if self.mode == "dual" and (self.qhspec == 0.0 or self.twspec is None):
            raise WellError("dual heater mode needs both htwrate and htwtemp")
        if self.mode == "temp" and self.twspec is None:
            raise WellError("temperature heater mode needs htwtemp")
        return self


@dataclass
class Well:
    name: str
    kind: str                          # injector | producer
    perfs: list
    operations: list
    heater: HeaterConfig
    weight: str = "implicit"
    unweighted: bool = False
    tinjw: float | None = None
    qual: float = 0.0
    ref_depth: float = 0.0
    steamtrap_default: float | None = None

    # mutable solve state
    pbh: float = 0.0
    active_op: int = 0
    shut_in: bool = False
    explicit_mobility: np.ndarray | None = None

    @property
    def perf_cells(self):
        return np.array([p.cell for p in self.perfs], dtype=np.int64)


# ----------------------------------------------------------------------
# well index
# ----------------------------------------------------------------------

def peaceman_radius(dx, dy, kx, ky):
    """Peaceman equivalent radius for a vertical well, anisotropic form."""
    r = ky / kx
    num = math.sqrt(math.sqrt(r) * dx * dx + dy * dy / math.sqrt(r))
    den = r ** 0.25 + (1.0 / r) ** 0.25
    return 0.28 * num / den


def well_index(mode, value, dx, dy, dz, kx, ky, skin=0.0, rw=0.25):
    """WI per mode: 'user'/'wi' pass the deck value through; 'geo'/'geoa'
    evaluate 2*pi*h*sqrt(kx*ky)/(ln(re/rw)+s) scaled by the factor."""
    if mode in ("user", "wi"):
        return float(value)
    if mode == "geo":
        re = peaceman_radius(dx, dy, kx, ky)
    elif mode == "geoa":
        # arithmetic-average form of the equivalent radius
        re = 0.14 * math.sqrt(dx * dx + dy * dy)
    else:
        raise WellError(f"unknown well-index mode {mode!r}")
    if re <= rw:
        raise WellError(f"equivalent radius {re:.4g} <= well radius {rw:.4g}")
    wi = 2.0 * math.pi * dz * math.sqrt(kx * ky) / (math.log(re / rw) + skin)
    return float(value) * wi


def heat_index(htwi_on, wi, dx, dy, dz, kx, ky, k_t, skin=0.0, rw=0.25):
    """Heat conduction index, Btu/day-degF.

    With htwi on, the well index converts by swapping permeability for
    thermal conductivity; otherwise the analytic form is evaluated with
    the conductivity directly.
    """
    if htwi_on:
        return wi * k_t / math.sqrt(kx * ky)
    re = peaceman_radius(dx, dy, kx, ky)
    return 2.0 * math.pi * dz * k_t / (math.log(re / rw) + skin)


# ----------------------------------------------------------------------
# saturation temperature / subcool
# ----------------------------------------------------------------------

T_SAT_RANGE = (32.0, 705.0)


def saturation_temperature(p_wb, water_kv, tol=1e-8):
    """T with K_water(p, T) = 1 by bracketed root solve; Dual-aware."""
    pv = np.atleast_1d(D.value(p_wb))
    lo, hi = T_SAT_RANGE
    out = np.empty_like(pv)
    for i, p in enumerate(pv):
        f = lambda t: P.k_value(p, t, water_kv) - 1.0
        flo, fhi = f(lo), f(hi)
        if flo * fhi > 0:
            raise WellError(
                f"no saturation temperature in [{lo}, {hi}] F at {p:.4g} psi")
        out[i] = brentq(f, lo, hi, xtol=tol)
    if isinstance(p_wb, D.Dual):
        # implicit function: dT/dp = -K_p / K_T at the root
        h = 1e-6
        dKdp = np.array([(P.k_value(p + h * max(1.0, abs(p)), t, water_kv)
                          - P.k_value(p - h * max(1.0, abs(p)), t, water_kv))
                         / (2 * h * max(1.0, abs(p)))
                         for p, t in zip(pv, out)])
        dKdT = np.array([(P.k_value(p, t + 1e-6, water_kv)
                          - P.k_value(p, t - 1e-6, water_kv)) / 2e-6
                         for p, t in zip(pv, out)])
        dTdp = -dKdp / dKdT
        der = dTdp[..., None] * p_wb.der.reshape(pv.shape + (-1,))
        res = D.Dual(out.reshape(np.shape(D.value(p_wb))),
                     der.reshape(np.shape(D.value(p_wb)) + (p_wb.nseed,)))
        return res
    return out.reshape(np.shape(D.value(p_wb))) if np.shape(p_wb) else float(out[0])


# ----------------------------------------------------------------------
# flash
# ----------------------------------------------------------------------

def saturation_pressure_bounds(water_kv):
    """Pressure range where the K-value correlation brackets K = 1."""
    lo = P.k_value(1.0, T_SAT_RANGE[0], water_kv)   # K = kv1/p * f(T)
    # invert (kv1/p) exp(kv4/(T-kv5)) = 1 at the bracket ends for kv2=kv3=0;
    # for general kv fall back to a scan
    kv1, kv2, kv3, kv4, kv5 = water_kv
    if kv2 == 0.0 and kv3 == 0.0:
        p_lo = kv1 * np.exp(kv4 / (T_SAT_RANGE[0] - kv5))
        p_hi = kv1 * np.exp(kv4 / (T_SAT_RANGE[1] - kv5))
        return p_lo, p_hi
    ps = np.logspace(-2, 5, 400)
    ok = [p for p in ps
          if (P.k_value(p, T_SAT_RANGE[0], water_kv) - 1.0)
          * (P.k_value(p, T_SAT_RANGE[1], water_kv) - 1.0) < 0]
    return (min(ok), max(ok)) if ok else (1e-2, 1e5)


def injection_enthalpy(pset, quality, t_inj):
    """Injected water-stream enthalpy, Btu/lbmol: quality-weighted blend
    of liquid water and steam enthalpies at the injection temperature."""
    if not 0.0 <= quality <= 1.0:
        raise WellError(f"steam quality {quality} outside [0, 1]")
    w = pset.water
    t0 = pset.t_ref_enthalpy
    h_l = P.component_liquid_enthalpy(w, t_inj, t0)
    h_g = P.component_gas_enthalpy(w, t_inj, t0)
    return (1.0 - quality) * h_l + quality * h_g


def perf_injection_state(pset, h_stream, p_perf):
    """Iso-enthalpy flash of the injected stream at perforation pressure.

    Returns (quality, T, rho_mix, gamma) with rho_mix the molar density of
    the flashed mixture and gamma its pressure gradient, psi/ft.
    """
    w = pset.water
    t0 = pset.t_ref_enthalpy
    p_lo, p_hi = saturation_pressure_bounds(w.kv)
    p_perf = D.clip(p_perf, 1.02 * p_lo, 0.998 * p_hi)
    t_s = saturation_temperature(p_perf, w.kv)
    h_l = P.component_liquid_enthalpy(w, t_s, t0)
    h_g = P.component_gas_enthalpy(w, t_s, t0)
    qf = D.clip((h_stream - h_l) / D.maximum(h_g - h_l, 1e-30), 0.0, 1.0)
    rho_l = P.liquid_component_density(w, p_perf, t_s)
    t_r = units.t_abs(t_s)
    z = P.rk_z_factor(p_perf, t_r, [1.0 + 0.0 * D.value(t_s)],
                      [units.t_abs(w.tcrit)], [w.pcrit])
    rho_g = P.gas_phase_density(p_perf, t_r, z)
    inv_rho = (1.0 - qf) / rho_l + qf / rho_g
    rho_mix = 1.0 / inv_rho
    gamma = rho_mix * w.mw * units.LB_FT3_TO_PSI_FT
    return qf, t_s, rho_mix, gamma


def surface_flash_segregated(pset, comp_rates):
    """Segregated surface flash of per-component molar rates, lbmol/day.

    Water condenses to surface water, oil-class components join the stock
    tank, non-condensable gas reports as ideal gas at standard conditions.
    Returns (stw bbl/day, sto bbl/day, stg ft^3/day).
    """
    w = pset.water
    rho_w_std = P.liquid_component_density(
        w, units.STD_PRESSURE, units.STD_TEMPERATURE)
    stw = comp_rates.get(w.name, 0.0) / rho_w_std / units.CF_PER_BBL
    sto = 0.0
    for comp in pset.oils:
        rho_std = P.liquid_component_density(
            comp, units.STD_PRESSURE, units.STD_TEMPERATURE)
        sto = sto + comp_rates.get(comp.name, 0.0) / rho_std / units.CF_PER_BBL
    v_molar = units.R_GAS * units.t_abs(units.STD_TEMPERATURE) / units.STD_PRESSURE
    stg = 0.0
    for comp in pset.ncgs:
        stg = stg + comp_rates.get(comp.name, 0.0) * v_molar
    return stw, sto, stg


def cwe_rate(pset, water_molar_rate):
    """Cold-water-equivalent volume rate (bbl/day) of a water molar rate."""
    w = pset.water
    rho_w_std = P.liquid_component_density(
        w, units.STD_PRESSURE, units.STD_TEMPERATURE)
    return water_molar_rate / rho_w_std / units.CF_PER_BBL


# ----------------------------------------------------------------------
# perforation rates
# ----------------------------------------------------------------------

def producer_phase_volumetric(wi, mob, dp):
    """Reservoir-condition phase rate, bbl/day; clamped non-positive."""
    q = units.DARCY_BBL * wi * mob * dp
    return D.minimum(q, 0.0)


def injector_volumetric(wi, mob_t, dp, unweighted=False):
    """Injection volumetric rate, bbl/day; clamped non-negative."""
    q = wi * dp if unweighted else units.DARCY_BBL * wi * mob_t * dp
    return D.maximum(q, 0.0)


def molar_rate(vol_bbl, rho):
    return vol_bbl * units.CF_PER_BBL * rho


# ----------------------------------------------------------------------
# heater models
# ----------------------------------------------------------------------

def convective_heat_rate(uhtr, tmpset, T):
    """One-sided convective exchange; the sign of uhtr picks the side."""
    if uhtr >= 0.0:
        return D.where(D.value(T) < tmpset, uhtr * (tmpset - T),
                       0.0 * T)
    return D.where(D.value(T) > tmpset, uhtr * (T - tmpset), 0.0 * T)


def htwell_rate(heater, I_m, length_frac, T):
    """HTWELL heat rate in one perforation.

    length_frac is L_m/L_w; rate control spreads the total rate by it.
    """
    mode = heater.mode
    if mode == "off":
        return 0.0 * T
    if mode == "rate":
        return heater.qhspec * length_frac + 0.0 * T
    if mode == "temp":
        return I_m * (heater.twspec - T)
    if mode == "dual":
        dT = heater.twspec - T
        if heater.qhspec > 0.0:      # heating
            if heater.direction == "unidirect":
                dT = D.maximum(dT, 0.0)
            return D.minimum(I_m * dT, heater.qhspec)
        # cooling
        if heater.direction == "unidirect":
            dT = D.minimum(dT, 0.0)
        return D.maximum(I_m * dT, heater.qhspec)
    raise WellError(f"unknown heater mode {mode!r}")


# ----------------------------------------------------------------------
# construction from deck specs
# ----------------------------------------------------------------------

def _expand_boxes(grid, boxes):
    out = []
    for (i0, i1, j0, j1, k0, k1), val in boxes:
        cells = []
        for k in range(k0 - 1, k1):
            for j in range(j0 - 1, j1):
                for i in range(i0 - 1, i1):
                    cells.append(grid.index(i, j, k))
        out.append((np.array(cells, dtype=np.int64), val))
    return out


def build_well(spec: WellSpec, grid, kx, ky, kz, k_t_ref=24.0):
    """Turn a parsed WellSpec into a runtime Well bound to the grid."""
    spec.validate(grid.dims)
    perfs = []
    for line in spec.perfs:
        for k in range(line.k0 - 1, line.k1):
            for j in range(line.j0 - 1, line.j1):
                for i in range(line.i0 - 1, line.i1):
                    cell = grid.index(i, j, k)
                    if not grid.active[cell]:
                        raise DeckError(
                            f"well {spec.name!r}: perforation at inactive "
                            f"cell ({i + 1} {j + 1} {k + 1})")
                    wi = well_index(
                        "wi" if spec.perf_mode == "wi" else spec.perf_mode,
                        line.value, grid.dx[cell], grid.dy[cell],
                        grid.dz[cell], kx[cell], ky[cell],
                        skin=spec.skin, rw=spec.rw)
                    hi = heat_index(spec.htwi, wi, grid.dx[cell],
                                    grid.dy[cell], grid.dz[cell],
                                    kx[cell], ky[cell], k_t_ref,
                                    skin=spec.skin, rw=spec.rw)
                    perfs.append(Perforation(
                        cell=cell, wi=wi, z=grid.z[cell],
                        length=grid.dz[cell], heat_index=hi))
    ops = []
    steamtrap_default = None
    for op in spec.operations:
        if op.target == "steamtrap":
            if op.cell is None:
                steamtrap_default = op.value
                ops.append(Operation("steamtrap", "equality", op.value))
            else:
                i, j, k = op.cell
                cell = grid.index(i - 1, j - 1, k - 1)
                hit = False
                for p in perfs:
                    if p.cell == cell:
                        p.steamtrap_c = op.value
                        hit = True
                if not hit:
                    raise DeckError(
                        f"well {spec.name!r}: steamtrap override cell "
                        f"({i} {j} {k}) is not perforated")
        else:
            ops.append(Operation(op.target, op.specifier, op.value))
    if not ops:
        raise DeckError(f"well {spec.name!r} has no operations")

    heater = HeaterConfig(
        mode=spec.htwell, qhspec=spec.htwrate, twspec=spec.htwtemp,
        direction=spec.htwell_direction, htwi=spec.htwi,
        constant=_expand_boxes(grid, spec.heatr),
        convective=[(cells, val, _match_tmpset(spec, box))
                    for (cells, val), box in
                    zip(_expand_boxes(grid, spec.uhtr),
                        [b for b, _ in spec.uhtr])],
    ).validate()

    w = Well(name=spec.name, kind=spec.kind, perfs=perfs, operations=ops,
             heater=heater, weight=spec.weight,
             unweighted=(spec.weight == "unweighted"),
             tinjw=spec.tinjw, qual=spec.qual,
             steamtrap_default=steamtrap_default)
    w.ref_depth = spec.refdepth if spec.refdepth is not None else perfs[0].z
    return w


def _match_tmpset(spec, box):
    """Pair a uhtr box with the tmpset sharing the same cell range."""
    for tbox, tval in spec.tmpset:
        if tbox == box:
            return tval
    raise DeckError(
        f"well {spec.name!r}: uhtr box {box} has no matching tmpset")
