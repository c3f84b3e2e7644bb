"""Fluid and rock property correlations.

K-values with pseudo-equilibrium damping, Redlich-Kwong Z factor,
densities, viscosities, porosity, Stone II relative permeability,
enthalpies/internal energies and thermal conductivity.  Every correlation
accepts plain ndarrays or :class:`thermsim.dual.Dual` inputs, so exact
derivatives fall out of the same code path used for values.

Unit conventions: psi, degF (degR inside the gas law and exponential
viscosity/K-value forms via the supplied coefficients), ft, cp, lbmol,
Btu, day.  Coefficients quoted in (atm, degC, J/gmol) are converted once
at load; see :mod:`thermsim.units`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as D
from . import units
from .keywords import Table

WATER = "water"
HEAVY = "heavy-oil"
LIGHT = "light-oil"
NCG = "ncg"


class PropertyError(Exception):
    pass


# ----------------------------------------------------------------------
# components
# ----------------------------------------------------------------------

@dataclass
class Component:
    name: str
    klass: str                      # water | heavy-oil | light-oil | ncg
    mw: float = 18.02               # lb/lbmol
    pcrit: float = 3206.2           # psi
    tcrit: float = 705.47           # degF
    rho_ref: float = 3.4618         # lbmol/ft^3
    p_ref: float = units.STD_PRESSURE
    t_ref: float = units.STD_TEMPERATURE
    cp: float = 0.0                 # 1/psi
    ct1: float = 0.0                # 1/degF
    ct2: float = 0.0                # 1/degF^2
    cpt: float = 0.0                # 1/(psi*degF)
    kv: tuple = (0.0,) * 5          # kv1..kv5 (psi, degF form)
    cpg: tuple = (0.0,) * 5         # Btu/lbmol-degF^k gas heat capacity
    cpl: tuple = (0.0,) * 5         # liquid heat capacity
    hvr: float = 0.0                # Btu/lbmol-degF^ev
    ev: float = 1.0
    hvapr: float = 0.0              # Btu/lbmol (simple-hvap scheme)
    avisc: float = 0.0              # cp
    bvisc: float = 0.0              # degR
    avg: float = 0.0                # cp/degR^bvg
    bvg: float = 0.0
    enthalpy_scheme: str = "liquid-based"

    def has_kv(self):
        return any(v != 0.0 for v in self.kv)


# CMG-style water constants from the published correlation set, converted
# to (psi, degF, Btu/lbmol) at definition time.
_WATER_KV1_PSI = 1.1705e5 * units.PSI_PER_ATM
_WATER_KV4_F = -3816.44 * 1.8
_WATER_KV5_F = -227.02 * 1.8 + 32.0
# energy factor carries J/gmol -> Btu/lbmol and the dt_C = dt_F/1.8 measure
_WATER_CPG_F = tuple(units.rebase_poly_c_to_f(
    [34.49885, -0.01426, 4.7356e-5, -3.56759e-8, 9.35531e-12],
    energy_factor=units.BTU_LBMOL_PER_J_GMOL / 1.8))
_WATER_HVR_F = 4820.0 * units.BTU_LBMOL_PER_J_GMOL / 1.8 ** 0.38
_WATER_EV = 0.38


def water_component(name="WATER", **overrides):
    """Water component with built-in correlation constants."""
    fields = dict(
        name=name, klass=WATER, mw=18.02, pcrit=3206.2, tcrit=705.47,
        rho_ref=3.4618, cp=3.0e-6, ct1=1.2e-4,
        kv=(_WATER_KV1_PSI, 0.0, 0.0, _WATER_KV4_F, _WATER_KV5_F),
        cpg=_WATER_CPG_F, hvr=_WATER_HVR_F, ev=_WATER_EV,
        # power-law fit of steam viscosity between 100 and 300 degC
        avg=5.2e-6, bvg=1.19,
        enthalpy_scheme="gas-based",
    )
    fields.update(overrides)
    return Component(**fields)


def apply_default_heat_capacity(comp):
    """Fill in the default per-mass liquid heat capacities when absent."""
    if any(c != 0.0 for c in comp.cpl) or any(c != 0.0 for c in comp.cpg):
        return comp
    per_mass = {HEAVY: 0.5, LIGHT: 0.5, NCG: 0.25, WATER: 0.5}[comp.klass]
    comp.cpl = (per_mass * comp.mw, 0.0, 0.0, 0.0, 0.0)
    if comp.klass == LIGHT and comp.hvr == 0.0:
        comp.hvr = 0.25 * comp.mw
        comp.ev = 1.0
    return comp


@dataclass
class RockThermal:
    cpor: float = 0.0               # 1/psi
    ctpor: float = 0.0              # 1/degF
    cptpor: float = 0.0
    p_ref: float = units.STD_PRESSURE
    t_ref: float = units.STD_TEMPERATURE
    porosity_form: str = "linear"   # linear | nonlinear
    volume_rule: str = "rock-constant"  # rock-constant | bulk-constant
    cp1_r: float = 35.0             # Btu/ft^3-degF
    cp2_r: float = 0.0
    k_w: float = 0.0                # Btu/ft-day-degF
    k_o: float = 0.0
    k_g: float = 0.0
    k_r: float = 0.0
    porosity_floor: float = 1.0e-3
    floor_enabled: bool = False


@dataclass
class RelPermTables:
    swt: Table                      # Sw, krw, krow, Pcw
    slt: Table                      # Sl,  krg, krog, Pcg
    krocw: float = 0.0

    def __post_init__(self):
        self.swt.validate_monotone("swt")
        self.slt.validate_monotone("slt")
        if self.krocw == 0.0:
            self.krocw = float(self.swt.rows[0, 2])
        krog_end = float(self.slt.rows[-1, 2])
        if abs(krog_end - self.krocw) > 1e-12 * max(1.0, abs(self.krocw)):
            raise PropertyError(
                f"krocw mismatch: krow(Swc)={self.krocw} vs krog(Sg=0)={krog_end}")


@dataclass
class PerConfig:
    eps: float = 1.0e-4

    def __post_init__(self):
        if self.eps <= 0:
            raise PropertyError("PER epsilon must be positive")


@dataclass
class PropertySet:
    components: list
    rock: RockThermal
    relperm: RelPermTables
    per: PerConfig = field(default_factory=PerConfig)
    t_ref_enthalpy: float = 77.0
    water_visc_mode: str = "table"      # table | correlation
    gas_visc_mode: str = "table"        # mixing | correlation | table
    interp_method: str = "linear"       # linear | monotone-cubic
    ideal_gas: bool = False

    def __post_init__(self):
        names = [c.name for c in self.components]
        if len(set(names)) != len(names):
            raise PropertyError("duplicate component names")
        if sum(1 for c in self.components if c.klass == WATER) != 1:
            raise PropertyError("exactly one water component required")

    @property
    def water(self):
        return next(c for c in self.components if c.klass == WATER)

    @property
    def oils(self):
        return [c for c in self.components if c.klass in (HEAVY, LIGHT)]

    @property
    def ncgs(self):
        return [c for c in self.components if c.klass == NCG]


# ----------------------------------------------------------------------
# internal viscosity tables (degC in the source, stored on a degF axis)
# ----------------------------------------------------------------------

_WATER_VISC_C = np.array([
    [5.0, 1.5182], [8.0, 1.386], [10.0, 1.311], [20.0, 1.005],
    [30.0, 0.8004], [40.0, 0.6543], [50.0, 0.5518], [60.0, 0.4714],
    [70.0, 0.4066], [80.0, 0.3570], [90.0, 0.3182], [100.0, 0.2828],
    [125.0, 0.2227], [150.0, 0.1848], [175.0, 0.1586], [200.0, 0.1394],
    [225.0, 0.1238], [250.0, 0.1117], [275.0, 0.1005], [300.0, 9.9125e-2],
    [325.0, 8.4075e-2], [350.0, 7.7437e-2], [375.0, 7.2818e-2],
    [400.0, 7.2818e-2], [500.0, 7.2818e-2], [600.0, 7.2818e-2],
    [700.0, 7.2818e-2], [800.0, 7.2818e-2],
])

_GAS_VISC_C = np.array([
    [10.0, 1.3979e-2], [20.0, 1.4360e-2], [30.0, 1.4740e-2],
    [40.0, 1.5120e-2], [50.0, 1.5500e-2], [60.0, 1.5880e-2],
    [70.0, 1.6260e-2], [80.0, 1.6641e-2], [90.0, 1.7021e-2],
    [100.0, 1.7401e-2], [125.0, 1.8351e-2], [150.0, 1.9302e-2],
    [175.0, 2.0252e-2], [200.0, 2.1203e-2], [225.0, 2.2153e-2],
    [250.0, 2.3103e-2], [275.0, 2.4054e-2], [300.0, 2.5004e-2],
    [325.0, 2.5955e-2], [350.0, 2.6905e-2], [375.0, 2.7855e-2],
    [400.0, 2.8806e-2], [500.0, 3.2607e-2], [600.0, 3.6409e-2],
    [700.0, 4.0210e-2], [800.0, 4.4012e-2],
])


def _table_c_to_f(data):
    rows = data.copy()
    rows[:, 0] = units.f_from_c(rows[:, 0])
    return Table(["T", "visc"], rows)


WATER_VISC_TABLE = _table_c_to_f(_WATER_VISC_C)
GAS_VISC_TABLE = _table_c_to_f(_GAS_VISC_C)


# ----------------------------------------------------------------------
# interpolation
# ----------------------------------------------------------------------

def _fritsch_carlson_slopes(x, y):
    """Monotonicity-limited Hermite slopes per Fritsch-Carlson."""
    h = np.diff(x)
    d = np.diff(y) / h
    n = len(x)
    m = np.zeros(n)
    if n == 2:
        m[:] = d[0]
    else:
        m[1:-1] = np.where(d[:-1] * d[1:] > 0.0,
                           0.5 * (d[:-1] + d[1:]), 0.0)
        m[0] = d[0]
        m[-1] = d[-1]
    # limit
    for i in range(n - 1):
        if d[i] == 0.0:
            m[i] = 0.0
            m[i + 1] = 0.0
            continue
        a = m[i] / d[i]
        b = m[i + 1] / d[i]
        s = a * a + b * b
        if s > 9.0:
            tau = 3.0 / np.sqrt(s)
            m[i] = tau * a * d[i]
            m[i + 1] = tau * b * d[i]
    return m


def interp_table(table, xq, method="linear", column=None):
    """Interpolate table columns at ``xq``; clamps outside the knot range.

    Returns a single column (index or name) when ``column`` is given,
    else a list over all value columns.  Accepts Dual queries.
    """
    x = table.rows[:, 0]
    if len(x) == 0:
        raise PropertyError("empty table")
    cols = range(1, table.rows.shape[1]) if column is None else [
        column if isinstance(column, int) else table.columns.index(column)]
    single_row = len(x) == 1

    xv = D.value(xq)
    out = []
    for c in cols:
        y = table.rows[:, c]
        if single_row:
            res = np.full(np.shape(xv), y[0]) if np.shape(xv) else y[0]
            out.append(res + 0.0 * xq if isinstance(xq, D.Dual) else res)
            continue
        seg = np.clip(np.searchsorted(x, xv, side="right") - 1, 0, len(x) - 2)
        x0, x1 = x[seg], x[seg + 1]
        y0, y1 = y[seg], y[seg + 1]
        h = x1 - x0
        if method == "linear":
            slope = (y1 - y0) / h
            val = y0 + slope * (xq - x0)
        elif method == "monotone-cubic":
            m = _fritsch_carlson_slopes(x, y)
            t = (xq - x0) / h
            t2 = t * t
            t3 = t2 * t
            h00 = 2.0 * t3 - 3.0 * t2 + 1.0
            h10 = t3 - 2.0 * t2 + t
            h01 = -2.0 * t3 + 3.0 * t2
            h11 = t3 - t2
            val = (h00 * y0 + h10 * h * m[seg]
                   + h01 * y1 + h11 * h * m[seg + 1])
        else:
            raise PropertyError(f"unknown interpolation method {method!r}")
        # clamp to end values, derivative zero outside
        val = D.where(xv < x[0], np.full(np.shape(xv), y[0]), val)
        val = D.where(xv > x[-1], np.full(np.shape(xv), y[-1]), val)
        out.append(val)
    return out[0] if column is not None else out


# ----------------------------------------------------------------------
# K-values
# ----------------------------------------------------------------------

def k_value(p, T, kv):
    """(kv1/p + kv2*p + kv3) * exp(kv4/(T - kv5))."""
    kv1, kv2, kv3, kv4, kv5 = kv
    denom = T - kv5
    if np.any(np.abs(D.value(denom)) < 1e-30):
        raise PropertyError("K-value singularity: T equals kv5")
    return (kv1 / p + kv2 * p + kv3) * D.exp(kv4 / denom)


def pseudo_k(K, S, eps):
    """PER damping: K* = S/(S + eps) * K."""
    return (S / (S + eps)) * K


# ----------------------------------------------------------------------
# Redlich-Kwong compressibility
# ----------------------------------------------------------------------

def rk_mixture_critical(y, tcrit_r, pcrit):
    """Pseudo-critical (T_crit, p_crit) from the RK mixing rule; T in degR.

    a sums y_i * T_ci^(5/4) / sqrt(p_ci), the square root of the RK
    attraction coefficient, so a one-component mixture reduces exactly to
    that component's critical point.
    """
    a = D.stack_sum([y[i] * tcrit_r[i] ** 1.25 / np.sqrt(pcrit[i])
                     for i in range(len(tcrit_r))])
    b = D.stack_sum([y[i] * tcrit_r[i] / pcrit[i]
                     for i in range(len(tcrit_r))])
    t_c = (a * a / b) ** (2.0 / 3.0)
    p_c = t_c / b
    return t_c, p_c


def _cubic_largest_root(A, B):
    """Largest real root of Z^3 - Z^2 + (A - B - B^2) Z - A B = 0."""
    A = np.atleast_1d(np.asarray(A, dtype=float))
    B = np.atleast_1d(np.asarray(B, dtype=float))
    c2 = -np.ones_like(A)
    c1 = A - B - B * B
    c0 = -A * B
    # depressed cubic t^3 + pt + q with Z = t - c2/3
    sh = c2 / 3.0
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2 ** 3 / 27.0 - c2 * c1 / 3.0 + c0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    z = np.empty_like(A)

    three = disc < 0.0
    if np.any(three):
        pp, qq = p[three], q[three]
        r = np.sqrt(-(pp ** 3) / 27.0)
        phi = np.arccos(np.clip(-qq / (2.0 * r), -1.0, 1.0))
        t = 2.0 * np.cbrt(r) * np.cos(phi / 3.0)  # largest of three
        z[three] = t - sh[three]
    one = ~three
    if np.any(one):
        dd = np.sqrt(disc[one])
        u = np.cbrt(-q[one] / 2.0 + dd)
        v = np.cbrt(-q[one] / 2.0 - dd)
        z[one] = u + v - sh[one]

    # Newton polish to drive the cubic residual below 1e-12
    for _ in range(3):
        f = z ** 3 - z ** 2 + c1 * z + c0
        fp = 3.0 * z ** 2 - 2.0 * z + c1
        step = np.where(np.abs(fp) > 1e-300, f / np.where(fp == 0, 1, fp), 0.0)
        z = z - step

    bad = ~np.isfinite(z) | (z <= 0.0)
    if np.any(bad):
        for i in np.flatnonzero(bad):
            roots = np.roots([1.0, -1.0, c1[i], c0[i]])
            real = roots[np.abs(roots.imag) < 1e-9].real
            real = real[real > 0]
            if len(real) == 0:
                raise PropertyError("RK cubic has no positive real root")
            z[i] = real.max()
    return z, c1, c0


def rk_z_factor(p, T_r, y, tcrit_r, pcrit):
    """RK Z factor; largest real root, implicit-function derivatives.

    ``T_r`` is absolute (degR); ``y`` is a list of gas mole fractions per
    component with critical properties ``tcrit_r`` (degR), ``pcrit`` (psi).
    """
    t_c, p_c = rk_mixture_critical(y, tcrit_r, pcrit)
    A = 0.427480 * (p / p_c) * (t_c / T_r) ** 2.5
    B = 0.086640 * (p / p_c) * (t_c / T_r)
    Av, Bv = np.atleast_1d(D.value(A)), np.atleast_1d(D.value(B))
    z, c1, c0 = _cubic_largest_root(Av, Bv)
    if isinstance(A, D.Dual) or isinstance(B, D.Dual):
        m = A.nseed if isinstance(A, D.Dual) else B.nseed
        fp = 3.0 * z ** 2 - 2.0 * z + c1
        dz_dA = -(z - Bv) / fp
        dz_dB = (Av + z + 2.0 * Bv * z) / fp
        dA = D.deriv(A, m)
        dB = D.deriv(B, m)
        der = dz_dA[..., None] * dA + dz_dB[..., None] * dB
        return D.Dual(z.reshape(np.shape(D.value(A))), der)
    return z.reshape(np.shape(D.value(A))) if np.shape(D.value(A)) else float(z[0])


# ----------------------------------------------------------------------
# densities
# ----------------------------------------------------------------------

def liquid_component_density(comp, p, T):
    """Exponential compressibility/expansion form around the reference."""
    if comp.rho_ref <= 0:
        raise PropertyError(f"{comp.name}: nonpositive reference density")
    dp = p - comp.p_ref
    dT = T - comp.t_ref
    arg = (comp.cp * dp - comp.ct1 * dT - 0.5 * comp.ct2 * dT * dT
           + comp.cpt * dp * dT)
    return comp.rho_ref * D.exp(arg)


def oil_phase_density(oils, x, p, T):
    """1/rho_o = sum x_i / rho_i over oil components."""
    inv = D.stack_sum([x[i] / liquid_component_density(oils[i], p, T)
                       for i in range(len(oils))])
    return 1.0 / inv


def gas_phase_density(p, T_r, Z):
    """Ideal/real molar gas density p/(Z R T)."""
    return p / (Z * units.R_GAS * T_r)


# ----------------------------------------------------------------------
# viscosities
# ----------------------------------------------------------------------

def component_liquid_viscosity(comp, T_r):
    return comp.avisc * D.exp(comp.bvisc / T_r)


def oil_phase_viscosity(oils, x, T_r):
    """Logarithmic mixing over oil components."""
    ln_mu = D.stack_sum([x[i] * D.log(component_liquid_viscosity(oils[i], T_r))
                         for i in range(len(oils))])
    return D.exp(ln_mu)


def water_viscosity(pset, T):
    if pset.water_visc_mode == "table":
        return interp_table(WATER_VISC_TABLE, T, pset.interp_method, column=1)
    w = pset.water
    return component_liquid_viscosity(w, units.t_abs(T))


def gas_component_viscosity(comp, T_r):
    return comp.avg * T_r ** comp.bvg


def gas_phase_viscosity(pset, T, y, gas_comps):
    """Mole-mass-weighted mixing, correlation, or internal table."""
    mode = pset.gas_visc_mode
    if mode == "table":
        return interp_table(GAS_VISC_TABLE, T, pset.interp_method, column=1)
    if mode == "correlation":
        return 0.0136 + 3.8e-5 * units.c_from_f(T)
    T_r = units.t_abs(T)
    num = D.stack_sum([gas_component_viscosity(c, T_r) * y[i] * np.sqrt(c.mw)
                       for i, c in enumerate(gas_comps)])
    den = D.stack_sum([y[i] * np.sqrt(c.mw) for i, c in enumerate(gas_comps)])
    floor = 1e-30
    return num / D.maximum(den, floor)


# ----------------------------------------------------------------------
# porosity, relative permeability, conductivity
# ----------------------------------------------------------------------

def porosity(phi_ref, p, T, rock):
    """Pressure/temperature-dependent porosity, linear or nonlinear form."""
    dp = p - rock.p_ref
    dT = T - rock.t_ref
    phi_c = rock.cpor * dp - rock.ctpor * dT + rock.cptpor * dp * dT
    if rock.porosity_form == "linear":
        phi = phi_ref * (1.0 + phi_c)
    elif rock.porosity_form == "nonlinear":
        phi = phi_ref * D.exp(phi_c)
    else:
        raise PropertyError(f"unknown porosity form {rock.porosity_form!r}")
    if rock.floor_enabled:
        phi = D.where(D.value(phi) < rock.porosity_floor,
                      np.zeros(np.shape(D.value(phi))), phi)
    return phi


def relative_permeabilities(Sw, Sg, tables, method="linear"):
    """(krw, kro, krg) with Stone model II for the oil phase."""
    krw = interp_table(tables.swt, Sw, method, column=1)
    krow = interp_table(tables.swt, Sw, method, column=2)
    Sl = 1.0 - Sg
    krg = interp_table(tables.slt, Sl, method, column=1)
    krog = interp_table(tables.slt, Sl, method, column=2)
    kc = tables.krocw
    kro = kc * ((krow / kc + krw) * (krog / kc + krg) - krw - krg)
    kro = D.clip(kro, 0.0, kc)
    return krw, kro, krg


def capillary_pressures(Sw, Sg, tables, method="linear"):
    """(pcow, pcog) from the 4th table columns (zero-filled when absent)."""
    pcow = interp_table(tables.swt, Sw, method, column=3)
    pcog = interp_table(tables.slt, 1.0 - Sg, method, column=3)
    return pcow, pcog


def thermal_conductivity(Sw, So, Sg, phi, rock):
    """Linear (simple) mixing of phase and rock conductivities."""
    fluid = Sw * rock.k_w + So * rock.k_o + Sg * rock.k_g
    return phi * fluid + (1.0 - phi) * rock.k_r


# ----------------------------------------------------------------------
# enthalpy / internal energy
# ----------------------------------------------------------------------

def _poly_integral(coeffs, T, t_ref):
    """Integral of sum c_k t^k (k=0..4) from t_ref to T."""
    total = None
    for k, c in enumerate(coeffs):
        if c == 0.0:
            continue
        term = (c / (k + 1.0)) * (T ** (k + 1) - t_ref ** (k + 1))
        total = term if total is None else total + term
    if total is None:
        return 0.0 * T
    return total


def vaporization_enthalpy(comp, T):
    """hvr * (Tcrit - T)^ev below the critical point, else 0."""
    if comp.hvr == 0.0:
        return 0.0 * T
    if comp.ev <= 0.0:
        raise PropertyError(f"{comp.name}: ev must be positive")
    dT = D.maximum(comp.tcrit - T, 0.0)
    return comp.hvr * dT ** comp.ev


def component_gas_enthalpy(comp, T, t_ref):
    scheme = comp.enthalpy_scheme
    if scheme == "gas-based" or comp.klass == NCG:
        return _poly_integral(comp.cpg, T, t_ref)
    if scheme == "liquid-based":
        return _poly_integral(comp.cpl, T, t_ref) + vaporization_enthalpy(comp, T)
    if scheme == "simple-hvap":
        return comp.hvapr + _poly_integral(comp.cpg, T, t_ref)
    raise PropertyError(f"unknown enthalpy scheme {scheme!r}")


def component_liquid_enthalpy(comp, T, t_ref):
    scheme = comp.enthalpy_scheme
    if scheme == "gas-based":
        return _poly_integral(comp.cpg, T, t_ref) - vaporization_enthalpy(comp, T)
    if scheme in ("liquid-based", "simple-hvap"):
        return _poly_integral(comp.cpl, T, t_ref)
    raise PropertyError(f"unknown enthalpy scheme {scheme!r}")


def rock_internal_energy(rock, T, t_ref):
    return rock.cp1_r * (T - t_ref) + 0.5 * rock.cp2_r * (T * T - t_ref * t_ref)


def phase_enthalpies(pset, p, T, x, y_all, gas_comps):
    """(H_w, H_o, H_g) in Btu/lbmol.

    ``x`` spans oil components, ``y_all`` the gas-capable components in
    ``gas_comps`` order (water, light oils, NCGs).
    """
    t0 = pset.t_ref_enthalpy
    w = pset.water
    H_w = component_liquid_enthalpy(w, T, t0)
    oils = pset.oils
    H_o = D.stack_sum([x[i] * component_liquid_enthalpy(c, T, t0)
                       for i, c in enumerate(oils)])
    H_g = D.stack_sum([y_all[i] * component_gas_enthalpy(c, T, t0)
                       for i, c in enumerate(gas_comps)])
    return H_w, H_o, H_g


def internal_energy(H, p, rho):
    """U = H - p/rho, converted to Btu/lbmol."""
    return H - units.PSI_FT3_TO_BTU * p / rho
