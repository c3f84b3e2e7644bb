"""Deck loading: registers the simulator's keywords, parses a model file
and binds it into grid/properties/wells/schedule objects.

Component properties follow the vendor-deck convention of one list-valued
keyword per property, with one entry per component in ``compname`` order.
Water correlation constants default to the built-in set when omitted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import keywords as kw
from . import props as P
from .assembly import HeatLossConfig, Model, apply_initial_conditions
from .grid import build_grid
from .keywords import DeckError
from .wells import build_well


@dataclass
class NumericsConfig:
    solver: str = "bicgstab"
    pc: str = "cpr-fpf"
    decouple: str = "GJE"
    tolnew: float = 1e-4
    tolsol: float = 1e-4
    maxnew: int = 15
    maxsol: int = 100
    dtinit: float = 0.1
    dtmax: float = 30.0
    dtgrow: float = 2.0
    dtcut: float = 0.5
    maxcuts: int = 10
    max_dp: float = 500.0
    max_ds: float = 0.1
    max_dx: float = 0.1
    max_dt_change: float = 15.0
    overlap: int = 1
    ras_solver: str = "ilut"
    iluk_level: int = 1
    ilut_p: int | None = None
    ilut_tol: float = 1e-4
    parts: int = 4

    def apply_tokens(self, block):
        """Apply a schedule 'numerical:' block of raw token lists."""
        scal = {"tolnew": float, "tolsol": float, "dtmax": float,
                "dtinit": float, "dtgrow": float, "dtcut": float,
                "maxnew": int, "maxsol": int, "maxcuts": int,
                "overlap": int, "parts": int, "iluk_level": int,
                "ilut_p": int, "ilut_tol": float}
        for key, toks in block.items():
            if key in ("solver", "pc", "decouple", "ras_solver"):
                setattr(self, key, toks[0].lower()
                        if key != "decouple" else toks[0].upper())
            elif key in scal:
                setattr(self, key, scal[key](toks[0]))
            elif key == "maxchange":
                vals = [float(t) for t in toks]
                (self.max_dp, self.max_ds, self.max_dx,
                 self.max_dt_change) = vals
            else:
                raise DeckError(f"unknown numerical setting {key!r}")
        return self


@dataclass
class Deck:
    grid: object
    pset: P.PropertySet
    well_specs: list
    schedule: list
    numerics: NumericsConfig
    initial: dict
    permx: np.ndarray
    permy: np.ndarray
    permz: np.ndarray
    phi_ref: np.ndarray
    heat_loss: tuple | None
    report_style: str = "vtu"      # vtu | vtk | vtk-binary
    title: str = "model"


_SPATIAL_KEYS = ("por", "permx", "permy", "permz", "pres", "temp", "sw",
                 "sg", "null")

_COMPONENT_LISTS = ("cmm", "pcrit", "tcrit", "molden", "cp", "ct1", "ct2",
                    "cpt", "kv1", "kv2", "kv3", "kv4", "kv5", "cpg1",
                    "cpg2", "cpg3", "cpg4", "cpg5", "cpl1", "cpl2", "cpl3",
                    "cpl4", "cpl5", "hvr", "ev", "hvapr", "avisc", "bvisc",
                    "avg", "bvg")


def build_registry():
    reg = kw.KeywordRegistry()
    reg.register("unit", kw.TEXT)
    reg.register("title", kw.TEXT_LIST)
    reg.register("grid", kw.INTEGER_LIST)
    for key in ("dx", "dy", "dz"):
        reg.register(key, kw.TEXT_LIST)
    reg.register("top", kw.REAL)
    for key in _SPATIAL_KEYS:
        reg.register(key, kw.TEXT_LIST)
    reg.register("mod", kw.MOD_LIST)
    for key in ("cpor", "ctpor", "cptpor", "prpor", "trpor",
                "thconr", "thconw", "thcono", "thcong",
                "krocw", "pereps", "temr", "refdepth", "refpres"):
        reg.register(key, kw.REAL)
    reg.register("rockcp", kw.REAL_LIST)
    reg.register("hloss", kw.REAL_LIST)
    reg.register("porform", kw.TEXT)
    reg.register("volconst", kw.TEXT)
    reg.register("compname", kw.TEXT_LIST)
    reg.register("compclass", kw.TEXT_LIST)
    for key in _COMPONENT_LISTS:
        reg.register(key, kw.REAL_LIST, f"c_{key}")
    reg.register("watervisc", kw.TEXT)
    reg.register("gasvisc", kw.TEXT)
    reg.register("enthalpy", kw.TEXT)
    reg.register("interp", kw.TEXT)
    reg.register("idealgas", kw.SET_TRUE)
    reg.register("swt", kw.TABLE)
    reg.register("slt", kw.TABLE)
    reg.register("initmode", kw.TEXT)
    reg.register("xinit", kw.REAL_LIST)
    reg.register("yinit", kw.REAL_LIST)
    for key in ("solver", "pc", "decouple", "ras_solver", "output"):
        reg.register(key, kw.TEXT)
    for key in ("tolnew", "tolsol", "dtinit", "dtmax", "dtgrow", "dtcut",
                "ilut_tol"):
        reg.register(key, kw.REAL)
    for key in ("maxnew", "maxsol", "maxcuts", "overlap", "parts",
                "iluk_level", "ilut_p"):
        reg.register(key, kw.INTEGER)
    reg.register("maxchange", kw.REAL_LIST)
    reg.register("well", kw.WELL_SECTION, "wells")
    reg.register("run", kw.SCHEDULE_SECTION, "schedule")
    reg.register("reaction", kw.REACTION_SECTION, "reactions")
    return reg


def _components_from(vals):
    names = vals.get("compname")
    if not names:
        raise DeckError("deck defines no components (compname)")
    classes = vals.get("compclass")
    if not classes or len(classes) != len(names):
        raise DeckError("compclass must list one class per component")
    klass_map = {"water": P.WATER, "heavy": P.HEAVY, "light": P.LIGHT,
                 "ncg": P.NCG, "gas": P.NCG}
    ncomp = len(names)

    def prop(key, default=0.0):
        lst = vals.get(f"c_{key}")
        if lst is None:
            return [default] * ncomp
        if len(lst) != ncomp:
            raise DeckError(
                f"{key}: expected {ncomp} values, got {len(lst)}")
        return lst

    comps = []
    for i, (name, cls) in enumerate(zip(names, classes)):
        k = klass_map.get(cls.lower())
        if k is None:
            raise DeckError(f"unknown component class {cls!r}")
        kvs = tuple(prop(f"kv{j}")[i] for j in range(1, 6))
        cpg = tuple(prop(f"cpg{j}")[i] for j in range(1, 6))
        cpl = tuple(prop(f"cpl{j}")[i] for j in range(1, 6))
        if k == P.WATER:
            over = {}
            for attr, key in (("mw", "cmm"), ("pcrit", "pcrit"),
                              ("tcrit", "tcrit"), ("rho_ref", "molden"),
                              ("cp", "cp"), ("ct1", "ct1"), ("ct2", "ct2"),
                              ("cpt", "cpt"), ("hvr", "hvr"), ("ev", "ev"),
                              ("avisc", "avisc"), ("bvisc", "bvisc"),
                              ("avg", "avg"), ("bvg", "bvg")):
                lst = vals.get(f"c_{key}")
                if lst is not None and lst[i] != 0.0:
                    over[attr] = lst[i]
            if any(v != 0.0 for v in kvs):
                over["kv"] = kvs
            if any(v != 0.0 for v in cpg):
                over["cpg"] = cpg
            comps.append(P.water_component(name=name, **over))
            continue
        comp = P.Component(
            name=name, klass=k, mw=prop("cmm", 100.0)[i],
            pcrit=prop("pcrit", 500.0)[i], tcrit=prop("tcrit", 700.0)[i],
            rho_ref=prop("molden", 0.1)[i],
            p_ref=vals.get("prpor", P.units.STD_PRESSURE)
            if False else P.units.STD_PRESSURE,
            cp=prop("cp")[i], ct1=prop("ct1")[i], ct2=prop("ct2")[i],
            cpt=prop("cpt")[i], kv=kvs, cpg=cpg, cpl=cpl,
            hvr=prop("hvr")[i], ev=prop("ev", 1.0)[i],
            hvapr=prop("hvapr")[i], avisc=prop("avisc")[i],
            bvisc=prop("bvisc")[i], avg=prop("avg")[i], bvg=prop("bvg")[i])
        scheme = vals.get("enthalpy", "").lower()
        if scheme == "gas" or (not scheme and any(c != 0.0 for c in cpg)):
            comp.enthalpy_scheme = "gas-based"
        elif scheme == "simple":
            comp.enthalpy_scheme = "simple-hvap"
        else:
            comp.enthalpy_scheme = "liquid-based"
        P.apply_default_heat_capacity(comp)
        comps.append(comp)
    return comps


def load_deck(path=None, text=None, search_dirs=()):
    if text is None:
        with open(path) as fh:
            text = fh.read()
        search_dirs = tuple(search_dirs) + (os.path.dirname(
            os.path.abspath(path)),)
    vals = build_registry().parse(text)

    unit = vals.get("unit", "field").lower()
    if unit != "field":
        raise DeckError(f"only field units are supported, got {unit!r}")

    dims = vals.get("grid")
    if not dims or len(dims) != 3:
        raise DeckError("deck needs 'grid: nx ny nz'")
    nx, ny, nz = dims

    def axis(key, n):
        toks = vals.get(key)
        if toks is None:
            raise DeckError(f"deck needs '{key}:'")
        return kw.expand_repeats(toks)

    dxv = axis("dx", nx)
    dyv = axis("dy", ny)
    dzv = axis("dz", nz)

    def spatial(key, default=None, required=False):
        toks = vals.get(key)
        if toks is None:
            if required:
                raise DeckError(f"deck needs '{key}:'")
            return None if default is None else np.full(nx * ny * nz,
                                                        float(default))
        sa = kw.parse_spatial_assignment(toks)
        return sa.resolve((nx, ny, nz), search_dirs=search_dirs)

    active = None
    null = spatial("null")
    if null is not None:
        active = null > 0.5
    grid = build_grid((nx, ny, nz), dxv, dyv, dzv,
                      top_depth=vals.get("top", 0.0), active=active)

    phi_ref = spatial("por", required=True)
    permx = spatial("permx", required=True)
    permy = spatial("permy", default=None)
    permz = spatial("permz", default=None)
    if permy is None:
        permy = permx.copy()
    if permz is None:
        permz = permx.copy()

    def apply_mods(target, arr):
        for mod in vals.get("mod", []):
            if mod.target == target:
                shaped = arr.reshape(nz, ny, nx).transpose(2, 1, 0)
                mod.apply(shaped)
                arr[:] = shaped.transpose(2, 1, 0).reshape(-1)
        return arr

    for name, arr in (("permx", permx), ("permy", permy), ("permz", permz),
                      ("por", phi_ref)):
        apply_mods(name, arr)

    # porosity floor marks cells inactive
    low_phi = phi_ref < 1e-3
    if np.any(low_phi):
        grid.active &= ~low_phi
        if not grid.active.any():
            raise DeckError("porosity floor removed every cell")

    comps = _components_from(vals)
    rockcp = vals.get("rockcp", [35.0])
    rock = P.RockThermal(
        cpor=vals.get("cpor", 0.0), ctpor=vals.get("ctpor", 0.0),
        cptpor=vals.get("cptpor", 0.0),
        p_ref=vals.get("prpor", P.units.STD_PRESSURE),
        t_ref=vals.get("trpor", P.units.STD_TEMPERATURE),
        porosity_form=vals.get("porform", "linear"),
        volume_rule={"rock": "rock-constant", "bulk": "bulk-constant"}[
            vals.get("volconst", "rock").lower()],
        cp1_r=rockcp[0], cp2_r=rockcp[1] if len(rockcp) > 1 else 0.0,
        k_w=vals.get("thconw", 24.0), k_o=vals.get("thcono", 24.0),
        k_g=vals.get("thcong", 24.0), k_r=vals.get("thconr", 24.0))

    swt = vals.get("swt")
    slt = vals.get("slt")
    if swt is None or slt is None:
        raise DeckError("deck needs swt and slt relative permeability tables")
    swt.columns = ["Sw", "krw", "krow", "Pcw"][:swt.rows.shape[1]]
    slt.columns = ["Sl", "krg", "krog", "Pcg"][:slt.rows.shape[1]]
    relperm = P.RelPermTables(_pad4(swt), _pad4(slt),
                              krocw=vals.get("krocw", 0.0))

    pset = P.PropertySet(
        components=comps, rock=rock, relperm=relperm,
        per=P.PerConfig(vals.get("pereps", 1e-4)),
        t_ref_enthalpy=vals.get("temr", 77.0),
        water_visc_mode={"table": "table", "correlation": "correlation"}[
            vals.get("watervisc", "table").lower()],
        gas_visc_mode=vals.get("gasvisc", "table").lower(),
        interp_method={"linear": "linear", "cubic": "monotone-cubic"}[
            vals.get("interp", "linear").lower()],
        ideal_gas=bool(vals.get("idealgas", False)))
    if pset.gas_visc_mode == "mixing":
        for c in pset.components:
            if c.klass in (P.WATER, P.LIGHT, P.NCG) and c.avg == 0.0:
                raise DeckError(
                    f"gasvisc mixing needs avg/bvg for component {c.name!r}")

    numerics = NumericsConfig()
    block = {k: [str(v)] if not isinstance(v, list)
             else [str(t) for t in v]
             for k, v in vals.items()
             if k in ("solver", "pc", "decouple", "ras_solver", "tolnew",
                      "tolsol", "maxnew", "maxsol", "dtinit", "dtmax",
                      "dtgrow", "dtcut", "maxcuts", "overlap", "parts",
                      "iluk_level", "ilut_p", "ilut_tol", "maxchange")}
    numerics.apply_tokens(block)

    initial = {
        "mode": vals.get("initmode", "explicit").lower(),
        "p": spatial("pres"),
        "T": spatial("temp"),
        "Sw": spatial("sw"),
        "Sg": spatial("sg", default=0.0),
        "x": vals.get("xinit", [1.0] * sum(1 for c in comps
                                           if c.klass in (P.HEAVY, P.LIGHT))),
        "y": vals.get("yinit", [0.0] * sum(1 for c in comps
                                           if c.klass == P.NCG)),
        "ref_depth": vals.get("refdepth"),
        "ref_pressure": vals.get("refpres"),
    }

    hl = vals.get("hloss")
    heat_loss = None
    if hl is not None:
        if len(hl) != 2:
            raise DeckError("hloss takes 'conductivity heat-capacity'")
        heat_loss = (hl[0], hl[1])

    schedule = vals.get("schedule")
    if schedule is None:
        raise DeckError("deck needs a 'run' ... 'stop' schedule")

    return Deck(grid=grid, pset=pset, well_specs=vals.get("wells", []),
                schedule=schedule, numerics=numerics, initial=initial,
                permx=permx, permy=permy, permz=permz, phi_ref=phi_ref,
                heat_loss=heat_loss,
                report_style=vals.get("output", "vtu").lower(),
                title=" ".join(vals.get("title", ["model"])))


def _pad4(tab):
    rows = tab.rows
    if rows.shape[1] < 4:
        pad = np.zeros((rows.shape[0], 4 - rows.shape[1]))
        tab.rows = np.hstack([rows, pad])
        tab.columns = tab.columns + ["Pc"] * (4 - len(tab.columns))
    return tab


def bind_model(deck):
    """Instantiate the runtime Model (grid + wells + properties)."""
    wells = [build_well(spec, deck.grid, deck.permx, deck.permy, deck.permz,
                        k_t_ref=deck.pset.rock.k_r)
             for spec in deck.well_specs]
    heat_loss = None
    if deck.heat_loss is not None:
        t_init = deck.initial["T"]
        if t_init is None:
            raise DeckError("hloss needs an initial temperature field")
        t_full = np.asarray(t_init, dtype=float)
        if t_full.ndim == 0 or t_full.size == 1:
            t_full = np.full(deck.grid.ncell, float(np.ravel(t_init)[0]))
        heat_loss = HeatLossConfig(deck.heat_loss[0], deck.heat_loss[1],
                                   t_full)
    model = Model(deck.grid, deck.pset, wells, deck.permx, deck.permy,
                  deck.permz, deck.phi_ref, heat_loss=heat_loss)
    if heat_loss is not None:
        model.heat_loss.t_initial = heat_loss.t_initial[model.active]
    return model


def initial_state(deck, model):
    init = deck.initial
    return apply_initial_conditions(
        model, mode=init["mode"], p=init["p"], T=init["T"], Sw=init["Sw"],
        Sg=init["Sg"], x=init["x"], y=init["y"],
        ref_depth=init["ref_depth"], ref_pressure=init["ref_pressure"])
