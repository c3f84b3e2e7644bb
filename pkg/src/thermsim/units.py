"""Field-unit constants and load-time unit conversions.

All simulator kernels work in field units: psi, degF, ft, md, cp, lbmol,
Btu, day.  Coefficients published in other unit systems (atm, degC,
J/gmol) are converted once, when a deck is loaded, so the kernels stay
unit-blind.
"""

import numpy as np

# Darcy conversion, md*ft*psi/cp -> bbl/day (standard field-unit constant).
DARCY_BBL = 1.127e-3
CF_PER_BBL = 5.614583
# md*ft*psi/cp -> ft^3/day
DARCY_CF = DARCY_BBL * CF_PER_BBL

# Gas constant, psi*ft^3/(lbmol*degR).
R_GAS = 10.7316

# degF -> degR offset.
T_ABS_OFFSET = 459.67

# psi*ft^3 -> Btu (144 ft*lbf / 778.169 ft*lbf/Btu).
PSI_FT3_TO_BTU = 144.0 / 778.169

# Mass density [lb/ft^3] -> pressure gradient [psi/ft].
LB_FT3_TO_PSI_FT = 1.0 / 144.0

PSI_PER_ATM = 14.6959488

# 1 J/gmol -> Btu/lbmol.
BTU_LBMOL_PER_J_GMOL = 453.59237 / 1055.05585

STD_PRESSURE = 14.696   # psi
STD_TEMPERATURE = 60.0  # degF


def t_abs(t_f):
    """degF -> degR."""
    return t_f + T_ABS_OFFSET


def f_from_c(t_c):
    return t_c * 1.8 + 32.0


def c_from_f(t_f):
    return (t_f - 32.0) / 1.8


def rebase_poly_c_to_f(coeffs_c, energy_factor=1.0):
    """Re-express a polynomial in t[degC] as one in t[degF].

    ``coeffs_c`` are ascending coefficients of p(t_C); the returned ascending
    coefficients q satisfy q(t_F) = energy_factor * p((t_F - 32)/1.8).
    Used to convert heat-capacity polynomials supplied in (J/gmol, degC)
    into (Btu/lbmol, degF) at deck load.
    """
    from math import comb

    coeffs_c = np.asarray(coeffs_c, dtype=float)
    n = len(coeffs_c)
    out = np.zeros(n)
    # ((t - 32)/1.8)^k expanded via binomial theorem
    for k in range(n):
        ck = coeffs_c[k]
        if ck == 0.0:
            continue
        for j in range(k + 1):
            out[j] += ck * comb(k, j) * (1.0 / 1.8) ** k * (-32.0) ** (k - j)
    return out * energy_factor
