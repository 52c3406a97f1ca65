"""Per-path electromagnetic quantities.

Fields are complex amplitudes relative to the field 1 m from the
transmitter, so the absolute reference cancels in every ratio the channel
uses. Losses are in dB; ``fspl_db`` returns a positive attenuation.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

C0 = 299_792_458.0  # m/s
SMALL_X = 1e-8


@dataclass(frozen=True)
class WaveContext:
    frequency_mhz: float

    def __post_init__(self):
        if not self.frequency_mhz > 0:
            raise ValueError("frequency must be positive")

    @property
    def frequency_hz(self) -> float:
        return self.frequency_mhz * 1e6

    @property
    def wavelength(self) -> float:
        return C0 / self.frequency_hz

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength


class Polarization(str, Enum):
    PARALLEL = "parallel"  # E in the plane of incidence (TM)
    PERPENDICULAR = "perpendicular"  # E normal to the plane of incidence (TE)


def fspl_db(ctx: WaveContext, distance: float) -> float:
    """Free-space loss of the direct ray, 32.44 + 20 log f[MHz] + 20 log d[km]."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return 32.44 + 20.0 * math.log10(ctx.frequency_mhz) + 20.0 * math.log10(distance / 1000.0)


def los_field(ctx: WaveContext, d: float) -> complex:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return cmath.exp(-1j * ctx.wavenumber * d) / d


def reflection_coefficient(eps_r: float, theta: float, polarization) -> float:
    """Fresnel coefficient of a lossless dielectric half-space.

    ``theta`` is the incidence angle from the surface normal.
    """
    if not eps_r > 1:
        raise ValueError("relative permittivity must exceed 1")
    pol = Polarization(polarization)
    cos_t = math.cos(theta)
    root = math.sqrt(eps_r - math.sin(theta) ** 2)
    if pol is Polarization.PARALLEL:
        return (eps_r * cos_t - root) / (eps_r * cos_t + root)
    return (cos_t - root) / (cos_t + root)


def reflected_field(e0: complex, r: float, d_rx_s: float, d_s_tx: float, ctx: WaveContext) -> complex:
    if not (d_rx_s > 0 and d_s_tx > 0):
        raise ValueError("path legs must have positive length")
    d = d_rx_s + d_s_tx
    return e0 * r * cmath.exp(-1j * ctx.wavenumber * d) / d


def transition_function(x):
    """Kouyoumjian-Pathak transition function.

    F(x) = 2j sqrt(x) exp(jx) * int_{sqrt x}^inf exp(-j t^2) dt, with the
    tail integral from the modified Fresnel integral. Accepts scalars or
    arrays; below ``SMALL_X`` the leading terms of the small-argument series
    are used.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("transition function argument must be >= 0")
    sx = np.sqrt(x)
    fm, _ = special.modfresnelm(sx)
    out = 2j * sx * np.exp(1j * x) * fm
    small = x < SMALL_X
    if np.any(small):
        xs = x[small] if out.ndim else x
        series = (np.sqrt(np.pi * xs) - 2.0 * xs * np.exp(1j * np.pi / 4)) * np.exp(
            1j * (np.pi / 4 + xs)
        )
        if out.ndim:
            out[small] = series
        else:
            out = series
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class WedgeDiffractionInput:
    """Wedge geometry seen from one diffraction point.

    ``phi_incident`` and ``phi_observation`` are measured from the 0-face
    in the plane normal to the edge, through the exterior region, so both
    lie in ``[0, n*pi]``. ``r0`` and ``rn`` are the face reflection
    coefficients.
    """

    d_rx_s: float
    d_s_tx: float
    n: float
    phi_incident: float
    phi_observation: float
    r0: float = -1.0
    rn: float = -1.0

    def __post_init__(self):
        if not (self.d_rx_s > 0 and self.d_s_tx > 0):
            raise ValueError("distances must be positive")
        if not 1.0 <= self.n <= 2.0:
            raise ValueError(f"wedge factor n={self.n} outside [1, 2]")


def _cot_f(gamma: float, arg_scale: float, n: float) -> complex:
    """cot(gamma) * F(arg_scale * n^2 * sin^2 gamma), finite at sin(gamma) = 0."""
    s = math.sin(gamma)
    c = math.cos(gamma)
    if abs(s) < 1e-12:
        # one-sided limit; sin(gamma) = 0 is taken from the positive side
        sign = -1.0 if s < 0 else 1.0
        return sign * c * n * math.sqrt(math.pi * arg_scale) * cmath.exp(1j * math.pi / 4)
    return (c / s) * transition_function(arg_scale * n * n * s * s)


def utd_coefficient(inp: WedgeDiffractionInput, ctx: WaveContext) -> complex:
    """Four-term uniform wedge diffraction coefficient.

    The first two terms use the angle difference (incident/shadow
    boundaries), the last two the angle sum (reflection boundaries of the
    0-face and n-face, weighted by ``r0`` and ``rn``).
    """
    k = ctx.wavenumber
    n = inp.n
    dist_param = inp.d_rx_s * inp.d_s_tx / (inp.d_rx_s + inp.d_s_tx)
    arg_scale = 2.0 * k * dist_param
    diff = inp.phi_observation - inp.phi_incident
    summ = inp.phi_observation + inp.phi_incident
    g1 = (math.pi - diff) / (2 * n)
    g2 = (math.pi + diff) / (2 * n)
    g3 = (math.pi - summ) / (2 * n)
    g4 = (math.pi + summ) / (2 * n)
    pre = -cmath.exp(-1j * math.pi / 4) / (2 * n * math.sqrt(2 * math.pi * k))
    total = (
        _cot_f(g1, arg_scale, n)
        + _cot_f(g2, arg_scale, n)
        + inp.r0 * _cot_f(g3, arg_scale, n)
        + inp.rn * _cot_f(g4, arg_scale, n)
    )
    return pre * total


def diffracted_field(e0: complex, inp: WedgeDiffractionInput, ctx: WaveContext) -> complex:
    coef = utd_coefficient(inp, ctx)
    return diffracted_field_from_coefficient(e0, coef, inp.d_rx_s, inp.d_s_tx, ctx)


def diffracted_field_from_coefficient(e0, coef, d_rx_s, d_s_tx, ctx: WaveContext) -> complex:
    d = d_rx_s + d_s_tx
    spread = math.sqrt(d_rx_s / (d_s_tx * d))
    return e0 / d_rx_s * coef * spread * cmath.exp(-1j * ctx.wavenumber * d)


def excess_loss_db(e_ray: complex, e_los: complex) -> float:
    """20 log10 |E_ray / E_los|; negative for rays weaker than the direct one."""
    if abs(e_los) == 0:
        raise ValueError("reference LoS field is zero")
    if e_ray == e_los:
        return 0.0
    ratio = abs(e_ray) / abs(e_los)
    if ratio == 0:
        return -math.inf
    return 20.0 * math.log10(ratio)


def nlos_power_db(p0_db: float, excess_db: float) -> float:
    return p0_db + excess_db
