"""Canonical two-dimensional wedge geometry for diffraction checks.

Angles are measured from the 0-face around the edge; the source sits at
``phi_inc`` and ``s_src`` from the edge, the observer at ``phi_obs`` and
``s_obs``. Geometrical-optics terms are switched on and off by their
shadow boundaries so the total field shows any UTD discontinuity.
"""
import cmath
import math

from uavrt.em import WaveContext, WedgeDiffractionInput, diffracted_field

CTX = WaveContext(28_000.0)


def _go(ctx, s_src, s_obs, angle):
    r = math.sqrt(s_src**2 + s_obs**2 - 2 * s_src * s_obs * math.cos(angle))
    return cmath.exp(-1j * ctx.wavenumber * r) / r


def total_field(n, phi_inc, phi_obs, s_src, s_obs, r0=-1.0, rn=-1.0, ctx=CTX, side=0):
    """Direct + face reflections + diffracted field at the observer.

    ``side`` forces a one-sided limit exactly on a shadow boundary:
    -1 takes the lit side, +1 the shadow side, 0 decides by strict
    comparison.
    """
    isb = math.pi + phi_inc
    rsb0 = math.pi - phi_inc
    rsbn = (2 * n - 1) * math.pi - phi_inc

    def lit(boundary, below=True):
        if math.isclose(phi_obs, boundary, abs_tol=1e-12) and side:
            return side < 0 if below else side > 0
        return phi_obs < boundary if below else phi_obs > boundary

    e = 0j
    if lit(isb):
        e += _go(ctx, s_src, s_obs, phi_obs - phi_inc)
    if lit(rsb0):
        e += r0 * _go(ctx, s_src, s_obs, phi_obs + phi_inc)
    if lit(rsbn, below=False):
        e += rn * _go(ctx, s_src, s_obs, phi_obs - (2 * n * math.pi - phi_inc))
    e0 = cmath.exp(-1j * ctx.wavenumber * s_src) / s_src * s_src  # field amplitude 1 at 1 m
    inp = WedgeDiffractionInput(s_obs, s_src, n, phi_inc, phi_obs, r0, rn)
    return e + diffracted_field(e0, inp, ctx)


def db(e):
    return 20.0 * math.log10(abs(e))


def isb_sweep(n, phi_inc_deg=40.0, s=10.0, half_width_deg=2.0, step_deg=0.1):
    """Field levels (dB) on a 0.1 degree sweep straddling the incidence
    shadow boundary, plus the one-sided limits exactly on it."""
    phi_inc = math.radians(phi_inc_deg)
    isb = math.pi + phi_inc
    k = round(half_width_deg / step_deg)
    # offset by half a step so no sample lands on the boundary itself
    angles = [isb + math.radians((i + 0.5) * step_deg) for i in range(-k, k)]
    levels = [db(total_field(n, phi_inc, a, s, s)) for a in angles]
    lit = db(total_field(n, phi_inc, isb, s, s, side=-1))
    shadow = db(total_field(n, phi_inc, isb, s, s, side=+1))
    return angles, levels, lit, shadow
