"""Pure numpy fallback with the same contract as the compiled kernels."""

from __future__ import annotations

import numpy as np


def wave_rhs_1d(rho, v, g, drho, dv, dg, h, q, m2, c1, c2, c4, c5, cg, e1, e2):
    r = rho[2:-2]
    w = v[2:-2]
    opr = 1.0 + r
    lap = (-rho[:-4] + 16.0 * rho[1:-3] - 30.0 * r + 16.0 * rho[3:-1] - rho[4:]) / (12.0 * h * h)
    d1 = (rho[:-4] - 8.0 * rho[1:-3] + 8.0 * rho[3:-1] - rho[4:]) / (12.0 * h)
    G = m2 * w * w / (opr * opr) + c4 * opr
    drho[2:-2] = w
    dv[2:-2] = G * (lap + q * d1) + c1 * r * opr - c2 * w + c5 * w * w / opr
    dg[:] = cg * rho * (1.0 + rho) ** e1 * (-g) ** e2
    return float(G.min()) if G.size else float("inf")


def wave_rhs_2d(rho, v, g, drho, dv, dg, h, q, m2, c1, c2, c4, c5, cg, e1, e2):
    r = rho[2:-2, 2:-2]
    w = v[2:-2, 2:-2]
    opr = 1.0 + r
    lap = ((-rho[:-4, 2:-2] + 16.0 * rho[1:-3, 2:-2] - 30.0 * r + 16.0 * rho[3:-1, 2:-2] - rho[4:, 2:-2])
           + (-rho[2:-2, :-4] + 16.0 * rho[2:-2, 1:-3] - 30.0 * r + 16.0 * rho[2:-2, 3:-1] - rho[2:-2, 4:])
           ) / (12.0 * h * h)
    d1 = (rho[:-4, 2:-2] - 8.0 * rho[1:-3, 2:-2] + 8.0 * rho[3:-1, 2:-2] - rho[4:, 2:-2]) / (12.0 * h)
    G = m2 * w * w / (opr * opr) + c4 * opr
    drho[2:-2, 2:-2] = w
    dv[2:-2, 2:-2] = G * (lap + q * d1) + c1 * r * opr - c2 * w + c5 * w * w / opr
    dg[...] = cg * rho * (1.0 + rho) ** e1 * (-g) ** e2
    return float(G.min()) if G.size else float("inf")
