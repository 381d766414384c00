"""Regenerate tests/oracle_values.json from routes independent of the package.

Closed forms are evaluated with mpmath/sympy at 30 digits; minimisers come
from a dense grid search followed by Newton polishing.
"""
import json
from pathlib import Path

import mpmath as mp
import numpy as np
import sympy as sp

mp.mp.dps = 30


def reduced_potential(lam, a, b, c):
    return a / 2 * lam**2 + b / 3 * lam**3 + 3 * c / 2 * lam**4


def grid_minimiser(a, b, c):
    grid = np.linspace(-5, 5, 200001)
    lam = mp.mpf(grid[np.argmin(reduced_potential(grid, a, b, c))])
    dV = lambda x: a * x + b * x**2 + 6 * c * x**3
    return mp.findroot(dV, lam)


def uniaxial_symbolic():
    lam, a, b, c = sp.symbols("l a b c")
    Q = sp.diag(lam, lam, -2 * lam)
    tr2 = (Q * Q).trace()
    rhs = -a * Q + b * (Q * Q - tr2 / 3 * sp.eye(3)) - c * tr2 * Q
    fb = a / 2 * tr2 - b / 3 * (Q * Q * Q).trace() + c / 4 * tr2**2
    return sp.expand(rhs[0, 0]), sp.expand(fb)


def main():
    a, b, c = 1, 10, 1
    lam_star = grid_minimiser(a, b, c)
    rhs11, fb = uniaxial_symbolic()
    roots = sorted(float(-r) for r in np.roots([6 * c, b, a]))  # u = -lambda roots, ascending
    u1, u2 = roots
    out = {
        "lambda_star": float(lam_star),
        "lambda_star_closed": float((-10 - mp.sqrt(76)) / 12),
        "V_lambda_star": float(reduced_potential(lam_star, a, b, c)),
        "uniaxial_rhs11": str(rhs11),
        "uniaxial_fB": str(fb),
        "fB_uniaxial_minus1": float(sp.sympify(str(fb)).subs({"a": 1, "b": 10, "c": 1, "l": -1})),
        "front_speed_planar": float(mp.sqrt(3 * c) * (u2 - 2 * u1)),
        "front_width": float(1 / (u2 * mp.sqrt(3 * c))),
        "mineineq_X0_Y1": float(mp.quad(lambda x: mp.e ** (-(x**2)), [-1, 0])),
        "mineineq_X10_Y1_rhs": float((mp.mpf(2) / 11) ** 2),
        "kernel_diff_x0_t1": float((4 * mp.pi) ** -1.5 * abs(mp.mpf(2) ** -1.5 - 1)),
        "kernel_bound_x0_t1": float(2 / mp.mpf(2) ** 2.5),
        "phi1_origin_t0": float((4 * mp.pi) ** -1.5),
        "growth_constant": b**2 / (2 * c) - a,
        "mass_power_tail_delta2": float(4 * mp.pi * mp.quad(lambda r: r**2 / (1 + r) ** 10, [0, mp.inf])),
    }
    path = Path(__file__).resolve().parents[1] / "tests" / "oracle_values.json"
    path.write_text(json.dumps(out, indent=2) + "\n")
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
