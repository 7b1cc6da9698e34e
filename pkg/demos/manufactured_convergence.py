"""Solve with a known answer on three grids and watch the error shrink.

alpha = sin(2x) cos(y) e^{z/2} has laplacian -4.75 alpha, so feeding that
source and alpha's own boundary trace back in must reproduce alpha up to
discretization error. Second order: each grid halving should divide the
sup error by about four.
"""

import numpy as np

import hqlab.elliptic as elliptic
import hqlab.geometry as geometry

BOX = [[0.0, 1.0]] * 3

print(f"{'n':>4} {'h':>10} {'sup error':>12} {'ratio':>7}")
prev = None
for n in (17, 33, 65):
    dom = geometry.build_domain(BOX, n)
    g = geometry.METRIC_PRESETS["flat"](dom)
    op = elliptic.assemble(g, dom)
    x = dom.node_coords()
    alpha = np.sin(2 * x[..., 0]) * np.cos(x[..., 1]) * np.exp(0.5 * x[..., 2])
    sol = elliptic.solve_dirichlet(op, h=-4.75 * alpha, f=alpha)
    err = float(np.max(np.abs((sol.values - alpha)[dom.allowed])))
    ratio = "" if prev is None else f"{prev / err:7.2f}"
    print(f"{n:>4} {dom.h[0]:>10.5f} {err:>12.3e} {ratio:>7}")
    prev = err
