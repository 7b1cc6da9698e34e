"""Second-order jets of a harmonic family span a 9d slice of the 10d jet space.

The missing direction pairs with the Laplace stencil coefficients: every
member is harmonic, so their jets all annihilate it. The smallest singular
value collapses and its right singular vector lines up with that stencil.
"""

import sys

import numpy as np

import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
import hqlab.jets as jets

n = int(sys.argv[1]) if len(sys.argv) > 1 else 33
dom = geometry.build_domain([[0.0, 1.0]] * 3, n)
g = geometry.METRIC_PRESETS["conformal-sine"](dom, amplitude=0.3)
op = elliptic.assemble(g, dom)
fam = ctl.solve_family(op, ctl.default_dictionary(dom, size=40, seed=2026))

a = tuple(s // 2 for s in dom.shape)
rep = jets.jet_span_report(op, a, fam)
print(f"jet spectrum at {a} on the {n}^3 grid:")
for i, s in enumerate(rep.svals):
    bar = "#" * max(1, int(40 * s / rep.svals[0]))
    print(f"  s{i + 1:<2} {s:10.3e}  {bar}")
drop = rep.svals[-1] / rep.svals[0]
print(f"\ns10/s1 = {drop:.2e} -> numerical rank "
      f"{int(np.sum(rep.svals > 1e-3 * rep.svals[0]))}")
print(f"cosine of the null vector against the Laplace jet: "
      f"{rep.laplace_cosine:.7f}")
