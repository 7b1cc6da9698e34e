"""Cover the box with gradient frames and rebuild an arbitrary field in them.

A frame ball is a region where three harmonic gradients stay linearly
independent with bounded condition number. The greedy cover picks balls
until every node is inside one; bump profiles normalized by their sum give
a partition of unity subordinate to the cover. Any quaternion field then
splits into scalar-times-unit plus frame-gradient pieces, ball by ball.
"""

import numpy as np

import hqlab.control as ctl
import hqlab.density as density
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
import hqlab.quaternion as quaternion

dom = geometry.build_domain([[0.0, 1.0]] * 3, 13)
g = geometry.METRIC_PRESETS["flat"](dom)
op = elliptic.assemble(g, dom)
fam = ctl.solve_family(op, ctl.default_dictionary(dom, size=24, seed=2026))

cover = density.build_frame_cover(op, family=fam, stride=4)
print(f"cover: {len(cover.balls)} balls on the {dom.shape[0]}^3 grid")
for ball in cover.balls:
    names = ", ".join(c.name for c in ball.controls)
    print(f"  center {ball.center}, radius {ball.radius:.3f}, "
          f"cond {ball.worst_condition:.1f}, frame [{names}]")

psum = cover.partition_sum()
print(f"partition of unity defect: "
      f"{np.max(np.abs(psum[dom.allowed] - 1.0)):.2e}")

rng = np.random.default_rng(9)
x = dom.node_coords()
comps = [np.cos(np.pi * (k[0] * x[..., 0] + k[1] * x[..., 1]
                         + k[2] * x[..., 2]))
         for k in rng.integers(1, 3, size=(4, 3))]
P = np.stack(comps, axis=-1)
P[~dom.allowed] = 0.0

rep = density.represent(P, cover)
print(f"representation error: sup {rep.error:.2e}, relative {rep.relative:.2e}")
nz = sum(int(np.any(rep.kappas[i] != 0.0)) for i in range(len(cover.balls)))
print(f"{nz} of {len(cover.balls)} balls carry nonzero coefficients")
