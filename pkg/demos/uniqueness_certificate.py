"""Can a harmonic field hide from a boundary-adjacent plane patch? Measure it.

Restrict a basis of harmonic quaternion fields to one interior plane and
take the smallest singular value of the (normalized) restriction matrix.
A ratio comfortably above zero certifies that nothing in the span of the
basis vanishes on the patch, which is the checkable shadow of a
unique-continuation statement.
"""

import hqlab.analysis as analysis
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry

dom = geometry.build_domain([[0.0, 1.0]] * 3, 17)
g = geometry.METRIC_PRESETS["flat"](dom)
op = elliptic.assemble(g, dom)

fields, ids = analysis.build_probe_basis(op, count=20, seed=2026)
patch = analysis.plane_patch(dom, axis=2, thickness=1)
probe = analysis.uniqueness_probe(fields, patch, g, ids=ids)

print(probe.header)
print(f"patch: {patch.thickness} plane(s) normal to axis {patch.axis} "
      f"at index {patch.plane}, {len(patch.nodes)} nodes")
print(f"{len(fields)} fields, smallest-over-largest singular value ratio: "
      f"{probe.ratio:.6e}\n")

print("per-field patch visibility (sup on patch / sup on domain):")
for line in probe.certificate_csv().splitlines()[1:8]:
    fid, s_patch, s_dom, ratio = line.split(",")
    print(f"  {fid:>8}: {float(ratio):.4f}")
print("  ...")
