"""Print the multiplication table, flat and in a curved orthonormal frame."""

import numpy as np

import hqlab.geometry as geometry
import hqlab.quaternion as qt

dom = geometry.build_domain([[0.0, 1.0]] * 3, 17)
flat = geometry.METRIC_PRESETS["flat"](dom)
curved = geometry.METRIC_PRESETS["conformal-sine"](dom, amplitude=0.3)


def show_table(g, frame, node, label):
    units = [qt.Quaternion(0.0, frame[m], node) for m in range(3)]
    names = "ijk"
    print(f"\n{label} at node {node}:")
    for a, na in zip(units, names):
        row = []
        for b, nb in zip(units, names):
            v = qt.to_standard(qt.qmul(a, b, g), frame, g)
            v[np.abs(v) < 1e-13] = 0.0
            parts = [f"{v[0]:+.0f}"] if abs(v[0]) > 0.5 else []
            parts += [f"{v[m + 1]:+.0f}{names[m]}"
                      for m in range(3) if abs(v[m + 1]) > 0.5]
            row.append("".join(parts) or "0")
        print(f"  {na} * (i j k) = " + "  ".join(f"{c:>4}" for c in row))


node = (8, 8, 8)
show_table(flat, np.eye(3), node, "flat metric, coordinate axes")

# Gram-Schmidt an orthonormal frame under the curved metric, then fix
# handedness so the wedge part keeps the right sign
gn = curved.at(node)
frame = []
for v in np.eye(3):
    for w in frame:
        v = v - (v @ gn @ w) * w
    frame.append(v / np.sqrt(v @ gn @ v))
frame = np.stack(frame)
if np.sqrt(np.linalg.det(gn)) * np.linalg.det(frame) < 0:
    frame[2] = -frame[2]
show_table(curved, frame, node, "conformal-sine metric, adapted frame")

rng = np.random.default_rng(0)
p = qt.Quaternion(float(rng.standard_normal()), rng.standard_normal(3), node)
print(f"\n|p^2| - |p|^2 = "
      f"{qt.qnorm(qt.qmul(p, p, curved), curved) - qt.qnorm(p, curved)**2:.2e}")
