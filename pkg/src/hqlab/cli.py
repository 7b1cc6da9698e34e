"""Command line front end.

Every run is driven by a JSON config file validated against a strict schema
(unknown keys are rejected at every level, a seed is mandatory) and writes
its artifacts into one output directory: a subcommand report as JSON, any
CSV tables and raw field files, and a manifest recording the config hash,
seed, package versions, and wall time.

Exit codes: 0 on success, 2 for config problems (the offending keys are
listed on stderr), 3 for numerical failures (a diagnostics.json with the
error is left in the output directory).

All floating point output is written with 17 significant digits, and every
artifact except the manifest wall time is byte-for-byte reproducible from
the same config and seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import analysis
from . import control as ctl
from . import density
from . import elliptic
from . import geometry
from . import jets
from . import recovery

try:
    from importlib.metadata import version as _dist_version

    _VERSION = _dist_version("hqlab")
except Exception:  # pragma: no cover - missing metadata in odd installs
    _VERSION = "unknown"


# ---------------------------------------------------------------------------
# deterministic serialization

def _fmt(x: float) -> str:
    if not np.isfinite(x):
        raise ValueError(f"non-finite value {x!r} in output")
    return format(float(x), ".17g")


def dumps17(obj, indent: int = 0) -> str:
    """JSON text with sorted keys and floats at 17 significant digits.

    json.dumps offers no hook for float formatting, so this walks the tree
    itself. Supports dict, list/tuple, str, bool, None, ints, floats, and
    their numpy cousins.
    """
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        keys = sorted(obj)
        parts = [f"{inner}{json.dumps(str(k))}: {dumps17(obj[k], indent + 1)}"
                 for k in keys]
        return "{\n" + ",\n".join(parts) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = list(np.asarray(obj).tolist()) if isinstance(obj, np.ndarray) else list(obj)
        if not items:
            return "[]"
        parts = [f"{inner}{dumps17(v, indent + 1)}" for v in items]
        return "[\n" + ",\n".join(parts) + f"\n{pad}]"
    if isinstance(obj, bool) or isinstance(obj, np.bool_):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def csv17(header, rows) -> str:
    """CSV text; floats at 17 significant digits, trailing newline."""
    out = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (bool, np.bool_)):
                cells.append("true" if v else "false")
            elif isinstance(v, (int, np.integer)):
                cells.append(str(int(v)))
            elif isinstance(v, (float, np.floating)):
                cells.append(_fmt(float(v)))
            else:
                cells.append(str(v))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# config schema

_POINT = {"type": "array", "items": {"type": "integer", "minimum": 0},
          "minItems": 3, "maxItems": 3}
_VEC4 = {"type": "array", "items": {"type": "number"},
         "minItems": 4, "maxItems": 4}
_INTERVAL = {"type": "array", "items": {"type": "number"},
             "minItems": 2, "maxItems": 2}

_DOMAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "box": {"type": "array", "items": _INTERVAL, "minItems": 3, "maxItems": 3},
        "resolution": {"oneOf": [
            {"type": "integer", "minimum": 5},
            {"type": "array", "items": {"type": "integer", "minimum": 5},
             "minItems": 3, "maxItems": 3},
        ]},
        "mask": {"enum": ["box", "box_minus_box", "box_minus_column"]},
        "inner_box": {"type": "array", "items": _INTERVAL,
                      "minItems": 2, "maxItems": 3},
    },
}

_METRIC_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {"enum": sorted(geometry.METRIC_PRESETS)},
        "diag": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                 "minItems": 3, "maxItems": 3},
        "amplitude": {"type": "number"},
        "shear": {"type": "number"},
        "file": {"type": "string"},
    },
}

_DICT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "size": {"type": "integer", "minimum": 1},
        "kmax": {"type": "integer", "minimum": 1},
    },
}

_SUB_BLOCKS = {
    "solve": {
        "control": {"type": "string"},
        "rhs_constant": {"type": "number"},
    },
    "green": {
        "point": _POINT,
        "control": {"type": "string"},
    },
    "control": {
        "points": {"type": "array", "items": _POINT, "minItems": 1},
        "parts": {"enum": ["both", "scalar", "grad"]},
        "targets": {"type": "array", "items": _VEC4, "minItems": 1},
    },
    "separate": {
        "point_a": _POINT,
        "point_b": _POINT,
        "target_a": _VEC4,
        "target_b": _VEC4,
    },
    "jets": {
        "point": _POINT,
    },
    "density": {
        "pairs": {"type": "array",
                  "items": {"type": "array", "items": _POINT,
                            "minItems": 2, "maxItems": 2},
                  "minItems": 1},
        "stride": {"type": "integer", "minimum": 2},
        "degree": {"type": "integer", "minimum": 0},
    },
    "recover": {
        "harmonics_dir": {"type": "string"},
        "samples": {"type": "integer", "minimum": 15},
        "margin": {"type": "integer", "minimum": 1},
        "anchor": _POINT,
        "residual_limit": {"type": "number", "exclusiveMinimum": 0},
        "nodes": {"type": "array", "items": _POINT, "minItems": 1},
    },
    "analyze": {
        "probe_count": {"type": "integer", "minimum": 4},
        "axis": {"type": "integer", "minimum": 0, "maximum": 2},
        "plane": {"type": "integer", "minimum": 0},
        "thickness": {"type": "integer", "minimum": 1},
        "residual_tol": {"type": "number", "exclusiveMinimum": 0},
        "loop": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "axis": {"type": "integer", "minimum": 0, "maximum": 2},
                "plane": {"type": "integer", "minimum": 0},
                "lo": {"type": "array", "items": {"type": "integer"},
                       "minItems": 2, "maxItems": 2},
                "hi": {"type": "array", "items": {"type": "integer"},
                       "minItems": 2, "maxItems": 2},
            },
        },
    },
    "convergence": {
        "study": {"enum": ["solve", "conformal-identity", "rot-grad", "div-rot"]},
        "resolutions": {"type": "array",
                        "items": {"type": "integer", "minimum": 9},
                        "minItems": 2},
        "window": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.45},
    },
}


def _schema_for(sub: str) -> dict:
    props = {
        "seed": {"type": "integer"},
        "out": {"type": "string"},
        "domain": _DOMAIN_SCHEMA,
        "metric": _METRIC_SCHEMA,
        "dictionary": _DICT_SCHEMA,
        sub: {
            "type": "object",
            "additionalProperties": False,
            "properties": _SUB_BLOCKS[sub],
        },
    }
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "type": "object",
        "additionalProperties": False,
        "required": ["seed"],
        "properties": props,
    }


def validate_config(cfg, sub: str) -> list[str]:
    """All schema violations as human readable strings, empty when valid."""
    import jsonschema

    validator = jsonschema.Draft202012Validator(_schema_for(sub))
    msgs = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "(top level)"
        msgs.append(f"{where}: {err.message}")
    return msgs


# ---------------------------------------------------------------------------
# shared construction from config

def _build_domain(cfg: dict) -> geometry.GridDomain:
    d = cfg.get("domain", {})
    box = d.get("box", [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    res = d.get("resolution", 17)
    mask = d.get("mask", "box")
    inner = d.get("inner_box")
    if mask != "box" and inner is None:
        raise ValueError(f"mask {mask!r} needs an inner_box")
    return geometry.build_domain(box, res, mask_spec=mask, inner_box=inner)


def _build_metric(cfg: dict, dom: geometry.GridDomain) -> geometry.MetricField:
    m = cfg.get("metric", {})
    if "file" in m:
        if "preset" in m:
            raise ValueError("metric gives both a preset and a file")
        arr, meta = geometry.read_field(m["file"])
        if int(meta["components"]) != 6 or arr.shape[:-1] != dom.shape:
            raise ValueError(
                f"metric file must hold 6 components on the config grid, "
                f"got {arr.shape} for grid {dom.shape}")
        g = np.empty(dom.shape + (3, 3))
        iu = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
        for k, (i, j) in enumerate(iu):
            g[..., i, j] = arr[..., k]
            g[..., j, i] = arr[..., k]
        return geometry.make_metric(dom, g)
    preset = m.get("preset", "flat")
    kw = {k: m[k] for k in ("diag", "amplitude", "shear") if k in m}
    return geometry.METRIC_PRESETS[preset](dom, **kw)


def _build_dictionary(cfg: dict, dom: geometry.GridDomain):
    d = cfg.get("dictionary", {})
    return ctl.default_dictionary(dom, size=d.get("size", 40),
                                  seed=int(cfg["seed"]), kmax=d.get("kmax", 2))


def _named_control(cfg, dom, name: str):
    for c in _build_dictionary(cfg, dom):
        if c.name == name:
            return c
    raise ValueError(f"control {name!r} is not in the dictionary "
                     f"(increase dictionary.size or fix the name)")


def _core_point(dom, frac) -> tuple:
    return tuple(int(round(f * (n - 1))) for f, n in zip(frac, dom.shape))


# ---------------------------------------------------------------------------
# subcommand handlers; each returns (summary dict, list of extra files written)

def _cmd_solve(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("solve", {})
    c = _named_control(cfg, dom, block.get("control", "x1*x2"))
    rhs = None
    if "rhs_constant" in block:
        rhs = np.full(dom.shape, float(block["rhs_constant"]))
    sol = elliptic.solve_dirichlet(op, h=rhs, f=c.values)
    geometry.write_field(out / "w.field", dom, sol.values)
    summary = {
        "control": c.name,
        "rhs_constant": block.get("rhs_constant"),
        "cg_iterations": int(sol.iterations),
        "cg_relative_residual": float(sol.cg_relres),
        "relative_defect": float(sol.residual),
        "sup": float(np.max(np.abs(sol.values[dom.allowed]))),
        "boundary_sup": float(np.max(np.abs(c.values))),
    }
    return summary, ["w.field", "w.field.json"]


def _cmd_green(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("green", {})
    x = tuple(block.get("point", _core_point(dom, (0.5, 0.5, 0.5))))
    kern = elliptic.poisson_kernel(op, x)
    c = _named_control(cfg, dom, block.get("control", "x1*x2"))
    direct = elliptic.harmonic_extension(op, c.values).values[x]
    via_kernel = kern.apply(c.values)
    col = elliptic.green_column(op, x)
    geometry.write_field(out / "column.field", dom, col.values)
    w = kern.node_weights()
    rows = [(int(i), int(j), int(k), float(v))
            for (i, j, k), v in zip(dom.boundary_nodes, w)]
    (out / "kernel.csv").write_text(csv17(("i1", "i2", "i3", "weight"), rows))
    summary = {
        "point": list(x),
        "row_sum": float(kern.row_sum),
        "control": c.name,
        "direct_value": float(direct),
        "kernel_value": float(via_kernel),
        "reproduction_defect": float(abs(direct - via_kernel)),
        "n_boundary_nodes": int(len(dom.boundary_nodes)),
    }
    return summary, ["column.field", "column.field.json", "kernel.csv"]


def _cmd_control(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("control", {})
    pts = [tuple(p) for p in block.get("points", [
        _core_point(dom, (0.3, 0.35, 0.4)), _core_point(dom, (0.65, 0.6, 0.7))])]
    parts = block.get("parts", "both")
    fam = ctl.solve_family(op, _build_dictionary(cfg, dom), jobs=jobs)
    m = ctl.ma_matrix(op, pts, fam, parts=parts)
    (out / "svals.csv").write_text(
        csv17(("index", "sigma"), [(i, s) for i, s in enumerate(m.svals, 1)]))
    summary = {
        "points": [list(p) for p in pts],
        "parts": parts,
        "n_controls": len(fam),
        "rows": int(m.matrix.shape[0]),
        "rank": int(m.rank()),
        "svals": [float(s) for s in m.svals],
    }
    files = ["svals.csv"]
    if "targets" in block:
        # target rows are always [alpha, u1, u2, u3]; scalar parts use the
        # first entry, grad parts the last three, both the full pair
        raw = block["targets"]
        if parts == "scalar":
            targets = [row[0] for row in raw]
        elif parts == "grad":
            targets = [row[1:] for row in raw]
        else:
            targets = [(row[0], row[1:]) for row in raw]
        sol = ctl.solve_control(m, targets)
        summary["synthesis"] = {
            "status": sol.status,
            "defect": float(sol.defect),
            "control_norm": float(sol.control_norm),
            "achieved": [float(v) for v in sol.achieved],
            "target": [float(v) for v in sol.target],
        }
        geometry.write_field(
            out / "wf.field", dom,
            elliptic.harmonic_extension(op, sol.control.values).values)
        files += ["wf.field", "wf.field.json"]
    return summary, files


def _cmd_separate(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("separate", {})
    a = tuple(block.get("point_a", _core_point(dom, (0.3, 0.3, 0.3))))
    b = tuple(block.get("point_b", _core_point(dom, (0.7, 0.65, 0.6))))
    ta = block.get("target_a", [1.0, 0.2, -0.1, 0.3])
    tb = block.get("target_b", [-0.5, 0.1, 0.4, -0.2])
    d = cfg.get("dictionary", {})
    sep = ctl.separate(op, a, b, (ta[0], ta[1:]), (tb[0], tb[1:]),
                       seed=int(cfg["seed"]), size=d.get("size", 40))
    geometry.write_field(out / "q.field", dom, sep.q)
    summary = {
        "point_a": list(a), "point_b": list(b),
        "target_a": [float(v) for v in ta],
        "target_b": [float(v) for v in tb],
        "achieved_a": [float(v) for v in sep.achieved[0]],
        "achieved_b": [float(v) for v in sep.achieved[1]],
        "endpoint_errors": [float(e) for e in sep.endpoint_errors],
        "rot_residual": float(sep.rot_residual),
        "div_residual": float(sep.div_residual),
        "scalar_defect": float(sep.scalar_defect),
        "gradient_defect": float(sep.gradient_defect),
        "note": sep.note,
    }
    return summary, ["q.field", "q.field.json"]


def _cmd_jets(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("jets", {})
    a = tuple(block.get("point", _core_point(dom, (0.5, 0.5, 0.5))))
    fam = ctl.solve_family(op, _build_dictionary(cfg, dom), jobs=jobs)
    rep = jets.jet_span_report(op, a, fam)
    (out / "svals.csv").write_text(jets.singular_values_csv(rep.svals))
    s = rep.svals
    rank = int(np.sum(s > 1e-3 * s[0]))
    summary = {
        "point": list(a),
        "n_controls": len(fam),
        "svals": [float(v) for v in s],
        "rank": rank,
        "laplace_cosine": float(rep.laplace_cosine),
        "null_vector": [float(v) for v in rep.null_vector],
    }
    return summary, ["svals.csv"]


def _smooth_qfield(dom, rng):
    """Seeded smooth quaternion test field, a few low modes per component."""
    x = dom.node_coords()
    comps = []
    for _ in range(4):
        k = rng.integers(1, 3, size=(2, 3))
        c = rng.standard_normal(2)
        f = sum(ci * np.cos(np.pi * (ki[0] * x[..., 0] + ki[1] * x[..., 1]
                                     + ki[2] * x[..., 2]))
                for ci, ki in zip(c, k))
        comps.append(f)
    return np.stack(comps, axis=-1)


def _cmd_density(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("density", {})
    seed = int(cfg["seed"])
    rng = np.random.default_rng(seed)
    dictionary = _build_dictionary(cfg, dom)
    fam = ctl.solve_family(op, dictionary, jobs=jobs)

    if "pairs" in block:
        pairs = [tuple(map(tuple, p)) for p in block["pairs"]]
    else:
        core = np.argwhere(geometry.interior_core(dom, 2))
        idx = rng.choice(len(core), size=6, replace=False)
        pairs = [(tuple(core[idx[2 * i]]), tuple(core[idx[2 * i + 1]]))
                 for i in range(3)]
    sep = density.scalar_separation_check(op, pairs, dictionary, family=fam)

    cover = density.build_frame_cover(op, family=fam,
                                      stride=block.get("stride", 4), jobs=jobs)
    psum = cover.partition_sum()
    part_defect = float(np.max(np.abs(psum[dom.allowed] - 1.0)))

    p = _smooth_qfield(dom, rng)
    p[~dom.allowed] = 0.0
    rep = density.represent(p, cover)

    summary = {
        "separation": {
            "pairs": [[list(a), list(b)] for a, b in pairs],
            "margins": [float(v) for v in sep.margins],
            "vanish_floor": float(sep.vanish_floor),
            "passed": bool(sep.passed),
        },
        "cover": {
            "n_balls": len(cover),
            "worst_condition": float(max(b.worst_condition for b in cover.balls)),
            "partition_defect": part_defect,
        },
        "represent": {
            "error": float(rep.error),
            "relative": float(rep.relative),
        },
    }
    if "degree" in block:
        fits = []
        for deg in range(int(block["degree"]) + 1):
            fit = density.approximate_in_algebra(p, cover, fam, deg)
            fits.append({"degree": deg,
                         "ls_objective": float(fit.ls_objective),
                         "sup_error": float(fit.sup_error),
                         "relative": float(fit.relative),
                         "n_terms": int(fit.n_terms)})
        summary["algebra"] = fits
    return summary, []


def _cmd_recover(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    block = cfg.get("recover", {})
    seed = int(cfg["seed"])

    if "harmonics_dir" in block:
        paths = sorted(Path(block["harmonics_dir"]).glob("*.field"))
        if not paths:
            raise ValueError(f"no .field files under {block['harmonics_dir']}")
        fields = []
        for p in paths:
            arr, meta = geometry.read_field(p)
            if tuple(meta["dims"]) != dom.shape or arr.ndim != 3:
                raise ValueError(f"{p.name}: scalar field on the config grid "
                                 f"expected, got dims {meta['dims']}")
            fields.append(arr)
        harmonics = np.stack(fields)
        source = f"{len(paths)} files from {block['harmonics_dir']}"
    else:
        op = elliptic.assemble(g, dom)
        d = cfg.get("dictionary", {})
        size = block.get("samples", d.get("size", 40))
        dictionary = [c for c in ctl.default_dictionary(
            dom, size=size + 1, seed=seed, kmax=d.get("kmax", 2)) if c.name != "1"]
        fam = ctl.solve_family(op, dictionary, jobs=jobs)
        harmonics = fam.fields
        source = f"{len(dictionary)} dictionary extensions"

    nodes = ([tuple(p) for p in block["nodes"]] if "nodes" in block else None)
    rec = recovery.recover_metric_field(
        dom, harmonics, nodes=nodes, margin=block.get("margin", 3),
        residual_limit=block.get("residual_limit", 0.1))
    anchor = tuple(block.get("anchor", _core_point(dom, (0.5, 0.5, 0.5))))
    ai = int(np.argwhere((rec.nodes == np.asarray(anchor)).all(axis=1)).ravel()[0]) \
        if (rec.nodes == np.asarray(anchor)).all(axis=1).any() else 0
    anchor = tuple(int(v) for v in rec.nodes[ai])
    res = recovery.calibrate(rec, anchor, g.at(anchor), truth=g)

    rows = []
    for n, gh, r in zip(rec.nodes, res.metric, rec.residuals):
        rows.append((int(n[0]), int(n[1]), int(n[2]),
                     gh[0, 0], gh[0, 1], gh[0, 2], gh[1, 1], gh[1, 2], gh[2, 2],
                     float(r)))
    (out / "metric.csv").write_text(csv17(
        ("i1", "i2", "i3", "g11", "g12", "g13", "g22", "g23", "g33", "residual"),
        rows))
    ferr = res.frobenius_errors(g)
    summary = {
        "harmonics": source,
        "n_samples": int(rec.n_samples),
        "n_nodes": int(len(rec.nodes)),
        "anchor": list(anchor),
        "calibration_constant": float(res.constant),
        "scale_spread": float(res.scale_spread),
        "flagged": bool(res.flagged),
        "max_residual": float(np.max(rec.residuals)),
        "max_frobenius_error": float(np.max(ferr)),
        "mean_frobenius_error": float(np.mean(ferr)),
    }
    return summary, ["metric.csv"]


def _angle_field(dom, inner_box):
    """Flat-metric angle gradient around the removed column, zero off-domain."""
    x = dom.node_coords()
    xc = 0.5 * (inner_box[0][0] + inner_box[0][1])
    yc = 0.5 * (inner_box[1][0] + inner_box[1][1])
    dx, dy = x[..., 0] - xc, x[..., 1] - yc
    r2 = np.maximum(dx * dx + dy * dy, 1e-30)
    u = np.zeros(dom.shape + (3,))
    u[..., 0] = -dy / r2
    u[..., 1] = dx / r2
    u[~dom.allowed] = 0.0
    return u


def _cmd_analyze(cfg, out, jobs):
    dom = _build_domain(cfg)
    g = _build_metric(cfg, dom)
    op = elliptic.assemble(g, dom)
    block = cfg.get("analyze", {})
    seed = int(cfg["seed"])
    summary: dict = {}
    files: list[str] = []

    fields, ids = analysis.build_probe_basis(
        op, count=block.get("probe_count", 20), seed=seed, jobs=jobs)
    patch = analysis.plane_patch(
        dom, axis=block.get("axis", 2),
        plane=block.get("plane"), thickness=block.get("thickness", 1))
    probe = analysis.uniqueness_probe(
        fields, patch, g, ids=ids,
        residual_tol=block.get("residual_tol", 0.5))
    (out / "certificate.csv").write_text(probe.certificate_csv())
    (out / "probe.json").write_text(probe.summary_json() + "\n")
    files += ["certificate.csv", "probe.json"]
    summary["probe"] = {
        "ratio": float(probe.ratio),
        "n_fields": len(probe.field_ids),
        "n_nodes": int(probe.n_nodes),
        "duplicates": [list(d) for d in probe.duplicates],
        "patch": {"axis": int(patch.axis), "plane": int(patch.plane),
                  "thickness": int(patch.thickness)},
    }

    if dom.n_components > 1:
        basis = analysis.dirichlet_basis(op)
        summary["dirichlet"] = {
            "size": basis.size,
            "total_flux": [float(v) for v in basis.total_flux],
            "capacity": [float(v) for v in basis.capacity],
            "max_rot_residual": float(np.max(basis.rot_residuals)) if basis.size else 0.0,
            "max_div_residual": float(np.max(basis.div_residuals)) if basis.size else 0.0,
        }

    if "loop" in block:
        lb = block["loop"]
        loop = analysis.RectLoop(lb.get("axis", 2),
                                 lb["plane"], tuple(lb["lo"]), tuple(lb["hi"]))
        if dom.mask_spec == "box_minus_column":
            u = _angle_field(dom, np.asarray(dom.inner_box, dtype=float))
            kind = "angle"
        else:
            fam = ctl.solve_family(op, _build_dictionary(cfg, dom)[:8], jobs=jobs)
            u = fam.grads[4]
            kind = f"gradient of {fam.names[4]}"
        circ = analysis.circulation(u, g, loop)
        summary["circulation"] = {
            "field": kind,
            "value": float(circ),
            "two_pi": float(2.0 * np.pi),
        }
    return summary, files


# manufactured per-axis factors for the source study: alpha as a product of
# one function per axis, so constant-diagonal metrics have an analytic source
_AXIS_FACTORS = (
    (lambda t: np.sin(2.0 * t), lambda t: -4.0 * np.sin(2.0 * t)),
    (lambda t: np.cos(t), lambda t: -np.cos(t)),
    (lambda t: np.exp(0.5 * t), lambda t: 0.25 * np.exp(0.5 * t)),
)


def _manufactured(dom, diag):
    x = dom.node_coords()
    f = [fac(x[..., a]) for a, (fac, _) in enumerate(_AXIS_FACTORS)]
    d2 = [der(x[..., a]) for a, (_, der) in enumerate(_AXIS_FACTORS)]
    alpha = f[0] * f[1] * f[2]
    rhs = (d2[0] * f[1] * f[2] / diag[0]
           + f[0] * d2[1] * f[2] / diag[1]
           + f[0] * f[1] * d2[2] / diag[2])
    return alpha, rhs


def _window_mask(dom, frac):
    x = dom.node_coords()
    m = np.ones(dom.shape, dtype=bool)
    for a in range(3):
        lo, hi = dom.box[a]
        m &= (x[..., a] >= lo + frac * (hi - lo)) & (x[..., a] <= hi - frac * (hi - lo))
    return m & dom.allowed


def _study_error(study, cfg, n, window):
    d = cfg.get("domain", {})
    box = d.get("box", [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]])
    dom = geometry.build_domain(box, n)
    m = cfg.get("metric", {})
    if "file" in m:
        raise ValueError("convergence studies need an analytic metric preset, not a file")
    g = geometry.METRIC_PRESETS[m.get("preset", "flat")](
        dom, **{k: m[k] for k in ("diag", "amplitude", "shear") if k in m})
    rng = np.random.default_rng(int(cfg["seed"]))

    if study == "solve":
        preset = m.get("preset", "flat")
        if preset not in ("flat", "diag"):
            raise ValueError("the manufactured source study needs the flat or "
                             "diag preset (analytic source term)")
        diag = m.get("diag", (1.0, 1.0, 1.0)) if preset == "diag" else (1.0, 1.0, 1.0)
        alpha, rhs = _manufactured(dom, diag)
        op = elliptic.assemble(g, dom)
        sol = elliptic.solve_dirichlet(op, h=rhs, f=alpha)
        return float(np.max(np.abs((sol.values - alpha)[dom.allowed])))

    if study == "conformal-identity":
        x = dom.node_coords()
        c = np.exp(x[..., 0])
        y = np.sin(x[..., 0] + 2.0 * x[..., 1]) * np.cos(x[..., 2])
        res = recovery.conformal_identity_check(c, g, y)
        return float(np.max(np.abs(res[_window_mask(dom, window)])))

    # exact discrete identities, reported at the roundoff floor
    x = dom.node_coords()
    core = geometry.interior_core(dom, 1)
    if study == "rot-grad":
        k = rng.integers(1, 3, size=3)
        alpha = np.cos(np.pi * (k[0] * x[..., 0] + k[1] * x[..., 1] + k[2] * x[..., 2]))
        r = geometry.rot(geometry.grad(alpha, g, fill=True), g)
        return float(np.max(np.linalg.norm(r, axis=-1)[core]))
    u = np.stack([np.sin(np.pi * (1 + a) * x[..., a] + 0.3 * a) for a in range(3)],
                 axis=-1)
    dv = geometry.div(geometry.rot(u, g), g)
    return float(np.max(np.abs(dv[core])))


def _cmd_convergence(cfg, out, jobs):
    block = cfg.get("convergence", {})
    study = block.get("study", "solve")
    res_list = block.get("resolutions", [17, 33])
    window = block.get("window", 0.25)
    d = cfg.get("domain", {})
    box = np.asarray(d.get("box", [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]), dtype=float)
    side = float(box[0, 1] - box[0, 0])

    rows = []
    prev = None
    for n in res_list:
        err = _study_error(study, cfg, int(n), window)
        h = side / (int(n) - 1)
        ratio = (prev / err) if (prev is not None and err > 0) else None
        rows.append((int(n), h, err, ratio))
        prev = err
    csv_rows = [(n, h, e, "" if r is None else _fmt(r)) for n, h, e, r in rows]
    (out / "convergence.csv").write_text(
        csv17(("resolution", "h", "sup_error", "ratio"), csv_rows))
    summary = {
        "study": study,
        "resolutions": [int(n) for n in res_list],
        "sup_errors": [float(e) for _, _, e, _ in rows],
        "ratios": [None if r is None else float(r) for _, _, _, r in rows],
        "exact_identity": study in ("rot-grad", "div-rot"),
    }
    return summary, ["convergence.csv"]


_HANDLERS = {
    "solve": _cmd_solve,
    "green": _cmd_green,
    "control": _cmd_control,
    "separate": _cmd_separate,
    "jets": _cmd_jets,
    "density": _cmd_density,
    "recover": _cmd_recover,
    "analyze": _cmd_analyze,
    "convergence": _cmd_convergence,
}

_NUMERICAL_ERRORS = (ValueError, ArithmeticError, np.linalg.LinAlgError, RuntimeError)


# ---------------------------------------------------------------------------
# entry point

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="hqlab",
        description="Harmonic quaternion field laboratory on voxel domains.",
        epilog="Exit codes: 0 success, 2 config problems, 3 numerical failure.")
    sub = p.add_subparsers(dest="subcommand", required=True)
    helps = {
        "solve": "harmonic extension of one dictionary control",
        "green": "Poisson kernel row at a point, with a reproduction check",
        "control": "sampling matrix rank and optional target synthesis",
        "separate": "two-point quaternion separation construct",
        "jets": "second order jet span of the dictionary at a point",
        "density": "separation, frame cover, and representation checks",
        "recover": "pointwise metric recovery from harmonic samples",
        "analyze": "uniqueness probe, cavity basis, loop circulation",
        "convergence": "grid refinement study with a ratio table",
    }
    for name, h in helps.items():
        q = sub.add_parser(name, help=h)
        q.add_argument("--config", required=True, help="JSON config file")
        q.add_argument("--out", default=None, help="output directory "
                       "(default: the config's out, else '<subcommand>-out')")
        q.add_argument("--jobs", type=int, default=None,
                       help="threads for independent solves")
        q.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    sub = args.subcommand

    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as e:
        print(f"config: cannot read {args.config}: {e}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as e:
        print(f"config: {args.config} is not valid JSON: {e}", file=sys.stderr)
        return 2

    if args.seed is not None:
        if not isinstance(cfg, dict):
            print("config: top level must be an object", file=sys.stderr)
            return 2
        cfg["seed"] = args.seed
    problems = validate_config(cfg, sub)
    if problems:
        print(f"config: {len(problems)} problem(s) in {args.config}:", file=sys.stderr)
        for msg in problems:
            print(f"  {msg}", file=sys.stderr)
        return 2

    out = Path(args.out or cfg.get("out") or f"{sub}-out")
    out.mkdir(parents=True, exist_ok=True)
    stale = out / "diagnostics.json"
    if stale.exists():
        stale.unlink()
    chash = config_hash(cfg)

    t0 = time.perf_counter()
    try:
        summary, files = _HANDLERS[sub](cfg, out, args.jobs)
    except _NUMERICAL_ERRORS as e:
        diag = {
            "subcommand": sub,
            "error": type(e).__name__,
            "message": str(e),
            "seed": int(cfg["seed"]),
            "config_hash": chash,
        }
        (out / "diagnostics.json").write_text(dumps17(diag) + "\n")
        print(f"{sub}: numerical failure: {e}", file=sys.stderr)
        print(f"diagnostics written to {out / 'diagnostics.json'}", file=sys.stderr)
        return 3
    wall = time.perf_counter() - t0

    report = f"{sub}.json"
    (out / report).write_text(dumps17(summary) + "\n")
    outputs = sorted([report] + files)
    import scipy

    manifest = {
        "subcommand": sub,
        "config_hash": chash,
        "seed": int(cfg["seed"]),
        "versions": {
            "hqlab": _VERSION,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": ".".join(str(v) for v in sys.version_info[:3]),
        },
        "wall_time_s": wall,
        "outputs": outputs,
    }
    (out / "manifest.json").write_text(dumps17(manifest) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
