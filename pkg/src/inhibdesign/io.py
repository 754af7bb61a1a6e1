"""
File formats: candidate sets, designs, data, fitted parameters, prediction
surfaces and experiment specs/reports.

All writers go through :func:`atomic_write` (write to a temporary file in the
target directory, then rename).
"""

import csv
import io
import json
import logging
import math
import os
import tempfile
from pathlib import Path

import numpy as np
import tomli

from .covariance import CovarianceParams
from .design import Design
from .errors import ValidationError
from .geometry import CandidateSet, Region

logger = logging.getLogger(__name__)

DESIGN_COLUMNS = ["id", "x", "y", "role", "parent_id"]
RAW_COLUMNS = ["spec_hash", "base_seed", "cell", "rep", "apv", "mspe", "failed",
               "reason", "sigma2_hat", "phi_hat", "tau2_hat"]


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _parse_float(text, where):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(v):
        raise ValidationError(f"{where}: non-finite value {text!r}")
    return v


def looks_geographic(points):
    """True when every coordinate fits lon/lat ranges (|x| <= 180, |y| <= 90)."""
    pts = np.asarray(points, dtype=float)
    return bool(np.all(np.abs(pts[:, 0]) <= 180) and np.all(np.abs(pts[:, 1]) <= 90))


# -- candidates -------------------------------------------------------------

def read_candidates(path):
    """Read a CSV (``id,x,y``) or GeoJSON point collection as a deduplicated set."""
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        ids, pts = _read_geojson_points(path)
    else:
        ids, pts = _read_xy_csv(path)
    seen = set()
    for i in ids:
        if i in seen:
            raise ValidationError(f"{path}: duplicate candidate id {i!r}")
        seen.add(i)
    cands = CandidateSet(np.array(pts, dtype=float).reshape(-1, 2), ids).deduplicated()
    logger.info("read %d candidate locations from %s", len(cands), path)
    return cands


def _read_xy_csv(path):
    ids, pts = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y"} - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            rid = rec.get("id") or str(lineno - 2)
            where = f"{path}:{lineno} (id {rid})"
            pts.append((_parse_float(rec["x"], where), _parse_float(rec["y"], where)))
            ids.append(rid)
    return ids, pts


def _read_geojson_points(path):
    with open(path) as fh:
        doc = json.load(fh)
    feats = doc.get("features", []) if doc.get("type") == "FeatureCollection" else [doc]
    ids, pts = [], []
    for i, f in enumerate(feats):
        geom = f.get("geometry") or {}
        if geom.get("type") != "Point":
            raise ValidationError(f"{path}: feature {i} is not a Point")
        props = f.get("properties") or {}
        rid = str(f.get("id", props.get("id", i)))
        x, y = geom["coordinates"][:2]
        where = f"{path}: feature {i} (id {rid})"
        pts.append((_parse_float(x, where), _parse_float(y, where)))
        ids.append(rid)
    return ids, pts


def write_candidates(cands, path):
    path = Path(path)
    if path.suffix.lower() in (".geojson", ".json"):
        feats = [{"type": "Feature", "id": i,
                  "geometry": {"type": "Point", "coordinates": [float(x), float(y)]},
                  "properties": {"id": i}}
                 for i, (x, y) in zip(cands.ids, cands.points)]
        atomic_write(path, json.dumps({"type": "FeatureCollection", "features": feats}))
    else:
        rows = [(i, _fmt(x), _fmt(y)) for i, (x, y) in zip(cands.ids, cands.points)]
        atomic_write(path, _csv_text(["id", "x", "y"], rows))


def synthetic_candidates(n=857, rng=None, region=None, n_villages=24, spread=0.35):
    """Clustered synthetic household locations, in projected kilometres.

    Village centres are uniform over ``region`` and households scatter
    normally (sd ``spread``) around them, clipped to the region. The default
    region is a 12 km x 10 km block with UTM-like offsets. This is a stand-in
    for an enumerated household list and carries no real locations.
    """
    rng = np.random.default_rng(rng)
    region = region or Region(650.0, 8230.0, 662.0, 8240.0)
    lo = np.array([region.xmin, region.ymin])
    hi = np.array([region.xmax, region.ymax])
    centres = lo + rng.random((n_villages, 2)) * (hi - lo)
    pts = np.empty((0, 2))
    while len(pts) < n:
        v = rng.integers(n_villages, size=n)
        draw = centres[v] + spread * rng.standard_normal((n, 2))
        draw = draw[np.all((draw >= lo) & (draw <= hi), axis=1)]
        pts = np.unique(np.round(np.vstack([pts, draw]), 4), axis=0)
    pts = pts[rng.permutation(len(pts))[:n]]
    return CandidateSet(pts, [f"hh{i:04d}" for i in range(n)])


# -- designs ----------------------------------------------------------------

def _sidecar(path):
    return Path(path).with_suffix(".json")


def design_metadata(design):
    return {"family": design.family, "params": design.params, "seed": design.seed,
            "n": len(design), "n_close_pairs": design.n_close_pairs}


def write_design(design, path, extra=None):
    """Write ``id,x,y,role,parent_id`` CSV and a JSON metadata sidecar."""
    ids = design.ids
    rows = []
    for i, (pt, role, par) in enumerate(zip(design.points, design.roles, design.parents)):
        rows.append((ids[i], _fmt(pt[0]), _fmt(pt[1]), role, ids[par] if par >= 0 else ""))
    atomic_write(path, _csv_text(DESIGN_COLUMNS, rows))
    meta = design_metadata(design)
    meta["candidate_ids"] = design.candidate_ids is not None
    if extra:
        meta.update(extra)
    atomic_write(_sidecar(path), json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_design(path):
    with open(path, newline="") as fh:
        recs = list(csv.DictReader(fh))
    with open(_sidecar(path)) as fh:
        meta = json.load(fh)
    ids = [r["id"] for r in recs]
    pos = {i: k for k, i in enumerate(ids)}
    pts = [(_parse_float(r["x"], f"{path}:{k + 2}"), _parse_float(r["y"], f"{path}:{k + 2}"))
           for k, r in enumerate(recs)]
    parents = [pos[r["parent_id"]] if r["parent_id"] else -1 for r in recs]
    return Design(np.array(pts).reshape(-1, 2), meta["family"], meta["params"], meta["seed"],
                  np.array(parents, dtype=int), ids if meta.get("candidate_ids") else None)


# -- data, parameters, surfaces --------------------------------------------

def read_data(path):
    """Read ``id,x,y,value[,trials,counts]``; returns ``(points, values, extras)``."""
    pts, vals = [], []
    extras = {"ids": [], "trials": [], "counts": []}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = set(reader.fieldnames or [])
        missing = {"x", "y", "value"} - cols
        if missing:
            raise ValidationError(f"{path}:1: missing column(s) {sorted(missing)}")
        for lineno, rec in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if None in rec or any(v is None for v in rec.values()):
                raise ValidationError(f"{where}: wrong number of fields")
            pts.append((_parse_float(rec["x"], where), _parse_float(rec["y"], where)))
            vals.append(_parse_float(rec["value"], where))
            extras["ids"].append(rec.get("id") or str(lineno - 2))
            if "trials" in cols:
                extras["trials"].append(_parse_float(rec["trials"], where))
                extras["counts"].append(_parse_float(rec["counts"], where))
    return np.array(pts).reshape(-1, 2), np.array(vals), extras


def write_data(path, points, values, ids=None):
    ids = ids or [str(i) for i in range(len(points))]
    rows = [(i, _fmt(p[0]), _fmt(p[1]), _fmt(v)) for i, p, v in zip(ids, points, values)]
    atomic_write(path, _csv_text(["id", "x", "y", "value"], rows))


def read_params_file(path):
    """Parameter JSON with keys sigma2, phi, tau2, optional kappa and intercept."""
    with open(path) as fh:
        d = json.load(fh)
    missing = {"sigma2", "phi", "tau2"} - set(d)
    if missing:
        raise ValidationError(f"{path}: missing parameter(s) {sorted(missing)}")
    params = CovarianceParams(float(d["sigma2"]), float(d["phi"]), float(d["tau2"]),
                              float(d.get("kappa", 1.5)))
    return params, float(d.get("intercept", 0.0))


def write_surface(surface, grid, path):
    pts = grid.points
    rows = [(_fmt(p[0]), _fmt(p[1]), _fmt(m), _fmt(v))
            for p, m, v in zip(pts, surface.mean, surface.variance)]
    atomic_write(path, _csv_text(["x", "y", "mean", "variance"], rows))


# -- experiments ------------------------------------------------------------

def load_experiment_spec(path):
    from .harness import ExperimentSpec

    with open(path, "rb") as fh:
        try:
            d = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    return ExperimentSpec.from_dict(d)


def raw_row_text(report_or_spec, row):
    spec = getattr(report_or_spec, "spec", report_or_spec)
    rec = dict(row, spec_hash=spec.spec_hash, base_seed=spec.base_seed)
    return [_fmt(rec[c]) for c in RAW_COLUMNS]


def read_raw(path, spec):
    """Rows from a raw replicate CSV that belong to ``spec`` (same hash)."""
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            if rec.get("spec_hash") != spec.spec_hash:
                continue
            row = {"cell": int(rec["cell"]), "rep": int(rec["rep"]),
                   "failed": int(rec["failed"]), "reason": rec["reason"]}
            for c in ("apv", "mspe", "sigma2_hat", "phi_hat", "tau2_hat"):
                row[c] = float(rec[c]) if rec[c] else math.nan
            out.append(row)
    return out


class RawCheckpoint:
    """Appends raw replicate rows as they finish so a run can be resumed."""

    def __init__(self, path, spec):
        self.path = Path(path)
        self.spec = spec
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fresh = not self.path.exists() or self.path.stat().st_size == 0
        self.fh = open(self.path, "a", newline="")
        self.writer = csv.writer(self.fh, lineterminator="\n")
        if fresh:
            self.writer.writerow(RAW_COLUMNS)

    def __call__(self, row):
        self.writer.writerow(raw_row_text(self.spec, row))
        self.fh.flush()

    def close(self):
        self.fh.close()


CELL_COLUMNS = ["spec_hash", "base_seed", "cell", "n", "delta", "k", "delta0", "delta_used",
                "zeta_used", "phi", "tau2", "mean_apv", "se_apv", "mean_mspe", "se_mspe",
                "replicates", "n_ok", "failures", "failure_alarm"]


def write_report(report, out_dir, stem=None):
    """Write ``<stem>_cells.csv`` and ``<stem>_raw.csv``; returns their paths."""
    out_dir = Path(out_dir)
    stem = stem or report.spec.name
    cells_path = out_dir / f"{stem}_cells.csv"
    raw_path = out_dir / f"{stem}_raw.csv"
    rows = []
    for c in report.cells:
        rec = dict(c, spec_hash=report.spec_hash, base_seed=report.spec.base_seed)
        rows.append([_fmt(rec.get(col)) for col in CELL_COLUMNS])
    atomic_write(cells_path, _csv_text(CELL_COLUMNS, rows))
    atomic_write(raw_path, _csv_text(RAW_COLUMNS, [raw_row_text(report, r) for r in report.raw]))
    return cells_path, raw_path
