"""
Monte Carlo driver for design-performance experiments.

An experiment is a sweep over one design parameter (``delta`` for SI designs,
``k`` for ICP designs) crossed with a grid of covariance settings. Each
replicate draws a fresh design (unless ``fixed_design``), simulates data,
optionally refits the covariance parameters, predicts ``S`` on the grid and
records the average prediction variance.

Every replicate owns a random stream derived from ``(base_seed, cell, rep)``
so results do not depend on execution order or worker count.
"""

import hashlib
import itertools
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import List, Optional

import numpy as np

from .binomial import predict_latent_laplace, simulate_binomial
from .covariance import CovarianceParams
from .design import delta_for_k, generate_crd, generate_icp, generate_lattice, generate_si
from .errors import InhibDesignError, ValidationError
from .estimation import fit_gaussian_ml
from .gaussian_field import FieldSimulator, PredictionGrid, apv, krige, mspe, observe_gaussian
from .geometry import Region

logger = logging.getLogger(__name__)

WORKERS_ENV = "INHIBDESIGN_WORKERS"
#: replicate failure fraction above which a cell is flagged
FAILURE_ALARM = 0.02
#: replicate index reserved for the shared design in fixed-design mode
FIXED_DESIGN_STREAM = 2**32

MODELS = ("gaussian", "binomial")
SWEEP_FAMILIES = ("si", "icp", "crd", "lattice")


@dataclass
class ExperimentSpec:
    model: str = "gaussian"
    family: str = "si"
    n: int = 150
    deltas: List[float] = field(default_factory=lambda: [0.06])
    ks: List[int] = field(default_factory=lambda: [0])
    delta0: float = 0.06
    zeta: Optional[float] = None
    sigma2: float = 1.0
    kappa: float = 1.5
    phis: List[float] = field(default_factory=lambda: [0.15])
    tau2s: List[float] = field(default_factory=lambda: [0.0])
    replicates: int = 100
    grid_resolution: int = 64
    base_seed: int = 0
    estimate_params: Optional[bool] = None
    trials: int = 10
    offset: float = 0.0
    fixed_design: bool = False
    compute_mspe: bool = False
    region: List[float] = field(default_factory=lambda: [0.0, 0.0, 1.0, 1.0])
    name: str = "experiment"

    def __post_init__(self):
        if self.estimate_params is None:
            self.estimate_params = self.model == "gaussian"
        self.validate()

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown experiment fields: {', '.join(unknown)}")
        return cls(**d)

    def validate(self):
        bad = []
        if self.model not in MODELS:
            bad.append(f"model must be one of {MODELS}")
        if self.family not in SWEEP_FAMILIES:
            bad.append(f"family must be one of {SWEEP_FAMILIES}")
        if self.base_seed < 0:
            bad.append("base_seed must be >= 0")
        if self.replicates < 1:
            bad.append("replicates must be >= 1")
        if self.n < 1:
            bad.append("n must be >= 1")
        if self.family == "si" and not self.deltas:
            bad.append("deltas must be nonempty")
        if self.family == "icp":
            if not self.ks:
                bad.append("ks must be nonempty")
            elif any(k < 0 or k > self.n / 2 for k in self.ks):
                bad.append("every k must satisfy 0 <= k <= n/2")
        if not self.phis or not self.tau2s:
            bad.append("phis and tau2s must be nonempty")
        if self.model == "binomial" and self.estimate_params:
            bad.append("estimate_params is not supported for the binomial model")
        if self.grid_resolution < 1:
            bad.append("grid_resolution must be >= 1")
        if bad:
            raise ValidationError("invalid experiment spec: " + "; ".join(bad))

    def to_dict(self):
        return asdict(self)

    @property
    def spec_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def grid(self):
        return PredictionGrid(Region(*self.region), self.grid_resolution, self.grid_resolution)

    def design_values(self):
        if self.family == "si":
            return list(self.deltas)
        if self.family == "icp":
            return list(self.ks)
        return [None]

    def cells(self):
        """All (design value, phi, tau2) combinations, in a fixed order."""
        out = []
        for i, (v, phi, tau2) in enumerate(
            itertools.product(self.design_values(), self.phis, self.tau2s)
        ):
            cell = {"cell": i, "phi": phi, "tau2": tau2}
            if self.family == "si":
                cell.update(delta=v, k=0, delta_used=v, zeta_used=None)
            elif self.family == "icp":
                dk = delta_for_k(self.delta0, self.n, v)
                zeta = self.zeta if self.zeta is not None else dk / 2
                cell.update(k=v, delta0=self.delta0, delta_used=dk,
                            zeta_used=zeta if v else None)
            out.append(cell)
        return out


@dataclass
class ExperimentReport:
    spec: ExperimentSpec
    cells: list
    raw: list

    @property
    def spec_hash(self):
        return self.spec.spec_hash

    def find(self, **selector):
        hits = [c for c in self.cells
                if all(_same(c.get(k), v) for k, v in selector.items())]
        if len(hits) != 1:
            raise ValidationError(f"{len(hits)} cells match {selector}")
        return hits[0]


def _same(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return a is not None and b is not None and math.isclose(a, b, rel_tol=1e-12)
    return a == b


def replicate_rng(base_seed, cell, rep):
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(cell, rep)))


def _make_design(spec, cell, rng):
    region = Region(*spec.region)
    if spec.family == "si":
        return generate_si(spec.n, cell["delta"], region, rng)
    if spec.family == "icp":
        return generate_icp(spec.n, cell["k"], spec.delta0, cell["zeta_used"], region, rng)
    if spec.family == "crd":
        return generate_crd(spec.n, region, rng)
    return generate_lattice(spec.n, region, rng)


_SIM_CACHE = {}


def _simulator(spec, cell, design, params, grid):
    if not spec.fixed_design:
        return FieldSimulator(design, grid, params)
    key = (spec.spec_hash, cell["cell"])
    if key not in _SIM_CACHE:
        _SIM_CACHE.clear()
        _SIM_CACHE[key] = FieldSimulator(design, grid, params)
    return _SIM_CACHE[key]


def run_replicate(spec, cell, rep):
    """One Monte Carlo replicate; failures are recorded, not raised."""
    row = {"cell": cell["cell"], "rep": rep, "apv": math.nan, "mspe": math.nan,
           "failed": 0, "reason": "", "sigma2_hat": math.nan, "phi_hat": math.nan,
           "tau2_hat": math.nan}
    true = CovarianceParams(spec.sigma2, cell["phi"], cell["tau2"], spec.kappa)
    grid = spec.grid
    rng = replicate_rng(spec.base_seed, cell["cell"], rep)
    try:
        if spec.fixed_design:
            shared = replicate_rng(spec.base_seed, cell["cell"], FIXED_DESIGN_STREAM)
            design = _make_design(spec, cell, shared)
        else:
            design = _make_design(spec, cell, rng)
        sim = _simulator(spec, cell, design, true, grid if spec.compute_mspe else None)
        field_ = sim.draw(rng)
        if spec.model == "gaussian":
            y = observe_gaussian(field_, true.tau2, rng)
            used = true
            if spec.estimate_params:
                fit = fit_gaussian_ml(design, y, spec.kappa)
                if not fit.converged:
                    row.update(failed=1, reason="fit did not converge")
                    return row
                used = fit.params_hat
                row.update(sigma2_hat=used.sigma2, phi_hat=used.phi, tau2_hat=used.tau2)
            surface = krige(design, y, grid, used)
        else:
            data = simulate_binomial(field_, true.tau2, spec.trials, spec.offset, rng)
            surface = predict_latent_laplace(design, data, grid, true, spec.offset)
        row["apv"] = apv(surface, grid)
        if spec.compute_mspe:
            row["mspe"] = mspe(surface, field_, grid)
    except InhibDesignError as exc:
        row.update(failed=1, reason=f"{type(exc).__name__}: {exc}")
    return row


def _run_task(args):
    spec, cell, rep = args
    return run_replicate(spec, cell, rep)


def worker_count(workers=None):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, workers)


def aggregate(spec, cells, raw):
    by_cell = {c["cell"]: [] for c in cells}
    for row in raw:
        by_cell[row["cell"]].append(row)
    out = []
    for cell in cells:
        rows = by_cell[cell["cell"]]
        ok = np.array([r["apv"] for r in rows if not r["failed"]], dtype=float)
        failed = sum(1 for r in rows if r["failed"])
        mean = float(ok.mean()) if ok.size else math.nan
        se = float(ok.std(ddof=1) / math.sqrt(ok.size)) if ok.size > 1 else 0.0
        ms = np.array([r["mspe"] for r in rows if not r["failed"]], dtype=float)
        rec = dict(cell)
        rec.update(n=spec.n, mean_apv=mean, se_apv=se, replicates=len(rows),
                   n_ok=int(ok.size), failures=failed,
                   failure_alarm=int(failed > FAILURE_ALARM * max(len(rows), 1)))
        if spec.compute_mspe and ms.size:
            rec.update(mean_mspe=float(ms.mean()),
                       se_mspe=float(ms.std(ddof=1) / math.sqrt(ms.size)) if ms.size > 1 else 0.0)
        if rec["failure_alarm"]:
            logger.warning("cell %d: %d of %d replicates failed", cell["cell"], failed, len(rows))
        out.append(rec)
    return out


def run_experiment(spec, workers=None, completed=None, on_row=None):
    """Run every (cell, replicate) not already in ``completed`` and aggregate.

    ``completed`` holds raw rows from an interrupted run with the same spec;
    ``on_row`` is called with each new row as it finishes (for checkpointing).
    """
    cells = spec.cells()
    done = {(r["cell"], r["rep"]): r for r in (completed or [])}
    tasks = [(spec, c, r) for c in cells for r in range(spec.replicates)
             if (c["cell"], r) not in done]
    n_workers = worker_count(workers)
    if n_workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(n_workers) as pool:
            results = pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * n_workers)))
            for row in results:
                done[(row["cell"], row["rep"])] = row
                if on_row:
                    on_row(row)
    else:
        for t in tasks:
            row = _run_task(t)
            done[(row["cell"], row["rep"])] = row
            if on_row:
                on_row(row)
    raw = [done[k] for k in sorted(done)]
    return ExperimentReport(spec, aggregate(spec, cells, raw), raw)


def run_si_sweep(spec, **kwargs):
    if spec.family != "si":
        raise ValidationError("run_si_sweep needs family = 'si'")
    return run_experiment(spec, **kwargs)


def run_icp_sweep(spec, **kwargs):
    if spec.family != "icp":
        raise ValidationError("run_icp_sweep needs family = 'icp'")
    return run_experiment(spec, **kwargs)


@dataclass
class Comparison:
    difference: float   # mean APV of A minus B; negative favours A
    se: float
    z: float
    cell_a: dict
    cell_b: dict


def compare_designs(report_a, report_b, cell_a, cell_b=None):
    """Difference in mean APV between two cells with a pooled Monte Carlo SE.

    ``cell_a`` and ``cell_b`` are selectors such as ``{"delta": 0.06,
    "phi": 0.15, "tau2": 0.0}``; ``cell_b`` defaults to ``cell_a``. The two
    cells must share their covariance setting.
    """
    a = report_a.find(**cell_a)
    b = report_b.find(**(cell_b if cell_b is not None else cell_a))
    if not (_same(a["phi"], b["phi"]) and _same(a["tau2"], b["tau2"])):
        raise ValidationError("compared cells have different covariance settings")
    diff = a["mean_apv"] - b["mean_apv"]
    se = math.hypot(a["se_apv"], b["se_apv"])
    if se > 0:
        z = diff / se
    else:
        z = 0.0 if diff == 0 else math.copysign(math.inf, diff)
    return Comparison(diff, se, z, a, b)
