"""Bundles of solved surfaces on disk, and CSV/JSON exports.

A bundle is one canonical JSON file ``bundles/<key>.json`` holding the
parameters, solver settings, the g / V_s / A_c node arrays, A_s, the region
masks and solve diagnostics.  The per-origin refinement continuation table
(nodes x log-ratio points, ~66 MB at the default resolution) is far too large
for JSON and sits beside it as ``<key>.refine.npy``; the JSON records its
SHA-256 so a stale or foreign sidecar is rejected.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dp import RefinementSolution, ScanningSolution, SolverSettings, solve
from .grid import TriangularGrid, ValueSurface
from .model import ModelParams, mixed_densities, stable_hash
from .policy import EPS_EQ, MixedPolicy, PolicyRegions, extract_regions

FORMAT_VERSION = 1


class BundleError(ValueError):
    """Base class for bundles that fail validation on load."""


class BundleVersionError(BundleError):
    pass


class BundleHashError(BundleError):
    pass


class BundleShapeError(BundleError):
    pass


def bundle_key(params: ModelParams, settings: SolverSettings) -> str:
    """Cache key: digest of the model parameters (seed excluded) and solver settings."""
    d = params.to_dict()
    d.pop("rng_seed")
    return stable_hash({"params": d, "settings": settings.to_dict()})


def _array_digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype=np.float64).tobytes()).hexdigest()


@dataclass
class SurfaceBundle:
    params: ModelParams
    settings: SolverSettings
    g: np.ndarray
    v_s: np.ndarray
    a_c: np.ndarray
    a_s: float
    stop_mask: np.ndarray
    switch_mask: np.ndarray
    eps_eq: float = EPS_EQ
    diagnostics: dict = field(default_factory=dict)
    solved_at: str = ""
    continuation: Optional[np.ndarray] = field(default=None, repr=False)
    format_version: int = FORMAT_VERSION

    @property
    def key(self) -> str:
        return bundle_key(self.params, self.settings)

    @property
    def params_hash(self) -> str:
        return self.params.solve_hash()

    @property
    def grid(self) -> TriangularGrid:
        return TriangularGrid(self.settings.grid_m)

    @classmethod
    def from_solution(cls, params: ModelParams, settings: SolverSettings, ref: RefinementSolution,
                      scan: ScanningSolution, regions: Optional[PolicyRegions] = None) -> "SurfaceBundle":
        regions = regions or extract_regions(scan, ref)
        diag = {
            "refinement": {"iterations": ref.iterations, "residual": ref.residual,
                           "max_increase": ref.max_increase,
                           "seconds": ref.g_surface.meta.get("seconds", math.nan)},
            "scanning": {"iterations": scan.iterations, "residual": scan.residual,
                         "max_increase": scan.max_increase,
                         "seconds": scan.vs_surface.meta.get("seconds", math.nan)},
        }
        now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
        return cls(params, settings, ref.g_surface.values.copy(), scan.vs_surface.values.copy(),
                   scan.ac_surface.values.copy(), float(scan.a_s), regions.stop_mask.copy(),
                   regions.switch_mask.copy(), regions.eps_eq, diag, now, ref.continuation)

    def surfaces(self):
        """(g, V_s, A_c) as value surfaces."""
        grid = self.grid
        meta = {"params_hash": self.params_hash}
        return (ValueSurface(grid, self.g, dict(meta)), ValueSurface(grid, self.v_s, dict(meta)),
                ValueSurface(grid, self.a_c, dict(meta)))

    def regions(self) -> PolicyRegions:
        return PolicyRegions(self.grid, self.stop_mask, self.switch_mask, self.a_s, self.eps_eq)

    def to_policy(self) -> MixedPolicy:
        if self.continuation is None:
            raise BundleError("bundle has no refinement continuation table; it cannot drive a policy")
        g, vs, ac = self.surfaces()
        d = self.diagnostics
        ref = RefinementSolution(g, self.settings.loglr_grid, None, self.continuation,
                                 d["refinement"]["iterations"], d["refinement"]["residual"],
                                 d["refinement"]["max_increase"])
        scan = ScanningSolution(vs, ac, self.a_s, d["scanning"]["iterations"],
                                d["scanning"]["residual"], d["scanning"]["max_increase"])
        return MixedPolicy(self.params, mixed_densities(self.params), ref, scan, self.regions())

    def to_dict(self) -> dict:
        d = {
            "format_version": self.format_version,
            "params": self.params.to_dict(),
            "params_hash": self.params_hash,
            "settings": self.settings.to_dict(),
            "grid_m": self.settings.grid_m,
            "g": self.g.tolist(),
            "V_s": self.v_s.tolist(),
            "A_c": self.a_c.tolist(),
            "A_s": self.a_s,
            "in_R_tau": self.stop_mask.astype(int).tolist(),
            "in_R_phi": self.switch_mask.astype(int).tolist(),
            "eps_eq": self.eps_eq,
            "diagnostics": self.diagnostics,
            "solved_at": self.solved_at,
        }
        if self.continuation is not None:
            d["continuation_shape"] = list(self.continuation.shape)
            d["continuation_sha256"] = _array_digest(self.continuation)
        return d

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurfaceBundle) or self.to_json() != other.to_json():
            return False
        if (self.continuation is None) != (other.continuation is None):
            return False
        return self.continuation is None or np.array_equal(self.continuation, other.continuation)


def canonical_json(obj) -> str:
    """Sorted keys; floats are written as their shortest round-trip decimal."""
    return json.dumps(obj, sort_keys=True, indent=None, separators=(",", ":")) + "\n"


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name[:-len(".json")] + ".refine.npy" if path.name.endswith(".json")
                          else path.name + ".refine.npy")


def save_bundle(bundle: SurfaceBundle, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if bundle.continuation is not None:
            np.save(sidecar_path(path), np.ascontiguousarray(bundle.continuation, dtype=np.float64))
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(bundle.to_json())
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write bundle {path}: {exc}") from exc
    return path


def load_bundle(path, *, with_continuation: bool = True) -> SurfaceBundle:
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"cannot read bundle {path}: {exc}") from exc
    if d.get("format_version") != FORMAT_VERSION:
        raise BundleVersionError(f"{path}: format version {d.get('format_version')!r}, expected {FORMAT_VERSION}")
    params = ModelParams.from_dict(d["params"])
    if params.solve_hash() != d.get("params_hash"):
        raise BundleHashError(f"{path}: params hash {d.get('params_hash')} does not match recomputed "
                              f"{params.solve_hash()}")
    settings = SolverSettings.from_dict(d["settings"])
    m = int(d.get("grid_m", -1))
    n = TriangularGrid.size(settings.grid_m)
    if m != settings.grid_m:
        raise BundleShapeError(f"{path}: grid_m {m} disagrees with settings ({settings.grid_m})")
    arrays = {}
    for name in ("g", "V_s", "A_c", "in_R_tau", "in_R_phi"):
        a = np.asarray(d[name], dtype=float)
        if a.shape != (n,):
            raise BundleShapeError(f"{path}: {name} has {a.size} entries, grid M={m} needs {n}")
        arrays[name] = a
    cont = None
    if with_continuation and "continuation_sha256" in d:
        side = sidecar_path(path)
        try:
            cont = np.load(side)
        except OSError as exc:
            raise OSError(f"cannot read refinement table {side}: {exc}") from exc
        if list(cont.shape) != d["continuation_shape"] or cont.shape != (n, settings.loglr_points):
            raise BundleShapeError(f"{side}: shape {cont.shape} does not fit the bundle")
        if _array_digest(cont) != d["continuation_sha256"]:
            raise BundleHashError(f"{side}: refinement table does not belong to {path.name}")
    return SurfaceBundle(params, settings, arrays["g"], arrays["V_s"], arrays["A_c"], float(d["A_s"]),
                         arrays["in_R_tau"].astype(bool), arrays["in_R_phi"].astype(bool),
                         float(d["eps_eq"]), d["diagnostics"], d["solved_at"], cont, d["format_version"])


def solve_cached(params: ModelParams, settings: SolverSettings, out_dir, force: bool = False):
    """Load ``<out_dir>/bundles/<key>.json`` if present, else solve and write it.

    Returns ``(bundle, path, hit)``.
    """
    path = Path(out_dir) / "bundles" / f"{bundle_key(params, settings)}.json"
    if path.exists() and not force:
        return load_bundle(path), path, True
    _, ref, scan = solve(params, settings)
    bundle = SurfaceBundle.from_solution(params, settings, ref, scan)
    save_bundle(bundle, path)
    return bundle, path, False


# --------------------------------------------------------------------------
# exports


def _fmt(x) -> str:
    return repr(float(x))


def export_surface_csv(obj, path) -> Path:
    """Write a surface as ``p11,pmix,value`` or a bundle as the region table.

    Rows follow the lexicographic node order; values are written exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if isinstance(obj, ValueSurface):
            grid = obj.grid
            w.writerow(["p11", "pmix", "value"])
            for a, b, v in zip(grid.p11, grid.pmix, obj.values):
                w.writerow([_fmt(a), _fmt(b), _fmt(v)])
        elif isinstance(obj, SurfaceBundle):
            grid = obj.grid
            w.writerow(["p11", "pmix", "g", "V_s", "A_c", "in_R_tau", "in_R_phi"])
            for k in range(len(grid)):
                w.writerow([_fmt(grid.p11[k]), _fmt(grid.pmix[k]), _fmt(obj.g[k]), _fmt(obj.v_s[k]),
                            _fmt(obj.a_c[k]), int(obj.stop_mask[k]), int(obj.switch_mask[k])])
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
    return path


def export_regions_csv(bundle: SurfaceBundle, path) -> Path:
    return export_surface_csv(bundle, path)


def write_trials_csv(records: Sequence, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "tau1", "tau2", "n_switches", "correct"])
        for i, r in enumerate(records):
            w.writerow([i, r.tau1, r.tau2, r.n_switches, int(r.correct)])
    return path


def write_json(obj, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    return path
