import csv
import json

import numpy as np
import pytest

from mixsearch.dp import SolverSettings
from mixsearch.grid import TriangularGrid, ValueSurface
from mixsearch.io import (
    BundleHashError, BundleShapeError, BundleVersionError, SurfaceBundle, bundle_key, export_surface_csv,
    load_bundle, save_bundle, sidecar_path, solve_cached, write_trials_csv,
)
from mixsearch.model import ModelParams
from mixsearch.sim import run_batch, run_batch_records


@pytest.fixture(scope="module")
def bundle(coarse_solution):
    params, settings, _, ref, scan = coarse_solution
    return SurfaceBundle.from_solution(params, settings, ref, scan)


def test_round_trip(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "b.json")
    back = load_bundle(path)
    assert back == bundle
    assert np.array_equal(back.g, bundle.g) and np.array_equal(back.continuation, bundle.continuation)
    assert back.a_s == bundle.a_s
    assert back.params == bundle.params and back.settings == bundle.settings


def test_canonical_bytes(bundle, tmp_path):
    a = save_bundle(bundle, tmp_path / "a.json").read_bytes()
    b = save_bundle(load_bundle(tmp_path / "a.json"), tmp_path / "b.json").read_bytes()
    assert a == b


def test_tampered_params_rejected(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "b.json")
    d = json.loads(path.read_text())
    d["params"]["c"] = 0.02
    path.write_text(json.dumps(d))
    with pytest.raises(BundleHashError):
        load_bundle(path)


def test_version_and_shape_rejected(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "b.json")
    d = json.loads(path.read_text())
    path.write_text(json.dumps({**d, "format_version": 99}))
    with pytest.raises(BundleVersionError):
        load_bundle(path)
    path.write_text(json.dumps({**d, "g": d["g"][:-1]}))
    with pytest.raises(BundleShapeError):
        load_bundle(path)


def test_foreign_sidecar_rejected(bundle, tmp_path):
    path = save_bundle(bundle, tmp_path / "b.json")
    cont = np.load(sidecar_path(path))
    cont[0, 0] += 1e-3
    np.save(sidecar_path(path), cont)
    with pytest.raises(BundleHashError):
        load_bundle(path)
    assert load_bundle(path, with_continuation=False).continuation is None


def test_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="nope.json"):
        load_bundle(tmp_path / "nope.json")


def test_policy_from_bundle_behaves_like_original(bundle, coarse_policy, tmp_path):
    back = load_bundle(save_bundle(bundle, tmp_path / "b.json"))
    pol = back.to_policy()
    params = coarse_policy.params
    assert run_batch(pol, params, 200, 1).to_json() == run_batch(coarse_policy, params, 200, 1).to_json()


def test_surface_csv_small_grid(tmp_path):
    grid = TriangularGrid(2)
    vals = np.array([1.0, 0.5, 0.25, 0.3, 0.125, 0.0])
    path = export_surface_csv(ValueSurface(grid, vals), tmp_path / "g.csv")
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == 6
    assert [float(r["value"]) for r in rows] == vals.tolist()
    assert [(float(r["p11"]), float(r["pmix"])) for r in rows] == list(zip(grid.p11, grid.pmix))


def test_g_csv_and_regions_csv(bundle, tmp_path):
    g, _, _ = bundle.surfaces()
    rows = list(csv.DictReader(open(export_surface_csv(g, tmp_path / "g.csv"))))
    assert len(rows) == TriangularGrid.size(bundle.settings.grid_m)
    vals = np.array([float(r["value"]) for r in rows])
    assert np.array_equal(vals, bundle.g)
    assert vals.min() >= 0 and vals.max() <= 1
    vertex = [r for r in rows if float(r["p11"]) == 1.0 and float(r["pmix"]) == 0.0]
    assert float(vertex[0]["value"]) == 0.0
    reg = list(csv.DictReader(open(export_surface_csv(bundle, tmp_path / "regions.csv"))))
    assert list(reg[0]) == ["p11", "pmix", "g", "V_s", "A_c", "in_R_tau", "in_R_phi"]
    assert np.array_equal([int(r["in_R_tau"]) for r in reg], bundle.stop_mask.astype(int))
    assert np.array_equal([float(r["A_c"]) for r in reg], bundle.a_c)


def test_trials_csv(coarse_policy, tmp_path):
    recs = run_batch_records(coarse_policy, coarse_policy.params, 20, 0)
    rows = list(csv.DictReader(open(write_trials_csv(recs, tmp_path / "t.csv"))))
    assert list(rows[0]) == ["trial", "tau1", "tau2", "n_switches", "correct"]
    assert [int(r["tau1"]) for r in rows] == [r.tau1 for r in recs]


def test_solve_cached(tmp_path):
    params = ModelParams(0.05, 0.01)
    settings = SolverSettings(grid_m=20)
    b1, path, hit = solve_cached(params, settings, tmp_path)
    assert not hit and path.name == f"{bundle_key(params, settings)}.json"
    b2, _, hit = solve_cached(params, settings, tmp_path)
    assert hit and b2 == b1
    b3, _, hit = solve_cached(params, settings, tmp_path, force=True)
    assert not hit
    other = bundle_key(params, SolverSettings(grid_m=21))
    assert other != bundle_key(params, settings)
