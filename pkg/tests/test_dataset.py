"""Region, sampling densities, dataset container, and CSV round trips."""

import json

import numpy as np
import pytest
from scipy import stats

from spatial_lp import dataset as ds


def test_region_basic():
    r = ds.Region(A=(4.0, 8.0))
    assert r.d == 2
    assert r.volume == 32.0
    np.testing.assert_array_equal(r.sides(), [4.0, 8.0])
    assert ds.rescale(
        ds.SpatialDataset(region=r, sites=[[1.0, 2.0]], responses=[0.0]), (1.0, 2.0)
    ) == pytest.approx([0.25, 0.25])


def test_region_validation():
    with pytest.raises(ValueError):
        ds.Region(A=(1.0, 0.0))


def test_region_contains():
    r = ds.Region(A=(2.0, 2.0))
    inside = r.contains(np.array([[1.0, -1.0], [0.0, 0.0], [1.1, 0.0]]))
    assert list(inside) == [True, True, False]


def test_generate_sites_deterministic():
    r = ds.Region(A=(10.0, 10.0))
    g = ds.SamplingDensity("uniform")
    a = ds.generate_sites(r, g, 50, ds.rep_rng(3, 7))
    b = ds.generate_sites(r, g, 50, ds.rep_rng(3, 7))
    c = ds.generate_sites(r, g, 50, ds.rep_rng(3, 8))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_uniform_sites_pass_ks():
    r = ds.Region(A=(6.0, 3.0))
    sites = ds.generate_sites(r, ds.SamplingDensity("uniform"), 2000, 42)
    for j, A in enumerate(r.A):
        stat = stats.kstest(sites[:, j], stats.uniform(-A / 2, A).cdf)
        assert stat.pvalue > 0.01


def test_product_beta_density():
    g = ds.SamplingDensity(
        "product-beta", {"alpha": [2.0, 5.0], "beta": [2.0, 1.0]}
    )
    r = ds.Region(A=(1.0, 1.0))
    z = ds.generate_sites(r, g, 4000, 0)
    # axis 0 is symmetric Beta(2,2) shifted to [-1/2, 1/2]
    assert abs(z[:, 0].mean()) < 0.02
    # axis 1 is Beta(5,1): mean 5/6 on [0,1] -> 1/3 after shifting
    assert z[:, 1].mean() == pytest.approx(5 / 6 - 0.5, abs=0.02)
    # pdf matches scipy at a few points
    pts = np.array([[0.1, 0.2], [-0.3, 0.4]])
    expected = stats.beta.pdf(pts[:, 0] + 0.5, 2, 2) * stats.beta.pdf(
        pts[:, 1] + 0.5, 5, 1
    )
    np.testing.assert_allclose(g.pdf(pts), expected, rtol=1e-12)


def test_custom_grid_density():
    # all mass in the middle two of four cells
    g = ds.SamplingDensity("custom-grid", {"weights": [[0.0, 2.0, 2.0, 0.0]]})
    r = ds.Region(A=(8.0,))
    sites = ds.generate_sites(r, g, 1000, 5)
    z = sites[:, 0] / 8.0
    assert (np.abs(z) <= 0.25 + 1e-12).all()
    assert g.pdf(np.array([[0.1]]))[0] == 2.0
    assert g.pdf(np.array([[0.4]]))[0] == 0.0


def test_custom_grid_must_integrate_to_one():
    with pytest.raises(ValueError):
        ds.SamplingDensity("custom-grid", {"weights": [[1.0, 2.0]]})
    with pytest.raises(ValueError):
        ds.SamplingDensity("custom-grid", {"weights": [[-1.0, 3.0]]})


def test_unknown_density_kind():
    with pytest.raises(ValueError):
        ds.SamplingDensity("gaussian")


def test_dataset_validation():
    r = ds.Region(A=(2.0, 2.0))
    with pytest.raises(ValueError):
        ds.SpatialDataset(region=r, sites=[[0.0, 0.0]], responses=[1.0, 2.0])
    with pytest.raises(ValueError):
        ds.SpatialDataset(region=r, sites=[[3.0, 0.0]], responses=[1.0])
    with pytest.raises(ValueError):
        ds.SpatialDataset(region=r, sites=np.empty((0, 2)), responses=[])
    with pytest.raises(ValueError):
        ds.SpatialDataset(region=r, sites=[[0.0, 0.0, 0.0]], responses=[1.0])


def test_csv_round_trip_is_exact(tmp_path):
    r = ds.Region(A=(10.0, 5.0))
    rng = np.random.default_rng(1)
    sites = ds.generate_sites(r, ds.SamplingDensity("uniform"), 37, rng)
    y = rng.standard_normal(37)
    data = ds.SpatialDataset(region=r, sites=sites, responses=y)
    path = tmp_path / "data.csv"
    ds.save_csv(data, path)
    back = ds.load_csv(path)
    assert back.region == r
    np.testing.assert_array_equal(back.sites, sites)
    np.testing.assert_array_equal(back.responses, y)
    assert back.group is None


def test_csv_round_trip_with_group(tmp_path):
    r = ds.Region(A=(2.0,))
    data = ds.SpatialDataset(
        region=r,
        sites=[[0.5], [-0.25]],
        responses=[1.0, 2.0],
        group=np.array(["a", "b"]),
    )
    path = tmp_path / "grouped.csv"
    ds.save_csv(data, path)
    back = ds.load_csv(path)
    assert list(back.group) == ["a", "b"]


def test_load_csv_missing_region_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,y\n0.0,1.0\n")
    with pytest.raises(ValueError, match="# A="):
        ds.load_csv(path)


def test_load_csv_reports_line_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# A=2\nx1,y\n0.0,1.0\n0.5\n")
    with pytest.raises(ValueError, match="line 4"):
        ds.load_csv(path)


def test_load_csv_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# A=2,2\nx1,y\n")
    with pytest.raises(ValueError, match="header"):
        ds.load_csv(path)


def test_save_metadata(tmp_path):
    r = ds.Region(A=(10.0, 10.0))
    path = tmp_path / "meta.json"
    ds.save_metadata(
        path, region=r, n=100, seed=7, density=ds.SamplingDensity("uniform")
    )
    meta = json.loads(path.read_text())
    assert meta["A"] == [10.0, 10.0]
    assert meta["n"] == 100
    assert meta["seed"] == 7
    assert meta["generator_id"] == ds.GENERATOR_ID


def test_rescaled_sites():
    r = ds.Region(A=(4.0, 4.0))
    data = ds.SpatialDataset(region=r, sites=[[2.0, -1.0]], responses=[0.0])
    np.testing.assert_allclose(data.rescaled_sites(), [[0.5, -0.25]])


def test_rescale_rejects_outside_points():
    r = ds.Region(A=(2.0, 2.0))
    data = ds.SpatialDataset(region=r, sites=[[0.0, 0.0]], responses=[0.0])
    with pytest.raises(ValueError):
        ds.rescale(data, (5.0, 0.0))
