import math
import pathlib

import numpy as np
import pytest

import varenn

CONFIGS = pathlib.Path(__file__).resolve().parents[2] / "configs"


def test_window_and_combination_counts():
    assert len(varenn.enumerate_windows(116, 30, 10)) == 77
    assert len(varenn.enumerate_windows(116, 10, 10)) == 97
    combos = varenn.enumerate_combinations("TMP")
    assert len(combos) == 92
    assert combos[5] == (6, ["tmp"])
    assert combos[85] == (86, ["pet", "tmp", "vap"])


def test_labels_lower_bound_inclusive():
    assert [varenn.label_tmp(d) for d in (5, 2.5, 0, -2.5, -2.6)] == [1, 2, 3, 4, 5]
    assert [varenn.label_pre(d) for d in (30, 10, -10, -30, -31)] == [1, 2, 3, 4, 5]


def test_synth_cube_and_encoding(tmp_path):
    cube = varenn.Cube.from_synth((CONFIGS / "determinism.synth").read_text())
    assert cube.variables == ["pre", "tmp", "vap"]
    assert cube.n_years == 42
    tmp = cube.values("tmp")
    assert tmp.shape == (42 * 12, cube.n_cells)

    img = varenn.encode_window(cube, 0, ["tmp"])
    assert img.shape == (60, 60, 3) and img.dtype == np.float32
    assert 0.0 <= img.min() and img.max() <= 1.0
    assert not img[:, :, 1:].any()

    stripes = varenn.encode_window(cube, 0, ["pre", "tmp"], knockout="seasonal_only")
    assert np.all(stripes == stripes[:, :1, :])

    path = tmp_path / "c.vcube"
    cube.save(str(path))
    again = varenn.Cube.load(str(path))
    assert np.array_equal(again.values("pre"), cube.values("pre"))


def test_statistics():
    assert varenn.weighted_kappa([[3, 0], [0, 4]]) == pytest.approx(1.0)
    assert varenn.weighted_kappa([[2, 4], [1, 2]]) == pytest.approx(0.0, abs=1e-12)
    kw = varenn.kruskal_wallis([[1, 2, 3], [4, 5, 6]])
    assert kw["exact"] and kw["p_value"] == pytest.approx(0.1)
    mw = varenn.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert mw["statistic"] == 0 and mw["p_value"] == pytest.approx(0.1)
    fit = varenn.ols_regression([0, 1, 2, 3], [1, 3, 5, 7])
    assert fit["slope"] == pytest.approx(2) and fit["intercept"] == pytest.approx(1)


def test_errors_map_to_varenn_error():
    with pytest.raises(varenn.VarennError) as info:
        varenn.enumerate_windows(20, 30, 10)
    assert info.value.category == "domain"
    with pytest.raises(varenn.VarennError):
        varenn.enumerate_combinations("XYZ")


def test_tiny_experiment():
    cube = varenn.Cube.from_synth((CONFIGS / "determinism.synth").read_text())
    r = varenn.run_experiment(cube, ["tmp"], epochs=1, conv1=2, conv2=2, fc1=8)
    assert r["n_test"] > 0
    assert sum(map(sum, r["confusion"])) == r["n_test"]
    assert 0.0 <= r["accuracy"] <= 1.0
    assert math.isnan(r["kappa"]) or -1.0 <= r["kappa"] <= 1.0
