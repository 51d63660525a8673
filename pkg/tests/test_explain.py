import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frnet.errors import ConfigError
from frnet.explain import (
    AttributionMap,
    available_layers,
    cam_from_gradients,
    electrode_attribution,
    export_electrodes,
    export_map,
    grad_cam,
    read_map,
)
from frnet.training import xavier_init


@pytest.fixture
def model(desk_config):
    return xavier_init(desk_config, 2), desk_config


def test_map_values_in_unit_interval(model, rng):
    params, cfg = model
    amap = grad_cam(rng.normal(size=(8, 256)), params, cfg, 1)
    assert amap.values.shape == (cfg.stem_pool,) and amap.layer_name == "fr"
    assert amap.values.min() >= 0.0 and amap.values.max() <= 1.0
    assert amap.values.max() in (0.0, 1.0)


def test_zero_class_weights_give_zero_map(model, rng):
    params, cfg = model
    params["pred.fc.weight"].data[2] = 0.0
    amap = grad_cam(rng.normal(size=(8, 256)), params, cfg, 2)
    assert np.all(amap.values == 0.0)


def test_repeated_calls_identical(model, rng):
    params, cfg = model
    trial = rng.normal(size=(8, 256))
    a = grad_cam(trial, params, cfg, 0, "fr.F1")
    b = grad_cam(trial, params, cfg, 0, "fr.F1")
    np.testing.assert_array_equal(a.values, b.values)


def test_any_tap_is_selectable(model, rng):
    params, cfg = model
    layers = available_layers(params, cfg)
    assert {"stem", "mfe", "fr", "fr.F_hat"} <= set(layers)
    assert grad_cam(rng.normal(size=(8, 256)), params, cfg, 0, "stem").values.shape == (cfg.stem_pool,)
    assert grad_cam(rng.normal(size=(8, 256)), params, cfg, 0, "input").values.shape == (256,)


def test_unknown_layer(model, rng):
    params, cfg = model
    with pytest.raises(ConfigError, match="unknown layer"):
        grad_cam(rng.normal(size=(8, 256)), params, cfg, 0, "pred.fc")
    with pytest.raises(ConfigError):
        grad_cam(rng.normal(size=(8, 256)), params, cfg, 7)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3))
def test_gradient_scale_invariance(c):
    rng = np.random.default_rng(0)
    acts, grads = rng.normal(size=(5, 1, 12)), rng.normal(size=(5, 1, 12))
    np.testing.assert_allclose(cam_from_gradients(acts, c * grads), cam_from_gradients(acts, grads), atol=1e-12)


def test_electrode_attribution(model, rng):
    params, cfg = model
    scores = electrode_attribution(rng.normal(size=(8, 256)), params, cfg, 0)
    assert scores.shape == (8,) and scores.max() == 1.0 and scores.min() >= 0.0


def test_export_format(tmp_path):
    amap = AttributionMap(np.array([0.0, 0.123456789123, 1.0, 1 / 3]), 1, "fr", 0)
    path = tmp_path / "m.csv"
    export_map(amap, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5 and lines[0] == "time_index,activation"
    assert lines[2] == "1,0.123456789"
    np.testing.assert_allclose(read_map(path), amap.values, atol=1e-9, rtol=0)


def test_export_zero_map(tmp_path):
    path = tmp_path / "z.csv"
    export_map(AttributionMap(np.zeros(3), 0, "fr"), path)
    assert [l.split(",")[1] for l in path.read_text().splitlines()[1:]] == ["0", "0", "0"]


def test_export_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        export_map(AttributionMap(np.zeros(3), 0, "fr"), tmp_path / "missing" / "m.csv")


def test_electrode_csv(tmp_path):
    export_electrodes(np.array([0.5, 1.0]), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "electrode,attribution\n0,0.5\n1,1\n"


def test_mass_fraction():
    amap = AttributionMap(np.array([0.0, 1.0, 1.0, 0.0, 2.0]), 0, "fr")
    assert amap.mass_fraction(1, 3) == 0.5
    assert AttributionMap(np.zeros(4), 0, "fr").mass_fraction(0, 2) == 0.0
