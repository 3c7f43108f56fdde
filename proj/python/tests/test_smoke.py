# Copyright 2026 The ncadiff Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import numpy as np
import pytest

import ncadiff

SMALL = [("channels", "8"), ("hidden", "16"), ("n_steps", "2"), ("timesteps", "10"),
         ("height", "16"), ("width", "16")]


def test_parameter_count_matches_closed_form():
    assert ncadiff.parameter_count() == 132736
    c, h, k = 16, 64, 2
    expected = k * c * 9 + (k + 1) * c * h + h + h * c
    assert ncadiff.parameter_count(overrides=[("channels", str(c)), ("hidden", str(h))]) == expected


def test_untrained_model_is_identity():
    model = ncadiff.Model.create(overrides=SMALL + [("variant", "multi_cbam"), ("downsample_factor", "2")])
    assert model.variant == "multi_cbam"
    rng = np.random.default_rng(0)
    image = rng.uniform(-1, 1, (3, 16, 16)).astype(np.float32)
    x_t = rng.standard_normal((1, 16, 16)).astype(np.float32)
    eps, rgb = model.predict_noise(image, x_t, 5)
    assert eps.shape == (1, 16, 16)
    assert not eps.any()
    np.testing.assert_array_equal(rgb, image)
    assert sum(p.size for p in model.parameters().values()) == model.parameter_count


def test_synthetic_data_and_metrics():
    data = ncadiff.synth_dataset(2, 16, 16, seed=3)
    image, mask, ident = data[0]
    assert image.shape == (3, 16, 16) and mask.shape == (1, 16, 16)
    assert ident == "synth_0000"
    assert set(np.unique(mask)) <= {-1.0, 1.0}
    assert ncadiff.dice_iou(mask, mask) == (1.0, 1.0)
    dice, iou = ncadiff.dice_iou(-mask, mask)
    assert dice == 0.0 and iou == 0.0


def test_schedule():
    s = ncadiff.schedule(10)
    assert len(s["beta"]) == 10
    assert np.allclose(np.cumprod(1 - np.array(s["beta"])), s["alpha_bar"])


def test_checkpoint_round_trip(tmp_path):
    model = ncadiff.Model.create(overrides=SMALL + [("seed", "4")])
    path = tmp_path / "m.ckpt"
    model.save(path)
    loaded = ncadiff.Model.load(path)
    assert loaded.config == model.config
    for name, value in model.parameters().items():
        np.testing.assert_array_equal(loaded.parameters()[name], value)
    (tmp_path / "bad.ckpt").write_bytes(b"garbage")
    with pytest.raises(ncadiff.CheckpointError):
        ncadiff.Model.load(tmp_path / "bad.ckpt")


def test_infer_shapes_and_determinism():
    model = ncadiff.Model.create(overrides=SMALL)
    image = ncadiff.synth_dataset(1, 16, 16)[0][0]
    mask, mean = model.infer(image, runs=2, seed=1)
    again, _ = model.infer(image, runs=2, seed=1)
    assert mask.shape == (1, 16, 16) and mean.shape == (1, 16, 16)
    np.testing.assert_array_equal(mask, again)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ncadiff.ConfigError, match="fire_rat"):
        ncadiff.Model.create(overrides=[("fire_rat", "0.5")])
    with pytest.raises(ncadiff.Error):
        ncadiff.Model.create(overrides=SMALL).predict_noise(np.zeros((3, 4, 4)), np.zeros((1, 5, 4)), 1)


def test_cli_and_gradcheck(tmp_path):
    code, out, _ = ncadiff.run_cli(["params"])
    assert code == 0 and "132,736" in out
    args = ["train", "--total_steps", "3", "--output_dir", str(tmp_path / "run")]
    for key, value in SMALL:
        args += ["--" + key, value]
    code, _, err = ncadiff.run_cli(args)
    assert code == 0, err
    assert (tmp_path / "run" / "metrics.csv").read_text().count("\n") == 4
    passed, err = ncadiff.gradcheck("basic")
    assert passed and err < 1e-3
