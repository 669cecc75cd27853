import json

import numpy as np
import pytest

import stylecond as sc

TINY = {
    "num_levels": 2,
    "latent_dim": 16,
    "style_dim": 16,
    "mapping_depth": 2,
    "max_channels": 8,
    "min_channels": 4,
    "embed_widths": [4, 8],
}


@pytest.fixture(scope="module")
def entry():
    return sc.make_entry(seed=1, index=0)


@pytest.fixture(scope="module")
def checkpoints(tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpt")
    paths = {}
    for conditional in (False, True):
        path = root / f"tiny_{int(conditional)}.ckpt"
        sc.new_checkpoint(str(path), synthesis={**TINY, "conditional": conditional},
                          discriminator={"feature_dim": 16}, train={"batch_size": 4})
        paths[conditional] = str(path)
    return paths


def test_render_measure_round_trip(entry):
    image = sc.render_reference(entry["outfit"], entry["pose"])
    assert image.shape == (3, 64, 48)
    assert image.dtype == np.float32
    np.testing.assert_array_equal(image, entry["image"])
    measured = sc.measure_pose(image)
    assert all(measured["detected"])
    for (x, y), (tx, ty) in zip(measured["peaks"], entry["pose"]["keypoints"]):
        assert np.hypot((x - tx) * 48, (y - ty) * 64) <= 1.0


def test_entries_are_deterministic():
    a = sc.make_entry(seed=4, index=9)
    b = sc.make_entry(seed=4, index=9)
    assert a["outfit"] == b["outfit"]
    np.testing.assert_array_equal(a["image"], b["image"])
    assert len(a["articles"]) == 6


def test_frechet_closed_forms():
    one = np.eye(1)
    assert sc.frechet_distance(np.zeros(1), one, np.full(1, 3.0), one) == pytest.approx(9.0, abs=1e-9)
    assert sc.frechet_distance(np.zeros(1), one, np.zeros(1), 4 * one) == pytest.approx(1.0, abs=1e-9)


def test_random_pose_baseline_is_positive():
    assert sc.random_pose_baseline(100, 3) > 1.0


def test_png_round_trip(entry):
    data = sc.encode_png(entry["image"])
    assert data[:4] == b"\x89PNG"
    back = sc.decode_png(data)
    assert np.abs(back - entry["image"]).max() <= 0.5 / 255 + 1e-6


def test_presets_and_catalog():
    presets = sc.pose_presets()
    assert {"standing", "walking"} <= set(presets)
    assert len(presets["standing"]["keypoints"]) == 16
    cat = sc.catalog()
    assert [c["category"] for c in cat["categories"]][:2] == ["Top", "Outerwear"]


def test_model_sampling_and_mixing(checkpoints):
    model = sc.Model(checkpoints[False])
    assert not model.conditional
    assert model.resolution == (8, 6)
    assert model.total_layers == 4
    a = model.sample(seed=3, n=2)
    b = model.sample(seed=3, n=1)
    np.testing.assert_array_equal(a[0], b[0])
    mix = model.mix(1, 1, "pose_transfer")
    np.testing.assert_array_equal(mix["mixed"], mix["source"])
    assert mix["assignment"]["source"] == [1]
    with pytest.raises(sc.ModeError):
        model.generate(sc.make_entry(1, 0)["outfit"], "standing")


def test_conditional_generate(checkpoints, entry):
    model = sc.Model(checkpoints[True])
    one = model.generate(entry["outfit"], entry["pose"], seed=5)
    two = model.generate(entry["outfit"], "standing", seed=5)
    assert one.shape == (3, 8, 6)
    assert not np.array_equal(one, two)
    np.testing.assert_array_equal(one, model.generate(entry["outfit"], entry["pose"], seed=5))
    with pytest.raises(sc.ValidationError):
        model.generate({"slots": [None] * 7}, "standing")


def test_training_continues(tmp_path, checkpoints):
    data = tmp_path / "data"
    sc.write_dataset(str(data), n=8, seed=2, height=8, width=6)
    out = tmp_path / "trained.ckpt"
    assert sc.train(checkpoints[True], str(data), 2, str(out)) == 2
    assert sc.Model(str(out)).step == 2


def test_service_surfaces(checkpoints, entry):
    service = sc.Service(checkpoints[True])
    health = service.health()
    assert health["status"] == 200
    assert json.loads(health["body"])["total_layers"] == 4
    body = json.dumps({"outfit": entry["outfit"], "pose": "standing", "seed": 1})
    first, second = service.generate(body), service.generate(body)
    assert first["status"] == 200
    assert first["content_type"] == "image/png"
    assert first["body"] == second["body"]
    bad = json.loads(body)
    bad["outfit"]["slots"].append(None)
    rejected = service.generate(json.dumps(bad))
    assert rejected["status"] == 400
    assert json.loads(rejected["body"])["field"].startswith("outfit.slots")
    mix = service.mix(json.dumps({"seed_source": 1, "seed_target": 2, "preset": "color_transfer"}))
    assert json.loads(mix["headers"]["X-Assignment"])["source"] == [3, 4]
    assert sc.Service().health()["status"] == 503


def test_schemas_accept_real_payloads(entry):
    jsonschema = pytest.importorskip("jsonschema")
    referencing = pytest.importorskip("referencing")
    from pathlib import Path

    root = Path(__file__).resolve().parents[2] / "schemas"
    schemas = {p.name: json.loads(p.read_text()) for p in root.glob("*.schema.json")}
    registry = referencing.Registry().with_resources(
        (name, referencing.Resource.from_contents(s)) for name, s in schemas.items())

    def validator(name):
        return jsonschema.Draft202012Validator(schemas[name], registry=registry)

    validator("outfit.schema.json").validate(entry["outfit"])
    for pose in sc.pose_presets().values():
        validator("pose.schema.json").validate(pose)
    request = validator("generate_request.schema.json")
    request.validate({"outfit": entry["outfit"], "pose": "standing", "seed": 3})
    seven = {"slots": entry["outfit"]["slots"] + [None]}
    assert not request.is_valid({"outfit": seven, "pose": "standing", "seed": 3})
    mix = validator("mix_request.schema.json")
    mix.validate({"seed_source": 1, "seed_target": 2, "preset": "pose_transfer"})
    mix.validate({"seed_source": 1, "seed_target": 2, "source_ranges": [[13, 18]], "target_ranges": [[1, 12]]})
    assert not mix.is_valid({"seed_source": 1, "seed_target": 2})
