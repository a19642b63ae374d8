import numpy as np
import pytest

from partgrad.classify import (
    OvaConfig, bilinear_resize, extract_patch, feature_vector,
    hidden_activations, load_model, patch_side, predict, save_model,
    train_classifier,
)
from partgrad.detection import PartDetection
from partgrad.net import NetError, build_reference_net


def test_patch_side_examples():
    assert patch_side(100, 100, 0.1) == 32   # round(sqrt(1000)) = 32
    assert patch_side(64, 64, 0.1) == 20
    assert patch_side(3, 3, 1.0) == 3        # clamped to min extent
    assert patch_side(4, 4, 0.001) == 1      # never below one pixel


def test_patch_side_rejects_bad_lambda():
    with pytest.raises(NetError):
        patch_side(10, 10, 0.0)
    with pytest.raises(NetError):
        patch_side(10, 10, 1.5)


def test_extract_patch_interior_and_clamped():
    image = np.arange(100, dtype=float).reshape(1, 10, 10)
    patch = extract_patch(image, (5, 5), 3)
    assert np.array_equal(patch, image[:, 4:7, 4:7])
    corner = extract_patch(image, (0, 0), 3)
    assert np.array_equal(corner, image[:, 0:3, 0:3])
    far = extract_patch(image, (9.4, 9.4), 3)
    assert np.array_equal(far, image[:, 7:10, 7:10])


def test_bilinear_identity_and_constant():
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(3, 7, 9))
    assert np.allclose(bilinear_resize(image, 7, 9), image)
    flat = np.full((1, 5, 5), 0.37)
    out = bilinear_resize(flat, 12, 3)
    assert np.allclose(out, 0.37)


def test_bilinear_preserves_value_range():
    rng = np.random.default_rng(1)
    image = rng.uniform(size=(2, 6, 6))
    out = bilinear_resize(image, 17, 11)
    assert out.min() >= image.min() - 1e-12
    assert out.max() <= image.max() + 1e-12


def test_hidden_activations_default_layer():
    net = build_reference_net((3, 12, 12), 3, seed=70)
    image = np.random.default_rng(71).uniform(size=(3, 20, 20))
    feats = hidden_activations(net, image)
    expected = net.forward(bilinear_resize(image, 12, 12))[
        len(net.layers) - 2].reshape(-1)
    assert np.array_equal(feats, expected)


def test_feature_vector_layout():
    net = build_reference_net((3, 12, 12), 3, seed=72)
    image = np.random.default_rng(73).uniform(size=(3, 30, 30))
    dets = [PartDetection("a", "head", 10.0, 10.0, False, 0, 1.0),
            PartDetection("a", "tail", None, None, True, 1, 0.0)]
    fv = feature_vector(net, image, dets, lam=0.1)
    block = hidden_activations(net, image).size
    assert fv.size == 3 * block
    assert np.all(fv[2 * block:] == 0.0)  # occluded part block
    # global block is detection-independent
    fv2 = feature_vector(net, image, dets[::-1], lam=0.1)
    assert np.array_equal(fv[:block], fv2[:block])


def test_classifier_separates_linear_data():
    rng = np.random.default_rng(3)
    centers = np.array([[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]])
    features, labels = [], []
    for i in range(90):
        c = i % 3
        features.append(centers[c] + 0.2 * rng.normal(size=3))
        labels.append(c)
    model = train_classifier(np.array(features), labels, OvaConfig(epochs=30))
    preds = predict(model, np.array(features))
    assert np.mean(preds == labels) >= 0.99


def test_classifier_deterministic():
    rng = np.random.default_rng(4)
    features = rng.normal(size=(20, 5))
    labels = rng.integers(0, 2, size=20)
    a = train_classifier(features, labels)
    b = train_classifier(features, labels)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.biases, b.biases)


def test_classifier_needs_two_classes():
    with pytest.raises(NetError):
        train_classifier(np.ones((4, 2)), [0, 0, 0, 0])


def test_predict_rejects_wrong_length():
    model = train_classifier(np.eye(4), [0, 1, 0, 1])
    with pytest.raises(NetError):
        predict(model, np.ones(3))


def test_model_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    model = train_classifier(rng.normal(size=(12, 6)),
                             rng.integers(0, 3, size=12))
    path = tmp_path / "m.pddm"
    save_model(model, path)
    loaded = load_model(path)
    # storage is float32
    assert np.array_equal(loaded.weights, model.weights.astype(np.float32))
    assert np.array_equal(loaded.biases, model.biases.astype(np.float32))


def test_model_bad_magic(tmp_path):
    path = tmp_path / "m.pddm"
    path.write_bytes(b"XXXX" + b"\x00" * 16)
    with pytest.raises(NetError):
        load_model(path)


def test_model_truncated(tmp_path):
    rng = np.random.default_rng(6)
    model = train_classifier(rng.normal(size=(8, 4)),
                             rng.integers(0, 2, size=8))
    path = tmp_path / "m.pddm"
    save_model(model, path)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(NetError):
        load_model(path)
