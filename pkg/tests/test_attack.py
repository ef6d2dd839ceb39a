import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from advguard.attack import (
    AttackSpec,
    VictimModel,
    input_gradient,
    load_victim,
    pgd_attack,
    pgd_attack_many,
    save_victim,
    train_victim,
)
from advguard.errors import ConfigurationError, DimensionError, TrainingError
from advguard.imaging import GrayImage


def toy_images(seed=0, n=10, w=5, h=4, gap=0.3):
    """Linearly separable toy set: class 1 images are brighter in one corner."""
    rng = np.random.default_rng(seed)
    images, labels = [], []
    for i in range(n):
        px = rng.uniform(0.2, 0.5, size=(h, w))
        cls = i % 2
        if cls:
            px[: h // 2, : w // 2] += gap
        images.append(GrayImage(np.clip(px, 0, 1)))
        labels.append(cls)
    return images, np.array(labels)


def random_model(seed, w=5, h=4, hidden=3):
    rng = np.random.default_rng(seed)
    return VictimModel(
        rng.standard_normal((hidden, w * h)),
        rng.standard_normal(hidden),
        rng.standard_normal(hidden),
        rng.standard_normal(),
        w,
        h,
    )


def fd_gradient(model, img, label, step=1e-4):
    flat = img.flat().copy()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += step
        down[i] -= step
        y = np.array([float(label)])
        lu = float(np.logaddexp(0, model.logits(up[None, :])[0]) - y[0] * model.logits(up[None, :])[0])
        ld = float(np.logaddexp(0, model.logits(down[None, :])[0]) - y[0] * model.logits(down[None, :])[0])
        out[i] = (lu - ld) / (2 * step)
    return out.reshape(img.height, img.width)


def test_train_victim_separable_accuracy():
    images, labels = toy_images()
    model = train_victim(images, labels, epochs=200, seed=1)
    X = np.stack([im.flat() for im in images])
    preds = (model.forward(X) >= 0.5).astype(int)
    assert np.array_equal(preds, labels)


def test_train_victim_deterministic():
    images, labels = toy_images(seed=2)
    a = train_victim(images, labels, epochs=50, seed=9)
    b = train_victim(images, labels, epochs=50, seed=9)
    assert np.array_equal(a.w1, b.w1) and np.array_equal(a.w2, b.w2)
    assert a.b2 == b.b2


def test_train_victim_loss_non_increasing():
    images, labels = toy_images(seed=3)
    model = train_victim(images, labels, epochs=200, seed=4)
    trace = np.array(model.loss_trace)
    assert trace.size == 201
    assert np.all(np.diff(trace) <= 1e-6)


def test_train_victim_single_class_errors():
    images, _ = toy_images()
    with pytest.raises(TrainingError):
        train_victim(images, np.zeros(len(images)), epochs=5, seed=0)


def test_forward_output_open_interval():
    model = random_model(0)
    rng = np.random.default_rng(1)
    p = model.forward(rng.uniform(size=(20, model.input_size)))
    assert np.all(p > 0) and np.all(p < 1)


def test_input_gradient_zero_hidden_weights():
    w, h = 4, 3
    model = VictimModel(np.zeros((2, w * h)), np.zeros(2), np.ones(2), 0.3, w, h)
    g = input_gradient(model, GrayImage(np.full((h, w), 0.5)), 1)
    assert np.array_equal(g, np.zeros((h, w)))


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(7)
    for seed in range(5):
        model = random_model(seed)
        img = GrayImage(rng.uniform(0.1, 0.9, size=(4, 5)))
        label = seed % 2
        g = input_gradient(model, img, label)
        fd = fd_gradient(model, img, label)
        rel = np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-5


def test_input_gradient_hand_derived_width_one():
    # hidden width 1 with hand-set weights; gradient derived by hand:
    # d loss/dx = (p - y) * w2 * (1 - tanh(z)^2) * w1 / (sqrt(d) * sqrt(1))
    w, h = 2, 1
    w1 = np.array([[0.6, -0.4]])
    model = VictimModel(w1, np.array([0.1]), np.array([0.8]), -0.2, w, h)
    img = GrayImage(np.array([[0.5, 0.25]]))
    d = 2
    z = (0.6 * 0.5 - 0.4 * 0.25) / np.sqrt(d) + 0.1
    hid = np.tanh(z)
    logit = hid * 0.8 / 1.0 - 0.2
    p = 1 / (1 + np.exp(-logit))
    expected = (p - 1.0) * 0.8 * (1 - hid**2) * w1[0] / np.sqrt(d)
    g = input_gradient(model, img, 1)
    np.testing.assert_allclose(g.ravel(), expected, rtol=1e-12)


def test_input_gradient_size_mismatch():
    model = random_model(0)
    with pytest.raises(DimensionError):
        input_gradient(model, GrayImage(np.zeros((2, 2))), 0)


def test_pgd_epsilon_zero_is_identity():
    model = random_model(1)
    img = GrayImage(np.random.default_rng(0).uniform(0.2, 0.8, size=(4, 5)))
    out = pgd_attack(model, img, 1, AttackSpec(epsilon=0.0, alpha=0.2, iterations=3), seed=5)
    assert out == img


def test_pgd_single_step_projection_bound():
    # alpha larger than epsilon: every pixel lands on the epsilon boundary
    # (or the [0,1] wall) after one projected step
    model = random_model(2)
    rng = np.random.default_rng(3)
    img = GrayImage(rng.uniform(0.3, 0.7, size=(4, 5)))
    spec = AttackSpec(epsilon=0.1, alpha=0.2, iterations=1, random_start=False)
    out = pgd_attack(model, img, 0, spec, seed=0)
    delta = out.pixels - img.pixels
    g = input_gradient(model, img, 0)
    moving = np.sign(g) != 0
    assert np.all(np.abs(delta) <= 0.1 + 1e-12)
    np.testing.assert_allclose(np.abs(delta[moving]), 0.1, atol=1e-12)


def test_pgd_single_step_analytic_width_one():
    # width-1 model: sign of the gradient equals sign((p - y) * w2 * w1)
    w, h = 3, 2
    rng = np.random.default_rng(4)
    w1 = rng.standard_normal((1, w * h))
    model = VictimModel(w1, np.array([0.05]), np.array([1.3]), 0.1, w, h)
    img = GrayImage(rng.uniform(0.3, 0.7, size=(h, w)))
    spec = AttackSpec(epsilon=0.05, alpha=0.01, iterations=1, random_start=False)
    out = pgd_attack(model, img, 1, spec, seed=0)
    p = model.forward(img.flat()[None, :])[0]
    expected = img.flat() + 0.01 * np.sign((p - 1.0) * 1.3 * w1[0])
    expected = np.clip(expected, img.flat() - 0.05, img.flat() + 0.05)
    expected = np.clip(expected, 0, 1)
    np.testing.assert_allclose(out.flat(), expected, atol=1e-15)


def test_pgd_deterministic():
    model = random_model(5)
    img = GrayImage(np.random.default_rng(6).uniform(0.2, 0.8, size=(4, 5)))
    spec = AttackSpec()
    a = pgd_attack(model, img, 1, spec, seed=11)
    b = pgd_attack(model, img, 1, spec, seed=11)
    assert a == b


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), label=st.integers(0, 1), eps=st.floats(0.0, 0.2))
def test_pgd_contract_properties(seed, label, eps):
    model = random_model(seed % 7)
    rng = np.random.default_rng(seed)
    img = GrayImage(rng.uniform(size=(4, 5)))
    spec = AttackSpec(epsilon=eps, alpha=max(eps / 4, 1e-3), iterations=5)
    out = pgd_attack(model, img, label, spec, seed=seed)
    assert np.max(np.abs(out.pixels - img.pixels)) <= eps + 1e-12
    assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


def test_pgd_loss_ascends_without_random_start():
    images, labels = toy_images(seed=8, n=30)
    model = train_victim(images, labels, epochs=100, seed=1)
    spec = AttackSpec(epsilon=0.05, alpha=0.01, iterations=10, random_start=False)
    wins = 0
    for img, y in zip(images, labels):
        x = img.flat()[None, :]
        adv = pgd_attack(model, img, y, spec, seed=0)
        before = model.loss(x, np.array([float(y)]))
        after = model.loss(adv.flat()[None, :], np.array([float(y)]))
        wins += after >= before
    assert wins >= int(0.95 * len(images))


def test_pgd_many_matches_contract_and_determinism():
    images, labels = toy_images(seed=9, n=8)
    model = train_victim(images, labels, epochs=30, seed=2)
    spec = AttackSpec()
    outs1 = pgd_attack_many(model, images, labels, spec, seed=3)
    outs2 = pgd_attack_many(model, images, labels, spec, seed=3)
    assert all(a == b for a, b in zip(outs1, outs2))
    for img, adv in zip(images, outs1):
        assert np.max(np.abs(adv.pixels - img.pixels)) <= spec.epsilon + 1e-12


def test_attack_spec_validation():
    with pytest.raises(ConfigurationError):
        AttackSpec(epsilon=-0.1)
    with pytest.raises(ConfigurationError):
        AttackSpec(alpha=0.0)
    with pytest.raises(ConfigurationError):
        AttackSpec(iterations=0)


def test_victim_round_trip(tmp_path):
    images, labels = toy_images(seed=10)
    model = train_victim(images, labels, epochs=20, seed=3)
    save_victim(model, tmp_path / "victim.bin")
    loaded = load_victim(tmp_path / "victim.bin")
    assert np.array_equal(loaded.w1, model.w1)
    assert np.array_equal(loaded.b1, model.b1)
    assert np.array_equal(loaded.w2, model.w2)
    assert loaded.b2 == model.b2
    assert (loaded.input_width, loaded.input_height) == (model.input_width, model.input_height)
    assert loaded.seed == model.seed
