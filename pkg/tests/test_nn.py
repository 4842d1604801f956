import math

import numpy as np
import pytest

from wganc import autodiff as ad
from wganc.nn import (AdamConfig, MlpParams, MlpSpec, adam_init, adam_step, attach, init_mlp,
                      load_checkpoint, mlp_apply, mlp_forward, save_checkpoint)
from oracles import numeric_grad, rel_error

CRITIC = MlpSpec(64, (128,), 1, "leaky_relu")


def test_init_shapes_follow_layer_sizes():
    p = init_mlp(CRITIC, seed=0)
    assert [w.shape for w in p.weights] == [(128, 64), (1, 128)]
    assert [b.shape for b in p.biases] == [(128,), (1,)]
    assert all(np.all(b == 0) for b in p.biases)


def test_init_is_deterministic_per_seed():
    a, b = init_mlp(CRITIC, 7), init_mlp(CRITIC, 7)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.tensors(), b.tensors()))
    c = init_mlp(CRITIC, 8)
    assert not np.array_equal(a.weights[0], c.weights[0])


def test_init_bounds_and_mean():
    w = init_mlp(CRITIC, 3).weights[0]
    bound = math.sqrt(6.0 / (64 + 128))
    assert np.all(np.abs(w) <= bound)
    # uniform(-b, b): sd = b / sqrt(3); sample mean of n entries has sd b / sqrt(3n)
    sd_mean = bound / math.sqrt(3 * w.size)
    assert abs(w.mean()) < 3 * sd_mean


def test_spec_rejects_zero_width():
    with pytest.raises(ValueError):
        MlpSpec(0, (4,), 1)
    with pytest.raises(ValueError):
        MlpSpec(3, (4,), 1, "relu6")


def test_params_must_chain():
    p = init_mlp(MlpSpec(2, (3,), 1), 0)
    with pytest.raises(ValueError):
        MlpParams(p.spec, 0, (np.zeros((3, 2)), np.zeros((1, 4))), p.biases)


def test_identity_layer_forward():
    spec = MlpSpec(2, (), 2)
    p = MlpParams(spec, 0, (np.eye(2),), (np.zeros(2),))
    np.testing.assert_array_equal(mlp_apply(p, np.array([[1.0, 2.0]])), [[1.0, 2.0]])


def test_zero_weights_output_bias():
    spec = MlpSpec(3, (4,), 2)
    p = init_mlp(spec, 0)
    p = p.with_tensors([np.zeros_like(t) for t in p.tensors()])
    p = p.with_tensors(p.tensors()[:-1] + [np.array([0.5, -1.5])])
    x = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(mlp_apply(p, x), np.tile([0.5, -1.5], (5, 1)))


def test_batch_through_critic_shape():
    out = mlp_apply(init_mlp(CRITIC, 0), np.ones((3, 64)))
    assert out.shape == (3, 1)
    assert np.all(np.isfinite(out))


def test_width_mismatch_rejected():
    g = ad.Graph()
    with pytest.raises(ad.ShapeError):
        mlp_forward(init_mlp(CRITIC, 0), g.const(np.ones((2, 63))))


@pytest.mark.parametrize("hidden", [(), (5,), (5, 4), (6, 5, 4)])
def test_forward_node_count(hidden):
    spec = MlpSpec(3, hidden, 2, "tanh")
    p = init_mlp(spec, 0)
    g = ad.Graph()
    x = g.const(np.ones((4, 3)))
    before = len(g)
    mlp_forward(p, x, attach(p, g))
    layers = len(hidden) + 1
    # 2 leaves + 1 affine per layer, 1 activation per hidden layer
    assert len(g) - before == 3 * layers + len(hidden)


@pytest.mark.parametrize("activation", ["tanh", "leaky_relu"])
def test_mlp_parameter_gradient_matches_fd(activation):
    rng = np.random.default_rng(5)
    spec = MlpSpec(4, (6,), 2, activation)
    p = init_mlp(spec, 1)
    x = rng.standard_normal((5, 4))
    r = rng.standard_normal((5, 2))

    def loss_with(tensors):
        g = ad.Graph()
        leaves = [g.param(t) for t in tensors]
        out = mlp_forward(p, g.const(x), leaves)
        return g, leaves, ad.sum(ad.mul(out, g.const(r)))

    g, leaves, loss = loss_with(p.tensors())
    grads = g.backward(loss)
    for k, t in enumerate(p.tensors()):
        def f(v, k=k):
            ts = list(p.tensors())
            ts[k] = v
            return loss_with(ts)[2].value
        assert rel_error(grads[leaves[k].id], numeric_grad(f, t)) < 1e-4


# --- Adam ----------------------------------------------------------------------

def scalar_params(value):
    spec = MlpSpec(1, (), 1)
    return MlpParams(spec, 0, (np.array([[value]]),), (np.array([0.0]),))


def test_adam_zero_gradient_leaves_params():
    p = init_mlp(MlpSpec(2, (3,), 1), 0)
    state = adam_init(p, AdamConfig())
    p2, s2 = adam_step(state, p, [np.zeros_like(t) for t in p.tensors()])
    assert all(np.array_equal(a, b) for a, b in zip(p.tensors(), p2.tensors()))
    assert s2.t == 1


def test_adam_collapsed_formula():
    cfg = AdamConfig(lr=0.1, beta1=0.0, beta2=0.0, eps=1e-8)
    p = scalar_params(0.0)
    p2, _ = adam_step(adam_init(p, cfg), p, [np.array([[1.0]]), np.array([0.0])])
    assert p2.weights[0][0, 0] == pytest.approx(-0.1 / (1 + 1e-8), rel=1e-15)


def test_adam_two_steps_against_hand_recurrence():
    lr, b1, b2, eps = 0.1, 0.5, 0.9, 1e-8
    cfg = AdamConfig(lr, b1, b2, eps)
    p0, grads = [1.0, -2.0], [[0.5, -1.0], [0.1, 0.3]]

    # scalar recurrence, written out per coordinate
    expected = []
    for j in range(2):
        w, m, v = p0[j], 0.0, 0.0
        for t, g in enumerate((grads[0][j], grads[1][j]), start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            m_hat = m / (1 - b1 ** t)
            v_hat = v / (1 - b2 ** t)
            w = w - lr * m_hat / (math.sqrt(v_hat) + eps)
        expected.append(w)

    spec = MlpSpec(2, (), 1)
    p = MlpParams(spec, 0, (np.array([p0]),), (np.array([0.0]),))
    state = adam_init(p, cfg)
    for g in grads:
        p, state = adam_step(state, p, [np.array([g]), np.array([0.0])])
    np.testing.assert_allclose(p.weights[0][0], expected, rtol=1e-12)
    assert state.t == 2


def test_adam_replay_is_bit_identical():
    rng = np.random.default_rng(0)
    p0 = init_mlp(MlpSpec(3, (4,), 2), 0)
    seq = [[rng.standard_normal(t.shape) for t in p0.tensors()] for _ in range(5)]

    def replay():
        p, s = p0, adam_init(p0, AdamConfig())
        for g in seq:
            p, s = adam_step(s, p, g)
        return p

    a, b = replay(), replay()
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.tensors(), b.tensors()))


def test_adam_shape_mismatch():
    p = init_mlp(MlpSpec(2, (3,), 1), 0)
    state = adam_init(p, AdamConfig())
    bad = [np.zeros_like(t) for t in p.tensors()]
    bad[0] = np.zeros((2, 3))
    with pytest.raises(ad.ShapeError):
        adam_step(state, p, bad)
    with pytest.raises(ValueError):
        adam_step(state, p, bad[:2])


# --- checkpoints ---------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    gen = init_mlp(MlpSpec(32, (128,), 64, "tanh"), 4)
    crit = init_mlp(CRITIC, 9)
    crit = crit.with_tensors([t + 1e-17 * np.pi for t in crit.tensors()])
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, [("generator", gen, None), ("critic0", crit, {"kind": "prefix", "param": 64})])
    loaded = load_checkpoint(path)
    assert [name for name, _, _ in loaded] == ["generator", "critic0"]
    assert loaded[1][2] == {"kind": "prefix", "param": 64}
    for (_, orig, _), (_, back, _) in zip([("g", gen, None), ("c", crit, None)], loaded):
        assert back.spec == orig.spec and back.seed == orig.seed
        assert all(a.tobytes() == b.tobytes() for a, b in zip(orig.tensors(), back.tensors()))


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "x.ckpt"
    path.write_text("hello\n")
    with pytest.raises(ValueError):
        load_checkpoint(path)
