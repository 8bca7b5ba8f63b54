import numpy as np
import pytest

from massmanip.errors import NumericError, ShapeError
from massmanip.numerics import (
    LayerSpec, NetworkSpec, OptimState, Tensor, adam_step, backprop_gradients,
    evaluate_network, finite_difference_check, finite_difference_check_network,
    init_params, load_checkpoint, restore_into, rng, save_checkpoint,
)


def test_evaluate_identity_dense():
    spec = NetworkSpec((3,), (LayerSpec("dense", 3),))
    params = [[np.eye(3, dtype=np.float32), np.zeros(3, dtype=np.float32)]]
    x = np.array([[0.3, -1.2, 4.0]], dtype=np.float32)
    out = evaluate_network(spec, params, x)
    np.testing.assert_allclose(out.data, x, rtol=0, atol=0)


def test_evaluate_sigmoid_zero_unit():
    spec = NetworkSpec((4,), (LayerSpec("dense", 1, activation="sigmoid"),))
    params = [[np.zeros((4, 1), dtype=np.float32), np.zeros(1, dtype=np.float32)]]
    x = np.array([[5.0, -2.0, 0.1, 100.0]], dtype=np.float32)
    out = evaluate_network(spec, params, x)
    np.testing.assert_allclose(out.data, [[0.5]], atol=1e-7)


def test_evaluate_two_layer_hand_computed():
    # forward pass evaluated by hand before implementation:
    # pre1 = [1,2] @ [[1,-1],[2,0.5]] + [0.5,-3] = [5.5, -3]
    # elu  = [5.5, exp(-3)-1]
    # out  = 5.5*2 + (exp(-3)-1)*(-1) + 0.25 = 12.200212931632136
    spec = NetworkSpec((2,), (LayerSpec("dense", 2, activation="elu"),
                              LayerSpec("dense", 1)))
    params = [
        [np.array([[1.0, -1.0], [2.0, 0.5]], dtype=np.float32), np.array([0.5, -3.0], dtype=np.float32)],
        [np.array([[2.0], [-1.0]], dtype=np.float32), np.array([0.25], dtype=np.float32)],
    ]
    out = evaluate_network(spec, params, np.array([[1.0, 2.0]], dtype=np.float32))
    np.testing.assert_allclose(out.data, [[12.200212931632136]], rtol=1e-6)


def test_evaluate_shape_mismatch_reports_both():
    spec = NetworkSpec((3,), (LayerSpec("dense", 2),))
    params = init_params(spec)
    with pytest.raises(ShapeError) as e:
        evaluate_network(spec, params, np.zeros((1, 5), dtype=np.float32))
    assert "(5,)" in str(e.value) and "(3,)" in str(e.value)


def test_backprop_param_norm_gradient():
    p = Tensor(np.array([1.0, -2.0, 0.5], dtype=np.float32), requires_grad=True)
    loss = (p * p).sum()
    loss.backward()
    np.testing.assert_allclose(p.grad, 2.0 * p.data, rtol=1e-6)


def test_backprop_constant_loss_zero_grads():
    spec = NetworkSpec((3,), (LayerSpec("dense", 2, activation="elu"),))
    params = init_params(spec, seed=5)
    x = np.ones((2, 3), dtype=np.float32)
    grads = backprop_gradients(spec, params, lambda out, b: (out * 0.0).sum(), (x,))
    for layer, glayer in zip(params, grads):
        for p, g in zip(layer, glayer):
            assert g.shape == p.shape
            np.testing.assert_array_equal(g, np.zeros_like(g))


def test_backprop_nonfinite_loss_aborts():
    spec = NetworkSpec((2,), (LayerSpec("dense", 1),))
    params = init_params(spec)

    def bad_loss(out, batch):
        return (out / 0.0).sum()

    with pytest.raises(NumericError):
        backprop_gradients(spec, params, bad_loss, (np.ones((1, 2), dtype=np.float32),))


@pytest.mark.parametrize("seed", range(10))
def test_backprop_matches_central_differences(seed):
    spec = NetworkSpec((4,), (LayerSpec("dense", 6, activation="elu"),
                              LayerSpec("dense", 5, activation="elu"),
                              LayerSpec("dense", 2, activation="sigmoid")))
    params = init_params(spec, seed=seed)
    x = rng.stream(seed, 1).standard_normal((3, 4)).astype(np.float32)
    rep = finite_difference_check_network(spec, params, lambda out, b: (out * out).sum(), (x,), h=1e-4)
    assert rep["pass"], rep
    assert rep["max_rel_err"] < 1e-3


@pytest.mark.parametrize("spec", [
    NetworkSpec((5,), (LayerSpec("dense", 4, activation="elu"),)),
    NetworkSpec((3, 12), (LayerSpec("conv1d", 4, kernel=3, activation="elu"),)),
    NetworkSpec((2, 8, 6), (LayerSpec("conv2d", 3, kernel=3, activation="elu"),)),
    NetworkSpec((3, 12), (LayerSpec("residual-block", 5, kernel=3, activation="elu"),)),
    NetworkSpec((2, 8, 6), (LayerSpec("residual-block", 4, kernel=3, stride=2),)),
    NetworkSpec((6,), (LayerSpec("residual-block", 6, activation="sigmoid"),)),
], ids=["dense", "conv1d", "conv2d", "resblock1d", "resblock2d-strided", "resblock-dense"])
def test_fd_agreement_every_layer_kind(spec):
    params = init_params(spec, seed=11)
    x = rng.stream(3, 3).standard_normal((2,) + tuple(spec.input_shape)).astype(np.float32)
    rep = finite_difference_check_network(spec, params, lambda out, b: (out * out).sum(), (x,))
    assert rep["pass"] and rep["max_rel_err"] < 1e-3


def test_adam_zero_gradient_keeps_params():
    params = [np.array([1.0, 2.0], dtype=np.float32)]
    grads = [np.zeros(2, dtype=np.float32)]
    state = OptimState.for_params(params, lr=0.1)
    new_params, new_state = adam_step(params, grads, state)
    np.testing.assert_array_equal(new_params[0], params[0])
    assert new_state.step == 1
    np.testing.assert_array_equal(new_state.m[0], np.zeros(2))


def test_adam_descends_on_quadratic():
    x = [np.array([1.0], dtype=np.float32)]
    state = OptimState.for_params(x, lr=0.1)
    new_x, _ = adam_step(x, [2.0 * x[0]], state)
    assert new_x[0][0] < 1.0


def test_adam_reaches_quadratic_minimum():
    # f(x) = (x-c)^T diag(1,3) (x-c), minimum 0 at c
    c = np.array([0.5, -0.3], dtype=np.float32)
    a = np.array([1.0, 3.0], dtype=np.float32)
    x = [np.zeros(2, dtype=np.float32)]
    state = OptimState.for_params(x, lr=0.05)
    for _ in range(200):
        g = [2.0 * a * (x[0] - c)]
        x, state = adam_step(x, g, state)
    loss = float(np.sum(a * (x[0] - c) ** 2))
    assert loss < 1e-3
    assert state.step == 200


def test_adam_shape_mismatch():
    params = [np.zeros(3, dtype=np.float32)]
    with pytest.raises(ShapeError):
        adam_step(params, [np.zeros(4, dtype=np.float32)], OptimState.for_params(params))


def test_fd_check_linear_model_exact():
    spec = NetworkSpec((4,), (LayerSpec("dense", 3),))
    params = init_params(spec, seed=2)
    x = rng.stream(9).standard_normal((5, 4)).astype(np.float32)
    rep = finite_difference_check_network(spec, params, lambda out, b: out.sum(), (x,))
    assert rep["max_rel_err"] < 1e-6


def test_fd_check_elu_positive_preactivations():
    spec = NetworkSpec((3,), (LayerSpec("dense", 4, activation="elu"),
                              LayerSpec("dense", 2, activation="elu")))
    params = [
        [np.full((3, 4), 0.5, dtype=np.float32), np.full(4, 1.0, dtype=np.float32)],
        [np.full((4, 2), 0.5, dtype=np.float32), np.full(2, 1.0, dtype=np.float32)],
    ]
    x = np.full((2, 3), 0.7, dtype=np.float32)  # all pre-activations > 0
    rep = finite_difference_check_network(spec, params, lambda out, b: (out * out).sum(), (x,),
                                          tolerance=1e-4)
    assert rep["pass"]


def test_fd_check_detects_corrupted_gradient():
    w = np.array([[1.0, 2.0]], dtype=np.float32)

    def corrupted(wrapped):
        t = wrapped[0]
        # detach breaks half the gradient path on purpose
        return (t * t.detach()).sum() + (t.detach() * t.detach()).sum()

    rep = finite_difference_check(corrupted, [w])
    assert not rep["pass"]


def test_fd_check_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        finite_difference_check(lambda w: (w[0] * w[0]).sum(), [np.ones(2, dtype=np.float32)], tolerance=0.0)


def test_determinism_forward_backward_adam():
    spec = NetworkSpec((4,), (LayerSpec("dense", 8, activation="elu"), LayerSpec("dense", 2)))

    def run():
        params = init_params(spec, seed=77)
        x = rng.stream(77, 1).standard_normal((6, 4)).astype(np.float32)
        grads = backprop_gradients(spec, params, lambda out, b: (out * out).sum(), (x,))
        state = OptimState.for_params([p for l in params for p in l], lr=1e-3)
        new_p, _ = adam_step([p for l in params for p in l], [g for l in grads for g in l], state)
        return new_p

    a, b = run(), run()
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa, pb)


def test_elu_sigmoid_closed_forms():
    x = np.array([-3.0, -0.5, 0.0, 0.5, 3.0], dtype=np.float64)
    t = Tensor(x)
    np.testing.assert_allclose(t.elu().data, np.where(x > 0, x, np.exp(x) - 1.0), atol=1e-6)
    np.testing.assert_allclose(t.sigmoid().data, 1.0 / (1.0 + np.exp(-x)), atol=1e-6)


def test_param_count_matches_sum():
    spec = NetworkSpec((3, 16), (LayerSpec("conv1d", 8, kernel=3, activation="elu"),
                                 LayerSpec("residual-block", 8, kernel=3),
                                 LayerSpec("conv1d", 2, kernel=1)))
    params = init_params(spec, seed=0)
    assert sum(p.size for l in params for p in l) == spec.param_count()
    # conv1d 8x3x3+8 = 80; res 8x8x3+8 twice = 400; conv1d 2x8x1+2 = 18
    assert spec.param_count() == 80 + 400 + 18


def test_checkpoint_roundtrip(tmp_path):
    spec = NetworkSpec((4,), (LayerSpec("dense", 3, activation="sigmoid"),))
    params = init_params(spec, seed=4)
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, spec=spec, step=123)
    header, arrays = load_checkpoint(path)
    assert header["step"] == 123
    restored = init_params(spec, seed=999)
    restore_into(restored, arrays)
    for a, b in zip(params, restored):
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x, y)
    assert NetworkSpec.from_json(header["spec"]) == spec


def test_rng_streams_independent_and_stable():
    a1 = rng.stream(5, 0).standard_normal(4)
    a2 = rng.stream(5, 0).standard_normal(4)
    b = rng.stream(5, 1).standard_normal(4)
    np.testing.assert_array_equal(a1, a2)
    assert not np.allclose(a1, b)
