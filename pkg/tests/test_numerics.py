import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leapfrog_diffusion.numerics import (
    ContractError,
    DimensionError,
    Parameter,
    ParameterStore,
    Tape,
    Tensor,
    adam_step,
    backward,
    broadcast_to,
    check_gradients,
    concat,
    conv1d,
    exp,
    finite_diff_grad,
    frobenius_norm,
    getitem,
    load_checkpoint,
    log,
    matmul,
    mean,
    relu,
    reshape,
    save_checkpoint,
    sigmoid,
    softmax,
    sqrt,
    sum,
    tanh,
    transpose,
)
from leapfrog_diffusion.numerics.nn import gru_cell


def _rng(seed=0):
    return np.random.default_rng(seed)


def _grad(fn, *arrays):
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = fn(*leaves)
    backward(tape, out)
    return [leaf.grad for leaf in leaves]


UNARY = {
    "exp": exp,
    "log": lambda x: log(x * x + 1.0),
    "sqrt": lambda x: sqrt(x * x + 0.5),
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
    "softmax": lambda x: softmax(x, axis=-1) * Tensor(np.arange(x.shape[-1], dtype=float)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_ops_match_finite_differences(name):
    x = Tensor(_rng(1).normal(size=(3, 4)))
    err = check_gradients(lambda: sum(UNARY[name](x) * UNARY[name](x)), [x])["leaf0"]
    assert err <= 1e-6


def test_binary_broadcasting_gradients():
    a = Tensor(_rng(2).normal(size=(2, 3, 4)))
    b = Tensor(_rng(3).normal(size=(3, 1)))
    c = Tensor(_rng(4).normal(size=(4,)) ** 2 + 1.0)
    errs = check_gradients(lambda: sum((a * b - a / c + b) * (b - c)), [a, b, c])
    assert max(errs.values()) <= 1e-7


def test_matmul_batched_gradients():
    a = Tensor(_rng(5).normal(size=(2, 3, 4)))
    b = Tensor(_rng(6).normal(size=(4, 5)))
    errs = check_gradients(lambda: sum(tanh(matmul(a, b))), [a, b])
    assert max(errs.values()) <= 1e-7


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_structural_ops_gradients():
    x = Tensor(_rng(7).normal(size=(2, 3, 4)))
    y = Tensor(_rng(8).normal(size=(2, 3, 2)))
    idx = np.array([0, 2, 2])

    def f():
        z = concat([x, y], axis=-1)
        z = transpose(reshape(z, (2, 3, 6)), (2, 0, 1))
        picked = getitem(z, (idx, 1))  # advanced indexing with a repeated row
        sliced = z[1:4, :, 0]
        b = broadcast_to(reshape(mean(x, axis=(0, 1)), (1, 4)), (5, 4))
        return sum(picked * picked) + sum(tanh(sliced)) + sum(b * b)

    assert max(check_gradients(f, [x, y]).values()) <= 1e-7


def test_frobenius_norm_zero_subgradient():
    x = Tensor(np.zeros((2, 3)), requires_grad=True)
    with Tape() as tape:
        out = sum(frobenius_norm(x, axis=-1))
    backward(tape, out)
    assert out.item() == 0.0
    assert np.array_equal(x.grad, np.zeros((2, 3)))


def test_softmax_is_stable_for_large_logits():
    out = softmax(Tensor(np.array([[1000.0, 1001.0, 999.0]])), axis=-1).data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(), 1.0, rtol=0, atol=1e-15)


def test_conv1d_same_padding_and_gradients():
    x = Tensor(_rng(9).normal(size=(2, 5, 2)))
    k = Tensor(_rng(10).normal(size=(3, 2, 4)))
    b = Tensor(_rng(11).normal(size=(4,)))
    out = conv1d(x, k, b)
    assert out.shape == (2, 5, 4)
    # direct oracle
    xp = np.pad(x.data, ((0, 0), (1, 1), (0, 0)))
    ref = np.stack([np.einsum("bkc,kco->bo", xp[:, t : t + 3], k.data) for t in range(5)], axis=1) + b.data
    np.testing.assert_allclose(out.data, ref, rtol=0, atol=1e-12)
    assert max(check_gradients(lambda: sum(tanh(conv1d(x, k, b))), [x, k, b]).values()) <= 1e-7


def test_conv1d_rejects_even_kernel():
    with pytest.raises(ValueError):
        conv1d(Tensor(np.ones((1, 4, 2))), Tensor(np.ones((2, 2, 3))))


def test_gru_cell_matches_reference_and_gradients():
    rng = _rng(12)
    d, H, B = 3, 4, 2
    params = {
        "w": Tensor(rng.normal(size=(d, 3 * H)) * 0.5),
        "u_zr": Tensor(rng.normal(size=(H, 2 * H)) * 0.5),
        "u_h": Tensor(rng.normal(size=(H, H)) * 0.5),
        "b": Tensor(rng.normal(size=(3 * H,)) * 0.1),
    }
    x = Tensor(rng.normal(size=(B, d)))
    h = Tensor(rng.normal(size=(B, H)))
    out = gru_cell(x, h, params).data

    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    gx = x.data @ params["w"].data + params["b"].data
    gh = h.data @ params["u_zr"].data
    z = sig(gx[:, :H] + gh[:, :H])
    r = sig(gx[:, H : 2 * H] + gh[:, H:])
    cand = np.tanh(gx[:, 2 * H :] + (r * h.data) @ params["u_h"].data)
    np.testing.assert_allclose(out, (1 - z) * h.data + z * cand, rtol=0, atol=1e-12)

    leaves = [x, h, *params.values()]
    assert max(check_gradients(lambda: sum(tanh(gru_cell(x, h, params)) * Tensor(np.arange(H, dtype=float))), leaves).values()) <= 1e-6


def test_backward_contracts():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        y = x * 2.0
    with pytest.raises(ContractError):
        backward(tape, y)  # not scalar
    with Tape():
        z = sum(x * 3.0)
    with Tape() as other:
        pass
    with pytest.raises(ContractError):
        backward(other, z)


def test_no_recording_without_tape_or_grad():
    x = Tensor(np.ones(3), requires_grad=True)
    assert (x * 2.0)._backward is None
    with Tape() as tape:
        Tensor(np.ones(3)) * 2.0
    assert len(tape) == 0


def test_frozen_parameters_get_zero_gradient():
    store = ParameterStore()
    w = store.add("a.w", np.ones((2, 2)))
    v = store.add("b.w", np.ones((2, 2)))
    store.freeze("a.")
    with Tape() as tape:
        loss = sum(matmul(w, v))
    backward(tape, loss)
    assert np.array_equal(w.grad, np.zeros((2, 2)))
    assert np.all(v.grad != 0)


def test_finite_diff_grad_on_quadratic():
    g = finite_diff_grad(lambda x: float(np.sum(x**2)), np.array([1.0, -2.0, 3.0]))
    np.testing.assert_allclose(g, [2.0, -4.0, 6.0], atol=1e-8)


def test_adam_matches_scalar_reference():
    store = ParameterStore()
    p = store.add("p", np.array([1.0, -1.0]))
    ref_x, m, v = np.array([1.0, -1.0]), np.zeros(2), np.zeros(2)
    for t in range(1, 6):
        g = 2.0 * p.data + 0.5
        p.grad[...] = g
        adam_step(store, 0.1)
        gr = 2.0 * ref_x + 0.5
        m = 0.9 * m + 0.1 * gr
        v = 0.999 * v + 0.001 * gr * gr
        ref_x = ref_x - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
        np.testing.assert_allclose(p.data, ref_x, rtol=0, atol=1e-14)
        assert np.all(p.grad == 0)


def test_adam_rejects_nan_gradient_and_skips_frozen():
    store = ParameterStore()
    a = store.add("a", np.ones(2))
    b = store.add("b", np.ones(2))
    b.set_frozen(True)
    a.grad[...] = np.nan
    with pytest.raises(FloatingPointError, match="'a'"):
        adam_step(store, 0.1)
    a.grad[...] = 1.0
    before = b.data.copy()
    adam_step(store, 0.1)
    assert np.array_equal(b.data, before)


def test_checkpoint_round_trip_is_exact(tmp_path):
    store = ParameterStore()
    store.add("x.w", _rng(13).normal(size=(3, 4)))
    store.add("x.b", np.array([np.pi, -0.0, 1e-300]))
    store["x.b"].set_frozen(True)
    path = tmp_path / "c.ckpt"
    save_checkpoint(store, path, {"kind": "test", "seed": 3})
    loaded, meta = load_checkpoint(path)
    assert meta == {"kind": "test", "seed": 3}
    assert loaded.names() == store.names()
    for p in store:
        assert np.array_equal(loaded[p.name].data, p.data)
        assert loaded[p.name].frozen == p.frozen
    save_checkpoint(store, tmp_path / "d.ckpt", {"kind": "test", "seed": 3})
    assert path.read_bytes() == (tmp_path / "d.ckpt").read_bytes()


def test_parameter_is_a_tensor():
    p = Parameter("w", np.ones(2))
    assert isinstance(p, Tensor) and p.requires_grad


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.integers(1, 3), min_size=1, max_size=3),
    st.integers(0, 2**31 - 1),
)
def test_property_sum_of_products_gradient(shape, seed):
    rng = _rng(seed)
    a = rng.normal(size=shape)
    b = rng.normal(size=shape)
    ga, gb = _grad(lambda x, y: sum(x * y), a, b)
    np.testing.assert_allclose(ga, b, rtol=0, atol=1e-15)
    np.testing.assert_allclose(gb, a, rtol=0, atol=1e-15)
