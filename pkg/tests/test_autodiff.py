import numpy as np
import pytest

from codesign import autodiff as ad

from helpers import numerical_grad, assert_grads_close


def collect_grads(params):
    return {k: p.grad.copy() for k, p in params.items()}


def test_add_mul_broadcast_grads():
    rng = np.random.default_rng(0)
    W = ad.parameter(rng.normal(size=(3, 4)))
    b = ad.parameter(rng.normal(size=(4,)))
    x = np.array([1.0, -2.0, 0.5])

    def loss_fn():
        out = ad.tsum(ad.tanh(ad.Tensor(x) @ W + b))
        return out.item()

    out = ad.tsum(ad.tanh(ad.Tensor(x) @ W + b))
    out.backward()
    assert_grads_close(collect_grads({"W": W, "b": b}), numerical_grad(loss_fn, {"W": W, "b": b}))


def test_matmul_batched_grads():
    rng = np.random.default_rng(1)
    A = ad.parameter(rng.normal(size=(2, 3, 4)))
    B = ad.parameter(rng.normal(size=(4, 5)))

    def forward():
        return ad.tsum(ad.sigmoid(A @ B) * 0.5)

    forward().backward()
    assert_grads_close(
        collect_grads({"A": A, "B": B}),
        numerical_grad(lambda: forward().item(), {"A": A, "B": B}),
    )


def test_div_pow_log_exp_grads():
    rng = np.random.default_rng(2)
    a = ad.parameter(rng.uniform(0.5, 2.0, size=(5,)))
    b = ad.parameter(rng.uniform(0.5, 2.0, size=(5,)))

    def forward():
        return ad.tsum(ad.log(a) / b + ad.exp(b * 0.3) + a ** 2.0)

    forward().backward()
    assert_grads_close(
        collect_grads({"a": a, "b": b}),
        numerical_grad(lambda: forward().item(), {"a": a, "b": b}),
    )


def test_concatenate_reshape_swapaxes_grads():
    rng = np.random.default_rng(3)
    a = ad.parameter(rng.normal(size=(2, 3)))
    b = ad.parameter(rng.normal(size=(2, 2)))

    def forward():
        cat = ad.concatenate([a, b], axis=1)
        k = ad.swapaxes(ad.reshape(cat, (5, 2)), 0, 1)
        return ad.tsum(k * k)

    forward().backward()
    assert_grads_close(
        collect_grads({"a": a, "b": b}),
        numerical_grad(lambda: forward().item(), {"a": a, "b": b}),
    )


def test_take_and_gather_grads():
    rng = np.random.default_rng(4)
    table = ad.parameter(rng.normal(size=(4, 3)))
    rows = np.array([0, 2, 2, 1])
    cols = np.array([[1], [0], [2], [2]])

    def forward():
        picked = ad.take(table, rows)
        chosen = ad.gather(picked, cols, axis=-1)
        return ad.tsum(ad.tanh(chosen))

    forward().backward()
    assert_grads_close(
        collect_grads({"t": table}),
        numerical_grad(lambda: forward().item(), {"t": table}),
    )


def test_masked_log_softmax_values_and_grads():
    rng = np.random.default_rng(5)
    logits = ad.parameter(rng.normal(size=(3, 5)))
    mask = np.array(
        [
            [True, True, False, True, False],
            [True, False, False, False, False],
            [True, True, True, True, True],
        ]
    )
    out = ad.masked_log_softmax(logits, mask)
    probs = np.exp(out.data)
    assert np.all(probs[~mask] == 0.0)
    np.testing.assert_allclose(np.where(mask, probs, 0.0).sum(axis=1), 1.0, rtol=1e-12)
    # single feasible entry -> point mass
    assert probs[1, 0] == pytest.approx(1.0)

    weights = rng.normal(size=(3, 5)) * mask

    def forward():
        return ad.tsum(ad.masked_log_softmax(logits, mask) * weights)

    forward().backward()
    assert_grads_close(
        collect_grads({"logits": logits}),
        numerical_grad(lambda: forward().item(), {"logits": logits}),
    )


def test_masked_log_softmax_all_masked_raises():
    logits = ad.Tensor(np.zeros((2, 3)))
    mask = np.array([[True, False, False], [False, False, False]])
    with pytest.raises(ValueError):
        ad.masked_log_softmax(logits, mask)


def test_mask_invariance_dummy_node():
    # appending a masked dummy column must not change live log-probs
    rng = np.random.default_rng(6)
    logits = rng.normal(size=(4, 6))
    mask = rng.random((4, 6)) > 0.3
    mask[:, 0] = True
    base = ad.masked_log_softmax(ad.Tensor(logits), mask).data
    logits_ext = np.concatenate([logits, rng.normal(size=(4, 1))], axis=1)
    mask_ext = np.concatenate([mask, np.zeros((4, 1), dtype=bool)], axis=1)
    ext = ad.masked_log_softmax(ad.Tensor(logits_ext), mask_ext).data
    np.testing.assert_allclose(ext[:, :6][mask], base[mask], atol=1e-9)


def test_clamp_min_grad_blocks_below_floor():
    x = ad.parameter(np.array([-1.0, 0.5, 2.0]))
    out = ad.tsum(ad.clamp_min(x, 0.0))
    out.backward()
    np.testing.assert_allclose(x.grad, [0.0, 1.0, 1.0])


def test_no_grad_blocks_tape():
    x = ad.parameter(np.ones(3))
    with ad.no_grad():
        y = ad.tsum(x * 2.0)
    assert y._backward is None and not y.requires_grad


def test_grad_accumulates_across_backward_calls():
    x = ad.parameter(np.array([2.0]))
    ad.tsum(x * 3.0).backward()
    ad.tsum(x * 3.0).backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_adam_decreases_quadratic():
    x = ad.parameter(np.array([5.0, -3.0]))
    opt = ad.Adam({"x": x}, lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        loss = ad.tsum(x * x)
        loss.backward()
        opt.step()
    assert np.all(np.abs(x.data) < 0.2)


def test_adam_state_roundtrip():
    rng = np.random.default_rng(7)
    x = ad.parameter(rng.normal(size=(3,)))
    opt = ad.Adam({"x": x}, lr=0.05)
    for _ in range(5):
        opt.zero_grad()
        ad.tsum(x * x).backward()
        opt.step()
    state = {k: v.copy() for k, v in opt.state_arrays().items()}
    x2 = ad.parameter(x.data.copy())
    opt2 = ad.Adam({"x": x2}, lr=0.05)
    opt2.load_state_arrays(state)
    for opt_i, x_i in ((opt, x), (opt2, x2)):
        opt_i.zero_grad()
        ad.tsum(x_i * x_i).backward()
        opt_i.step()
    np.testing.assert_array_equal(x.data, x2.data)
