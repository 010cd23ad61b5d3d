"""Shared test oracles: finite differences and brute-force domination."""

import numpy as np


def numerical_grad(loss_fn, params, eps=1e-6):
    """Central finite differences of a scalar loss w.r.t. named parameters.

    ``loss_fn`` takes no arguments and must read the parameter tensors'
    ``data`` in place.  Returns a dict name -> gradient array.
    """
    grads = {}
    for name, p in params.items():
        grad = np.zeros_like(p.data)
        flat = p.data.ravel()
        grad_flat = grad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_fn()
            flat[i] = orig - eps
            lo = loss_fn()
            flat[i] = orig
            grad_flat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = grad
    return grads


def assert_grads_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    for name, num in numeric.items():
        ana = analytic[name]
        np.testing.assert_allclose(
            ana, num, rtol=rtol, atol=atol, err_msg=f"gradient mismatch for {name}"
        )


def brute_force_front(points):
    """Indices of the non-dominated points under maximize-all ordering."""
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    front = []
    for i in range(n):
        dominated = False
        for j in range(n):
            if i == j:
                continue
            if np.all(points[j] >= points[i]) and np.any(points[j] > points[i]):
                dominated = True
                break
        if not dominated:
            front.append(i)
    return front
