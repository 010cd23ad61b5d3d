"""Minimal reverse-mode automatic differentiation on float64 numpy arrays.

Just enough machinery for the policy/value networks in this package: elementwise
arithmetic with broadcasting, matmul (batched via numpy semantics), a few
nonlinearities, reductions, reshaping, gather/take, and a numerically stable
masked log-softmax.  Gradients are accumulated by walking the tape in reverse
topological order.

Inference paths wrap calls in :func:`no_grad` so no tape is built.
"""

import contextlib

import numpy as np

_GRAD_ENABLED = [True]


@contextlib.contextmanager
def no_grad():
    """Disable tape construction inside the block (inference fast path)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        topo, visited = [], set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self.grad = np.asarray(grad, dtype=np.float64)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return pow_scalar(self, exponent)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _make(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = grad.copy()
    else:
        tensor.grad += grad


# -- arithmetic ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(out_data, (a, b), backward)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data / b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def backward(g):
        if a.data.ndim == 1 and b.data.ndim == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, np.outer(a.data, g))
            return
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        _accumulate(a, _unbroadcast(ga, a.data.shape))
        _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _make(out_data, (a, b), backward)


def pow_scalar(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)
    out_data = a.data ** exponent

    def backward(g):
        _accumulate(a, g * exponent * a.data ** (exponent - 1.0))

    return _make(out_data, (a,), backward)


# -- nonlinearities -----------------------------------------------------

def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def backward(g):
        _accumulate(a, g * out_data)

    return _make(out_data, (a,), backward)


def log(a):
    a = as_tensor(a)
    out_data = np.log(a.data)

    def backward(g):
        _accumulate(a, g / a.data)

    return _make(out_data, (a,), backward)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def backward(g):
        _accumulate(a, g * (1.0 - out_data * out_data))

    return _make(out_data, (a,), backward)


def sigmoid(a):
    a = as_tensor(a)
    out_data = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        _accumulate(a, g * out_data * (1.0 - out_data))

    return _make(out_data, (a,), backward)


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def backward(g):
        _accumulate(a, g * (a.data > 0.0))

    return _make(out_data, (a,), backward)


def clamp_min(a, minimum):
    """Elementwise max(a, minimum); gradient is zero where clamped."""
    a = as_tensor(a)
    minimum = float(minimum)
    out_data = np.maximum(a.data, minimum)

    def backward(g):
        _accumulate(a, g * (a.data > minimum))

    return _make(out_data, (a,), backward)


def clamp(a, lo, hi):
    """Elementwise clip to [lo, hi]; gradient is zero where clipped."""
    a = as_tensor(a)
    lo, hi = float(lo), float(hi)
    out_data = np.clip(a.data, lo, hi)

    def backward(g):
        _accumulate(a, g * ((a.data > lo) & (a.data < hi)))

    return _make(out_data, (a,), backward)


def minimum(a, b):
    """Elementwise min; the smaller branch receives the gradient (ties to a)."""
    a, b = as_tensor(a), as_tensor(b)
    take_a = a.data <= b.data
    out_data = np.where(take_a, a.data, b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g * take_a, a.data.shape))
        _accumulate(b, _unbroadcast(g * ~take_a, b.data.shape))

    return _make(out_data, (a, b), backward)


# -- reductions and shaping ----------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            grad = np.broadcast_to(g, a.data.shape)
        elif keepdims:
            grad = np.broadcast_to(g, a.data.shape)
        else:
            grad = np.broadcast_to(np.expand_dims(g, axis), a.data.shape)
        _accumulate(a, np.ascontiguousarray(grad))

    return _make(out_data, (a,), backward)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        count = a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a, shape):
    a = as_tensor(a)
    out_data = a.data.reshape(shape)

    def backward(g):
        _accumulate(a, g.reshape(a.data.shape))

    return _make(out_data, (a,), backward)


def swapaxes(a, ax1, ax2):
    a = as_tensor(a)
    out_data = np.swapaxes(a.data, ax1, ax2)

    def backward(g):
        _accumulate(a, np.swapaxes(g, ax1, ax2))

    return _make(out_data, (a,), backward)


def concatenate(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]

    def backward(g):
        offset = 0
        for t, size in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis if axis >= 0 else g.ndim + axis] = slice(offset, offset + size)
            _accumulate(t, np.ascontiguousarray(g[tuple(index)]))
            offset += size

    return _make(out_data, tuple(tensors), backward)


def take(a, indices):
    """Row gather along axis 0: out[k] = a[indices[k]]."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    out_data = a.data[indices]

    def backward(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, indices, g)
        _accumulate(a, grad)

    return _make(out_data, (a,), backward)


def gather(a, indices, axis=-1):
    """Pick one entry per row along ``axis`` (np.take_along_axis semantics)."""
    a = as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)
    out_data = np.take_along_axis(a.data, indices, axis=axis)

    def backward(g):
        grad = np.zeros_like(a.data)
        np.put_along_axis(grad, indices, g, axis=axis)
        _accumulate(a, grad)

    return _make(out_data, (a,), backward)


_MASKED_NEG = -1e30


def masked_log_softmax(logits, mask, axis=-1):
    """Log-softmax over the entries where ``mask`` is true.

    Masked entries get log-probability -1e30 (probability exactly 0 after
    exp) and never receive or propagate gradient.  Raises if a row has no
    feasible entry.
    """
    logits = as_tensor(logits)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any(axis=axis).all():
        raise ValueError("masked_log_softmax: some row has no feasible entry")
    neg = np.where(mask, logits.data, -np.inf)
    peak = neg.max(axis=axis, keepdims=True)
    shifted = np.where(mask, logits.data - peak, -np.inf)
    sumexp = np.exp(shifted).sum(axis=axis, keepdims=True)
    log_z = peak + np.log(sumexp)
    out_data = np.where(mask, logits.data - log_z, _MASKED_NEG)
    probs = np.where(mask, np.exp(out_data), 0.0)

    def backward(g):
        g_live = np.where(mask, g, 0.0)
        g_total = g_live.sum(axis=axis, keepdims=True)
        _accumulate(logits, g_live - probs * g_total)

    return _make(out_data, (logits,), backward)


# -- parameter utilities --------------------------------------------------

def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Adam:
    """Adam over a dict of named parameter tensors."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for key, p in self.params.items():
            if p.grad is None:
                continue
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * (p.grad * p.grad)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)

    def state_arrays(self):
        """Flat dict of state arrays for checkpointing."""
        out = {"step_count": np.array([float(self.step_count)])}
        for key in self.params:
            out[f"m.{key}"] = self.m[key]
            out[f"v.{key}"] = self.v[key]
        return out

    def load_state_arrays(self, state):
        self.step_count = int(state["step_count"][0])
        for key in self.params:
            self.m[key] = np.array(state[f"m.{key}"], dtype=np.float64)
            self.v[key] = np.array(state[f"v.{key}"], dtype=np.float64)
