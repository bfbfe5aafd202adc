"""Minimal reverse-mode differentiation over dense float64 arrays.

Operations executed while a :class:`Tape` is active are recorded in
execution order; :meth:`Tape.backward` replays them in reverse, visiting each
node exactly once. Outside a tape every primitive is a plain numpy
computation.

Shapes are explicit. Elementwise binary primitives require operands of equal
rank and only broadcast along axes of length one; the sole rank-promoting
broadcast is the bias in :func:`linear`.
"""

import base64
import json
import math

import numpy as np

from . import geom3

_ACTIVE = []


class ShapeError(ValueError):
    pass


class MissingParameterError(KeyError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (self.shape, self.requires_grad)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Records primitives for one forward pass; use as a context manager."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def backward(self, loss):
        if loss.data.size != 1:
            raise ShapeError("backward needs a scalar loss, got shape %s" % (loss.shape,))
        loss.grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            if node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=np.float64, copy=True)
                else:
                    parent.grad = parent.grad + g
        # intermediates release their gradients; leaves keep theirs
        for node in self.nodes:
            node.grad = None
        self.nodes = []


def _make(data, parents, backward):
    out = Tensor(data)
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
        _ACTIVE[-1].nodes.append(out)
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return np.sum(g, axis=axes, keepdims=True)


def _check_binary(name, a, b):
    if a.ndim != b.ndim:
        raise ShapeError("%s: rank mismatch %s vs %s" % (name, a.shape, b.shape))
    for x, y in zip(a.shape, b.shape):
        if x != y and x != 1 and y != 1:
            raise ShapeError("%s: shape mismatch %s vs %s" % (name, a.shape, b.shape))


# -- elementwise -------------------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("add", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("sub", a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_binary("mul", a, b)
    ad, bd = a.data, b.data
    return _make(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def scale(a, c):
    """Multiply by a python constant."""
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,))


def div_scalar(a, s):
    """Divide ``a`` by ``s``, where ``s`` has the rank of ``a`` and size-1 trailing axes."""
    a, s = as_tensor(a), as_tensor(s)
    _check_binary("div_scalar", a, s)
    ad, sd = a.data, s.data
    out = ad / sd

    def backward(g):
        return _unbroadcast(g / sd, ad.shape), _unbroadcast(-g * out / sd, sd.shape)

    return _make(out, (a, s), backward)


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / out,))


def _logistic(x):
    # exp of a non-positive argument only, so large |x| cannot overflow
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def silu(a):
    a = as_tensor(a)
    x = a.data
    sig = _logistic(x)
    return _make(x * sig, (a,), lambda g: (g * sig * (1.0 + x * (1.0 - sig)),))


def sigmoid(a):
    a = as_tensor(a)
    out = _logistic(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def masked_fill(a, mask, value):
    """Replace entries where the constant boolean ``mask`` is set; no gradient flows there."""
    a = as_tensor(a)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    return _make(np.where(mask, value, a.data), (a,), lambda g: (np.where(mask, 0.0, g),))


# -- reductions and shape ----------------------------------------------------


def norm2(a):
    """Squared euclidean norm over the last axis (kept)."""
    a = as_tensor(a)
    x = a.data
    return _make(np.sum(x * x, axis=-1, keepdims=True), (a,), lambda g: (2.0 * g * x,))


def fro_norm(a):
    """Frobenius norm over the last two axes (kept as size-1 axes)."""
    a = as_tensor(a)
    x = a.data
    out = np.sqrt(np.sum(x * x, axis=(-2, -1), keepdims=True))

    def backward(g):
        safe = np.where(out > 0.0, out, 1.0)
        return (np.where(out > 0.0, g * x / safe, 0.0),)

    return _make(out, (a,), backward)


def sum(a, axis, keepdims=False):  # noqa: A001 - mirrors numpy naming
    a = as_tensor(a)
    shape = a.shape
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _make(out, (a,), backward)


def mean_all(a):
    a = as_tensor(a)
    n = a.data.size
    shape = a.shape
    return _make(np.mean(a.data), (a,), lambda g: (np.full(shape, g / n),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    ranks = {t.ndim for t in tensors}
    if len(ranks) != 1:
        raise ShapeError("concat: rank mismatch %s" % [t.shape for t in tensors])
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise ShapeError("concat: %s" % exc) from None
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def take(a, index, axis):
    """Gather along ``axis`` with an integer index array (repeats allowed)."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    shape = a.shape
    ax = axis % a.ndim

    def backward(g):
        out = np.zeros(shape)
        moved = np.moveaxis(out, ax, 0)
        np.add.at(moved, index, np.moveaxis(g, ax, 0))
        return (out,)

    return _make(np.take(a.data, index, axis=ax), (a,), backward)


def segment_sum(a, index, count, axis):
    """Sum slices of ``a`` along ``axis`` into ``count`` buckets given by ``index``."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    ax = axis % a.ndim
    if a.shape[ax] != index.shape[0]:
        raise ShapeError("segment_sum: %d slices but %d indices" % (a.shape[ax], index.shape[0]))
    # one-hot reduction keeps the summation order fixed for a given shape
    onehot = np.zeros((count, index.shape[0]))
    onehot[index, np.arange(index.shape[0])] = 1.0
    moved = np.moveaxis(a.data, ax, -1)
    out = np.moveaxis(moved @ onehot.T, -1, ax)
    return _make(out, (a,), lambda g: (np.take(g, index, axis=ax),))


# -- linear algebra ----------------------------------------------------------


def matmul(a, b):
    """Batched matrix product over equal leading axes: ``(..., n, k) @ (..., k, m)``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != b.ndim or a.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul: incompatible shapes %s @ %s" % (a.shape, b.shape))
    ad, bd = a.data, b.data
    return _make(
        ad @ bd,
        (a, b),
        lambda g: (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g),
    )


def linear(x, w, b=None):
    """``x @ w + b`` for ``x`` of shape ``(..., k)``, ``w`` of ``(k, n)``, ``b`` of ``(n,)``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeError("linear: input %s does not match weight %s" % (x.shape, w.shape))
    xd, wd = x.data, w.data
    out = xd @ wd
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[1],):
            raise ShapeError("linear: bias %s does not match weight %s" % (b.shape, w.shape))
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        flat_x = xd.reshape(-1, xd.shape[-1])
        flat_g = g.reshape(-1, g.shape[-1])
        grads = (g @ wd.T, flat_x.T @ flat_g)
        if b is not None:
            grads = grads + (flat_g.sum(axis=0),)
        return grads

    return _make(out, parents, backward)


def cross3(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.shape[-1] != 3:
        raise ShapeError("cross3: shapes %s, %s" % (a.shape, b.shape))
    ad, bd = a.data, b.data
    return _make(
        geom3.cross(ad, bd),
        (a, b),
        lambda g: (geom3.cross(bd, g), geom3.cross(g, ad)),
    )


def rotate(omega, v):
    """Rotate ``v`` about axis ``omega`` by angle ``|omega|`` (axis-angle / Rodrigues)."""
    omega, v = as_tensor(omega), as_tensor(v)
    if omega.shape != v.shape or v.shape[-1] != 3:
        raise ShapeError("rotate: shapes %s, %s" % (omega.shape, v.shape))
    w, x = omega.data, v.data
    theta = np.sqrt(geom3.dot(w, w))
    ca, cb = geom3.rotation_coefficients(theta)
    c1 = geom3.cross(w, x)
    c2 = geom3.cross(w, c1)
    out = x + ca[..., None] * c1 + cb[..., None] * c2

    def backward(g):
        ca_, cb_ = ca[..., None], cb[..., None]
        # out = x + A w×x + B (w (w·x) - x |w|^2)
        gw = geom3.dot(g, w)[..., None]
        gx = geom3.dot(g, x)[..., None]
        wx = geom3.dot(w, x)[..., None]
        grad_v = g + ca_ * geom3.cross(g, w) + cb_ * (w * gw - g * (theta * theta)[..., None])
        da, db = geom3.rotation_coefficient_slopes(theta)
        radial = da * geom3.dot(g, c1) + db * geom3.dot(g, c2)
        grad_w = (
            ca_ * geom3.cross(x, g)
            + cb_ * (g * wx + x * gw - 2.0 * gx * w)
            + radial[..., None] * w
        )
        return grad_w, grad_v

    return _make(out, (omega, v), backward)


# -- parameters ---------------------------------------------------------------


class ParamStore:
    """Named trainable tensors plus Adam state."""

    def __init__(self):
        self.tensors = {}
        self.moments = {}
        self.step_count = 0

    def add(self, name, value):
        if name in self.tensors:
            raise KeyError("parameter %r already registered" % name)
        self.tensors[name] = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        return self.tensors[name]

    def __getitem__(self, name):
        try:
            return self.tensors[name]
        except KeyError:
            raise MissingParameterError(name) from None

    def __contains__(self, name):
        return name in self.tensors

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def names(self):
        return list(self.tensors)

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None

    def grads(self):
        return {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in self.tensors.items()}

    def copy(self):
        other = ParamStore()
        for k, t in self.tensors.items():
            other.add(k, t.data.copy())
        return other

    def to_json(self):
        out = {}
        for k, t in self.tensors.items():
            raw = np.ascontiguousarray(t.data, dtype="<f8").tobytes()
            out[k] = {"shape": list(t.shape), "data": base64.b64encode(raw).decode("ascii")}
        return out

    @classmethod
    def from_json(cls, obj):
        store = cls()
        for k, entry in obj.items():
            raw = base64.b64decode(entry["data"])
            shape = tuple(entry["shape"])
            arr = np.frombuffer(raw, dtype="<f8")
            if arr.size != int(np.prod(shape, dtype=np.int64)):
                raise ValueError("parameter %r: payload has %d values for shape %s" % (k, arr.size, shape))
            store.add(k, arr.reshape(shape).astype(np.float64))
        return store

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def init_mlp(params, prefix, sizes, rng, final_scale=1.0):
    """Register a fan-in uniform initialised MLP with layer widths ``sizes``."""
    for k, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        b = rng.uniform(-bound, bound, size=(fan_out,))
        if k == len(sizes) - 2:
            w, b = w * final_scale, b * final_scale
        params.add("%s.%d.weight" % (prefix, k), w)
        params.add("%s.%d.bias" % (prefix, k), b)


def mlp_forward(params, prefix, x, head=None):
    """Linear layers separated by SiLU; ``head`` in {None, 'silu', 'sigmoid', 'gate2'}.

    ``gate2`` returns ``2 * sigmoid(.)`` so that the value 1 sits at zero input.
    """
    if "%s.0.weight" % prefix not in params:
        raise MissingParameterError("%s.0.weight" % prefix)
    k = 0
    while "%s.%d.weight" % (prefix, k) in params:
        if k > 0:
            x = silu(x)
        x = linear(x, params["%s.%d.weight" % (prefix, k)], params["%s.%d.bias" % (prefix, k)])
        k += 1
    if head == "silu":
        x = silu(x)
    elif head == "sigmoid":
        x = sigmoid(x)
    elif head == "gate2":
        x = scale(sigmoid(x), 2.0)
    elif head is not None:
        raise ValueError("unknown head %r" % head)
    return x


def adam_step(params, lr=5e-4, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=1e-10):
    """One Adam update with bias correction and decoupled weight decay; clears gradients."""
    params.step_count += 1
    t = params.step_count
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in params.tensors.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        m, v = params.moments.get(name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        params.moments[name] = (m, v)
        update = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = p.data - update - lr * weight_decay * p.data
        p.grad = None


def value_and_grad(fn, params):
    """Evaluate scalar ``fn(params)`` on a fresh tape and return ``(value, grads)``."""
    params.zero_grad()
    with Tape() as tape:
        loss = fn(params)
    tape.backward(loss)
    grads = params.grads()
    params.zero_grad()
    return float(loss.data), grads


def finite_difference(fn, params, name, eps=1e-5, entries=None):
    """Central differences of scalar ``fn(params)`` w.r.t. ``params[name]``.

    ``entries`` restricts the flat indices probed; the rest stay zero.
    """
    p = params[name]
    flat = p.data.reshape(-1)
    idx = range(flat.size) if entries is None else entries
    out = np.zeros(flat.size)
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(fn(params).data)
        flat[i] = orig - eps
        lo = float(fn(params).data)
        flat[i] = orig
        out[i] = (hi - lo) / (2.0 * eps)
    return out.reshape(p.shape)
