"""Reverse-mode autodiff core.

A Tensor wraps a numpy array and, when ``requires_grad`` is set, records the
ops applied to it in a define-by-run graph (closures holding the saved forward
values). ``backward`` replays the graph once in reverse topological order and
then frees it, so every training iteration rebuilds the graph from scratch.

Precision is a process-wide mode: float64 for verification (gradient checks,
bit-reproducible runs), float32 for speed. Switching modes also toggles
non-finite anomaly checking, which is on in float64 mode by default.
"""

import numpy as np
from scipy.special import expit

from ..errors import GraphError, NonFiniteError, ShapeError

_DTYPES = {"f32": np.float32, "f64": np.float64}

_state = {"dtype": np.float32, "anomaly": False}


def set_default_dtype(name):
    """Set the engine dtype ('f32' or 'f64'); f64 also enables anomaly checks."""
    if name not in _DTYPES:
        raise ValueError(f"unknown dtype {name!r}, expected 'f32' or 'f64'")
    _state["dtype"] = _DTYPES[name]
    _state["anomaly"] = name == "f64"


def default_dtype():
    return _state["dtype"]


def dtype_name():
    return "f64" if _state["dtype"] is np.float64 else "f32"


def set_anomaly(enabled):
    """Force non-finite checking on/off independent of the dtype mode."""
    _state["anomaly"] = bool(enabled)


def anomaly_enabled():
    return _state["anomaly"]


class using_dtype:
    """Context manager that temporarily switches the engine dtype."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        self._saved = (_state["dtype"], _state["anomaly"])
        set_default_dtype(self.name)

    def __exit__(self, *exc):
        _state["dtype"], _state["anomaly"] = self._saved
        return False


def _check_finite(op, arr, where="forward"):
    if _state["anomaly"] and not np.all(np.isfinite(arr)):
        raise NonFiniteError(op, where)


_CONSUMED = object()


class Tensor:
    """N-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev", "_op", "_grad_own")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if arr.dtype != _state["dtype"]:
            arr = arr.astype(_state["dtype"])
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._prev = ()
        self._op = "leaf"
        self._grad_own = True

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def detach(self):
        t = Tensor.__new__(Tensor)
        t.data = self.data
        t.grad = None
        t.requires_grad = False
        t._backward = None
        t._prev = ()
        t._op = "detach"
        t._grad_own = True
        return t

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    # -- operator sugar; implementations live below ------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)

    def l1_norm(self):
        return l1_norm(self)


def _result(data, op, prevs, backward_fn):
    """Build an output tensor; record the node only if a parent needs grads."""
    _check_finite(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    out._grad_own = True
    parents = tuple(p for p in prevs if isinstance(p, Tensor) and p.requires_grad)
    if parents:
        out.requires_grad = True
        out._prev = parents
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._prev = ()
        out._backward = None
    return out


def _accum(t, g):
    """Accumulate a gradient, borrowing the first array without copying."""
    _check_finite(t._op, g, "backward")
    if t.grad is None:
        t.grad = g
        t._grad_own = False
    elif t._grad_own:
        t.grad += g
    else:
        t.grad = t.grad + g
        t._grad_own = True


def backward(loss):
    """Run reverse-mode accumulation from a scalar loss and free the graph."""
    if not isinstance(loss, Tensor):
        raise GraphError("backward expects a Tensor")
    if loss.data.size != 1:
        raise GraphError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    if loss._backward is _CONSUMED:
        raise GraphError("backward already ran on this graph; re-run the forward pass")
    if not loss.requires_grad:
        raise GraphError("loss does not depend on any tensor with requires_grad")

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        nid = id(node)
        if nid in visited:
            continue
        visited.add(nid)
        stack.append((node, True))
        for p in node._prev:
            if id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    loss._grad_own = True
    for node in reversed(topo):
        fn = node._backward
        if fn is not None and fn is not _CONSUMED:
            fn()
        node._prev = ()
        if node is loss:
            node._backward = _CONSUMED
        else:
            node._backward = None
            if node._op != "leaf":
                node.grad = None  # free interior activations/grads as we go


def _ensure(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum g down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _binary_shapes_ok(op, a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# -- arithmetic --------------------------------------------------------------


def add(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _ensure(a)
        out_data = a.data + a.data.dtype.type(b)

        def _bwd():
            if a.requires_grad:
                _accum(a, out.grad)

        out = _result(out_data, "add", (a,), _bwd)
        return out
    a, b = _ensure(a), _ensure(b)
    _binary_shapes_ok("add", a.data, b.data)
    out_data = a.data + b.data

    def _bwd():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(out.grad, b.data.shape))

    out = _result(out_data, "add", (a, b), _bwd)
    return out


def sub(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        return add(a, -b)
    if not isinstance(a, Tensor) and np.isscalar(a):
        return add(mul(b, -1.0), a)
    a, b = _ensure(a), _ensure(b)
    _binary_shapes_ok("sub", a.data, b.data)
    out_data = a.data - b.data

    def _bwd():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-out.grad, b.data.shape))

    out = _result(out_data, "sub", (a, b), _bwd)
    return out


def mul(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _ensure(a)
        c = a.data.dtype.type(b)
        out_data = a.data * c

        def _bwd():
            if a.requires_grad:
                _accum(a, out.grad * c)

        out = _result(out_data, "mul", (a,), _bwd)
        return out
    a, b = _ensure(a), _ensure(b)
    _binary_shapes_ok("mul", a.data, b.data)
    out_data = a.data * b.data

    def _bwd():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad * b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(out.grad * a.data, b.data.shape))

    out = _result(out_data, "mul", (a, b), _bwd)
    return out


def div(a, b):
    if not isinstance(b, Tensor) and np.isscalar(b):
        return mul(a, 1.0 / b)
    a, b = _ensure(a), _ensure(b)
    _binary_shapes_ok("div", a.data, b.data)
    out_data = a.data / b.data

    def _bwd():
        if a.requires_grad:
            _accum(a, _unbroadcast(out.grad / b.data, a.data.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-out.grad * out_data / b.data, b.data.shape))

    out = _result(out_data, "div", (a, b), _bwd)
    return out


def matmul(a, b):
    a, b = _ensure(a), _ensure(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)
    out_data = a.data @ b.data

    def _bwd():
        if a.requires_grad:
            _accum(a, out.grad @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ out.grad)

    out = _result(out_data, "matmul", (a, b), _bwd)
    return out


# -- elementwise nonlinearities ----------------------------------------------


def sigmoid(x):
    x = _ensure(x)
    s = expit(x.data)

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * s * (1.0 - s))

    out = _result(s, "sigmoid", (x,), _bwd)
    return out


def silu(x):
    x = _ensure(x)
    s = expit(x.data)
    out_data = x.data * s

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * (s + out_data * (1.0 - s)))

    out = _result(out_data, "silu", (x,), _bwd)
    return out


def relu(x):
    x = _ensure(x)
    out_data = np.maximum(x.data, 0.0)

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * (x.data > 0))

    out = _result(out_data, "relu", (x,), _bwd)
    return out


def softplus(x, beta=1.0):
    """(1/beta) * log(1 + exp(beta*x)), overflow-safe."""
    x = _ensure(x)
    bx = beta * x.data
    out_data = np.logaddexp(0.0, bx) / x.data.dtype.type(beta)

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * expit(bx))

    out = _result(out_data.astype(x.data.dtype, copy=False), "softplus", (x,), _bwd)
    return out


def tabs(x):
    x = _ensure(x)
    out_data = np.abs(x.data)

    def _bwd():
        if x.requires_grad:
            # subgradient 0 at exactly 0
            _accum(x, out.grad * np.sign(x.data))

    out = _result(out_data, "abs", (x,), _bwd)
    return out


def sign(x):
    """Sign of x with sign(0)=0; detached (zero gradient by contract)."""
    x = _ensure(x)
    return _result(np.sign(x.data), "sign", (), None)


def tlog(x):
    x = _ensure(x)
    out_data = np.log(x.data)

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad / x.data)

    out = _result(out_data, "log", (x,), _bwd)
    return out


def texp(x):
    x = _ensure(x)
    out_data = np.exp(x.data)

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * out_data)

    out = _result(out_data, "exp", (x,), _bwd)
    return out


def softmax(x, axis=-1):
    x = _ensure(x)
    z = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def _bwd():
        if x.requires_grad:
            g = out.grad
            dot = (g * s).sum(axis=axis, keepdims=True)
            _accum(x, (g - dot) * s)

    out = _result(s, "softmax", (x,), _bwd)
    return out


# -- reductions ---------------------------------------------------------------


def tsum(x, axis=None, keepdims=False):
    x = _ensure(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def _bwd():
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g, x.data.shape).copy())

    out = _result(np.asarray(out_data), "sum", (x,), _bwd)
    return out


def tmean(x, axis=None, keepdims=False):
    x = _ensure(x)
    out_data = x.data.mean(axis=axis, keepdims=keepdims)
    denom = x.data.size / max(np.asarray(out_data).size, 1)

    def _bwd():
        if x.requires_grad:
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(g / x.data.dtype.type(denom), x.data.shape).copy())

    out = _result(np.asarray(out_data), "mean", (x,), _bwd)
    return out


def l1_norm(x):
    x = _ensure(x)
    out_data = np.abs(x.data).sum()

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad * np.sign(x.data))

    out = _result(np.asarray(out_data), "l1_norm", (x,), _bwd)
    return out


# -- shape manipulation --------------------------------------------------------


def reshape(x, shape):
    x = _ensure(x)
    try:
        out_data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.data.shape, shape) from None
    orig = x.data.shape

    def _bwd():
        if x.requires_grad:
            _accum(x, out.grad.reshape(orig))

    out = _result(out_data, "reshape", (x,), _bwd)
    return out


def transpose(x, axes):
    x = _ensure(x)
    if len(axes) != x.data.ndim:
        raise ShapeError("transpose", x.data.shape, axes, detail="axes must cover all dims")
    out_data = np.ascontiguousarray(x.data.transpose(axes))
    inv = tuple(np.argsort(axes))

    def _bwd():
        if x.requires_grad:
            _accum(x, np.ascontiguousarray(out.grad.transpose(inv)))

    out = _result(out_data, "transpose", (x,), _bwd)
    return out


def concat(tensors, axis=0):
    tensors = [_ensure(t) for t in tensors]
    base = list(tensors[0].data.shape)
    for t in tensors[1:]:
        s = list(t.data.shape)
        s[axis] = base[axis]
        if s != base:
            raise ShapeError("concat", tensors[0].data.shape, t.data.shape)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def _bwd():
        for i, t in enumerate(tensors):
            if t.requires_grad:
                sl = [slice(None)] * out.grad.ndim
                sl[axis] = slice(offsets[i], offsets[i + 1])
                _accum(t, np.ascontiguousarray(out.grad[tuple(sl)]))

    out = _result(out_data, "concat", tuple(tensors), _bwd)
    return out


def flip(x, axis):
    x = _ensure(x)
    out_data = np.ascontiguousarray(np.flip(x.data, axis=axis))

    def _bwd():
        if x.requires_grad:
            _accum(x, np.ascontiguousarray(np.flip(out.grad, axis=axis)))

    out = _result(out_data, "flip", (x,), _bwd)
    return out


def index(x, key):
    """Basic slicing; backward scatters into a zero tensor."""
    x = _ensure(x)
    out_data = np.ascontiguousarray(x.data[key])

    def _bwd():
        if x.requires_grad:
            g = np.zeros_like(x.data)
            g[key] = out.grad
            _accum(x, g)

    out = _result(out_data, "slice", (x,), _bwd)
    return out
