"""Dense 2-D float64 tensors with reverse-mode autodiff, Adam, and seeded init.

The op set is deliberately small: matrix products, pointwise activations,
row-wise softmax/normalization, column concat, row gather, and reductions.
Every op records its backward rule on the active :class:`Tape`; append order
is the topological order, so one reverse sweep visits each node exactly once.
"""

from __future__ import annotations

import hashlib
import weakref

import numpy as np

__all__ = [
    "Tensor", "Tape", "Rng", "AdamState", "AutodiffError", "ShapeError",
    "NonFiniteError", "TapeError", "matmul", "add", "sub", "hadamard",
    "scale", "relu", "sigmoid", "tanh", "log", "dropout", "rows_softmax",
    "rows_log_softmax", "l2_normalize_rows", "concat_cols", "gather_rows",
    "sum_all", "mean_all", "adam_step", "glorot_uniform", "uniform_pm_sqrt_k",
    "zeros", "as_tensor", "set_debug_checks", "set_memory_tracking",
    "derive_seed",
    "reset_peak_bytes", "peak_bytes", "live_bytes",
]


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class NonFiniteError(AutodiffError):
    pass


class TapeError(AutodiffError):
    pass


_debug_checks = True


def set_debug_checks(enabled: bool) -> None:
    """Toggle the NaN/Inf check that runs after every op (default on)."""
    global _debug_checks
    _debug_checks = bool(enabled)


def _check_finite(arr: np.ndarray, op: str) -> None:
    # min/max reductions instead of isfinite().all(): no bool temporary on
    # the hot path; NaN poisons min, +/-inf escapes one of the two bounds
    if not _debug_checks or arr.size == 0:
        return
    lo = arr.min()
    hi = arr.max()
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise NonFiniteError(f"non-finite values produced by {op}")


# ---------------------------------------------------------------------------
# live-buffer accounting (used by the mini-batch memory comparison)

_live_bytes = 0
_peak_bytes = 0
_tracked_ids: set[int] = set()
_memory_tracking = False


def set_memory_tracking(enabled: bool) -> None:
    """Enable live-buffer accounting (off by default; it costs a finalizer
    per allocation). Counters only reflect tensors created while enabled."""
    global _memory_tracking
    _memory_tracking = bool(enabled)


def _untrack(key: int, nbytes: int) -> None:
    global _live_bytes
    _live_bytes -= nbytes
    _tracked_ids.discard(key)


def _track(arr: np.ndarray) -> None:
    # Only arrays that own their buffer count; views share the base's bytes,
    # and re-wrapping an already tracked array must not count it twice.
    global _live_bytes, _peak_bytes
    if not _memory_tracking:
        return
    if arr.base is not None or id(arr) in _tracked_ids:
        return
    _tracked_ids.add(id(arr))
    _live_bytes += arr.nbytes
    if _live_bytes > _peak_bytes:
        _peak_bytes = _live_bytes
    weakref.finalize(arr, _untrack, id(arr), arr.nbytes)


def reset_peak_bytes() -> None:
    global _peak_bytes
    _peak_bytes = _live_bytes


def peak_bytes() -> int:
    return _peak_bytes


def live_bytes() -> int:
    return _live_bytes


# ---------------------------------------------------------------------------
# RNG

RNG_ALGORITHM = "philox4x64-10/numpy"
_U64 = (1 << 64) - 1


def derive_seed(base_seed: int, *parts) -> int:
    """Pure seed derivation: sha256 over a canonical string, low 64 bits."""
    text = "/".join([str(int(base_seed) & _U64)] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class Rng:
    """Seeded counter-based generator with cheap named substreams.

    Identical seeds give bit-identical streams on every platform (Philox is
    counter-based and numpy guarantees stream stability). ``split`` derives an
    independent child stream from a label, so concurrent consumers never
    contend for one cursor.
    """

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int):
        self.seed = int(seed) & _U64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def split(self, label) -> "Rng":
        return Rng(derive_seed(self.seed, label))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=shape)

    def normal(self, shape, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, size=shape)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(size=shape)

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n: int, k: int, replace: bool = False) -> np.ndarray:
        return self._gen.choice(n, size=k, replace=replace)

    def binomial(self, n: int, p: float) -> int:
        return int(self._gen.binomial(n, p))


# ---------------------------------------------------------------------------
# tensors and the tape

class Tensor:
    """2-D float64 matrix, optionally recorded on the active gradient tape."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "_nid", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        _check_finite(arr, "tensor construction")
        _track(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._tape: "Tape | None" = None
        self._nid: int | None = None

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def detach(self) -> "Tensor":
        """Same values, no tape attachment, no gradient requirement."""
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def __repr__(self) -> str:
        flags = ", requires_grad" if self.requires_grad else ""
        return f"Tensor({self.rows}x{self.cols}{flags})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_active_tape: "Tape | None" = None


class Tape:
    """Ordered op records; gradient buffers are keyed by node handle.

    Use as a context manager around a forward pass. ``backward`` may be called
    once; it seeds the scalar loss with 1 and sweeps the records in reverse.
    """

    def __init__(self):
        self._backs: list = []       # per-node backward fn; None for leaves
        self._grads: list = []       # per-node cotangent buffers
        self._consumed = False

    def __enter__(self) -> "Tape":
        global _active_tape
        if _active_tape is not None:
            raise TapeError("a tape is already active")
        _active_tape = self
        return self

    def __exit__(self, *exc) -> None:
        global _active_tape
        _active_tape = None

    def __len__(self) -> int:
        return len(self._backs)

    def _push(self, back) -> int:
        self._backs.append(back)
        self._grads.append(None)
        return len(self._backs) - 1

    def _nid_for(self, t: Tensor) -> int:
        if t._tape is self and t._nid is not None:
            return t._nid
        nid = self._push(None)  # leaf
        t._tape = self
        t._nid = nid
        return nid

    def _accumulate(self, nid: int, g: np.ndarray) -> None:
        if self._grads[nid] is None:
            self._grads[nid] = g
        else:
            self._grads[nid] = self._grads[nid] + g

    def backward(self, loss: Tensor, params=()) -> list[np.ndarray]:
        """Propagate from a scalar loss; returns one gradient per param.

        Parameters that never reached the loss get a zero gradient. Each
        param's ``.grad`` is set as a side effect.
        """
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward")
        if loss._tape is not self or loss._nid is None:
            raise TapeError("loss is not recorded on this tape")
        if loss.shape != (1, 1):
            raise TapeError(f"loss must be 1x1, got {loss.shape}")
        self._consumed = True

        self._grads[loss._nid] = np.ones((1, 1))
        for nid in range(len(self._backs) - 1, -1, -1):
            g = self._grads[nid]
            back = self._backs[nid]
            if g is None or back is None:
                continue
            back(g, self._accumulate)

        out = []
        for p in params:
            if p._tape is self and p._nid is not None and self._grads[p._nid] is not None:
                grad = self._grads[p._nid]
            else:
                grad = np.zeros_like(p.data)
            p.grad = grad
            out.append(grad)
        # a consumed tape can never replay; drop the closures now so the
        # forward activations they capture are freed even while leaf tensors
        # still point at this tape
        self._backs.clear()
        self._grads.clear()
        return out


def _tracked(t: Tensor) -> bool:
    if _active_tape is None:
        return False
    return t.requires_grad or (t._tape is _active_tape and t._nid is not None)


def _record(out: Tensor, inputs: tuple[Tensor, ...], make_back) -> Tensor:
    """Attach ``out`` to the active tape if any input participates.

    ``make_back(nids)`` receives the input node ids (None for untracked
    inputs) and returns the backward closure.
    """
    if _active_tape is None or not any(_tracked(t) for t in inputs):
        return out
    tape = _active_tape
    nids = tuple(tape._nid_for(t) if _tracked(t) else None for t in inputs)
    out._tape = tape
    out._nid = tape._push(make_back(nids))
    return out


# ---------------------------------------------------------------------------
# ops

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul inner dims differ: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    A, B = a.data, b.data

    def make_back(nids):
        na, nb = nids

        def back(g, acc):
            if na is not None:
                acc(na, g @ B.T)
            if nb is not None:
                acc(nb, A.T @ g)
        return back

    return _record(out, (a, b), make_back)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; ``b`` may be a 1xM row bias broadcast over rows."""
    bias = b.shape != a.shape
    if bias and not (b.rows == 1 and b.cols == a.cols):
        raise ShapeError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def make_back(nids):
        na, nb = nids

        def back(g, acc):
            if na is not None:
                acc(na, g)
            if nb is not None:
                acc(nb, g.sum(axis=0, keepdims=True) if bias else g)
        return back

    return _record(out, (a, b), make_back)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"sub shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data - b.data)

    def make_back(nids):
        na, nb = nids

        def back(g, acc):
            if na is not None:
                acc(na, g)
            if nb is not None:
                acc(nb, -g)
        return back

    return _record(out, (a, b), make_back)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; an Nx1 operand broadcasts across columns."""
    a_col = a.cols == 1 and b.cols > 1
    b_col = b.cols == 1 and a.cols > 1
    if a.shape != b.shape and not ((a_col or b_col) and a.rows == b.rows):
        raise ShapeError(f"hadamard shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)
    A, B = a.data, b.data

    def make_back(nids):
        na, nb = nids

        def back(g, acc):
            if na is not None:
                ga = g * B
                acc(na, ga.sum(axis=1, keepdims=True) if a_col else ga)
            if nb is not None:
                gb = g * A
                acc(nb, gb.sum(axis=1, keepdims=True) if b_col else gb)
        return back

    return _record(out, (a, b), make_back)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = Tensor(a.data * c)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g * c)
        return back

    return _record(out, (a,), make_back)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0.0

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g * mask)
        return back

    return _record(out, (a,), make_back)


_SIG_LO = np.nextafter(0.0, 1.0)
_SIG_HI = np.nextafter(1.0, 0.0)


def sigmoid(a: Tensor) -> Tensor:
    # Stable in both tails: exp is only taken of non-positive values. Output
    # is clamped to the open interval at f64 resolution so saturated inputs
    # never round to exactly 0 or 1.
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    s = np.clip(s, _SIG_LO, _SIG_HI)
    out = Tensor(s)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g * s * (1.0 - s))
        return back

    return _record(out, (a,), make_back)


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    out = Tensor(t)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g * (1.0 - t * t))
        return back

    return _record(out, (a,), make_back)


def log(a: Tensor) -> Tensor:
    if _debug_checks and (a.data <= 0.0).any():
        raise NonFiniteError("log of non-positive value")
    out = Tensor(np.log(a.data))
    _check_finite(out.data, "log")
    A = a.data

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g / A)
        return back

    return _record(out, (a,), make_back)


def dropout(a: Tensor, rate: float, rng: Rng, training: bool = True) -> Tensor:
    """Inverted-scaling elementwise dropout; identity when eval or rate 0."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if not training or rate == 0.0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    out = Tensor(a.data * keep)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g * keep)
        return back

    return _record(out, (a,), make_back)


def rows_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    out = Tensor(s)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            dot = (g * s).sum(axis=1, keepdims=True)
            acc(na, s * (g - dot))
        return back

    return _record(out, (a,), make_back)


def rows_log_softmax(a: Tensor) -> Tensor:
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = Tensor(shifted - lse)
    soft = np.exp(out.data)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, g - soft * g.sum(axis=1, keepdims=True))
        return back

    return _record(out, (a,), make_back)


def l2_normalize_rows(a: Tensor) -> Tensor:
    """Scale each row to unit L2 norm; zero rows stay zero."""
    norms = np.linalg.norm(a.data, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    y = a.data / safe
    out = Tensor(y)

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            # d/dx (x/|x|) = (g - y (g.y)) / |x|; zero rows keep zero grad
            dot = (g * y).sum(axis=1, keepdims=True)
            acc(na, (g - y * dot) / safe)
        return back

    return _record(out, (a,), make_back)


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols row counts differ: {a.rows} vs {b.rows}")
    out = Tensor(np.concatenate([a.data, b.data], axis=1))
    p = a.cols

    def make_back(nids):
        na, nb = nids

        def back(g, acc):
            if na is not None:
                acc(na, np.ascontiguousarray(g[:, :p]))
            if nb is not None:
                acc(nb, np.ascontiguousarray(g[:, p:]))
        return back

    return _record(out, (a, b), make_back)


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows by index; backward scatter-adds into the source rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather_rows takes a 1-D index array")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ShapeError("gather_rows index out of range")
    out = Tensor(a.data[idx])
    nrows = a.rows

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            full = np.zeros((nrows, g.shape[1]))
            np.add.at(full, idx, g)
            acc(na, full)
        return back

    return _record(out, (a,), make_back)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor([[a.data.sum()]])
    shape = a.shape

    def make_back(nids):
        (na,) = nids

        def back(g, acc):
            acc(na, np.full(shape, g[0, 0]))
        return back

    return _record(out, (a,), make_back)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


# ---------------------------------------------------------------------------
# optimizer and initialization

class AdamState:
    """Adam moments plus per-parameter decoupled weight-decay coefficients."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay=0.0):
        params = list(params)
        if np.isscalar(weight_decay):
            weight_decay = [float(weight_decay)] * len(params)
        if len(weight_decay) != len(params):
            raise ValueError("one weight_decay per parameter required")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = [float(w) for w in weight_decay]
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params, grads, state: AdamState):
    """Bias-corrected Adam update in place; decay is decoupled from moments."""
    params = list(params)
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeError("params/grads do not match optimizer state")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != param {p.data.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        wd = state.weight_decay[i]
        if wd:
            p.data -= state.lr * wd * p.data
    return params


def glorot_uniform(rows: int, cols: int, rng: Rng, requires_grad: bool = True) -> Tensor:
    if rows <= 0 or cols <= 0:
        raise ValueError("glorot_uniform needs positive dims")
    limit = np.sqrt(6.0 / (rows + cols))
    return Tensor(rng.uniform(-limit, limit, (rows, cols)), requires_grad=requires_grad)


def uniform_pm_sqrt_k(k: float, rows: int, cols: int, rng: Rng,
                      requires_grad: bool = True) -> Tensor:
    if k <= 0:
        raise ValueError(f"bound k must be positive, got {k}")
    if rows <= 0 or cols <= 0:
        raise ValueError("uniform_pm_sqrt_k needs positive dims")
    bound = np.sqrt(k)
    return Tensor(rng.uniform(-bound, bound, (rows, cols)), requires_grad=requires_grad)


def zeros(rows: int, cols: int, requires_grad: bool = True) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=requires_grad)
