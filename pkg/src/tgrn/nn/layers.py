"""Graph convolutions, recurrent cells and the parameter-holding modules around them."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import AsymmetricAdjacency, ShapeMismatch
from ..seeding import rng_for
from . import tensor as F
from .graph_ops import SparseAdj
from .tensor import Tensor, as_tensor


def glorot(shape, rng: np.random.Generator) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _width(x, n, what):
    if x.shape[0] != n:
        raise ShapeMismatch(f"{what}: {x.shape[0]} rows for a graph of {n} nodes")


# ------------------------------------------------------------- functional


def gcn_conv(X, A: SparseAdj, W, b=None) -> Tensor:
    """``D^-1/2 (A + I) D^-1/2 X W (+ b)`` on the symmetrized adjacency."""
    X, W = as_tensor(X), as_tensor(W)
    _width(X, A.n, "gcn_conv")
    if X.shape[1] <= W.shape[1]:
        out = F.spmm(A.gcn_operator, X) @ W
    else:
        out = F.spmm(A.gcn_operator, X @ W)
    return out if b is None else out + b


def chebyshev_basis(X, A: SparseAdj, K: int) -> list[Tensor]:
    """``[T_0(L) X, ..., T_{K-1}(L) X]`` for the scaled Laplacian of ``A``."""
    if not A.symmetric:
        raise AsymmetricAdjacency("cheb_conv needs a symmetric adjacency")
    if K < 1:
        raise ValueError("K must be >= 1")
    X = as_tensor(X)
    _width(X, A.n, "cheb_conv")
    L = A.cheb_operator
    out = [X]
    if K > 1:
        out.append(F.spmm(L, X))
    for _ in range(2, K):
        out.append(2.0 * F.spmm(L, out[-1]) - out[-2])
    return out


def cheb_conv(X, A: SparseAdj, Ws, b=None, basis=None) -> Tensor:
    """``sum_k T_k(L) X W_k (+ b)``; ``basis`` may be passed to reuse T_k(L) X."""
    Ws = list(Ws)
    basis = chebyshev_basis(X, A, len(Ws)) if basis is None else basis
    out = None
    for Tx, W in zip(basis, Ws):
        term = Tx @ W
        out = term if out is None else out + term
    return out if b is None else out + b


def gat_conv(X, A: SparseAdj, W, att_src, att_dst, heads: int, b=None, return_attention=False):
    """Multi-head graph attention over in-neighbourhoods (self-loop included).

    ``W`` is ``d_in x heads*d_head``; ``att_src``/``att_dst`` are ``heads x d_head``.
    Head outputs are concatenated.
    """
    X, W = as_tensor(X), as_tensor(W)
    att_src, att_dst = as_tensor(att_src), as_tensor(att_dst)
    n = A.n
    _width(X, n, "gat_conv")
    if heads < 1 or W.shape[1] % heads:
        raise ShapeMismatch(f"output width {W.shape[1]} not divisible by heads={heads}")
    dh = W.shape[1] // heads
    if att_src.shape != (heads, dh) or att_dst.shape != (heads, dh):
        raise ShapeMismatch("attention vectors must be heads x d_head")
    src, dst = A.in_edges_with_self_loops
    Z = F.reshape(X @ W, (n, heads, dh))
    s_src = (Z * att_src).sum(axis=2)
    s_dst = (Z * att_dst).sum(axis=2)
    logits = F.leaky_relu(s_dst[dst] + s_src[src], 0.2)
    alpha = F.segment_softmax(logits, dst, n)
    msg = Z[src] * F.reshape(alpha, (len(src), heads, 1))
    out = F.reshape(F.segment_sum(msg, dst, n), (n, heads * dh))
    if b is not None:
        out = out + b
    if return_attention:
        return out, (src, dst, alpha.data)
    return out


def gru_cell(x, h, p) -> Tensor:
    """One GRU update; ``p`` maps W_x{z,r,h}, W_h{z,r,h}, b_{z,r,h} to tensors."""
    x, h = as_tensor(x), as_tensor(h)
    if x.shape[0] != h.shape[0]:
        raise ShapeMismatch(f"gru_cell: batch {x.shape[0]} vs state {h.shape[0]}")
    z = F.sigmoid(x @ p["W_xz"] + h @ p["W_hz"] + p["b_z"])
    r = F.sigmoid(x @ p["W_xr"] + h @ p["W_hr"] + p["b_r"])
    hh = F.tanh(x @ p["W_xh"] + (r * h) @ p["W_hh"] + p["b_h"])
    return z * h + (1.0 - z) * hh


def graph_gru_cell(X, H, A: SparseAdj, K: int, p, x_basis=None) -> Tensor:
    """GRU whose six linear maps are Chebyshev convolutions of order ``K``.

    ``p`` holds lists of K matrices under W_x{z,r,h}/W_h{z,r,h} and biases b_{z,r,h}.
    """
    X, H = as_tensor(X), as_tensor(H)
    xb = chebyshev_basis(X, A, K) if x_basis is None else x_basis
    hb = chebyshev_basis(H, A, K)
    z = F.sigmoid(cheb_conv(X, A, p["W_xz"], basis=xb) + cheb_conv(H, A, p["W_hz"], basis=hb) + p["b_z"])
    r = F.sigmoid(cheb_conv(X, A, p["W_xr"], basis=xb) + cheb_conv(H, A, p["W_hr"], basis=hb) + p["b_r"])
    hh = F.tanh(cheb_conv(X, A, p["W_xh"], basis=xb) + cheb_conv(r * H, A, p["W_hh"]) + p["b_h"])
    return z * H + (1.0 - z) * hh


# ---------------------------------------------------------------- modules


class Module:
    """Parameter container with deterministic per-parameter initialization."""

    def __init__(self, seed: int = 0, name: str = ""):
        self._seed = int(seed)
        self._name = name
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._children: "OrderedDict[str, Module]" = OrderedDict()

    def _full(self, key):
        return f"{self._name}.{key}" if self._name else key

    def param(self, key, shape, init="glorot") -> Tensor:
        rng = rng_for(self._seed, self._full(key))
        if init == "glorot":
            data = glorot(shape, rng)
        elif init == "zeros":
            data = np.zeros(shape)
        else:
            data = np.asarray(init(shape, rng), dtype=np.float64)
        t = Tensor(data, requires_grad=True, name=self._full(key))
        self._params[key] = t
        return t

    def child(self, key, module: "Module") -> "Module":
        self._children[key] = module
        return module

    def named_parameters(self, prefix=""):
        for k, v in self._params.items():
            yield prefix + k, v
        for k, m in self._children.items():
            yield from m.named_parameters(f"{prefix}{k}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.named_parameters())

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        extra = state.keys() - own.keys()
        if missing or extra:
            raise ShapeMismatch(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in own.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != v.shape:
                raise ShapeMismatch(f"{k}: shape {arr.shape} vs {v.shape}")
            v.data = arr.copy()

    def n_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def _sub(self, key, cls, *args, **kw):
        return self.child(key, cls(*args, seed=self._seed, name=self._full(key), **kw))


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True, seed=0, name=""):
        super().__init__(seed, name)
        self.W = self.param("W", (d_in, d_out))
        self.b = self.param("b", (d_out,), "zeros") if bias else None

    def __call__(self, x):
        out = as_tensor(x) @ self.W
        return out if self.b is None else out + self.b


class GCNConv(Module):
    def __init__(self, d_in, d_out, seed=0, name=""):
        super().__init__(seed, name)
        self.W = self.param("W", (d_in, d_out))
        self.b = self.param("b", (d_out,), "zeros")

    def __call__(self, X, A: SparseAdj, W=None):
        return gcn_conv(X, A.symmetrized, self.W if W is None else W, self.b)


class ChebConv(Module):
    def __init__(self, d_in, d_out, K=3, seed=0, name=""):
        super().__init__(seed, name)
        self.K = K
        self.Ws = [self.param(f"W{k}", (d_in, d_out)) for k in range(K)]
        self.b = self.param("b", (d_out,), "zeros")

    def __call__(self, X, A: SparseAdj, basis=None):
        return cheb_conv(X, A.symmetrized, self.Ws, self.b, basis=basis)


class GATConv(Module):
    def __init__(self, d_in, d_out, heads=4, seed=0, name=""):
        super().__init__(seed, name)
        if d_out % heads:
            raise ShapeMismatch(f"GAT width {d_out} not divisible by heads={heads}")
        self.heads = heads
        dh = d_out // heads
        self.W = self.param("W", (d_in, d_out))
        self.att_src = self.param("att_src", (heads, dh))
        self.att_dst = self.param("att_dst", (heads, dh))
        self.b = self.param("b", (d_out,), "zeros")

    def __call__(self, X, A: SparseAdj):
        return gat_conv(X, A, self.W, self.att_src, self.att_dst, self.heads, self.b)


_GATES = ("z", "r", "h")


class GRUCell(Module):
    def __init__(self, d_in, d_h, seed=0, name=""):
        super().__init__(seed, name)
        self.p = {}
        for g in _GATES:
            self.p[f"W_x{g}"] = self.param(f"W_x{g}", (d_in, d_h))
            self.p[f"W_h{g}"] = self.param(f"W_h{g}", (d_h, d_h))
            self.p[f"b_{g}"] = self.param(f"b_{g}", (d_h,), "zeros")

    def __call__(self, x, h):
        return gru_cell(x, h, self.p)


class GraphGRUCell(Module):
    def __init__(self, d_in, d_h, K=3, seed=0, name=""):
        super().__init__(seed, name)
        self.K = K
        self.p = {}
        for g in _GATES:
            self.p[f"W_x{g}"] = [self.param(f"W_x{g}{k}", (d_in, d_h)) for k in range(K)]
            self.p[f"W_h{g}"] = [self.param(f"W_h{g}{k}", (d_h, d_h)) for k in range(K)]
            self.p[f"b_{g}"] = self.param(f"b_{g}", (d_h,), "zeros")

    def __call__(self, X, H, A: SparseAdj, x_basis=None):
        return graph_gru_cell(X, H, A.symmetrized, self.K, self.p, x_basis)
