"""Forecasting models: EdgeBank, tabular, static-graph and temporal-graph encoders.

Every learned model is an encoder producing node embeddings from the
current snapshot (plus a carried recurrent state for temporal families)
followed by a task head: a pair decoder for links or a linear readout for
node regressions. :class:`TemporalGraphForecaster` wraps them in an
estimator with the live-update calls ``fit`` / ``predict`` / ``partial_fit``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, NumericalError, ShapeMismatch, TooFewSnapshots, UninitializedState
from .graph import Snapshot, TemporalGraph
from .nn import tensor as F
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.graph_ops import SparseAdj
from .nn.layers import ChebConv, GATConv, GCNConv, GraphGRUCell, GRUCell, Linear, Module, chebyshev_basis, gcn_conv
from .nn.optim import Adam
from .nn.tensor import Tensor
from .seeding import derive_seed
from .tasks import TASKS, centrality_target, expression_target, sample_negatives

FAMILIES = ("edgebank", "linear", "mlp", "gcn", "gat", "chebnet", "evolvegcn", "gcrn-gru", "roland")
TEMPORAL_FAMILIES = ("evolvegcn", "gcrn-gru", "roland")
STATIC_FAMILIES = ("gcn", "gat", "chebnet")
TABULAR_FAMILIES = ("linear", "mlp")


@dataclass(frozen=True)
class ModelConfig:
    family: str
    hidden: int = 64
    layers: int = 2
    cheb_k: int = 3
    heads: int = 4
    dropout: float = 0.1
    decoder: str = "dot"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        if self.hidden < 1 or self.layers < 1:
            raise ConfigError("hidden and layers must be >= 1")
        if self.cheb_k < 1:
            raise ConfigError("cheb_k must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.decoder not in ("dot", "mlp"):
            raise ConfigError(f"unknown decoder {self.decoder!r}")
        if self.family == "gat" and self.hidden % self.heads:
            raise ConfigError(f"gat hidden={self.hidden} must be divisible by heads={self.heads}")

    def to_dict(self):
        return asdict(self)


def prepare_features(x: np.ndarray) -> np.ndarray:
    """Signed log1p of raw node features (counts span orders of magnitude)."""
    return np.sign(x) * np.log1p(np.abs(x))


# ---------------------------------------------------------------- encoders


class Encoder(Module):
    temporal = False

    def init_state(self, n_nodes: int):
        return None

    def __call__(self, X, A: SparseAdj, state, training=False, rng=None, cache=None):
        """Return ``(embeddings, new_state)``."""
        raise NotImplementedError


class LinearEncoder(Encoder):
    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.lin = self._sub("lin", Linear, d_in, cfg.hidden)

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        return self.lin(X), state


class MLPEncoder(Encoder):
    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.dropout = cfg.dropout
        dims = [d_in] + [cfg.hidden] * cfg.layers
        self.lins = [self._sub(f"lin{i}", Linear, dims[i], dims[i + 1]) for i in range(cfg.layers)]

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        h = X
        for i, lin in enumerate(self.lins):
            h = lin(h)
            if i < len(self.lins) - 1:
                h = F.dropout(F.relu(h), self.dropout, rng, training)
        return h, state


class ConvEncoder(Encoder):
    """Stack of GCN, GAT or Chebyshev convolutions on the current snapshot only."""

    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.dropout = cfg.dropout
        self.kind = cfg.family
        dims = [d_in] + [cfg.hidden] * cfg.layers
        self.convs = []
        for i in range(cfg.layers):
            if cfg.family == "gcn":
                conv = self._sub(f"conv{i}", GCNConv, dims[i], dims[i + 1])
            elif cfg.family == "gat":
                conv = self._sub(f"conv{i}", GATConv, dims[i], dims[i + 1], heads=cfg.heads)
            else:
                conv = self._sub(f"conv{i}", ChebConv, dims[i], dims[i + 1], K=cfg.cheb_k)
            self.convs.append(conv)

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        h = X
        for i, conv in enumerate(self.convs):
            if self.kind == "chebnet" and i == 0 and cache is not None:
                h = conv(h, A, basis=cache.get("x_basis"))
            else:
                h = conv(h, A)
            if i < len(self.convs) - 1:
                h = F.dropout(F.relu(h), self.dropout, rng, training)
        return h, state


class GCRNEncoder(Encoder):
    """Graph-convolutional GRU layers; the state is one |V| x hidden matrix per layer."""

    temporal = True

    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.hidden = cfg.hidden
        self.dropout = cfg.dropout
        dims = [d_in] + [cfg.hidden] * cfg.layers
        self.cells = [
            self._sub(f"cell{i}", GraphGRUCell, dims[i], cfg.hidden, K=cfg.cheb_k) for i in range(cfg.layers)
        ]

    def init_state(self, n_nodes):
        return [np.zeros((n_nodes, self.hidden)) for _ in self.cells]

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        if state is None:
            raise UninitializedState("gcrn-gru needs an initialized recurrent state")
        h, new = X, []
        for i, cell in enumerate(self.cells):
            basis = cache.get("x_basis") if (cache is not None and i == 0) else None
            h = cell(h, Tensor(state[i]), A, x_basis=basis)
            new.append(h.data.copy())
            if i < len(self.cells) - 1:
                h = F.dropout(h, self.dropout, rng, training)
        return h, new


class RolandEncoder(Encoder):
    """Pre-processing linear layer, then per layer ChebConv followed by a GRU node-state update."""

    temporal = True

    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.hidden = cfg.hidden
        self.dropout = cfg.dropout
        self.pre = self._sub("pre", Linear, d_in, cfg.hidden)
        self.convs = [self._sub(f"conv{i}", ChebConv, cfg.hidden, cfg.hidden, K=cfg.cheb_k) for i in range(cfg.layers)]
        self.grus = [self._sub(f"gru{i}", GRUCell, cfg.hidden, cfg.hidden) for i in range(cfg.layers)]

    def init_state(self, n_nodes):
        return [np.zeros((n_nodes, self.hidden)) for _ in self.convs]

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        if state is None:
            raise UninitializedState("roland needs an initialized recurrent state")
        h = F.relu(self.pre(X))
        new = []
        for i, (conv, gru) in enumerate(zip(self.convs, self.grus)):
            m = F.dropout(F.relu(conv(h, A)), self.dropout, rng, training)
            h = gru(m, Tensor(state[i]))
            new.append(h.data.copy())
        return h, new


class EvolveGCNEncoder(Encoder):
    """GCN layers whose weight matrices evolve through a GRU (weights are the recurrent state)."""

    temporal = True

    def __init__(self, d_in, cfg: ModelConfig, seed=0, name="encoder"):
        super().__init__(seed, name)
        self.dropout = cfg.dropout
        dims = [d_in] + [cfg.hidden] * cfg.layers
        self.W0 = [self.param(f"W0_{i}", (dims[i], dims[i + 1])) for i in range(cfg.layers)]
        self.b = [self.param(f"b_{i}", (dims[i + 1],), "zeros") for i in range(cfg.layers)]
        # rows of W^T are the GRU batch; input and state are both the previous weights
        self.grus = [self._sub(f"wgru{i}", GRUCell, dims[i], dims[i]) for i in range(cfg.layers)]

    def init_state(self, n_nodes):
        return [None for _ in self.W0]

    def __call__(self, X, A, state, training=False, rng=None, cache=None):
        if state is None:
            raise UninitializedState("evolvegcn needs an initialized state")
        h, new = X, []
        for i, gru in enumerate(self.grus):
            prev = self.W0[i] if state[i] is None else Tensor(state[i])
            prev_t = F.transpose(prev)
            W = F.transpose(gru(prev_t, prev_t))
            new.append(W.data.copy())
            h = gcn_conv(h, A.symmetrized, W, self.b[i])
            if i < len(self.grus) - 1:
                h = F.dropout(F.relu(h), self.dropout, rng, training)
        return h, new


ENCODERS = {
    "linear": LinearEncoder,
    "mlp": MLPEncoder,
    "gcn": ConvEncoder,
    "gat": ConvEncoder,
    "chebnet": ConvEncoder,
    "gcrn-gru": GCRNEncoder,
    "roland": RolandEncoder,
    "evolvegcn": EvolveGCNEncoder,
}


# ---------------------------------------------------------------- decoders


def decode_link(H, pairs, decoder="dot", mlp=None) -> Tensor:
    """Logits for (i, j) pairs from node embeddings; probability is sigmoid(logit)."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    hi, hj = H[pairs[:, 0]], H[pairs[:, 1]]
    if decoder == "dot":
        return (hi * hj).sum(axis=1)
    if mlp is None:
        raise ShapeMismatch("mlp decoder needs its parameters")
    return mlp(F.concat([hi, hj], axis=1))


class MLPLinkDecoder(Module):
    def __init__(self, hidden, seed=0, name="decoder"):
        super().__init__(seed, name)
        self.l1 = self._sub("l1", Linear, 2 * hidden, hidden)
        self.l2 = self._sub("l2", Linear, hidden, 1)

    def __call__(self, z):
        out = self.l2(F.relu(self.l1(z)))
        return F.reshape(out, (out.shape[0],))


def decode_node(H, head: Linear) -> Tensor:
    out = head(H)
    if out.shape[1] != 1:
        raise ShapeMismatch("node head must have output width 1")
    return F.reshape(out, (out.shape[0],))


class ForecastModel(Module):
    """Encoder plus the head for one task."""

    def __init__(self, cfg: ModelConfig, d_in: int, task: str, seed: int = 0):
        super().__init__(seed, "")
        if cfg.family == "edgebank":
            raise ConfigError("edgebank has no learned parameters")
        self.cfg = cfg
        self.task = task
        self.encoder = self.child("encoder", ENCODERS[cfg.family](d_in, cfg, seed=seed, name="encoder"))
        self.mlp = None
        self.head = None
        if task == "link":
            if cfg.decoder == "mlp":
                self.mlp = self._sub("decoder", MLPLinkDecoder, cfg.hidden)
        else:
            self.head = self._sub("head", Linear, cfg.hidden, 1)

    def readout(self, H, pairs=None) -> Tensor:
        if self.task == "link":
            return decode_link(H, pairs, self.cfg.decoder, self.mlp)
        return decode_node(H, self.head)


# ---------------------------------------------------------------- edgebank


class EdgeBank:
    """Unbounded memory of every edge observed so far."""

    def __init__(self, n_genes: int):
        self.n_genes = n_genes
        self.memory = np.empty(0, dtype=np.int64)

    def update(self, snapshot: Snapshot) -> "EdgeBank":
        self.memory = np.union1d(self.memory, snapshot.edge_keys())
        return self

    def predict(self, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        keys = pairs[:, 0] * self.n_genes + pairs[:, 1]
        return np.isin(keys, self.memory).astype(np.float64)


def edgebank_update(memory: EdgeBank, snapshot: Snapshot) -> EdgeBank:
    return memory.update(snapshot)


def edgebank_predict(memory: EdgeBank, pairs) -> np.ndarray:
    return memory.predict(pairs)


# ---------------------------------------------------------------- estimator


@dataclass
class ModelState:
    model: ForecastModel | None = None
    recurrent: list | None = None
    memory: EdgeBank | None = None
    step: int = 0
    optimizer: Adam | None = field(default=None, repr=False)


class TemporalGraphForecaster(BaseEstimator):
    """Live-update forecaster for one model family and one task.

    Calls follow the snapshot order::

        est.fit(tg, until=2)          # warm up on transitions inside 1..2
        est.predict(tg, 2, pairs)     # forecast snapshot 3 from history <= 2
        est.partial_fit(tg, 2)        # fine-tune on the 2 -> 3 transition
        est.predict(tg, 3, pairs)     # ...

    Temporal families carry per-node (or per-weight) state across calls;
    after ``partial_fit(tg, t)`` the state summarizes snapshots ``<= t``.
    """

    def __init__(
        self,
        family="gcrn-gru",
        task="link",
        hidden=64,
        layers=2,
        cheb_k=3,
        heads=4,
        dropout=0.1,
        decoder="dot",
        lr=1e-3,
        warmup_epochs=100,
        finetune_epochs=20,
        neg_ratio=1.0,
        max_train_pairs=20000,
        random_state=0,
    ):
        self.family = family
        self.task = task
        self.hidden = hidden
        self.layers = layers
        self.cheb_k = cheb_k
        self.heads = heads
        self.dropout = dropout
        self.decoder = decoder
        self.lr = lr
        self.warmup_epochs = warmup_epochs
        self.finetune_epochs = finetune_epochs
        self.neg_ratio = neg_ratio
        self.max_train_pairs = max_train_pairs
        self.random_state = random_state

    # ---------------------------------------------------------- helpers
    @property
    def config(self) -> ModelConfig:
        return ModelConfig(self.family, self.hidden, self.layers, self.cheb_k, self.heads, self.dropout, self.decoder)

    def _check_graph(self, tg: TemporalGraph):
        if not hasattr(self, "state_"):
            raise UninitializedState("call fit() first")
        if tg.n_genes != self.n_genes_ or tg.d_x != self.d_x_:
            raise ShapeMismatch("graph differs from the one the model was fitted on")

    def _inputs(self, tg: TemporalGraph, t: int):
        if self._cache.get("owner") is not tg:
            self._cache = {"owner": tg}
        c = self._cache.get(t)
        if c is None:
            s = tg[t]
            A = SparseAdj.from_snapshot(s)
            X = Tensor(prepare_features(s.node_features))
            c = {"A": A, "X": X}
            if self.family in ("chebnet", "gcrn-gru"):
                c["x_basis"] = [Tensor(b.data) for b in chebyshev_basis(X, A.symmetrized, self.cheb_k)]
            self._cache[t] = c
        return c

    def _encode(self, tg, t, state, training, rng):
        c = self._inputs(tg, t)
        model = self.state_.model
        return model.encoder(c["X"], c["A"], state, training=training, rng=rng, cache=c)

    def _loss(self, tg, t, state, rng, training=True) -> Tensor:
        """Training loss for the transition ``t -> t+1``; ``None`` when it has no targets."""
        H, _ = self._encode(tg, t, state, training, rng)
        model = self.state_.model
        nxt = tg[t + 1]
        if self.task == "link":
            pos = np.column_stack([nxt.src, nxt.dst]).astype(np.int64)
            if len(pos) == 0:
                return None
            if self.max_train_pairs and len(pos) > self.max_train_pairs:
                pos = pos[rng.choice(len(pos), self.max_train_pairs, replace=False)]
            neg = sample_negatives(nxt, n=int(round(self.neg_ratio * len(pos))), seed=rng)
            pairs = np.vstack([pos, neg])
            labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
            return F.bce_with_logits(model.readout(H, pairs), labels)
        if self.task == "expression":
            genes, target = expression_target(tg[t], nxt)
        else:
            genes, target = centrality_target(nxt)
        if len(genes) == 0:
            return None
        pred = model.readout(H)[genes]
        return F.mse(pred, target)

    def _train(self, tg, t, epochs, rng):
        opt = self.state_.optimizer
        for _ in range(epochs):
            loss = self._loss(tg, t, self.state_.recurrent, rng, training=True)
            if loss is None:
                return
            opt.zero_grad()
            loss.backward()
            opt.step()

    def _commit(self, tg, t):
        """Advance the recurrent state past snapshot ``t`` with the current weights."""
        if self.state_.model is not None and self.state_.model.encoder.temporal:
            _, new = self._encode(tg, t, self.state_.recurrent, False, None)
            self.state_.recurrent = new
        self.state_.step = t

    # ---------------------------------------------------------- public API
    def fit(self, tg: TemporalGraph, until: int = 2):
        """Reset all state and warm up on the transitions within snapshots ``1..until``."""
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if tg.T < until or until < 2:
            raise TooFewSnapshots(f"warm-up needs 2 <= until <= T (until={until}, T={tg.T})")
        cfg = self.config
        self.n_genes_ = tg.n_genes
        self.d_x_ = tg.d_x
        self._cache = {}
        self.rng_ = np.random.default_rng(derive_seed(self.random_state, "train", self.family, self.task))
        if cfg.family == "edgebank":
            if self.task != "link":
                raise ConfigError("edgebank only supports the link task")
            self.state_ = ModelState(memory=EdgeBank(tg.n_genes))
            for t in range(1, until + 1):
                self.state_.memory.update(tg[t])
            self.state_.step = until - 1
            return self
        model = ForecastModel(cfg, tg.d_x, self.task, seed=derive_seed(self.random_state, "init", self.family))
        self.state_ = ModelState(
            model=model,
            recurrent=model.encoder.init_state(tg.n_genes),
            optimizer=Adam(model.parameters(), lr=self.lr),
        )
        for t in range(1, until):
            self._train(tg, t, self.warmup_epochs, self.rng_)
            self._commit(tg, t)
        return self

    def partial_fit(self, tg: TemporalGraph, t: int):
        """Fine-tune on the ``t -> t+1`` transition, then advance the state past ``t``.

        A non-finite loss or gradient restores the pre-step weights and re-raises
        :class:`NumericalError` after the state has advanced.
        """
        self._check_graph(tg)
        if t + 1 > tg.T:
            raise TooFewSnapshots(f"no snapshot {t + 1} to fine-tune on")
        if self.state_.memory is not None:
            self.state_.memory.update(tg[t + 1])
            self.state_.step = t
            return self
        self._expect_step(t)
        model = self.state_.model
        saved = (model.state_dict(), self.state_.optimizer.state.copy())
        try:
            self._train(tg, t, self.finetune_epochs, self.rng_)
        except NumericalError:
            model.load_state_dict(saved[0])
            self.state_.optimizer.state = saved[1]
            self._commit(tg, t)
            raise
        self._commit(tg, t)
        return self

    def _expect_step(self, t):
        if self.state_.model.encoder.temporal and t != self.state_.step + 1:
            raise UninitializedState(
                f"temporal state covers snapshots <= {self.state_.step}; cannot process snapshot {t}"
            )

    def embed(self, tg: TemporalGraph, t: int) -> np.ndarray:
        """Node embeddings after observing snapshot ``t`` (frozen weights, no state change)."""
        self._check_graph(tg)
        if self.state_.model is None:
            raise ConfigError("edgebank has no embeddings")
        self._expect_step(t)
        H, _ = self._encode(tg, t, self.state_.recurrent, False, None)
        return H.data.copy()

    def predict(self, tg: TemporalGraph, t: int, pairs=None) -> np.ndarray:
        """Forecast snapshot ``t+1`` from history ``<= t``.

        Link task: probabilities (EdgeBank: 0/1 scores) for ``pairs``.
        Node tasks: one value per gene.
        """
        self._check_graph(tg)
        if self.state_.memory is not None:
            return self.state_.memory.predict(pairs)
        self._expect_step(t)
        H, _ = self._encode(tg, t, self.state_.recurrent, False, None)
        out = self.state_.model.readout(H, pairs)
        if self.task == "link":
            return F.sigmoid(out).data.copy()
        return out.data.copy()

    def decision_function(self, tg: TemporalGraph, t: int, pairs) -> np.ndarray:
        """Raw link logits (EdgeBank: 0/1 scores)."""
        self._check_graph(tg)
        if self.state_.memory is not None:
            return self.state_.memory.predict(pairs)
        self._expect_step(t)
        H, _ = self._encode(tg, t, self.state_.recurrent, False, None)
        return self.state_.model.readout(H, pairs).data.copy()

    # ---------------------------------------------------------- checkpoints
    def save(self, path):
        if not hasattr(self, "state_") or self.state_.model is None:
            raise UninitializedState("nothing to save")
        header = {"family": self.family, "task": self.task, "config": self.config.to_dict(),
                  "d_x": self.d_x_, "n_genes": self.n_genes_, "step": self.state_.step}
        state = dict(self.state_.model.state_dict())
        if self.state_.recurrent is not None:
            for i, s in enumerate(self.state_.recurrent):
                if s is not None:
                    state[f"__recurrent__.{i}"] = s
        return save_checkpoint(path, state, header)

    def load(self, path, tg: TemporalGraph):
        state, head = load_checkpoint(path)
        if head.get("family") != self.family or head.get("task") != self.task:
            raise ConfigError("checkpoint was written for a different family/task")
        self.n_genes_, self.d_x_ = head["n_genes"], head["d_x"]
        self._cache = {}
        self.rng_ = np.random.default_rng(derive_seed(self.random_state, "train", self.family, self.task))
        model = ForecastModel(self.config, self.d_x_, self.task, seed=derive_seed(self.random_state, "init", self.family))
        rec = model.encoder.init_state(self.n_genes_)
        for k in [k for k in state if k.startswith("__recurrent__.")]:
            rec[int(k.split(".")[1])] = state.pop(k)
        model.load_state_dict(state)
        self.state_ = ModelState(model=model, recurrent=rec, optimizer=Adam(model.parameters(), lr=self.lr),
                                 step=head["step"])
        return self


def encode(forecaster: TemporalGraphForecaster, snapshot_t: int, tg: TemporalGraph) -> np.ndarray:
    return forecaster.embed(tg, snapshot_t)
