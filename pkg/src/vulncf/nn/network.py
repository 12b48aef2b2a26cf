"""Gated-graph classifier: forward pass and exact analytic gradients.

Propagation aggregates neighbor states per edge type, feeds them through a
GRU cell for a fixed number of rounds, then a two-layer 1-D convolution
over the node sequence (source order) with masked max-pooling produces the
graph embedding and two class logits.

Convolution windows start at each node position and are zero-padded past
the end of the sequence, so pooling only ever sees one output per real
node; with ReLU activations an appended all-zero node cannot change the
pooled maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..lang.cpg import CodePropertyGraph
from .params import EDGE_TYPES, ModelParams, ShapeError


@dataclass
class GraphTensors:
    """Dense per-edge-type adjacency plus node features for one graph."""

    x: np.ndarray    # N x d_in
    adj: np.ndarray  # 6 x N x N, adj[e, v, u] = 1 when u sends to v via type e
    adj_t: np.ndarray | None = None  # transposed copy, filled lazily for backward

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    def transposed(self) -> np.ndarray:
        if self.adj_t is None:
            self.adj_t = np.ascontiguousarray(self.adj.transpose(0, 2, 1))
        return self.adj_t


def graph_tensors(g: CodePropertyGraph, features: np.ndarray) -> GraphTensors:
    n = len(g.nodes)
    if features.shape[0] != n:
        raise ShapeError(f"feature rows {features.shape[0]} != node count {n}")
    adj = np.zeros((len(EDGE_TYPES), n, n), dtype=np.float64)
    kind_idx = {"AST": 0, "CFG": 1, "DFG": 2}
    for e in g.edges:
        k = kind_idx[e.kind]
        adj[k, e.dst, e.src] = 1.0
        adj[k + 3, e.src, e.dst] = 1.0  # reverse direction
    return GraphTensors(x=np.asarray(features, dtype=np.float64), adj=adj)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60, 60)))


@dataclass
class ForwardCache:
    gt: GraphTensors
    x_eff: np.ndarray
    h0: np.ndarray
    steps: list[dict]
    y: np.ndarray          # N x (d_h + d_in) readout sequence
    pad1: np.ndarray
    s1: np.ndarray         # conv1 pre-activation
    o1: np.ndarray
    pad2: np.ndarray
    s2: np.ndarray
    o2: np.ndarray
    argmax: np.ndarray     # c2 winning positions
    pooled: np.ndarray     # graph embedding, c2
    logits: np.ndarray     # 2
    mask: np.ndarray | None = None
    mask_messages: bool = False


def forward(gt: GraphTensors, params: ModelParams, mask: np.ndarray | None = None,
            mask_messages: bool = False) -> ForwardCache:
    """Network forward pass; `mask` softly scales each node's features and,
    with `mask_messages`, also its outgoing messages (soft node removal)."""
    h = params.hyper
    n = gt.n
    if n < 1:
        raise ShapeError("graph must have at least one node")
    if gt.x.shape[1] != h.d_in:
        raise ShapeError(f"feature dim {gt.x.shape[1]} != d_in {h.d_in}")

    x_eff = gt.x if mask is None else gt.x * mask[:, None]
    state = x_eff @ params.proj.T  # N x d_h
    h0 = state
    steps: list[dict] = []
    edge_w_t = params.edge_w.transpose(0, 2, 1)
    scale_sources = mask is not None and mask_messages
    for _ in range(h.steps):
        src = state * mask[:, None] if scale_sources else state
        mall = gt.adj @ src  # 6 x N x d_h
        agg = np.matmul(mall, edge_w_t).sum(axis=0)
        cat = np.concatenate([agg, state], axis=1)
        z = _sigmoid(cat @ params.gru_wz.T + params.gru_bz)
        r = _sigmoid(cat @ params.gru_wr.T + params.gru_br)
        cat_r = np.concatenate([agg, r * state], axis=1)
        htil = np.tanh(cat_r @ params.gru_wh.T + params.gru_bh)
        new_state = (1.0 - z) * state + z * htil
        steps.append(
            {"h_prev": state, "mall": mall, "agg": agg, "cat": cat, "z": z,
             "r": r, "cat_r": cat_r, "htil": htil}
        )
        state = new_state

    y = np.concatenate([state, x_eff], axis=1)  # N x (d_h + d_in)

    pad1 = np.vstack([y, np.zeros((h.w1 - 1, y.shape[1]))])
    s1 = np.stack([pad1[w : w + n] @ params.conv1_w[:, w, :].T for w in range(h.w1)]).sum(axis=0)
    s1 = s1 + params.conv1_b
    o1 = np.maximum(s1, 0.0)

    pad2 = np.vstack([o1, np.zeros((h.w2 - 1, h.c1))])
    s2 = np.stack([pad2[w : w + n] @ params.conv2_w[:, w, :].T for w in range(h.w2)]).sum(axis=0)
    s2 = s2 + params.conv2_b
    o2 = np.maximum(s2, 0.0)

    argmax = np.argmax(o2, axis=0)  # pooling over the n node positions only
    pooled = o2[argmax, np.arange(h.c2)]
    logits = params.cls_w @ pooled + params.cls_b

    return ForwardCache(
        gt=gt, x_eff=x_eff, h0=h0, steps=steps, y=y,
        pad1=pad1, s1=s1, o1=o1, pad2=pad2, s2=s2, o2=o2,
        argmax=argmax, pooled=pooled, logits=logits,
        mask=None if mask is None else mask.copy(), mask_messages=scale_sources,
    )


def backward(cache: ForwardCache, params: ModelParams,
             dlogits: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray, np.ndarray | None]:
    """Gradients of every tensor, of the effective node features, and (when
    the forward pass masked message sources) of the mask's propagation path."""
    h = params.hyper
    n = cache.gt.n
    g = {k: np.zeros_like(v) for k, v in params.tensors().items()}
    dmask_prop = np.zeros(n) if cache.mask_messages else None

    g["cls_w"] += np.outer(dlogits, cache.pooled)
    g["cls_b"] += dlogits
    dpooled = params.cls_w.T @ dlogits

    do2 = np.zeros_like(cache.o2)
    do2[cache.argmax, np.arange(h.c2)] = dpooled
    ds2 = do2 * (cache.s2 > 0)
    g["conv2_b"] += ds2.sum(axis=0)
    dpad2 = np.zeros_like(cache.pad2)
    for w in range(h.w2):
        g["conv2_w"][:, w, :] += ds2.T @ cache.pad2[w : w + n]
        dpad2[w : w + n] += ds2 @ params.conv2_w[:, w, :]
    do1 = dpad2[:n]

    ds1 = do1 * (cache.s1 > 0)
    g["conv1_b"] += ds1.sum(axis=0)
    dpad1 = np.zeros_like(cache.pad1)
    for w in range(h.w1):
        g["conv1_w"][:, w, :] += ds1.T @ cache.pad1[w : w + n]
        dpad1[w : w + n] += ds1 @ params.conv1_w[:, w, :]
    dy = dpad1[:n]

    dstate = dy[:, : h.d_h].copy()
    dx = dy[:, h.d_h :].copy()

    for step in reversed(cache.steps):
        h_prev, mall, z, r = step["h_prev"], step["mall"], step["z"], step["r"]
        htil, cat, cat_r = step["htil"], step["cat"], step["cat_r"]
        dz = dstate * (htil - h_prev)
        dhtil = dstate * z
        dh_prev = dstate * (1.0 - z)

        dsh = dhtil * (1.0 - htil**2)
        g["gru_wh"] += dsh.T @ cat_r
        g["gru_bh"] += dsh.sum(axis=0)
        dcat_r = dsh @ params.gru_wh
        dagg = dcat_r[:, : h.d_h].copy()
        drh = dcat_r[:, h.d_h :]
        dr = drh * h_prev
        dh_prev += drh * r

        dsz = dz * z * (1.0 - z)
        g["gru_wz"] += dsz.T @ cat
        g["gru_bz"] += dsz.sum(axis=0)
        dcat = dsz @ params.gru_wz

        dsr = dr * r * (1.0 - r)
        g["gru_wr"] += dsr.T @ cat
        g["gru_br"] += dsr.sum(axis=0)
        dcat += dsr @ params.gru_wr

        dagg += dcat[:, : h.d_h]
        dh_prev += dcat[:, h.d_h :]

        # agg = sum_e mall[e] @ W_e^T
        g["edge_w"] += np.matmul(dagg.T[None, :, :], mall)
        dmall = np.matmul(dagg[None, :, :], params.edge_w)
        dsrc = np.matmul(cache.gt.transposed(), dmall).sum(axis=0)
        if cache.mask_messages:
            assert cache.mask is not None and dmask_prop is not None
            dmask_prop += (dsrc * h_prev).sum(axis=1)
            dh_prev += cache.mask[:, None] * dsrc
        else:
            dh_prev += dsrc
        dstate = dh_prev

    g["proj"] += dstate.T @ cache.x_eff
    dx += dstate @ params.proj
    return g, dx, dmask_prop


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def cross_entropy(logits: np.ndarray, label_index: int) -> float:
    shifted = logits - logits.max()
    return float(np.log(np.exp(shifted).sum()) - shifted[label_index])


def loss_grad_logits(logits: np.ndarray, label_index: int) -> np.ndarray:
    d = softmax(logits)
    d[label_index] -= 1.0
    return d
