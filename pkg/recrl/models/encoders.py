"""
State encoders z = G(s).

Both encoders map a window of item ids to a 64-dimensional representation. Padding positions
contribute exact zero vectors: the looked-up embeddings are multiplied by a constant non-padding
mask, so the padding row of the table never influences an output nor receives a gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Union

import numpy as np

from recrl.autodiff import functional as F
from recrl.autodiff.tensor import DifferentiableArray, constant, parameter
from recrl.data.dataset import PADDING_ITEM, WINDOW
from recrl.exceptions import IndexLookupError
from recrl.utils import ListEnum

logger = logging.getLogger(__name__)

HIDDEN = 64
INIT_SCALE = 0.05

_GRU_GATES = ("z", "r", "n")


class EncoderKind(str, ListEnum):
    """Sequential backbones."""

    GRU = "gru"
    ATTENTION = "attention"


@dataclass
class EncoderParams:
    """Trainable parameters of one encoder.

    Attributes
    ----------
    kind: EncoderKind
    weights: Dict[str, DifferentiableArray]
        "item_embedding" [|I|+1 x 64] plus the backbone weights, in creation order.
    window: int
    layer_norm: bool
        Attention only: normalize the output representation.
    """

    kind: EncoderKind
    weights: Dict[str, DifferentiableArray] = field(repr=False)
    window: int = WINDOW
    layer_norm: bool = True

    @property
    def item_embedding(self) -> DifferentiableArray:
        return self.weights["item_embedding"]

    @property
    def item_count(self) -> int:
        return self.item_embedding.shape[0] - 1

    def parameters(self) -> Dict[str, DifferentiableArray]:
        return dict(self.weights)


def _uniform(rng: np.random.Generator, *shape: int) -> DifferentiableArray:
    return parameter(rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape))


def init_encoder(
    kind: Union[str, EncoderKind],
    item_count: int,
    rng: np.random.Generator,
    window: int = WINDOW,
    layer_norm: bool = True,
) -> EncoderParams:
    """Draw weights uniformly in [-0.05, 0.05]; biases start at zero, the padding row is zero."""
    if item_count < 1:
        raise ValueError("item_count must be at least 1.")
    kind = EncoderKind(kind)
    embedding = rng.uniform(-INIT_SCALE, INIT_SCALE, size=(item_count + 1, HIDDEN))
    embedding[PADDING_ITEM] = 0.0
    weights: Dict[str, DifferentiableArray] = {"item_embedding": parameter(embedding)}
    if kind is EncoderKind.GRU:
        for gate in _GRU_GATES:
            weights[f"gru.w_x{gate}"] = _uniform(rng, HIDDEN, HIDDEN)
            weights[f"gru.w_h{gate}"] = _uniform(rng, HIDDEN, HIDDEN)
            weights[f"gru.b_{gate}"] = parameter(np.zeros(HIDDEN))
    else:
        weights["attention.position_embedding"] = _uniform(rng, window, HIDDEN)
        for name in ("w_q", "w_k", "w_v", "w_o", "w_ff"):
            weights[f"attention.{name}"] = _uniform(rng, HIDDEN, HIDDEN)
        weights["attention.b_ff"] = parameter(np.zeros(HIDDEN))
        if layer_norm:
            weights["attention.ln_gain"] = parameter(np.ones(HIDDEN))
            weights["attention.ln_bias"] = parameter(np.zeros(HIDDEN))
    return EncoderParams(kind=kind, weights=weights, window=window, layer_norm=layer_norm)


def encode(params: EncoderParams, states: np.ndarray) -> DifferentiableArray:
    """Representation of one window ([window] -> [64]) or a batch ([B, window] -> [B, 64]).

    Raises
    ------
    IndexLookupError
        If an id lies outside [0, |I|].
    """
    ids = np.asarray(states, dtype=np.int64)
    single = ids.ndim == 1
    if single:
        ids = ids[np.newaxis, :]
    if ids.ndim != 2 or ids.shape[1] != params.window:
        raise ValueError(f"Expected windows of length {params.window}, got shape {ids.shape}.")
    if ids.size and (ids.min() < 0 or ids.max() > params.item_count):
        raise IndexLookupError(f"State holds an item id outside [0, {params.item_count}].")
    present = ids != PADDING_ITEM
    embedded = F.mul(
        F.embedding_lookup(params.item_embedding, ids),
        constant(np.broadcast_to(present[:, :, np.newaxis], ids.shape + (HIDDEN,)).astype(float)),
    )
    if params.kind is EncoderKind.GRU:
        out = _gru(params, embedded)
    else:
        out = _attention(params, embedded, present)
    return F.reshape(out, (HIDDEN,)) if single else out


def _gru(params: EncoderParams, embedded: DifferentiableArray) -> DifferentiableArray:
    w = params.weights
    batch, window, _ = embedded.shape
    hidden = constant(np.zeros((batch, HIDDEN)))
    for t in range(window):
        x = F.select(embedded, t, axis=1)
        update = F.sigmoid(
            F.add_bias(F.add(F.matmul(x, w["gru.w_xz"]), F.matmul(hidden, w["gru.w_hz"])), w["gru.b_z"])
        )
        reset = F.sigmoid(
            F.add_bias(F.add(F.matmul(x, w["gru.w_xr"]), F.matmul(hidden, w["gru.w_hr"])), w["gru.b_r"])
        )
        candidate = F.tanh(
            F.add_bias(
                F.add(F.matmul(x, w["gru.w_xn"]), F.mul(reset, F.matmul(hidden, w["gru.w_hn"]))),
                w["gru.b_n"],
            )
        )
        # h' = (1 - u) * n + u * h
        hidden = F.add(candidate, F.mul(update, F.sub(hidden, candidate)))
    return hidden


def _attention(
    params: EncoderParams, embedded: DifferentiableArray, present: np.ndarray
) -> DifferentiableArray:
    w = params.weights
    batch, window, _ = embedded.shape
    positions = F.take_rows(
        w["attention.position_embedding"], np.tile(np.arange(window), (batch, 1))
    )
    x = F.add(embedded, positions)
    flat = F.reshape(x, (batch * window, HIDDEN))

    def project(name: str) -> DifferentiableArray:
        return F.reshape(F.matmul(flat, w[name]), (batch, window, HIDDEN))

    queries, keys, values = project("attention.w_q"), project("attention.w_k"), project("attention.w_v")
    scores = F.scale(F.matmul(queries, F.transpose(keys)), 1.0 / np.sqrt(HIDDEN))
    causal = np.tril(np.ones((window, window), dtype=bool))
    mask = causal[np.newaxis, :, :] & present[:, np.newaxis, :]
    attended = F.matmul(F.masked_softmax(scores, mask), values)

    last = window - 1
    hidden = F.add(
        F.select(x, last, axis=1), F.matmul(F.select(attended, last, axis=1), w["attention.w_o"])
    )
    hidden = F.add(hidden, F.relu(F.linear(hidden, w["attention.w_ff"], w["attention.b_ff"])))
    if params.layer_norm:
        hidden = F.layer_norm(hidden, w["attention.ln_gain"], w["attention.ln_bias"])
    return hidden
