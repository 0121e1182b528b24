"""
The value network V_phi, its target copy and the policy-extraction network P_theta.

Each network owns a full encoder, embeddings included. The policy network carries three heads on
top of z = G(s): policy logits over the catalog, reward logits (negative, click, purchase) for a
state-action pair and a predicted next-state representation for a state-action pair.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import numpy as np

from recrl.autodiff import functional as F
from recrl.autodiff.tensor import DifferentiableArray, parameter
from recrl.data.dataset import WINDOW
from recrl.exceptions import CheckpointError
from recrl.models.encoders import (
    HIDDEN,
    INIT_SCALE,
    EncoderKind,
    EncoderParams,
    encode,
    init_encoder,
)
from recrl.serialization import read_container, write_container
from recrl.utils import make_rng

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SRLC1"
CHECKPOINT_VERSION = 1
REWARD_CLASSES = 3

Array = DifferentiableArray


def _dense(rng: np.random.Generator, n_in: int, n_out: int) -> Tuple[Array, Array]:
    return parameter(rng.uniform(-INIT_SCALE, INIT_SCALE, size=(n_in, n_out))), parameter(
        np.zeros(n_out)
    )


def _two_layer(x: Array, head: Mapping[str, Array]) -> Array:
    hidden = F.relu(F.linear(x, head["w1"], head["b1"]))
    return F.linear(hidden, head["w2"], head["b2"])


def _prefixed(prefix: str, weights: Mapping[str, Array]) -> Dict[str, Array]:
    return {f"{prefix}.{name}": value for name, value in weights.items()}


@dataclass
class ValueNet:
    """V(s): encoder, then 64 -> 64 -> 1 with a ReLU in between."""

    encoder: EncoderParams
    mlp: Dict[str, Array] = field(repr=False)

    @classmethod
    def initialize(
        cls,
        kind: Union[str, EncoderKind],
        item_count: int,
        rng: np.random.Generator,
        window: int = WINDOW,
        layer_norm: bool = True,
    ) -> ValueNet:
        encoder = init_encoder(kind, item_count, rng, window=window, layer_norm=layer_norm)
        w1, b1 = _dense(rng, HIDDEN, HIDDEN)
        w2, b2 = _dense(rng, HIDDEN, 1)
        return cls(encoder=encoder, mlp={"w1": w1, "b1": b1, "w2": w2, "b2": b2})

    def __call__(self, states: np.ndarray) -> Array:
        """Values of a batch of windows, shape [B]."""
        z = encode(self.encoder, np.atleast_2d(states))
        out = _two_layer(z, self.mlp)
        return F.reshape(out, (out.shape[0],))

    def parameters(self) -> Dict[str, Array]:
        return {**_prefixed("encoder", self.encoder.weights), **_prefixed("mlp", self.mlp)}

    def copy(self, requires_grad: bool = True) -> ValueNet:
        """Deep copy, e.g. the target network with requires_grad=False."""

        def clone(weights: Mapping[str, Array]) -> Dict[str, Array]:
            return {
                name: DifferentiableArray(w.values.copy(), requires_grad=requires_grad)
                for name, w in weights.items()
            }

        encoder = EncoderParams(
            kind=self.encoder.kind,
            weights=clone(self.encoder.weights),
            window=self.encoder.window,
            layer_norm=self.encoder.layer_norm,
        )
        return ValueNet(encoder=encoder, mlp=clone(self.mlp))


@dataclass
class PolicyNet:
    """P_theta: encoder plus the policy, reward and transition heads."""

    encoder: EncoderParams
    policy_head: Dict[str, Array] = field(repr=False)
    reward_head: Dict[str, Array] = field(repr=False)
    transition_head: Dict[str, Array] = field(repr=False)

    @classmethod
    def initialize(
        cls,
        kind: Union[str, EncoderKind],
        item_count: int,
        rng: np.random.Generator,
        window: int = WINDOW,
        layer_norm: bool = True,
    ) -> PolicyNet:
        encoder = init_encoder(kind, item_count, rng, window=window, layer_norm=layer_norm)
        w, b = _dense(rng, HIDDEN, item_count)
        reward_w1, reward_b1 = _dense(rng, 2 * HIDDEN, HIDDEN)
        reward_w2, reward_b2 = _dense(rng, HIDDEN, REWARD_CLASSES)
        transition_w1, transition_b1 = _dense(rng, 2 * HIDDEN, HIDDEN)
        transition_w2, transition_b2 = _dense(rng, HIDDEN, HIDDEN)
        return cls(
            encoder=encoder,
            policy_head={"w": w, "b": b},
            reward_head={"w1": reward_w1, "b1": reward_b1, "w2": reward_w2, "b2": reward_b2},
            transition_head={
                "w1": transition_w1,
                "b1": transition_b1,
                "w2": transition_w2,
                "b2": transition_b2,
            },
        )

    @property
    def item_count(self) -> int:
        return self.policy_head["w"].shape[1]

    def encode(self, states: np.ndarray) -> Array:
        return encode(self.encoder, np.atleast_2d(states))

    def policy_logits(self, z: Array) -> Array:
        """[B, |I|]; column j scores item j + 1."""
        return F.linear(z, self.policy_head["w"], self.policy_head["b"])

    def _pair(self, z: Array, actions: np.ndarray) -> Array:
        return F.concat([z, F.embedding_lookup(self.encoder.item_embedding, actions)], axis=1)

    def reward_logits(self, z: Array, actions: np.ndarray) -> Array:
        """[B, 3] logits ordered (negative, click, purchase) for the pairs (z_b, a_b)."""
        return _two_layer(self._pair(z, actions), self.reward_head)

    def predict_next(self, z: Array, actions: np.ndarray) -> Array:
        """[B, 64] predicted representation of the next state."""
        return _two_layer(self._pair(z, actions), self.transition_head)

    def parameters(self) -> Dict[str, Array]:
        return {
            **_prefixed("encoder", self.encoder.weights),
            **_prefixed("policy_head", self.policy_head),
            **_prefixed("reward_head", self.reward_head),
            **_prefixed("transition_head", self.transition_head),
        }


@dataclass
class MCRLNetworks:
    """Online value network, its Polyak target and the policy-extraction network."""

    value: ValueNet
    target: ValueNet
    policy: PolicyNet

    @classmethod
    def initialize(
        cls,
        item_count: int,
        kind: Union[str, EncoderKind] = EncoderKind.GRU,
        seed: int = 0,
        window: int = WINDOW,
        layer_norm: bool = True,
    ) -> MCRLNetworks:
        rng = make_rng(seed)
        value = ValueNet.initialize(kind, item_count, rng, window=window, layer_norm=layer_norm)
        policy = PolicyNet.initialize(kind, item_count, rng, window=window, layer_norm=layer_norm)
        return cls(value=value, target=value.copy(requires_grad=False), policy=policy)

    @property
    def kind(self) -> EncoderKind:
        return self.policy.encoder.kind

    @property
    def item_count(self) -> int:
        return self.policy.item_count

    def state_dict(self) -> Dict[str, np.ndarray]:
        """Named parameter values, copied."""
        return {
            **{f"value.{k}": v.values.copy() for k, v in self.value.parameters().items()},
            **{f"target.{k}": v.values.copy() for k, v in self.target.parameters().items()},
            **{f"policy.{k}": v.values.copy() for k, v in self.policy.parameters().items()},
        }

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Overwrite every parameter in place.

        Raises
        ------
        CheckpointError
            If names or shapes differ from this network's manifest.
        """
        current = {
            **{f"value.{k}": v for k, v in self.value.parameters().items()},
            **{f"target.{k}": v for k, v in self.target.parameters().items()},
            **{f"policy.{k}": v for k, v in self.policy.parameters().items()},
        }
        if set(current) != set(state):
            missing = sorted(set(current) - set(state))
            unexpected = sorted(set(state) - set(current))
            raise CheckpointError(
                f"Parameter manifest mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}."
            )
        for name, array in current.items():
            if array.shape != tuple(state[name].shape):
                raise CheckpointError(
                    f"{name}: checkpoint shape {tuple(state[name].shape)}, network {array.shape}."
                )
            array.values[...] = state[name]


def save_checkpoint(
    path: Union[str, Path], nets: MCRLNetworks, meta: Mapping[str, Any]
) -> None:
    """Write the "SRLC1" checkpoint: manifest header plus raw float64 buffers."""
    header = {
        "version": CHECKPOINT_VERSION,
        "item_count": nets.item_count,
        "encoder_kind": nets.kind.value,
        "window": nets.policy.encoder.window,
        "layer_norm": nets.policy.encoder.layer_norm,
        **dict(meta),
    }
    write_container(path, CHECKPOINT_MAGIC, header, nets.state_dict())
    logger.info("Saved checkpoint %s.", path)


def load_checkpoint(path: Union[str, Path]) -> Tuple[MCRLNetworks, Dict[str, Any]]:
    """Rebuild the networks stored at ``path`` and return them with the header metadata."""
    try:
        meta, arrays = read_container(path, CHECKPOINT_MAGIC)
    except ValueError as err:
        raise CheckpointError(str(err)) from err
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('version')!r}.")
    nets = MCRLNetworks.initialize(
        item_count=int(meta["item_count"]),
        kind=meta["encoder_kind"],
        window=int(meta["window"]),
        layer_norm=bool(meta["layer_norm"]),
    )
    nets.load_state_dict(arrays)
    return nets, meta
