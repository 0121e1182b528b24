"""
Test losses module.
"""
import math

import numpy as np
import pytest
from helpers import make_session

from recrl.autodiff import functional as F
from recrl.autodiff.gradcheck import check_gradients
from recrl.autodiff.tensor import Tape, constant, no_grad
from recrl.data.dataset import TransitionTable
from recrl.data.sampling import Batch
from recrl.learning.config import TrainConfig
from recrl.learning.losses import (
    combine_losses,
    combined_policy_loss,
    expectile_loss,
    extraction_weights,
    policy_extraction_loss,
    reward_contrastive_loss,
    transition_infonce_loss,
    value_loss,
)
from recrl.models.networks import MCRLNetworks

ITEMS = 8
WINDOW = 3


@pytest.fixture(scope="module")
def toy_table() -> TransitionTable:
    sessions = [
        make_session("a", [1, 2, 3, 4], [False, False, True, False]),
        make_session("b", [5, 6, 7], [False, True, False]),
        make_session("c", [2, 8, 1], [False, False, True]),
    ]
    return TransitionTable.from_sessions(sessions, window=WINDOW)


def _batch(table: TransitionTable, num_negatives: int = 0, seed: int = 0) -> Batch:
    batch = Batch.from_table(table, np.arange(len(table)))
    if num_negatives:
        negatives = np.random.default_rng(seed).integers(1, ITEMS + 1, size=(len(batch), num_negatives))
        batch = batch.with_negatives(negatives)
    return batch


def _nets(seed: int = 0, kind: str = "gru") -> MCRLNetworks:
    return MCRLNetworks.initialize(ITEMS, kind=kind, seed=seed, window=WINDOW)


def _constant_head(head, value) -> None:
    head["w2"].values[...] = 0.0
    head["b2"].values[...] = value


def test_expectile_at_half_is_half_square() -> None:
    u = np.random.default_rng(0).normal(size=100)
    loss = expectile_loss(constant(u), 0.5).values
    np.testing.assert_allclose(loss, 0.5 * u * u, rtol=0, atol=1e-12)


def test_expectile_symmetry() -> None:
    u = np.random.default_rng(1).normal(size=100)
    np.testing.assert_allclose(
        expectile_loss(constant(u), 0.7).values,
        expectile_loss(constant(-u), 0.3).values,
        rtol=0,
        atol=1e-12,
    )


def test_expectile_asymmetry() -> None:
    loss = expectile_loss(constant(np.array([1.0, -1.0, 0.0])), 0.7).values
    np.testing.assert_allclose(loss, [0.7, 0.3, 0.0])


@pytest.mark.parametrize("tau", [0.0, 1.0, 1.5])
def test_expectile_rejects_tau(tau: float) -> None:
    with pytest.raises(ValueError):
        expectile_loss(constant(np.ones(2)), tau)


def test_value_loss_example(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.value.mlp, 0.0)
    _constant_head(nets.target.mlp, 0.0)
    batch = _batch(toy_table)
    batch.rewards = np.ones(len(batch))
    loss = value_loss(batch, nets.value, nets.target, TrainConfig(gamma=0.0, expectile=0.5))
    assert loss.item() == pytest.approx(0.5, abs=1e-12)


def test_value_loss_masks_terminals(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.value.mlp, 0.0)
    _constant_head(nets.target.mlp, 2.0)
    batch = _batch(toy_table)
    cfg = TrainConfig(gamma=0.5, expectile=0.5)
    continuing = (~batch.terminals).astype(float)
    expected = np.mean(0.5 * (batch.rewards + 0.5 * 2.0 * continuing) ** 2)
    assert value_loss(batch, nets.value, nets.target, cfg).item() == pytest.approx(expected)


def test_extraction_weights(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.target.mlp, -5.0)
    batch = _batch(toy_table)
    raw = extraction_weights(batch, nets.target, TrainConfig(gamma=0.5))
    expected = batch.rewards + 0.5 * (~batch.terminals) * -5.0
    np.testing.assert_allclose(raw, expected)
    clamped = extraction_weights(batch, nets.target, TrainConfig(gamma=0.5, clamp_weight=True))
    np.testing.assert_allclose(clamped, np.maximum(expected, 0.0))
    assert np.all(extraction_weights(batch, nets.target, TrainConfig(supervised=True)) == 1.0)


def test_unit_weights_give_plain_cross_entropy(toy_table: TransitionTable) -> None:
    nets = _nets(seed=2)
    batch = _batch(toy_table)
    z = nets.policy.encode(batch.states)
    extracted = policy_extraction_loss(batch, nets.target, nets.policy, TrainConfig(supervised=True), z=z)
    plain = F.cross_entropy(nets.policy.policy_logits(z), batch.actions - 1)
    assert extracted.item() == plain.item()


def test_reward_loss_with_uniform_logits(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.policy.reward_head, 0.0)
    loss = reward_contrastive_loss(_batch(toy_table, num_negatives=30), nets.policy)
    assert loss.item() == pytest.approx(31 * math.log(3), abs=1e-9)
    positives_only = reward_contrastive_loss(_batch(toy_table), nets.policy, contrastive=False)
    assert positives_only.item() == pytest.approx(math.log(3), abs=1e-12)


def test_reward_loss_hand_computed(toy_table: TransitionTable) -> None:
    nets = _nets(seed=3)
    batch = _batch(toy_table, num_negatives=2)
    z = nets.policy.encode(batch.states)
    logits = nets.policy.reward_logits(z, batch.actions).values
    labels = np.where(batch.purchases, 2, 1)
    log_probs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    expected = -log_probs[np.arange(len(batch)), labels]
    for column in range(2):
        negative = nets.policy.reward_logits(z, batch.negatives[:, column]).values
        expected = expected - (negative[:, 0] - np.log(np.exp(negative).sum(axis=1)))
    loss = reward_contrastive_loss(batch, nets.policy, z=z)
    assert loss.item() == pytest.approx(expected.mean(), rel=1e-12)


@pytest.mark.parametrize("m", [1, 5, 30])
def test_infonce_with_equal_similarities(toy_table: TransitionTable, m: int) -> None:
    nets = _nets()
    _constant_head(nets.policy.transition_head, np.linspace(-1.0, 1.0, 64))
    loss = transition_infonce_loss(_batch(toy_table, num_negatives=m), nets.policy)
    assert loss.item() == pytest.approx(math.log(m + 1), abs=1e-9)


def test_infonce_without_negatives_is_cosine_distance(toy_table: TransitionTable) -> None:
    nets = _nets(seed=4)
    batch = _batch(toy_table)
    predicted = nets.policy.predict_next(nets.policy.encode(batch.states), batch.actions).values
    actual = nets.policy.encode(batch.next_states).values
    cosine = (predicted * actual).sum(axis=1) / (
        np.linalg.norm(predicted, axis=1) * np.linalg.norm(actual, axis=1)
    )
    loss = transition_infonce_loss(batch, nets.policy, contrastive=False)
    assert loss.item() == pytest.approx(np.mean(1.0 - cosine), rel=1e-12)


def test_infonce_is_non_negative(toy_table: TransitionTable) -> None:
    loss = transition_infonce_loss(_batch(toy_table, num_negatives=5), _nets(seed=5).policy)
    assert loss.item() >= 0.0


def test_contrastive_losses_need_negatives(toy_table: TransitionTable) -> None:
    nets = _nets()
    with pytest.raises(ValueError):
        reward_contrastive_loss(_batch(toy_table), nets.policy)
    with pytest.raises(ValueError):
        transition_infonce_loss(_batch(toy_table), nets.policy)


def test_next_state_encoding_is_a_constant_by_default(toy_table: TransitionTable) -> None:
    batch = _batch(toy_table, num_negatives=3)
    grads = []
    for through in (False, True):
        nets = _nets(seed=6)
        weight = nets.policy.encoder.item_embedding
        with Tape() as tape:
            loss = transition_infonce_loss(batch, nets.policy, grad_through_next_state=through)
        tape.backward(loss)
        grads.append(weight.grad.copy())
    assert not np.allclose(grads[0], grads[1])


def test_combine_losses_example() -> None:
    total = combine_losses(1.0, constant(2.0), constant(1.0), constant(3.4))
    assert total.item() == pytest.approx(6.4)
    assert combine_losses(0.5, constant(2.0)).item() == 1.0


def test_combined_objective_components(toy_table: TransitionTable) -> None:
    nets = _nets()
    batch = _batch(toy_table, num_negatives=4)
    full = combined_policy_loss(batch, nets, TrainConfig())
    assert set(full.components()) == {"policy_loss", "reward_loss", "transition_loss", "combined"}
    assert full.total.item() == pytest.approx(
        full.policy.item() + full.reward.item() + full.transition.item()
    )
    state_only = combined_policy_loss(batch, nets, TrainConfig(use_reward_model=False))
    assert state_only.reward is None and state_only.transition is not None
    plain = combined_policy_loss(_batch(toy_table), nets, TrainConfig(supervised=True))
    assert set(plain.components()) == {"policy_loss", "combined"}
    assert plain.total.item() == plain.policy.item()


def test_objectives_do_not_touch_the_target(toy_table: TransitionTable) -> None:
    nets = _nets()
    batch = _batch(toy_table, num_negatives=4)
    with Tape() as tape:
        objective = combined_policy_loss(batch, nets, TrainConfig())
    tape.backward(objective.total)
    assert all(not np.any(p.grad) for p in nets.target.parameters().values())


def _amplify(params) -> None:
    with no_grad():
        for weight in params.values():
            weight.values *= 10.0


def test_policy_objective_gradients(toy_table: TransitionTable) -> None:
    nets = _nets(seed=7)
    _amplify(nets.policy.parameters())
    batch = _batch(toy_table, num_negatives=3, seed=1)
    cfg = TrainConfig(grad_through_next_state=True)
    errors = check_gradients(
        lambda: combined_policy_loss(batch, nets, cfg).total,
        nets.policy.parameters(),
        max_entries=6,
        seed=2,
    )
    assert max(errors.values()) < 1e-3, errors


def test_value_loss_gradients(toy_table: TransitionTable) -> None:
    nets = _nets(seed=8)
    _amplify(nets.value.parameters())
    batch = _batch(toy_table)
    cfg = TrainConfig()
    errors = check_gradients(
        lambda: value_loss(batch, nets.value, nets.target, cfg),
        nets.value.parameters(),
        max_entries=6,
        seed=3,
    )
    assert max(errors.values()) < 1e-3, errors


def test_value_loss_hand_trace(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.value.mlp, 0.6)
    _constant_head(nets.target.mlp, 0.4)
    batch = Batch.from_table(toy_table, np.arange(3))
    batch.rewards = np.array([0.2, 1.0, 0.2])
    batch.terminals = np.array([False, False, True])
    # residuals -0.2, 0.6, -0.4 weighted 0.3, 0.7, 0.3
    loss = value_loss(batch, nets.value, nets.target, TrainConfig(gamma=0.5, expectile=0.7))
    assert loss.item() == pytest.approx((0.3 * 0.04 + 0.7 * 0.36 + 0.3 * 0.16) / 3, abs=1e-12)


def test_value_loss_with_zero_residual(toy_table: TransitionTable) -> None:
    nets = _nets()
    _constant_head(nets.value.mlp, 0.4)
    _constant_head(nets.target.mlp, 0.4)
    batch = Batch.from_table(toy_table, np.arange(2))
    batch.rewards = np.array([0.2, 0.4])
    batch.terminals = np.array([False, True])
    assert value_loss(batch, nets.value, nets.target, TrainConfig(gamma=0.5)).item() == 0.0


def _two_transitions(items, purchases) -> Batch:
    table = TransitionTable.from_sessions([make_session("t", items, purchases)], window=WINDOW)
    return Batch.from_table(table, np.arange(len(table)))


def test_extraction_hand_trace() -> None:
    nets = MCRLNetworks.initialize(2, seed=1, window=WINDOW)
    nets.policy.policy_head["w"].values[...] = 0.0
    nets.policy.policy_head["b"].values[...] = [1.0, -1.0]
    _constant_head(nets.target.mlp, 0.5)
    # actions 2 then 1, rewards 0.2 then 1.0, the second transition ends the session
    batch = _two_transitions([1, 2, 1], [False, False, True])
    weights = np.array([0.2 + 0.5 * 0.5, 1.0])
    cross_entropy = np.array([math.log1p(math.exp(2.0)), math.log1p(math.exp(-2.0))])
    loss = policy_extraction_loss(batch, nets.target, nets.policy, TrainConfig(gamma=0.5))
    assert loss.item() == pytest.approx(np.mean(weights * cross_entropy), abs=1e-12)


def test_extraction_with_zero_weights(toy_table: TransitionTable) -> None:
    nets = _nets(seed=9)
    batch = _batch(toy_table)
    batch.rewards = np.zeros(len(batch))
    _constant_head(nets.target.mlp, 0.0)
    with Tape() as tape:
        loss = policy_extraction_loss(batch, nets.target, nets.policy, TrainConfig())
    tape.backward(loss)
    assert loss.item() == 0.0
    assert all(not np.any(p.grad) for p in nets.policy.parameters().values())


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _cosine(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return (u * v).sum(axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))


def test_all_losses_hand_trace() -> None:
    nets = MCRLNetworks.initialize(3, seed=2, window=WINDOW)
    _constant_head(nets.value.mlp, 0.6)
    _constant_head(nets.target.mlp, 0.4)
    nets.policy.policy_head["w"].values[...] = 0.0
    nets.policy.policy_head["b"].values[...] = [0.5, -0.5, 1.0]
    reward_bias = np.array([0.1, 0.5, -0.3])
    _constant_head(nets.policy.reward_head, reward_bias)
    # actions 2 (click) then 3 (purchase, terminal); one negative each
    batch = _two_transitions([1, 2, 3], [False, False, True]).with_negatives(np.array([[3], [1]]))
    cfg = TrainConfig(gamma=0.5, expectile=0.7, temperature=0.5, alpha=0.7, num_negatives=1)

    # residuals 0.2 + 0.2 - 0.6 = -0.2 and 1.0 - 0.6 = 0.4
    expected_value = (0.3 * 0.04 + 0.7 * 0.16) / 2
    policy_log_probs = _log_softmax(np.array([0.5, -0.5, 1.0]))
    expected_policy = -(0.4 * policy_log_probs[1] + 1.0 * policy_log_probs[2]) / 2
    reward_log_probs = _log_softmax(reward_bias)
    expected_reward = -(reward_log_probs[1] + reward_log_probs[2]) / 2 - reward_log_probs[0]
    with no_grad():
        z = nets.policy.encode(batch.states)
        predicted = nets.policy.predict_next(z, batch.actions).values
        predicted_negative = nets.policy.predict_next(z, batch.negatives[:, 0]).values
        z_next = nets.policy.encode(batch.next_states).values
    similarities = np.stack([_cosine(predicted, z_next), _cosine(predicted_negative, z_next)], axis=1)
    expected_transition = -np.mean(_log_softmax(similarities / 0.5)[:, 0])

    assert value_loss(batch, nets.value, nets.target, cfg).item() == pytest.approx(
        expected_value, abs=1e-12
    )
    objective = combined_policy_loss(batch, nets, cfg)
    assert objective.policy.item() == pytest.approx(expected_policy, abs=1e-12)
    assert objective.reward.item() == pytest.approx(expected_reward, abs=1e-12)
    assert objective.transition.item() == pytest.approx(expected_transition, abs=1e-12)
    assert objective.total.item() == pytest.approx(
        0.7 * expected_policy + expected_reward + expected_transition, abs=1e-12
    )


def test_zero_alpha_leaves_auxiliary_terms(toy_table: TransitionTable) -> None:
    nets = _nets(seed=10)
    batch = _batch(toy_table, num_negatives=3)
    objective = combined_policy_loss(batch, nets, TrainConfig(alpha=0.0))
    assert objective.total.item() == pytest.approx(
        objective.reward.item() + objective.transition.item(), abs=1e-12
    )
