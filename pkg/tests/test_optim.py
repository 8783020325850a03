import numpy as np
import pytest

from taskhg.errors import DivergenceError
from taskhg.gradients import GradientTape
from taskhg.model import EmbeddingTable
from taskhg.optim import AdamState, adam_step


def scalar_table(u=0.0, i=0.0):
    return EmbeddingTable(np.array([[u]]), np.array([[i]]))


def test_first_step_analytic():
    # With g=1 the bias-corrected moments are both exactly 1, so the update
    # is -lr * 1 / (1 + eps) ~ -lr.
    table = scalar_table()
    state = AdamState.for_params({"user": table.user_emb, "item": table.item_emb}, lr=0.001)
    tape = GradientTape(np.array([[1.0]]), np.array([[0.0]]), 0.0)
    adam_step(state, tape, table)
    assert state.step_count == 1
    assert table.user_emb[0, 0] == pytest.approx(-0.001, rel=1e-7)
    assert table.item_emb[0, 0] == 0.0


def test_zero_gradient_is_noop():
    table = scalar_table(0.5, -0.25)
    state = AdamState.for_params({"user": table.user_emb, "item": table.item_emb})
    tape = GradientTape(np.zeros((1, 1)), np.zeros((1, 1)), 0.0)
    adam_step(state, tape, table)
    assert table.user_emb[0, 0] == 0.5
    assert table.item_emb[0, 0] == -0.25
    assert state.step_count == 1


def test_identical_runs_identical_trajectories():
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=(3, 2)) for _ in range(10)]

    def run():
        table = EmbeddingTable(np.ones((3, 2)), np.ones((2, 2)))
        state = AdamState.for_params({"user": table.user_emb, "item": table.item_emb}, lr=0.05)
        for g in grads:
            tape = GradientTape(g.copy(), np.zeros((2, 2)), 0.0)
            adam_step(state, tape, table)
        return table.user_emb.copy()

    assert np.array_equal(run(), run())


def test_nonfinite_gradient_names_block():
    table = scalar_table()
    state = AdamState.for_params({"user": table.user_emb, "item": table.item_emb})
    tape = GradientTape(np.array([[np.nan]]), np.zeros((1, 1)), 0.0)
    with pytest.raises(DivergenceError, match="user"):
        adam_step(state, tape, table)


def test_extra_blocks_updated():
    table = scalar_table()
    extra = {"head": np.array([[1.0, 2.0]])}
    params = {"user": table.user_emb, "item": table.item_emb, **extra}
    state = AdamState.for_params(params, lr=0.1)
    tape = GradientTape(
        np.zeros((1, 1)), np.zeros((1, 1)), 0.0, extra={"head": np.array([[1.0, 0.0]])}
    )
    adam_step(state, tape, table, extra)
    assert extra["head"][0, 0] == pytest.approx(1.0 - 0.1, rel=1e-6)
    assert extra["head"][0, 1] == 2.0


def test_moments_start_at_zero_and_step_counts():
    params = {"user": np.zeros((2, 2)), "item": np.zeros((2, 2))}
    state = AdamState.for_params(params)
    assert all((m == 0).all() for m in state.first_moment.values())
    assert all((v == 0).all() for v in state.second_moment.values())
    for expected in (1, 2, 3):
        state.apply({"user": np.ones((2, 2)), "item": np.ones((2, 2))}, params)
        assert state.step_count == expected
