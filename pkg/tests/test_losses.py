import math

import numpy as np
import numpy.testing as npt
import pytest

from hetmoe import autodiff as ad
from hetmoe.errors import ContractError, ParameterError
from hetmoe.losses import LossWeights, diversity_penalty, entropy_penalty, total_loss


def simplex_rows(rng, b, k):
    raw = rng.uniform(0.1, 1.0, (b, k))
    return raw / raw.sum(axis=1, keepdims=True)


def test_loss_weights_defaults_and_validation():
    w = LossWeights()
    assert w.lambda_ent == 0.05
    assert w.lambda_div == 0.08
    with pytest.raises(ParameterError):
        LossWeights(lambda_ent=-0.1)


def test_entropy_penalty_one_hot_rows():
    G = ad.constant([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert float(entropy_penalty(G).data) == pytest.approx(0.0, abs=1e-9)


def test_entropy_penalty_uniform_rows():
    G = ad.constant(np.full((4, 2), 0.5))
    npt.assert_allclose(entropy_penalty(G).data, math.log(2.0), atol=1e-9)


def test_entropy_penalty_mixed_rows():
    # (0 + ln 2) / 2 by hand
    G = ad.constant([[1.0, 0.0], [0.5, 0.5]])
    npt.assert_allclose(entropy_penalty(G).data, 0.3466, atol=1e-4)


def test_entropy_penalty_bounds():
    rng = np.random.default_rng(0)
    for k in (2, 3, 5):
        for _ in range(50):
            G = ad.constant(simplex_rows(rng, 6, k))
            v = float(entropy_penalty(G).data)
            assert 0.0 <= v <= math.log(k) + 1e-12


def test_entropy_penalty_rejects_non_simplex_rows():
    with pytest.raises(ContractError):
        entropy_penalty(ad.constant([[0.5, 0.4]]))


def test_diversity_penalty_balanced_two_experts():
    G = ad.constant(np.full((6, 2), 0.5))
    assert float(diversity_penalty(G).data) == pytest.approx(0.5, abs=1e-12)


def test_diversity_penalty_single_expert_mass():
    G = ad.constant([[1.0, 0.0], [1.0, 0.0]])
    assert float(diversity_penalty(G).data) == pytest.approx(1.0, abs=1e-12)


def test_diversity_penalty_uniform_four_experts():
    G = ad.constant(np.full((3, 4), 0.25))
    assert float(diversity_penalty(G).data) == pytest.approx(0.25, abs=1e-12)


def test_diversity_penalty_hand_case():
    # usage (1.5, 0.5) -> shares (0.75, 0.25) -> 0.5625 + 0.0625
    G = ad.constant([[1.0, 0.0], [0.5, 0.5]])
    npt.assert_allclose(diversity_penalty(G).data, 0.625, atol=1e-12)


def test_diversity_penalty_bounds_and_monotonicity():
    rng = np.random.default_rng(1)
    for k in (2, 4):
        for _ in range(50):
            G = ad.constant(simplex_rows(rng, 5, k))
            v = float(diversity_penalty(G).data)
            assert 1.0 / k - 1e-12 <= v <= 1.0 + 1e-12
    # interpolating usage from skewed toward uniform strictly decreases the value
    skewed = np.array([[0.9, 0.1]] * 4)
    uniform = np.full((4, 2), 0.5)
    values = []
    for t in np.linspace(0.0, 1.0, 6):
        G = ad.constant((1 - t) * skewed + t * uniform)
        values.append(float(diversity_penalty(G).data))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_total_loss_zero_weights_is_task_loss_bitwise():
    task = ad.constant([1.2345])
    G = ad.constant([[0.5, 0.5]])
    out = total_loss(task, G, LossWeights(0.0, 0.0))
    assert out is task


def test_total_loss_one_hot_g_drops_entropy_term():
    task = ad.constant(np.array(2.0))
    G = ad.constant([[1.0, 0.0], [1.0, 0.0]])
    out = total_loss(task, G, LossWeights())
    npt.assert_allclose(out.data, 2.0 + 0.05 * 0.0 + 0.08 * 1.0, atol=1e-9)


def test_total_loss_assembled_value():
    # 1.0 + 0.05 * 0.3466 + 0.08 * 0.625
    task = ad.constant(np.array(1.0))
    G = ad.constant([[1.0, 0.0], [0.5, 0.5]])
    out = total_loss(task, G, LossWeights())
    npt.assert_allclose(out.data, 1.06733, atol=1e-4)


def test_penalty_gradients_match_finite_differences():
    rng = np.random.default_rng(2)
    logits = ad.parameter(rng.normal(0, 1.0, (4, 3)))

    def f_ent():
        return entropy_penalty(ad.softmax_temperature(logits, 1.0))

    def f_div():
        return diversity_penalty(ad.softmax_temperature(logits, 1.0))

    assert ad.finite_diff_check(f_ent, {"logits": logits}, 1e-5, 1e-5).passed
    assert ad.finite_diff_check(f_div, {"logits": logits}, 1e-5, 1e-5).passed


def test_total_loss_differentiable_through_all_terms():
    rng = np.random.default_rng(3)
    logits = ad.parameter(rng.normal(0, 1.0, (4, 2)))
    pred = ad.parameter(rng.normal(0, 1.0, (4,)))

    def f():
        G = ad.softmax_temperature(logits, 1.5)
        task = ad.mse(pred, np.array([0.5, -1.0, 2.0, 0.0]))
        return total_loss(task, G, LossWeights())

    report = ad.finite_diff_check(f, {"logits": logits, "pred": pred}, 1e-5, 1e-5)
    assert report.passed, repr(report)
