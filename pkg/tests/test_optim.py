"""Optimizer tests against hand-derived recurrences and a scalar reference
implementation written without the Tensor class."""

import math

import numpy as np
import pytest

from emodarts import (Adam, ContractViolation, CosineSchedule, SGD, Tensor,
                      clip_grad_norm, cosine_lr)


def param(v):
    t = Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
    return t


def test_sgd_single_step_plain():
    p = param([1.0])
    p.grad = np.array([1.0])
    SGD([p], lr=0.1, momentum=0.0, weight_decay=0.0).step()
    assert p.data[0] == pytest.approx(0.9)


def test_sgd_two_momentum_steps_reach_minus_029():
    # v1 = 1, p = -0.1; v2 = 0.9 + 1 = 1.9, p = -0.1 - 0.19 = -0.29
    p = param([0.0])
    opt = SGD([p], lr=0.1, momentum=0.9, weight_decay=0.0)
    for _ in range(2):
        p.grad = np.array([1.0])
        opt.step()
    assert p.data[0] == pytest.approx(-0.29, abs=1e-12)


def test_sgd_weight_decay_adds_to_gradient():
    p = param([2.0])
    p.grad = np.array([0.0])
    SGD([p], lr=0.1, momentum=0.0, weight_decay=3e-4).step()
    assert p.data[0] == pytest.approx(2.0 - 0.1 * 3e-4 * 2.0, rel=1e-12)


def test_adam_first_step_magnitude():
    # with g=1 the bias-corrected update is exactly -lr / (1 + eps)
    p = param([0.0])
    opt = Adam([p], lr=3e-4, weight_decay=0.0)
    p.grad = np.array([1.0])
    opt.step()
    assert p.data[0] == pytest.approx(-3e-4, rel=1e-6)


def test_adam_zero_grad_no_decay_leaves_params_unchanged():
    p = param([1.5, -2.0])
    opt = Adam([p], lr=3e-4, weight_decay=0.0)
    for _ in range(5):
        p.grad = np.zeros(2)
        opt.step()
    np.testing.assert_array_equal(p.data, [1.5, -2.0])


def test_adam_ten_steps_match_scalar_reference():
    """Reference Adam written on plain floats, no shared code."""

    def reference(grads, lr=3e-4, b1=0.9, b2=0.999, eps=1e-8, wd=1e-3):
        p, m, v = 0.7, 0.0, 0.0
        for t, g0 in enumerate(grads, start=1):
            g = g0 + wd * p
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mh = m / (1 - b1 ** t)
            vh = v / (1 - b2 ** t)
            p -= lr * mh / (math.sqrt(vh) + eps)
        return p

    rng = np.random.default_rng(42)
    grads = rng.normal(size=10)
    p = param([0.7])
    opt = Adam([p], lr=3e-4, weight_decay=1e-3)
    for g in grads:
        p.grad = np.array([g])
        opt.step()
    assert p.data[0] == pytest.approx(reference(grads), abs=1e-12)


def test_missing_gradient_is_a_contract_violation():
    p = param([1.0])
    with pytest.raises(ContractViolation):
        SGD([p], lr=0.1).step()
    with pytest.raises(ContractViolation):
        Adam([p]).step()


def test_cosine_schedule_pinned_values():
    sched = CosineSchedule(lr_max=0.025, lr_min=0.001, total_epochs=300)
    assert cosine_lr(sched, 0) == pytest.approx(0.025)
    assert cosine_lr(sched, 300) == pytest.approx(0.001)
    assert cosine_lr(sched, 150) == pytest.approx(0.013)


def test_cosine_schedule_is_monotone_decreasing():
    sched = CosineSchedule(0.025, 0.001, 300)
    lrs = [cosine_lr(sched, e) for e in range(301)]
    assert all(a > b for a, b in zip(lrs, lrs[1:]))


def test_cosine_schedule_rejects_out_of_range_epoch():
    sched = CosineSchedule(0.025, 0.001, 300)
    with pytest.raises(ContractViolation):
        cosine_lr(sched, 301)
    with pytest.raises(ContractViolation):
        cosine_lr(sched, -1)


def test_clip_grad_norm_scales_jointly():
    p1, p2 = param([3.0]), param([4.0])
    p1.grad, p2.grad = np.array([3.0]), np.array([4.0])
    norm = clip_grad_norm([p1, p2], max_norm=1.0)
    assert norm == pytest.approx(5.0)
    joint = math.sqrt(float(p1.grad[0] ** 2 + p2.grad[0] ** 2))
    assert joint == pytest.approx(1.0, rel=1e-9)


def test_clip_grad_norm_below_threshold_is_identity():
    p = param([1.0])
    p.grad = np.array([0.5])
    clip_grad_norm([p], max_norm=5.0)
    assert p.grad[0] == pytest.approx(0.5)


def test_optimizers_keep_parameter_groups_disjoint():
    w, a = param([1.0]), param([1.0])
    sgd, adam = SGD([w], lr=0.1), Adam([a], lr=0.1, weight_decay=0.0)
    w.grad, a.grad = np.array([1.0]), np.array([1.0])
    sgd.step()
    assert a.data[0] == 1.0  # untouched by the weight optimizer
    adam.step()
    assert w.data[0] == pytest.approx(1.0 - 0.1 * (1.0 + 3e-4 * 1.0))
