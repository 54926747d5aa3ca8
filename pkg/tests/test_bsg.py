import numpy as np
import pytest

from dcornet.bsg import (
    DcorCoupling, QuadraticCoupling, bsg_train, constraint_subgrad, minibatch_stream,
)
from dcornet.dcor_core import dcor
from dcornet.diffgrad import dvar2_value_grad, finite_diff_check
from dcornet.models import BSGConfig
from dcornet.nn import backward, forward, forward_cache, init_mlp, sgd_step
from dcornet.utils import DegenerateError, InvalidInputError, make_rng

from conftest import assert_bitwise_equal


def _gaussian_batches(seed, count, m=8, p=3):
    rng = make_rng(seed, 5)
    return [(rng.standard_normal((m, p)), rng.standard_normal((m, p))) for _ in range(count)]


def _pair(seed, sizes=(3, 6, 4)):
    return init_mlp(list(sizes), make_rng(seed, 1)), init_mlp(list(sizes), make_rng(seed, 2))


def test_constraint_slack_gives_zero(rng):
    x = 0.01 * rng.standard_normal((10, 3))
    assert np.array_equal(constraint_subgrad(x, 10), np.zeros_like(x))


def test_constraint_constant_batch_gives_zero():
    assert np.array_equal(constraint_subgrad(np.full((6, 2), 3.0), 0.5), np.zeros((6, 2)))


def test_constraint_active_matches_finite_differences(rng):
    m = 8
    x = rng.standard_normal((m, 3))
    x *= np.sqrt(4 * m / dvar2_value_grad(x).value)
    assert dvar2_value_grad(x).value == pytest.approx(4 * m)

    def penalty(X):
        return max(0.0, dvar2_value_grad(X).value - m), constraint_subgrad(X, m)

    assert np.abs(constraint_subgrad(x, m)).max() > 0
    assert finite_diff_check(penalty, x, h=1e-6) < 1e-6


def test_config_validation():
    with pytest.raises(InvalidInputError):
        BSGConfig(eta=0.0, T=1, m=4)
    with pytest.raises(InvalidInputError):
        BSGConfig(eta=0.1, T=0, m=4)
    with pytest.raises(InvalidInputError):
        BSGConfig(eta=0.1, T=1, m=1)
    with pytest.raises(InvalidInputError):
        BSGConfig(eta=0.1, T=1, m=4, constraint_mode="project")
    assert BSGConfig(eta=1.0, T=400, m=4).step_size == pytest.approx(0.05)
    assert BSGConfig(eta=1.0, T=400, m=4, schedule="constant").step_size == 1.0


def test_single_step_returns_initial_average():
    fx, fy = _pair(0)
    avg_x, avg_y, trace = bsg_train(fx, fy, _gaussian_batches(0, 1), BSGConfig(eta=0.5, T=1, m=8))
    assert_bitwise_equal(avg_x, fx)
    assert_bitwise_equal(avg_y, fy)
    assert len(trace.records) == 1
    assert trace.records[0]["step"] == 1


class _FailingYPass(DcorCoupling):
    def __init__(self):
        super().__init__("ratio")
        self.calls = 0

    def value_grad(self, X, Y):
        self.calls += 1
        if self.calls == 2:
            raise DegenerateError("updated features collapsed")
        return super().value_grad(X, Y)


def test_failed_y_pass_leaves_both_blocks_untouched():
    fx, fy = _pair(4)
    cfg = BSGConfig(eta=0.5, T=1, m=8, constraint_mode="none")
    coupling = _FailingYPass()
    _, _, trace = bsg_train(fx, fy, _gaussian_batches(4, 1), cfg, coupling=coupling)
    assert coupling.calls == 2
    assert trace.skipped_steps == 1 and trace.records[0]["skipped"]
    assert_bitwise_equal(trace.final_x, fx)
    assert_bitwise_equal(trace.final_y, fy)


def test_stream_batch_size_is_enforced():
    fx, fy = _pair(0)
    with pytest.raises(InvalidInputError):
        bsg_train(fx, fy, _gaussian_batches(0, 1, m=6), BSGConfig(eta=0.5, T=1, m=8))


class _RecordingCoupling(DcorCoupling):
    def __init__(self):
        super().__init__("ratio")
        self.seen = []

    def value_grad(self, X, Y):
        self.seen.append(np.array(X))
        return super().value_grad(X, Y)


def test_y_gradient_sees_updated_x():
    fx, fy = _pair(1)
    batches = _gaussian_batches(1, 1)
    coupling = _RecordingCoupling()
    cfg = BSGConfig(eta=0.5, T=1, m=8, constraint_mode="none")
    _, _, trace = bsg_train(fx, fy, batches, cfg, coupling=coupling)
    assert len(coupling.seen) == 2
    assert np.array_equal(coupling.seen[0], forward(fx, batches[0][0])[1])
    assert np.array_equal(coupling.seen[1], forward(trace.final_x, batches[0][0])[1])
    assert not np.array_equal(coupling.seen[0], coupling.seen[1])


def test_average_is_mean_of_iterates():
    fx, fy = _pair(2)
    cfg = BSGConfig(eta=0.5, T=12, m=8, keep_iterates=True)
    avg_x, avg_y, trace = bsg_train(fx, fy, _gaussian_batches(2, 12), cfg)
    assert len(trace.iterates) == 12
    assert_bitwise_equal(trace.iterates[0][0], fx)
    for i, (w, b) in enumerate(avg_x.layers):
        mean_w = np.mean([it[0].layers[i][0] for it in trace.iterates], axis=0)
        mean_b = np.mean([it[0].layers[i][1] for it in trace.iterates], axis=0)
        assert np.allclose(w, mean_w, rtol=0, atol=1e-12)
        assert np.allclose(b, mean_b, rtol=0, atol=1e-12)
    for i, (w, _) in enumerate(avg_y.layers):
        mean_w = np.mean([it[1].layers[i][0] for it in trace.iterates], axis=0)
        assert np.allclose(w, mean_w, rtol=0, atol=1e-12)


def test_unconstrained_constant_schedule_is_alternating_sgd():
    fx, fy = _pair(3)
    batches = _gaussian_batches(3, 6)
    lr = 0.3
    cfg = BSGConfig(eta=lr, T=6, m=8, constraint_mode="none", schedule="constant")
    _, _, trace = bsg_train(fx, fy, batches, cfg)

    coupling = DcorCoupling("ratio")
    px, py = fx, fy
    for xb, yb in batches:
        _, feat_x, cache_x = forward_cache(px, xb)
        _, feat_y, cache_y = forward_cache(py, yb)
        _, g_x, _ = coupling.value_grad(feat_x, feat_y)
        px = sgd_step(px, backward(px, cache_x, None, g_x)[0], lr)
        _, feat_x, _ = forward_cache(px, xb)
        _, _, g_y = coupling.value_grad(feat_x, feat_y)
        py = sgd_step(py, backward(py, cache_y, None, g_y)[0], lr)

    assert_bitwise_equal(trace.final_x, px)
    assert_bitwise_equal(trace.final_y, py)


def test_degenerate_batches_are_skipped():
    fx, fy = _pair(4)
    batches = [(np.zeros((8, 3)), np.zeros((8, 3)))] * 3
    cfg = BSGConfig(eta=0.5, T=3, m=8)
    avg_x, _, trace = bsg_train(fx, fy, batches, cfg)
    assert trace.skipped_steps == 3
    assert all(r["skipped"] for r in trace.records)
    assert_bitwise_equal(avg_x, fx)


def test_trace_every_keeps_last_step():
    fx, fy = _pair(5)
    cfg = BSGConfig(eta=0.5, T=5, m=8, trace_every=2)
    _, _, trace = bsg_train(fx, fy, _gaussian_batches(5, 5), cfg)
    assert [r["step"] for r in trace.records] == [2, 4, 5]


def test_quadratic_surrogate_converges():
    # linear feature maps make the coupled objective convex
    rng = make_rng(6, 3)
    fx = init_mlp([3, 2], make_rng(6, 1))
    fy = init_mlp([3, 2], make_rng(6, 2))
    stream = minibatch_stream(rng.standard_normal((64, 3)), rng.standard_normal((64, 3)), 8, rng)
    cfg = BSGConfig(eta=1.0, T=400, m=8, constraint_mode="none")
    coupling = QuadraticCoupling(mu=1.0)
    avg_x, avg_y, trace = bsg_train(fx, fy, stream, cfg, coupling=coupling)

    held_out = make_rng(6, 4).standard_normal((16, 3))
    before = coupling.value_grad(forward(fx, held_out)[1], forward(fy, held_out)[1])[0]
    after = coupling.value_grad(forward(avg_x, held_out)[1], forward(avg_y, held_out)[1])[0]
    assert after < before
    first, last = trace.records[0], trace.records[-1]
    assert last["grad_norm_x"] < 0.1 * first["grad_norm_x"]
    assert last["grad_norm_y"] < 0.1 * first["grad_norm_y"]


def test_quadratic_coupling_gradients(rng):
    x, y = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    coupling = QuadraticCoupling(mu=0.5)
    assert finite_diff_check(lambda X: coupling.value_grad(X, y)[:2], x) < 1e-8
    assert finite_diff_check(lambda Y: coupling.value_grad(x, Y)[::2], y) < 1e-8


def test_inner_objective_uses_dcov(rng):
    x, y = rng.standard_normal((9, 2)), rng.standard_normal((9, 3))
    value, _, _ = DcorCoupling("inner").value_grad(x, y)
    assert value == pytest.approx(dcor(x, y).dcov2, rel=1e-12)


def test_minibatch_stream_covers_each_epoch(rng):
    x = np.arange(12, dtype=float)[:, None]
    stream = minibatch_stream(x, x, 4, rng)
    seen = np.concatenate([next(stream)[0] for _ in range(3)]).ravel()
    assert sorted(seen) == list(range(12))
    with pytest.raises(InvalidInputError):
        next(minibatch_stream(x, x, 20, rng))


@pytest.mark.slow
def test_dcor_minimization_halves_dependence():
    rng = make_rng(7, 3)
    x = rng.standard_normal((512, 4))
    fx = init_mlp([4, 16, 2], make_rng(7, 1), feature_tap=1)
    fy = init_mlp([4, 16, 2], make_rng(7, 2), feature_tap=1)
    before = dcor(forward(fx, x)[1], forward(fy, x)[1]).dcor
    cfg = BSGConfig(eta=0.5, T=500, m=32)
    _, _, trace = bsg_train(fx, fy, minibatch_stream(x, x, 32, rng), cfg)
    # whole sample: at m=32 the V-statistic bias alone sits near half the starting value
    after = dcor(forward(trace.final_x, x)[1], forward(trace.final_y, x)[1]).dcor
    assert after < 0.5 * before
