"""Tensor engine: ops, tape backward, grad check, Adam, checkpoints."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphreader.errors import (ContractError, DimensionError,
                                EmptySupportError, NonFiniteError)
from graphreader.numeric import (Adam, Tape, Tensor, grad_check,
                                 load_checkpoint, ops, save_checkpoint)


def t(data, grad=True):
    return Tensor(np.asarray(data, dtype=float), requires_grad=grad)


class TestMatmul:
    def test_identity(self):
        a = t([[1.0, 2.0], [3.0, 4.0]])
        eye = t(np.eye(2))
        assert np.array_equal(ops.matmul(eye, a).data, a.data)

    def test_hand_computed(self):
        out = ops.matmul(t([[1.0, 2.0]]), t([[3.0], [4.0]]))
        assert out.data.tolist() == [[11.0]]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            ops.matmul(t(np.zeros((2, 3))), t(np.zeros((2, 3))))


class TestMaskedSoftmax:
    def test_uniform(self):
        out = ops.masked_softmax(t([0.0, 0.0, 0.0]), [True] * 3)
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-12)

    def test_analytic(self):
        out = ops.masked_softmax(t([math.log(2.0), 0.0]), [True, True])
        np.testing.assert_allclose(out.data, [2 / 3, 1 / 3], atol=1e-12)

    def test_masked_positions_exact_zero(self):
        out = ops.masked_softmax(t([5.0, 7.0]), [True, False])
        assert out.data[1] == 0.0
        assert out.data[0] == 1.0

    def test_all_false_mask(self):
        with pytest.raises(EmptySupportError):
            ops.masked_softmax(t([1.0, 2.0]), [False, False])

    def test_large_masked_value_stays_finite(self):
        out = ops.masked_softmax(t([0.0, 1e9]), [True, False])
        assert out.data.tolist() == [1.0, 0.0]

    @given(st.lists(st.floats(-30, 30), min_size=1, max_size=12), st.data())
    @settings(max_examples=60, deadline=None)
    def test_sums_to_one_and_permutation_equivariant(self, values, data):
        mask = data.draw(
            st.lists(st.booleans(), min_size=len(values), max_size=len(values)))
        if not any(mask):
            mask[0] = True
        x = np.asarray(values)
        out = ops.masked_softmax(t(x), mask).data
        assert abs(out.sum() - 1.0) < 1e-9
        perm = data.draw(st.permutations(range(len(values))))
        perm = np.asarray(perm)
        out_p = ops.masked_softmax(t(x[perm]), np.asarray(mask)[perm]).data
        np.testing.assert_allclose(out_p, out[perm], atol=1e-12)


class TestBackward:
    def test_sum_of_squares(self):
        x = t([1.0, -2.0])
        with Tape() as tape:
            loss = ops.sum_all(ops.mul(x, x))
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, [2.0, -4.0])

    def test_log_softmax_pick_matches_finite_differences(self):
        x = t([0.3, -1.2, 0.7, 0.1])

        def f(v):
            return ops.neg(ops.log(ops.pick(
                ops.masked_softmax(v, np.ones(4, dtype=bool)), 2)))

        assert grad_check(f, x, step=1e-5) < 1e-4

    def test_disconnected_leaf_gets_zero(self):
        x = t([1.0, 2.0])
        unused = t([5.0])
        unused.zero_grad()
        with Tape() as tape:
            loss = ops.sum_all(x)
            tape.backward(loss)
        assert np.array_equal(unused.grad, [0.0])

    def test_non_scalar_loss_rejected(self):
        x = t([1.0, 2.0])
        with Tape() as tape:
            y = ops.mul(x, x)
            with pytest.raises(ContractError):
                tape.backward(y)

    def test_fanout_accumulates(self):
        x = t([2.0])
        with Tape() as tape:
            loss = ops.sum_all(ops.add(ops.mul(x, x), ops.mul(x, x)))
            tape.backward(loss)
        np.testing.assert_allclose(x.grad, [8.0])


class TestGradCheck:
    def test_linear_is_exact(self):
        x = t([0.5, -0.25, 2.0])

        def f(v):
            return ops.sum_all(ops.scale(v, 3.0))

        assert grad_check(f, x) < 1e-8

    def test_doubled_gradient_reports_half(self):
        from graphreader.numeric.tensor import active_tape

        x = t([1.5, 0.5])

        def f(v):
            out = Tensor(np.asarray((v.data ** 2).sum()), requires_grad=True)
            tape = active_tape()
            if tape is not None:
                # deliberately double the true gradient 2v
                tape.record("bad", (v,), out, lambda dout: (4.0 * v.data * float(dout),))
            return out

        assert abs(grad_check(f, x) - 0.5) < 1e-6

    def test_nonfinite_evaluation_raises(self):
        x = t([0.0])

        def f(v):
            return ops.log(v)

        with pytest.raises(NonFiniteError):
            grad_check(f, x)


def _rand(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


@pytest.mark.parametrize("seed", range(10))
def test_primitive_op_gradients(seed):
    """Every primitive op's rule against central differences, per seed."""
    rng = np.random.default_rng(seed)
    a = _rand(rng, (3, 4))
    b = _rand(rng, (3, 4))
    c = _rand(rng, (4, 2))
    v = _rand(rng, (6,))
    bias = _rand(rng, (4,))
    # keep leaky_relu inputs away from the kink so central differences hold
    a.data[np.abs(a.data) < 0.05] += 0.1

    cases = {
        "add": (lambda: ops.sum_all(ops.tanh(ops.add(a, b))), [a, b]),
        "add_broadcast": (lambda: ops.sum_all(ops.tanh(ops.add(a, bias))), [a, bias]),
        "sub": (lambda: ops.sum_all(ops.tanh(ops.sub(a, b))), [a, b]),
        "mul": (lambda: ops.sum_all(ops.tanh(ops.mul(a, b))), [a, b]),
        "neg": (lambda: ops.sum_all(ops.tanh(ops.neg(a))), [a]),
        "scale": (lambda: ops.sum_all(ops.tanh(ops.scale(a, -1.7))), [a]),
        "matmul": (lambda: ops.sum_all(ops.tanh(ops.matmul(a, c))), [a, c]),
        "transpose": (lambda: ops.sum_all(ops.tanh(ops.transpose(a))), [a]),
        "reshape": (lambda: ops.sum_all(ops.tanh(ops.reshape(a, (4, 3)))), [a]),
        "concat0": (lambda: ops.sum_all(ops.tanh(ops.concat([a, b], axis=0))), [a, b]),
        "concat1": (lambda: ops.sum_all(ops.tanh(ops.concat([a, b], axis=1))), [a, b]),
        "slice_rows": (lambda: ops.sum_all(ops.slice_rows(a, 1, 3)), [a]),
        "slice_cols": (lambda: ops.sum_all(ops.slice_cols(a, 1, 4)), [a]),
        "gather_rows": (lambda: ops.sum_all(ops.gather_rows(a, [0, 2, 2, 1])), [a]),
        "sum_axis": (lambda: ops.sum_all(ops.tanh(ops.sum_axis(a, 1))), [a]),
        "pick": (lambda: ops.pick(v, 3), [v]),
        "vec_max": (lambda: ops.vec_max(v), [v]),
        "tanh": (lambda: ops.sum_all(ops.tanh(a)), [a]),
        "sigmoid": (lambda: ops.sum_all(ops.sigmoid(a)), [a]),
        "exp": (lambda: ops.sum_all(ops.exp(a)), [a]),
        "log": (lambda: ops.sum_all(ops.log(ops.exp(a))), [a]),
        "leaky_relu": (lambda: ops.sum_all(ops.leaky_relu(a)), [a]),
        "softmax_rows": (lambda: ops.sum_all(ops.mul(ops.softmax_rows(a),
                                                     ops.softmax_rows(a))), [a]),
        "masked_softmax": (
            lambda: ops.sum_all(ops.mul(
                ops.masked_softmax(v, [True, False, True, True, False, True]),
                ops.masked_softmax(v, [True, False, True, True, False, True]))),
            [v]),
    }
    for name, (f, wrt) in cases.items():
        err = grad_check(lambda *_: f(), wrt, step=1e-5, floor=1e-6)
        assert err < 1e-4, f"{name}: rel err {err:.2e}"


def test_softmax_rows_row_stochastic():
    rng = np.random.default_rng(0)
    out = ops.softmax_rows(Tensor(rng.normal(size=(7, 5)) * 10)).data
    np.testing.assert_allclose(out.sum(axis=1), np.ones(7), atol=1e-9)


def test_forward_nonfinite_is_an_error():
    with pytest.raises(NonFiniteError):
        ops.exp(Tensor(np.array([1000.0])))


class TestAdam:
    def test_zero_grad_leaves_params_unchanged(self):
        p = t([1.0, -2.0])
        opt = Adam({"p": p})
        opt.zero_grad()
        opt.step()
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        p = t([1.0, -1.0])
        p.grad = np.array([0.3, -0.7])
        opt = Adam({"p": p}, lr=1e-3)
        opt.step()
        np.testing.assert_allclose(p.data, [1.0 - 1e-3, -1.0 + 1e-3], rtol=1e-4)

    def test_converges_on_quadratic(self):
        w = t([1.0])
        opt = Adam({"w": w}, lr=0.1)
        for _ in range(200):
            opt.zero_grad()
            with Tape() as tape:
                loss = ops.sum_all(ops.mul(w, w))
                tape.backward(loss)
            opt.step()
        assert abs(w.data[0]) < 0.1

    def test_missing_grad_is_contract_error(self):
        p = t([1.0])
        opt = Adam({"p": p})
        with pytest.raises(ContractError):
            opt.step()


def test_tape_replay_is_deterministic():
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(4, 4)), requires_grad=True)

    def run():
        with Tape() as tape:
            loss = ops.sum_all(ops.tanh(ops.matmul(x, x)))
            tape.backward(loss)
        g = x.grad.copy()
        x.grad = None
        return loss.item(), g

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)


def test_checkpoint_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(9)
    params = {"a.w": Tensor(rng.normal(size=(3, 5))), "b": Tensor(rng.normal(size=(7,)))}
    path = tmp_path / "ck.npz"
    save_checkpoint(path, params, meta={"note": "x"})
    arrays, meta = load_checkpoint(path)
    assert meta["format_version"] == 1
    assert meta["note"] == "x"
    for k, p in params.items():
        assert np.array_equal(arrays[k], p.data)
