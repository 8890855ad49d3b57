import numpy as np
import pytest

from cfexplain.tensor import (
    Tensor,
    argmax,
    dot,
    elementwise_mul,
    load_tensor,
    reduce_max,
    reduce_sum,
    save_tensor,
)


def test_mul_scalar_cells():
    assert elementwise_mul(Tensor([2.0]), Tensor([3.0])).data.tolist() == [6.0]


def test_mul_zero_annihilation():
    out = elementwise_mul(Tensor([1.0, 0.0, 2.0]), Tensor([0.5, 9.0, 0.5]))
    assert out.data.tolist() == [0.5, 0.0, 1.0]


def test_mul_ones_identity_and_commutative(rng):
    x = Tensor(rng.normal(size=(3, 4)))
    ones = Tensor(np.ones((3, 4)))
    assert elementwise_mul(ones, x) == x
    y = Tensor(rng.normal(size=(3, 4)))
    assert elementwise_mul(x, y) == elementwise_mul(y, x)


def test_mul_shape_mismatch():
    with pytest.raises(ValueError):
        elementwise_mul(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))


def test_reductions():
    t = Tensor([0.2, 0.7, 0.1])
    assert reduce_max(t) == 0.7
    assert argmax(t) == 1
    assert reduce_sum(t) == pytest.approx(1.0, abs=1e-9)


def test_argmax_tie_lowest_index():
    assert argmax(Tensor([1.0, 1.0])) == 0


def test_dot_hand_value():
    assert dot(Tensor([1.0, 2.0, 3.0]), Tensor([0.1, -0.2, 0.3])) == pytest.approx(0.6)


def test_dot_zero():
    x = Tensor([3.0, -1.0, 2.5])
    assert dot(x, Tensor(np.zeros(3))) == 0.0


def test_dot_against_loop_oracle(rng):
    for _ in range(50):
        n = int(rng.integers(1, 200))
        a = rng.normal(size=n)
        b = rng.normal(size=n)
        acc = 0.0
        for i in range(n):
            acc += a[i] * b[i]
        assert abs(dot(Tensor(a), Tensor(b)) - acc) < 1e-12 * max(1.0, abs(acc))


def test_dot_length_mismatch():
    with pytest.raises(ValueError):
        dot(Tensor([1.0]), Tensor([1.0, 2.0]))


def test_reductions_deterministic(rng):
    a = rng.normal(size=500)
    t1, t2 = Tensor(a.copy()), Tensor(a.copy())
    assert reduce_sum(t1) == reduce_sum(t2)
    assert reduce_max(t1) == reduce_max(t2)
    assert dot(t1, t2) == dot(Tensor(a.copy()), Tensor(a.copy()))


def test_rejects_empty_and_nonfinite():
    with pytest.raises(ValueError):
        Tensor(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        Tensor([1.0, np.nan])
    with pytest.raises(ValueError):
        Tensor([np.inf])


def test_serialization_roundtrip(tmp_path, rng):
    t = Tensor(rng.normal(size=(2, 3, 4)))
    path = tmp_path / "t.bin"
    save_tensor(t, path)
    back = load_tensor(path)
    assert back.shape == (2, 3, 4)
    assert np.array_equal(back.data, t.data)


def test_load_rejects_truncated(tmp_path, rng):
    t = Tensor(rng.normal(size=16))
    path = tmp_path / "t.bin"
    save_tensor(t, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_tensor(path)


def test_load_rejects_missing_sidecar(tmp_path):
    path = tmp_path / "t.bin"
    path.write_bytes(b"\x00" * 8)
    with pytest.raises(ValueError):
        load_tensor(path)
