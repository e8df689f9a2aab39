import struct

import numpy as np
import pytest

from dhnn import autodiff as ad, models
from dhnn.errors import (CheckpointError, CheckpointShapeError, CheckpointTruncatedError,
                         CheckpointVersionError, DataError)


def values(model, x, name="H"):
    tape = ad.Tape()
    bound = model.bind(tape, track=False)
    xv = tape.constant(np.atleast_2d(x))
    if model.kind == "baseline":
        return bound.direct(xv).value
    return bound.potential(name, xv).value


def test_init_is_deterministic():
    a = models.init("dhnn", 3, 42)
    b = models.init("dhnn", 3, 42)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p, q)


def test_seeds_differ():
    a = models.init("hnn", 3, 42)
    b = models.init("hnn", 3, 43)
    assert not np.array_equal(a.parameters()[0], b.parameters()[0])


def test_dhnn_nets_share_no_storage():
    m = models.init("dhnn", 3, 0)
    for p in m.nets["H"].arrays():
        for q in m.nets["D"].arrays():
            assert not np.shares_memory(p, q)
    assert not np.array_equal(m.nets["H"].layers[0].weight, m.nets["D"].layers[0].weight)


def test_rejects_bad_input_dim():
    with pytest.raises(ValueError):
        models.init("dhnn", 4)
    with pytest.raises(ValueError):
        models.init("mystery", 3)


def test_initialization_statistics():
    m = models.init("hnn", 3, 1)
    w2 = m.nets["H"].layers[1].weight
    assert abs(w2.mean()) < 0.01
    assert w2.std() * np.sqrt(256) == pytest.approx(1.0, rel=0.02)
    assert all(np.all(l.bias == 0) for l in m.nets["H"].layers)


def test_parameter_count():
    per_net = (3 * 256 + 256) + (256 * 256 + 256) + (256 + 1)
    assert per_net == 67_073
    assert models.init("hnn", 3, 0).n_parameters() == per_net
    assert models.init("dhnn", 3, 0).n_parameters() == 2 * per_net
    assert models.init("baseline", 3, 0).n_parameters() == per_net + 257


def test_zero_head_gives_bias():
    m = models.init("dhnn", 3, 0)
    head = m.nets["H"].layers[-1]
    head.weight[:] = 0.0
    head.bias[:] = 0.75
    x = np.random.default_rng(0).normal(size=(5, 3))
    assert np.all(values(m, x) == 0.75)

    b = models.init("baseline", 3, 0)
    b.nets["direct"].layers[-1].weight[:] = 0.0
    b.nets["direct"].layers[-1].bias[:] = [1.0, -2.0]
    assert np.all(values(b, x) == [1.0, -2.0])


def test_outputs_finite_for_huge_inputs():
    for kind in models.KINDS:
        m = models.init(kind, 3, 0)
        out = values(m, np.array([[1e6, -1e6, 1e6], [-1e6, 0.0, 3.0]]))
        assert np.all(np.isfinite(out))


def test_continuity_probe():
    m = models.init("dhnn", 3, 5)
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform(-2, 2, size=(1, 3))
        gaps = [abs(values(m, x + d) - values(m, x))[0] for d in (1e-2, 1e-4, 1e-6)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-4


def test_direct_value_deterministic():
    m = models.init("baseline", 3, 0)
    x = np.ones((3, 3))
    assert np.array_equal(values(m, x), values(m, x))


def test_dimension_mismatch():
    m = models.init("hnn", 3, 0)
    with pytest.raises(DataError):
        values(m, np.zeros((2, 2)))


def test_residual_reduces_to_single_layer():
    m = models.init("dhnn", 2, 3, hidden=16)
    net = m.nets["H"]
    net.layers[1].weight[:] = 0.0
    net.layers[1].bias[:] = 0.0
    x = np.random.default_rng(2).normal(size=(4, 2))
    w1, b1 = net.layers[0].weight, net.layers[0].bias
    wh, bh = net.layers[2].weight, net.layers[2].bias
    expected = (np.tanh(x @ w1.T + b1) @ wh.T + bh)[:, 0]
    assert np.allclose(values(m, x), expected, rtol=0, atol=1e-14)


def test_input_gradient_matches_finite_differences():
    m = models.init("dhnn", 3, 9)
    x0 = np.random.default_rng(4).uniform(-2, 2, size=(100, 3))
    tape = ad.Tape()
    x = tape.var(x0)
    (g,) = ad.gradient(ad.sum_all(m.bind(tape, track=False).potential("H", x)), [x])
    h = 1e-5
    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        fd = (values(m, x0 + step) - values(m, x0 - step)) / (2 * h)
        rel = np.abs(fd - g[:, j]) / np.maximum(np.maximum(np.abs(fd), np.abs(g[:, j])), 1e-4)
        assert rel.max() <= 1e-5


# ---------------------------------------------------------------- checkpoints


@pytest.mark.parametrize("kind", models.KINDS)
def test_round_trip_is_bit_exact(kind):
    m = models.init(kind, 3, 11, hidden=8)
    back = models.deserialize(models.serialize(m))
    assert back.kind == kind and back.input_dim == 3
    for p, q in zip(m.parameters(), back.parameters()):
        assert p.tobytes() == q.tobytes()


def test_file_round_trip(tmp_path):
    m = models.init("dhnn", 2, 1, hidden=8)
    path = tmp_path / "m.ckpt"
    models.save(m, path)
    assert models.serialize(models.load(path)) == models.serialize(m)


def test_dhnn_checkpoint_holds_two_nets():
    m = models.init("dhnn", 3, 0, hidden=4)
    data = models.serialize(m)
    header = len(models.MAGIC) + struct.calcsize("<IBI")
    per_net = sum(8 + 8 * a.size for a in m.nets["H"].arrays()[::2]) + sum(
        8 * b.size for b in m.nets["H"].arrays()[1::2])
    assert len(data) == header + 2 * per_net
    assert len(models.deserialize(data).nets) == 2


def test_bad_magic_and_version():
    data = bytearray(models.serialize(models.init("hnn", 3, 0, hidden=4)))
    with pytest.raises(CheckpointVersionError):
        models.deserialize(b"XXXXXXXX" + bytes(data[8:]))
    data[8:12] = struct.pack("<I", 99)
    with pytest.raises(CheckpointVersionError, match="version 99"):
        models.deserialize(bytes(data))


def test_truncated_checkpoint():
    data = models.serialize(models.init("hnn", 3, 0, hidden=4))
    for cut in (5, 20, len(data) - 1):
        with pytest.raises(CheckpointTruncatedError):
            models.deserialize(data[:cut])


def test_shape_mismatch():
    data = bytearray(models.serialize(models.init("hnn", 3, 0, hidden=4)))
    off = len(models.MAGIC) + struct.calcsize("<IBI")
    data[off + 4:off + 8] = struct.pack("<I", 2)  # first layer claims 2 columns
    with pytest.raises(CheckpointError):
        models.deserialize(bytes(data))
    data = bytearray(models.serialize(models.init("hnn", 3, 0, hidden=4)))
    data[off - 4:off] = struct.pack("<I", 7)
    with pytest.raises(CheckpointShapeError):
        models.deserialize(bytes(data))


def test_trailing_bytes():
    data = models.serialize(models.init("hnn", 3, 0, hidden=4))
    with pytest.raises(CheckpointError):
        models.deserialize(data + b"\0")


def test_checkpoint_errors_are_distinct():
    kinds = {CheckpointVersionError, CheckpointTruncatedError, CheckpointShapeError}
    assert len(kinds) == 3
    for k in kinds:
        assert issubclass(k, CheckpointError)
