import struct

import numpy as np
import pytest

from rquad import checkpoint, nn
from rquad.checkpoint import MAGIC, VERSION


def networks(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "actor": nn.init_mlp((18, 6, 4), rng, "tanh"),
        "critic": nn.init_mlp((22, 6, 1), rng, "linear"),
        "actor_target": nn.init_mlp((18, 6, 4), rng, "tanh"),
    }


def test_round_trip_is_exact(tmp_path):
    nets = networks()
    path = tmp_path / "c.rqckpt"
    checkpoint.save(path, nets)
    back = checkpoint.load(path)
    assert list(back) == list(nets)
    for role in nets:
        assert back[role] == nets[role]
        assert back[role].output_activation == nets[role].output_activation
    assert checkpoint.dumps(back) == path.read_bytes()


def test_header_layout():
    data = checkpoint.dumps(networks())
    assert data[:6] == b"RQCKPT"
    assert struct.unpack("<II", data[6:14]) == (VERSION, 3)
    role_len = struct.unpack("<I", data[14:18])[0]
    assert data[18 : 18 + role_len] == b"actor"


def test_size_matches_layout():
    nets = networks()
    expected = len(MAGIC) + 8
    for role, net in nets.items():
        expected += 4 + len(role) + 4 + 4 * len(net.layer_dims) + 8 * net.size
    assert len(checkpoint.dumps(nets)) == expected


@pytest.mark.parametrize("cut", [3, 10, 20, 100, -1])
def test_truncation_is_detected(cut):
    data = checkpoint.dumps(networks())
    with pytest.raises(checkpoint.TruncatedCheckpointError):
        checkpoint.loads(data[:cut])


def test_bad_magic():
    data = checkpoint.dumps(networks())
    with pytest.raises(checkpoint.MagicMismatchError):
        checkpoint.loads(b"XXCKPT" + data[6:])


def test_version_mismatch_names_both_versions():
    data = bytearray(checkpoint.dumps(networks()))
    data[6:10] = struct.pack("<I", 7)
    with pytest.raises(checkpoint.VersionMismatchError) as err:
        checkpoint.loads(bytes(data))
    assert "7" in str(err.value) and str(VERSION) in str(err.value)
    assert err.value.found == 7


def test_trailing_bytes_rejected():
    with pytest.raises(checkpoint.CheckpointError):
        checkpoint.loads(checkpoint.dumps(networks()) + b"\0")


def test_unknown_role_rejected():
    with pytest.raises(ValueError):
        checkpoint.dumps({"policy": networks()["actor"]})


def test_role_sets_output_activation():
    assert checkpoint.output_activation_for("critic_target") == "linear"
    assert checkpoint.output_activation_for("adversary") == "tanh"
