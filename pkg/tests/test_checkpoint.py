import numpy as np
import pytest

from relsar.byol import ByolConfig, ByolState
from relsar.checkpoint import encoder_state_from, load_checkpoint, save_checkpoint
from relsar.errors import CheckpointError
from relsar.model import Encoder, EncoderConfig
from relsar.optim import SGD

ENC = EncoderConfig(F=8, L=1, H=2, D_model=8, T=12, J=4)


def test_round_trip_is_bitwise(tmp_path, rng):
    enc = Encoder(ENC, rng)
    enc.buffers["bn1.mean"][:] = rng.standard_normal(8)
    opt = SGD(0.9)
    params = {k: p for k, p in enc.params.items()}
    opt.step(params, {k: rng.standard_normal(p.shape) for k, p in params.items()}, 0.1)
    save_checkpoint(tmp_path / "c.npz", {"encoder": enc}, {"kind": "encoder", "encoder": ENC.to_dict()}, opt)
    ck = load_checkpoint(tmp_path / "c.npz")
    assert ck.kind == "encoder" and ck.encoder_config == ENC
    other = Encoder(ENC, np.random.default_rng(99))
    ck.load_into("encoder", other)
    for k, v in enc.state().items():
        got = other.params[k[6:]].data if k.startswith("param/") else other.buffers[k[7:]]
        assert got.dtype == v.dtype and np.array_equal(got, v)
    opt2 = SGD(0.9)
    opt2.load_state_dict(ck.optimizer_state())
    for k, v in opt.velocity.items():
        assert np.array_equal(opt2.velocity[k], v)


def test_byol_checkpoint_exports_online_encoder(tmp_path, rng):
    state = ByolState(ENC, ByolConfig(proj_hidden=8, proj_dim=4), rng)
    state.online["encoder"].params["cls"].data += 1.0      # make online and target differ
    save_checkpoint(tmp_path / "b.npz", state.modules(), {"kind": "byol", "encoder": ENC.to_dict()})
    ck = load_checkpoint(tmp_path / "b.npz")
    np.testing.assert_array_equal(encoder_state_from(ck)["param/cls"],
                                  state.online["encoder"].params["cls"].data)


def test_errors(tmp_path, rng):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.npz")
    np.savez(tmp_path / "plain.npz", a=np.ones(2))
    with pytest.raises(CheckpointError, match="__meta__"):
        load_checkpoint(tmp_path / "plain.npz")
    save_checkpoint(tmp_path / "e.npz", {"encoder": Encoder(ENC, rng)}, {"format_version": 99})
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(tmp_path / "e.npz")
    save_checkpoint(tmp_path / "h.npz", {"head": Encoder(ENC, rng)}, {"kind": "x"})
    with pytest.raises(CheckpointError):
        encoder_state_from(load_checkpoint(tmp_path / "h.npz"))
