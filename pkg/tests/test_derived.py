"""Derived-model tests: discrete cell arithmetic, training history shape,
and checkpoint round-trips."""

import json

import numpy as np
import pytest

from emodarts import ContractViolation, DataError, Tensor
from emodarts.config import SearchConfig
from emodarts.derived import (DerivedCell, TRAIN_COLUMNS, evaluate,
                              instantiate, load_checkpoint, save_checkpoint,
                              train_derived, write_train_csv)
from emodarts.genome import Genome, extract_genome
from emodarts.ops import count_params
from emodarts.supernet import build_supernet


def rng(s=0):
    return np.random.default_rng(s)


def searched_genome(**kw):
    base = dict(C=2, N=1, B_cnn=2, B_seqnn=2, channels=4, hidden=8,
                seq_scope=("lstm_1", "rnn_1"), epochs=1, batch_size=4)
    base.update(kw)
    cfg = SearchConfig(**base)
    net = build_supernet(cfg, rng(3), input_hw=(16, 16))
    return extract_genome(net), cfg


def blobs(n, seed, hw=16):
    r = np.random.default_rng(seed)
    y = r.integers(0, 4, size=n)
    x = 0.1 * r.normal(size=(n, hw, hw))
    for i, cls in enumerate(y):
        x[i, 4 * cls:4 * cls + 3, :] += 2.0
    return x, y


def test_derived_cell_sums_retained_edges():
    edges = [{"from_node": 0, "to_node": 2, "op": "skip_connect"},
             {"from_node": 1, "to_node": 2, "op": "skip_connect"}]
    cell = DerivedCell("seqnn", edges, width=6, b=1, reduction=False, rng=rng())
    a = Tensor(rng(1).normal(size=(2, 3, 6)))
    b = Tensor(rng(2).normal(size=(2, 3, 6)))
    np.testing.assert_allclose(cell([a, b]).data, a.data + b.data, rtol=1e-12)


def test_derived_cell_param_count_hand_sum():
    edges = [{"from_node": 0, "to_node": 2, "op": "sep_conv_3x3"},
             {"from_node": 1, "to_node": 2, "op": "skip_connect"}]
    cell = DerivedCell("cnn", edges, width=4, b=1, reduction=False, rng=rng())
    # sep_conv_3x3 with affine norms: 2 * (4*9 depthwise + 16 pointwise + 8 affine)
    assert count_params(cell) == 2 * (36 + 16 + 8)


def test_derived_cell_reduction_strides_input_edges_only():
    edges = [{"from_node": 0, "to_node": 2, "op": "skip_connect"},
             {"from_node": 1, "to_node": 2, "op": "skip_connect"},
             {"from_node": 1, "to_node": 3, "op": "skip_connect"},
             {"from_node": 2, "to_node": 3, "op": "skip_connect"}]
    cell = DerivedCell("cnn", edges, width=4, b=2, reduction=True, rng=rng())
    x = [Tensor(np.ones((1, 4, 8, 8))) for _ in range(2)]
    out = cell(x)
    assert out.shape == (1, 8, 4, 4)


def test_derived_cell_rejects_orphan_nodes():
    edges = [{"from_node": 0, "to_node": 2, "op": "skip_connect"}]
    with pytest.raises(ContractViolation):
        DerivedCell("cnn", edges, width=4, b=2, reduction=False, rng=rng())


def test_instantiate_forward_probabilities():
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=7, input_hw=(16, 16))
    probs = model(Tensor(rng(4).normal(size=(3, 1, 16, 16))))
    assert probs.shape == (3, 4)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, rtol=1e-9)


def test_instantiate_requires_needed_blueprints():
    genome, cfg = searched_genome()
    genome.cnn_reduce = []
    with pytest.raises(ContractViolation):
        instantiate(genome, cfg, seed=0, input_hw=(16, 16))


def test_derived_weights_are_fresh_per_seed():
    genome, cfg = searched_genome()
    m1 = instantiate(genome, cfg, seed=1, input_hw=(16, 16))
    m2 = instantiate(genome, cfg, seed=2, input_hw=(16, 16))
    diffs = [not np.array_equal(a.data, b.data)
             for a, b in zip(m1.params(), m2.params())]
    assert any(diffs)
    m3 = instantiate(genome, cfg, seed=1, input_hw=(16, 16))
    for a, b in zip(m1.params(), m3.params()):
        np.testing.assert_array_equal(a.data, b.data)


def test_dropout_only_in_training_mode():
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=5, input_hw=(16, 16))
    x = Tensor(rng(6).normal(size=(2, 1, 16, 16)))
    model.set_training(False)
    a = model(x).data.copy()
    b = model(Tensor(x.data.copy())).data
    np.testing.assert_array_equal(a, b)      # eval mode is deterministic
    model.set_training(True)
    t1 = model(Tensor(x.data.copy())).data.copy()
    t2 = model(Tensor(x.data.copy())).data
    assert not np.array_equal(t1, t2)        # dropout masks differ


def test_train_history_columns_and_lr_endpoints(tmp_path):
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=8, input_hw=(16, 16))
    hist = train_derived(model, blobs(24, 7), cfg, epochs=5)
    assert [h.epoch for h in hist] == list(range(5))
    assert hist[0].lr == pytest.approx(cfg.lr_max)
    assert hist[-1].lr == pytest.approx(cfg.lr_min)
    path = tmp_path / "train.csv"
    write_train_csv(hist, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == ",".join(TRAIN_COLUMNS) == "epoch,loss,ua,lr"
    assert len(lines) == 6


def test_training_reduces_loss():
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=9, input_hw=(16, 16))
    hist = train_derived(model, blobs(32, 8), cfg, epochs=12)
    assert hist[-1].loss < hist[0].loss


def test_evaluate_returns_percentages():
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=10, input_hw=(16, 16))
    score_ua, score_wa = evaluate(model, blobs(16, 9))
    assert 0.0 <= score_ua <= 100.0
    assert 0.0 <= score_wa <= 100.0


def test_checkpoint_round_trip_restores_state(tmp_path):
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=11, input_hw=(16, 16))
    train_derived(model, blobs(16, 10), cfg, epochs=2)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    loaded, genome2, cfg2, seed2 = load_checkpoint(path)
    assert seed2 == 11
    assert genome2 == genome
    assert cfg2.to_dict() == cfg.to_dict()
    for a, b in zip(model.params(), loaded.params()):
        np.testing.assert_array_equal(a.data, b.data)
    for a, b in zip(model.buffers(), loaded.buffers()):
        np.testing.assert_array_equal(a, b)
    x = rng(11).normal(size=(4, 1, 16, 16))
    model.set_training(False)
    loaded.set_training(False)
    np.testing.assert_array_equal(model(Tensor(x)).data,
                                  loaded(Tensor(x)).data)


def test_checkpoint_header_is_single_json_line(tmp_path):
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=12, input_hw=(16, 16))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        tail = fh.read()
    assert {"format", "version", "genome", "config", "seed",
            "input_hw"} <= set(header)
    n_state = sum(p.size for p in model.params()) + \
        sum(b.size for b in model.buffers())
    assert len(tail) == 8 * n_state


def test_checkpoint_rejects_corruption(tmp_path):
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=13, input_hw=(16, 16))
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    clipped = tmp_path / "clipped.ckpt"
    clipped.write_bytes(raw[:-16])
    with pytest.raises(DataError):
        load_checkpoint(clipped)
    garbled = tmp_path / "garbled.ckpt"
    garbled.write_bytes(b"not json\n" + raw.split(b"\n", 1)[1])
    with pytest.raises(DataError):
        load_checkpoint(garbled)


def test_buffers_follow_params_in_payload(tmp_path):
    genome, cfg = searched_genome()
    model = instantiate(genome, cfg, seed=14, input_hw=(16, 16))
    marker = 123.456
    model.buffers()[-1][...] = marker
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    with open(path, "rb") as fh:
        fh.readline()
        flat = np.frombuffer(fh.read(), dtype="<f8")
    last = model.buffers()[-1]
    np.testing.assert_array_equal(flat[-last.size:], np.full(last.size, marker))
