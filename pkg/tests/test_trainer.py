import json

import numpy as np
import pytest

from vegagen.corpus import TrainingPair
from vegagen.tokenizer import build_vocab
from vegagen.trainer import (CorruptCheckpoint, NoTrainableData, TrainConfig,
                             TrainHistory, HistoryPoint, default_conventions,
                             load_checkpoint, log_perplexity, save_checkpoint,
                             train)
from vegagen.neural.params import ModelHyper, init_params

PAIRS = [
    TrainingPair('{"num0":1}', '{"mark":"tick"}'),
    TrainingPair('{"num0":2}', '{"mark":"tick"}'),
    TrainingPair('{"num0":31}', '{"mark":"tick"}'),
    TrainingPair('{"num0":4.5}', '{"mark":"tick"}'),
]


def vocabs_for(pairs):
    return (build_vocab([p.source for p in pairs]),
            build_vocab([p.target for p in pairs]))


def small_config(**kw):
    base = dict(steps=12, learning_rate=1e-3, batch_size=2, dropout=0.0,
                max_len=60, seed=0, d_cell=6, eval_every=6)
    base.update(kw)
    return TrainConfig(**base)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=-1e-4)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(steps=0)
        with pytest.raises(ValueError):
            TrainConfig(dropout=1.0)

    def test_zero_learning_rate_is_allowed(self):
        TrainConfig(learning_rate=0.0)


class TestTrain:
    def test_zero_lr_is_a_no_op(self):
        vocabs = vocabs_for(PAIRS)
        config = small_config(learning_rate=0.0, steps=5)
        params, history = train(PAIRS, vocabs, config)
        hyper = ModelHyper(src_vocab=vocabs[0].size, tgt_vocab=vocabs[1].size,
                           d_cell=config.d_cell, dropout=config.dropout,
                           max_len=config.max_len, dtype=config.dtype)
        fresh = init_params(hyper, seed=config.seed)
        for name, arr in params.tensors.items():
            np.testing.assert_array_equal(arr, fresh.tensors[name])
        assert all(np.isfinite(p.train_nll) for p in history.points)

    def test_loss_decreases(self):
        vocabs = vocabs_for(PAIRS)
        before = None
        config = small_config(steps=60, learning_rate=5e-3)
        params, _ = train(PAIRS, vocabs, config)
        hyper = params.hyper
        fresh = init_params(hyper, seed=config.seed)
        before = log_perplexity(fresh, PAIRS, vocabs, max_len=60)
        after = log_perplexity(params, PAIRS, vocabs, max_len=60)
        assert after < before

    def test_deterministic_given_seed(self):
        vocabs = vocabs_for(PAIRS)
        p1, h1 = train(PAIRS, vocabs, small_config())
        p2, h2 = train(PAIRS, vocabs, small_config())
        for name in p1.tensors:
            np.testing.assert_array_equal(p1.tensors[name], p2.tensors[name])
        assert h1.points == h2.points

    def test_history_steps_and_heldout(self):
        vocabs = vocabs_for(PAIRS)
        _, history = train(PAIRS, vocabs, small_config(steps=13, eval_every=5),
                           eval_pairs=PAIRS[:2])
        steps = [p.step for p in history.points]
        assert steps == sorted(set(steps))
        assert steps[-1] == 13
        assert {5, 10} <= set(steps)
        assert all(p.heldout_log_perplexity is not None for p in history.points)

    def test_no_trainable_data(self):
        vocabs = vocabs_for(PAIRS)
        with pytest.raises(NoTrainableData):
            train(PAIRS, vocabs, small_config(max_len=4))

    def test_training_log_jsonl(self, tmp_path):
        vocabs = vocabs_for(PAIRS)
        log = tmp_path / "train.jsonl"
        train(PAIRS, vocabs, small_config(steps=10, eval_every=5), log_path=log)
        lines = [json.loads(l) for l in log.read_text().splitlines()]
        assert lines and all("step" in l and "train_nll" in l for l in lines)

    def test_periodic_checkpoints(self, tmp_path):
        vocabs = vocabs_for(PAIRS)
        train(PAIRS, vocabs, small_config(steps=10, checkpoint_every=5),
              checkpoint_dir=tmp_path)
        names = sorted(p.name for p in tmp_path.glob("ckpt-*.bin"))
        assert names == ["ckpt-000005.bin", "ckpt-000010.bin"]
        load_checkpoint(tmp_path / "ckpt-000010.bin")


class TestHistoryInvariants:
    def test_strictly_increasing(self):
        with pytest.raises(ValueError):
            TrainHistory((HistoryPoint(3, 1.0, None), HistoryPoint(3, 0.9, None)))


class TestLogPerplexity:
    def test_is_mean_of_per_pair_ratio(self):
        vocabs = vocabs_for(PAIRS)
        hyper = ModelHyper(src_vocab=vocabs[0].size, tgt_vocab=vocabs[1].size,
                           d_cell=5, dtype="float64")
        params = init_params(hyper, seed=1)
        from vegagen.neural.model import model_forward
        from vegagen import tokenizer

        vals = []
        for p in PAIRS:
            s = tokenizer.encode(p.source, vocabs[0], 60)
            t = tokenizer.encode(p.target, vocabs[1], 60)
            total, _, _ = model_forward(s, t, params)
            vals.append(total / len(t))
        got = log_perplexity(params, PAIRS, vocabs, max_len=60, batch_size=3)
        assert abs(got - np.mean(vals)) < 1e-9


class TestCheckpoint:
    def _save(self, tmp_path, dtype="float32"):
        vocabs = vocabs_for(PAIRS)
        hyper = ModelHyper(src_vocab=vocabs[0].size, tgt_vocab=vocabs[1].size,
                           d_cell=5, dtype=dtype)
        params = init_params(hyper, seed=2)
        path = tmp_path / "model.bin"
        save_checkpoint(params, vocabs, default_conventions(), path,
                        meta={"note": "test"})
        return params, vocabs, path

    def test_round_trip_is_bit_exact(self, tmp_path):
        params, vocabs, path = self._save(tmp_path)
        ckpt = load_checkpoint(path)
        assert ckpt.params.hyper == params.hyper
        for name, arr in params.tensors.items():
            got = ckpt.params.tensors[name]
            assert got.dtype == arr.dtype
            np.testing.assert_array_equal(got, arr)
        assert ckpt.src_vocab == vocabs[0]
        assert ckpt.tgt_vocab == vocabs[1]
        assert ckpt.conventions == default_conventions()
        assert ckpt.meta == {"note": "test"}

    def test_round_trip_float64(self, tmp_path):
        params, _, path = self._save(tmp_path, dtype="float64")
        ckpt = load_checkpoint(path)
        for name, arr in params.tensors.items():
            np.testing.assert_array_equal(ckpt.params.tensors[name], arr)

    def test_loaded_tensors_are_writable(self, tmp_path):
        _, _, path = self._save(tmp_path)
        ckpt = load_checkpoint(path)
        ckpt.params.tensors["src_emb"][0, 0] = 7.0

    def test_truncation_detected(self, tmp_path):
        _, _, path = self._save(tmp_path)
        raw = path.read_bytes()
        for cut in (3, 10, len(raw) // 2, len(raw) - 1):
            path.write_bytes(raw[:cut])
            with pytest.raises(CorruptCheckpoint):
                load_checkpoint(path)

    def test_bad_magic_detected(self, tmp_path):
        _, _, path = self._save(tmp_path)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_manifest_corruption_detected(self, tmp_path):
        _, _, path = self._save(tmp_path)
        raw = bytearray(path.read_bytes())
        # clobber a byte inside the JSON manifest
        raw[12] = 0x00
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_random_bytes_rejected(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(np.random.default_rng(0).bytes(512))
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(path)

    def test_missing_file_reports_as_corrupt(self, tmp_path):
        with pytest.raises(CorruptCheckpoint):
            load_checkpoint(tmp_path / "absent.bin")
