import numpy as np
import pytest

from glimpsenet.errors import ConfigError, TrainingDivergedError
from glimpsenet.features import FeatureSequence
from glimpsenet.nnet import backward, forward_concat, init_concat
from glimpsenet.rng import SplitMix64
from glimpsenet.training import (Dataset, TrainConfig, learning_rate,
                                 resample_epoch, train, write_train_log)

from conftest import separable_dataset


def tiny_dataset(n_pos=4, n_neg=10, steps=2, dim=3, seed=5):
    rng = SplitMix64(seed)
    pos = [FeatureSequence(color=rng.normal(1.0, (steps, dim)),
                           depth=rng.normal(1.0, (steps, dim)), label=1)
           for _ in range(n_pos)]
    neg = [FeatureSequence(color=rng.normal(1.0, (steps, dim)),
                           depth=rng.normal(1.0, (steps, dim)), label=0)
           for _ in range(n_neg)]
    return Dataset(positives=pos, negatives=neg)


class TestLearningRate:
    def test_schedule_values(self):
        assert learning_rate(0.0004, 0.97, 0) == 0.0004
        assert abs(learning_rate(0.0004, 0.97, 1) - 0.000388) < 1e-12
        assert learning_rate(0.0004, 1.0, 50) == 0.0004


class TestResampleEpoch:
    def test_ratio_three(self):
        ds = tiny_dataset(10, 100)
        out = resample_epoch(ds, 3.0, SplitMix64(1))
        assert len(out) == 40
        assert sum(s.label for s in out) == 10

    def test_cap_at_available_negatives(self):
        ds = tiny_dataset(10, 5)
        out = resample_epoch(ds, 3.0, SplitMix64(1))
        assert len(out) == 15
        assert sum(1 - s.label for s in out) == 5

    def test_deterministic_given_seed(self):
        ds = tiny_dataset(6, 30)
        a = resample_epoch(ds, 2.0, SplitMix64(9))
        b = resample_epoch(ds, 2.0, SplitMix64(9))
        assert [id(s) for s in a] == [id(s) for s in b]

    def test_without_replacement(self):
        ds = tiny_dataset(4, 12)
        out = resample_epoch(ds, 3.0, SplitMix64(3))
        negs = [s for s in out if s.label == 0]
        assert len({id(s) for s in negs}) == len(negs)

    def test_zero_positives(self):
        ds = tiny_dataset(4, 4)
        ds.positives.clear()
        with pytest.raises(ConfigError):
            resample_epoch(ds, 3.0, SplitMix64(1))


class TestTrain:
    def test_epochs_zero_returns_initialization(self):
        ds = tiny_dataset()
        cfg = TrainConfig(epochs=0, hidden=4, variant="concat", seed=11)
        result = train(ds, cfg)
        assert result.log == []
        expected = init_concat(ds.dim, 4, SplitMix64(11))
        for a, b in zip(result.best.tensors().values(),
                        expected.tensors().values()):
            np.testing.assert_array_equal(a, b)

    def test_same_seed_bitwise_identical(self):
        ds = tiny_dataset()
        cfg = TrainConfig(epochs=5, hidden=4, batch_size=4, seed=3,
                          variant="fusion")
        r1 = train(ds, cfg)
        r2 = train(ds, cfg)
        for a, b in zip(r1.final.tensors().values(),
                        r2.final.tensors().values()):
            np.testing.assert_array_equal(a, b)
        assert [(e.mean_loss, e.train_accuracy) for e in r1.log] == \
               [(e.mean_loss, e.train_accuracy) for e in r2.log]

    def test_batched_gradients_match_per_sample_sum(self):
        # the training path averages batched gradients; verify the batched
        # backward equals the sum of single-sequence gradients
        from glimpsenet.nnet import backward_concat_batch, forward_concat_batch
        rng = SplitMix64(4)
        params = init_concat(3, 4, rng)
        seqs = [FeatureSequence(color=rng.normal(1.0, (3, 3)),
                                depth=rng.normal(1.0, (3, 3)),
                                label=i % 2) for i in range(5)]
        color = np.stack([s.color for s in seqs])
        depth = np.stack([s.depth for s in seqs])
        y = np.array([float(s.label) for s in seqs])
        p, _, caches = forward_concat_batch(params, color, depth)
        batched = backward_concat_batch(params, caches, p, y)
        summed = {k: np.zeros_like(v) for k, v in batched.items()}
        for s in seqs:
            g = backward(params, forward_concat(params, s), float(s.label))
            for k in summed:
                summed[k] += g[k]
        for k in batched:
            np.testing.assert_allclose(batched[k], summed[k], rtol=1e-9,
                                       atol=1e-12)

    def test_separable_fixture_reaches_95(self):
        # module-level trainability check; the stated schedule with small
        # batches so the decaying rate still allows enough SGD steps
        ds = separable_dataset(n_pos=200, n_neg=600, seed=99)
        cfg = TrainConfig(lr0=0.0004, decay=0.97, epochs=200, batch_size=4,
                          seed=5, variant="concat", hidden=8)
        result = train(ds, cfg)
        assert max(e.train_accuracy for e in result.log) >= 0.95

    def test_loss_non_increasing_early(self):
        ds = separable_dataset(n_pos=100, n_neg=300, seed=99)
        cfg = TrainConfig(lr0=0.0004, decay=0.97, epochs=10, batch_size=4,
                          seed=5, variant="concat", hidden=8)
        result = train(ds, cfg)
        losses = [e.mean_loss for e in result.log]
        for before, after in zip(losses, losses[1:]):
            assert after <= before * 1.05  # 5% smoothing tolerance

    def test_epoch_class_ratio(self):
        ds = tiny_dataset(8, 100)
        seen = []
        cfg = TrainConfig(epochs=3, hidden=2, batch_size=8, seed=1,
                          variant="concat", neg_ratio=3.0)
        rng = SplitMix64(0)
        for _ in range(3):
            epoch = resample_epoch(ds, cfg.neg_ratio, rng)
            pos = sum(s.label for s in epoch)
            seen.append((pos, len(epoch) - pos))
        assert all(neg == 3 * pos for pos, neg in seen)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverged_loss_aborts_with_location(self):
        ds = tiny_dataset()
        for s in ds.positives + ds.negatives:
            # inf - inf inside the affine map makes the loss non-finite
            s.color[0, 0] = np.inf
            s.color[0, 1] = -np.inf
        cfg = TrainConfig(lr0=10.0, epochs=2, hidden=4, batch_size=4,
                          seed=1, variant="concat")
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train(ds, cfg)

    def test_tie_probability_counts_as_negative(self):
        # a zero-initialized head yields p = 0.5 exactly; accuracy must
        # count every sample as classified negative
        ds = tiny_dataset(2, 2)
        cfg = TrainConfig(lr0=1e-30, epochs=1, hidden=2, batch_size=4,
                          seed=1, variant="concat")
        result = train(ds, cfg)
        # probabilities start near 0.5; exact ties require zero weights,
        # so check the documented rule directly on the counting path
        from glimpsenet.nnet import ConcatModelParams, LstmParams
        params = ConcatModelParams(
            chain=LstmParams(W=np.zeros((8, 8)), b=np.zeros(8),
                             hidden_size=2),
            head_w=np.zeros(2), head_b=np.zeros(1))
        from glimpsenet.nnet import forward_concat_batch
        color = np.stack([s.color for s in ds.positives])
        depth = np.stack([s.depth for s in ds.positives])
        p, _, _ = forward_concat_batch(params, color, depth)
        assert np.all(p == 0.5)
        assert not np.any(p > 0.5)  # ties classify negative
        assert result.log[0].train_accuracy == 0.5

    def test_config_invariants(self):
        with pytest.raises(ConfigError):
            TrainConfig(lr0=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(decay=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(neg_ratio=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(variant="both")

    def test_dataset_shape_mismatch(self):
        a = FeatureSequence(color=np.zeros((2, 3)), depth=np.zeros((2, 3)),
                            label=1)
        b = FeatureSequence(color=np.zeros((3, 3)), depth=np.zeros((3, 3)),
                            label=0)
        with pytest.raises(ValueError):
            Dataset(positives=[a], negatives=[b])


class TestTrainLog:
    def test_csv_layout(self, tmp_path):
        ds = tiny_dataset()
        cfg = TrainConfig(epochs=2, hidden=2, batch_size=4, seed=1,
                          variant="concat")
        result = train(ds, cfg)
        path = tmp_path / "log.csv"
        write_train_log(path, result.log)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "epoch,lr,mean_loss,train_accuracy"
        assert len(lines) == 3
        epoch, lr, loss, acc = lines[1].split(",")
        assert int(epoch) == 0
        assert float(lr) == cfg.lr0
        assert float(loss) == result.log[0].mean_loss
