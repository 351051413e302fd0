from collections import Counter

import numpy as np
import pytest

from pflego import rng as rngs
from pflego.data import (
    Degree,
    PersonalizationSpec,
    SyntheticSpec,
    assign_classes,
    build_federation,
    generate_synthetic,
    round_robin_partition,
    subsample_classes,
    train_test_split,
)
from pflego.errors import ConfigurationError, InputError
from pflego.model import joint_gradient
from pflego.nn import Batch, ParamVector, glorot_uniform, mlp_specs
from pflego.optim import AdamState, adam_step
from pflego.orchestrator import predict


class TestAssignClasses:
    def test_no_personalization_gives_every_class(self, gen):
        picks = assign_classes(PersonalizationSpec(Degree.NONE, 10), 7, gen)
        assert all(p == tuple(range(10)) for p in picks)

    def test_high_personalization_gives_two_classes(self, gen):
        picks = assign_classes(PersonalizationSpec(Degree.HIGH, 10), 100, gen)
        assert len(picks) == 100
        assert all(len(set(p)) == 2 for p in picks)
        assert set().union(*picks) == set(range(10))

    def test_one_client_cannot_cover_ten_classes(self, gen):
        with pytest.raises(ConfigurationError, match="more clients"):
            assign_classes(PersonalizationSpec(Degree.HIGH, 10), 1, gen)

    def test_medium_uses_half(self):
        assert PersonalizationSpec(Degree.MEDIUM, 10).classes_per_client == 5
        assert PersonalizationSpec(Degree.MEDIUM, 7).classes_per_client == 3

    def test_k_larger_than_c_rejected(self):
        with pytest.raises(ConfigurationError):
            PersonalizationSpec(Degree.HIGH, 1)


def shard_sizes(n, holders, gen):
    assignments = [(0,)] * holders
    return sorted((len(s[0]) for s in round_robin_partition([n], assignments, gen)), reverse=True)


class TestRoundRobin:
    def test_seven_over_three(self, gen):
        assert shard_sizes(7, 3, gen) == [3, 2, 2]

    def test_six_over_three(self, gen):
        assert shard_sizes(6, 3, gen) == [2, 2, 2]

    def test_deals_every_sample_once(self, gen):
        shards = round_robin_partition([7], [(0,)] * 3, gen)
        dealt = np.concatenate([s[0] for s in shards])
        assert sorted(dealt.tolist()) == list(range(7))

    def test_cyclic_dealing_order(self):
        # the first holder receives positions 0, 3, 6 of the shuffled order
        order = np.random.default_rng(0).permutation(7)
        shards = round_robin_partition([7], [(0,)] * 3, np.random.default_rng(0))
        np.testing.assert_array_equal(shards[0][0], order[[0, 3, 6]])

    def test_orphan_class(self, gen):
        with pytest.raises(InputError, match="class 1"):
            round_robin_partition([3, 3], [(0,), (0,)], gen)

    def _high_pers_recount(self, seed):
        assignments = assign_classes(PersonalizationSpec(Degree.HIGH, 10), 100, rngs.stream(seed, 1))
        shards = round_robin_partition([100] * 10, assignments, rngs.stream(seed, 2))
        totals = np.zeros(100, dtype=int)
        per_class: dict[int, list[int]] = {c: [] for c in range(10)}
        seen = Counter()
        for i, shard in enumerate(shards):
            for c, idx in shard.items():
                totals[i] += len(idx)
                per_class[c].append(len(idx))
                seen.update((c, int(k)) for k in idx)
        return assignments, totals, per_class, seen

    @pytest.mark.parametrize("seed", range(5))
    def test_recount_per_class_balance(self, seed):
        _, totals, per_class, seen = self._high_pers_recount(seed)
        assert totals.sum() == 1000
        assert len(seen) == 1000 and max(seen.values()) == 1
        for sizes in per_class.values():
            assert max(sizes) - min(sizes) <= 1

    @pytest.mark.xfail(
        strict=True,
        reason="client totals depend on how many clients drew each class; with independent "
        "uniform class choice they spread well beyond +-K of the mean",
    )
    def test_recount_client_totals_within_k(self):
        _, totals, _, _ = self._high_pers_recount(0)
        assert np.all(np.abs(totals - totals.mean()) <= 2)

    def test_client_totals_within_k_when_holders_are_balanced(self, gen):
        # every class held by exactly 20 of 100 clients: totals are then within K of the mean
        assignments = [(i % 10, (i + 1 + (i // 10) % 9) % 10) for i in range(100)]
        holders = Counter(c for a in assignments for c in a)
        assert set(holders.values()) == {20}
        shards = round_robin_partition([100] * 10, assignments, gen)
        totals = np.array([sum(len(v) for v in s.values()) for s in shards])
        assert np.all(np.abs(totals - totals.mean()) <= 2)


class TestSplit:
    def test_twenty_at_three_quarters(self, gen):
        train, test = train_test_split([np.arange(20)], 0.75, gen)
        assert (len(train[0]), len(test[0])) == (15, 5)
        assert sorted(np.concatenate([train[0], test[0]]).tolist()) == list(range(20))

    def test_two_at_half(self, gen):
        train, test = train_test_split([np.arange(2)], 0.5, gen)
        assert (len(train[0]), len(test[0])) == (1, 1)

    def test_degenerate_split(self, gen):
        with pytest.raises(InputError, match="4 samples"):
            train_test_split([np.arange(4)], 0.9, gen)

    def test_fraction_range(self, gen):
        with pytest.raises(InputError):
            train_test_split([np.arange(4)], 1.0, gen)


class TestSynthetic:
    def test_zero_spread_collapses_to_means_and_is_separable(self):
        samples = generate_synthetic(SyntheticSpec(10, 10, 20, 0.0, 3))
        means = np.stack([s[0] for s in samples])
        for c, s in enumerate(samples):
            assert np.all(s == means[c])
        x = np.concatenate(samples)
        y = np.repeat(np.arange(10), 20)
        nearest = np.argmin(((x[:, None, :] - means[None]) ** 2).sum(-1), axis=1)
        assert np.mean(nearest == y) == 1.0

    def test_deterministic(self):
        a = generate_synthetic(SyntheticSpec(seed=11))
        b = generate_synthetic(SyntheticSpec(seed=11))
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        c = generate_synthetic(SyntheticSpec(seed=12))
        assert not np.array_equal(a[0], c[0])

    def test_means_are_separated(self):
        samples = generate_synthetic(SyntheticSpec(10, 10, 400, 0.5, 0))
        means = np.stack([s.mean(0) for s in samples])
        d = np.sqrt(((means[:, None] - means[None]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        assert d.min() > 0.9  # drawn at least 1.0 apart; the sample mean wobbles by ~0.025

    def test_rejection_budget(self):
        with pytest.raises(ConfigurationError, match="class means"):
            generate_synthetic(SyntheticSpec(10, 1, 10, 0.5, 0), max_tries=50)

    def test_invalid_spec(self):
        with pytest.raises(ConfigurationError):
            SyntheticSpec(samples_per_class=1)

    def test_learnable_by_centralized_training(self):
        """10-class, 10-dim, spread 0.5, 100 samples per class: a 200-unit MLP fits >= 95%."""
        samples = generate_synthetic(SyntheticSpec(10, 10, 100, 0.5, 0))
        batch = Batch(np.concatenate(samples), np.repeat(np.arange(10), 100))
        specs = mlp_specs(10, [200])
        gen = rngs.stream(0, rngs.THETA_INIT)
        theta = glorot_uniform(specs, gen)
        head = ParamVector(gen.uniform(-0.16, 0.16, 2000), [(10, 200)])
        params = ParamVector.concat(theta, head)
        state = AdamState.like(params, 0.01)
        for _ in range(1000):
            theta, head = params.split(1)
            g_head, g_theta, _ = joint_gradient(specs, theta, head, batch)
            params, state = adam_step(state, params, ParamVector.concat(g_theta, g_head))
        theta, head = params.split(1)
        acc = np.mean(predict(specs, theta, head, batch.inputs) == batch.labels)
        assert acc >= 0.95


class TestBuildFederation:
    def setup_method(self):
        self.samples = generate_synthetic(SyntheticSpec(seed=0))
        self.datasets = build_federation(self.samples, PersonalizationSpec(Degree.HIGH, 10), 20, 0)

    def test_alphas_sum_to_one(self):
        assert sum(d.alpha for d in self.datasets) == pytest.approx(1.0, abs=1e-12)
        for d in self.datasets:
            assert d.alpha == pytest.approx(d.n_train / sum(x.n_train for x in self.datasets), rel=1e-15)

    def test_labels_are_local(self):
        for d in self.datasets:
            assert d.n_classes == 2
            assert set(d.train.labels.tolist()) == {0, 1}
            assert set(d.global_labels("test").tolist()) == set(d.class_ids)

    def test_samples_used_at_most_once_and_match_source(self):
        flat = np.concatenate(self.samples)
        used = np.concatenate([np.concatenate([d.train_index, d.test_index]) for d in self.datasets])
        assert len(used) == len(set(used.tolist())) == len(flat)
        for d in self.datasets:
            np.testing.assert_array_equal(d.train.inputs, flat[d.train_index])

    def test_about_100_train_samples_per_class(self):
        # 134 per class at 0.75 is 100.5; every holder's shard floors its own test side,
        # which adds less than one training sample per holder
        per_class, holders = Counter(), Counter()
        for d in self.datasets:
            per_class.update(d.global_labels("train").tolist())
            holders.update(d.class_ids)
        for c, n in per_class.items():
            assert 100 <= n < 100.5 + holders[c]

    def test_deterministic(self):
        again = build_federation(self.samples, PersonalizationSpec(Degree.HIGH, 10), 20, 0)
        for a, b in zip(self.datasets, again):
            assert a.class_ids == b.class_ids
            np.testing.assert_array_equal(a.train.inputs, b.train.inputs)

    def test_too_small_shard_names_the_client(self):
        samples = generate_synthetic(SyntheticSpec(4, 10, 6, 0.5, 0))
        with pytest.raises(InputError, match="client"):
            build_federation(samples, PersonalizationSpec(Degree.NONE, 4), 6, 0)


def test_subsample_keeps_at_most(gen):
    out = subsample_classes([np.arange(50)[:, None], np.arange(3)[:, None]], 10, gen)
    assert [len(x) for x in out] == [10, 3]
    assert len(set(out[0].ravel().tolist())) == 10
