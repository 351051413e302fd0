"""Building a federation: synthetic classes, label-skewed class assignment,
Round-Robin dealing of samples, and per-client train/test splits."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng as rngs
from .errors import ConfigurationError, InputError
from .model import data_weights
from .nn import Batch


class Degree(str, enum.Enum):
    HIGH = "high"
    MEDIUM = "medium"
    NONE = "none"


@dataclass(frozen=True)
class PersonalizationSpec:
    degree: Degree
    total_classes: int

    def __post_init__(self):
        object.__setattr__(self, "degree", Degree(self.degree))
        if self.total_classes < 1:
            raise ConfigurationError("total_classes must be positive")
        if self.classes_per_client > self.total_classes or self.classes_per_client < 1:
            raise ConfigurationError(
                f"{self.degree.value} personalization needs {self.classes_per_client} classes "
                f"per client but only {self.total_classes} exist"
            )

    @property
    def classes_per_client(self) -> int:
        if self.degree is Degree.HIGH:
            return 2
        if self.degree is Degree.MEDIUM:
            return self.total_classes // 2
        return self.total_classes


@dataclass(frozen=True)
class SyntheticSpec:
    classes: int = 10
    input_dim: int = 10
    samples_per_class: int = 134
    spread: float = 0.5
    seed: int | None = None

    def __post_init__(self):
        if self.classes < 1 or self.input_dim < 1:
            raise ConfigurationError("classes and input_dim must be positive")
        if self.samples_per_class < 2:
            raise ConfigurationError("samples_per_class must be at least 2 to allow a train/test split")
        if self.spread < 0:
            raise ConfigurationError("spread must be non-negative")


@dataclass(frozen=True)
class ClientDataset:
    """One client's local data; labels are local indices into ``class_ids``."""

    client_id: int
    train: Batch
    test: Batch
    class_ids: tuple[int, ...]
    alpha: float = 1.0
    train_index: np.ndarray = field(default=None, repr=False, compare=False)
    test_index: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        k = len(self.class_ids)
        for name, batch in (("train", self.train), ("test", self.test)):
            if batch.labels.max() >= k:
                raise InputError(f"client {self.client_id}: {name} label outside its {k} classes")

    @property
    def n_train(self) -> int:
        return len(self.train)

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    def global_labels(self, split: str = "train") -> np.ndarray:
        batch = self.train if split == "train" else self.test
        return np.asarray(self.class_ids, dtype=np.int64)[batch.labels]


def generate_synthetic(spec: SyntheticSpec, max_tries: int = 1000) -> list[np.ndarray]:
    """Gaussian blobs, one per class.

    Class means are Gaussian with covariance ``I / D``, so their norms are
    close to 1. They are redrawn until every pair is at least ``2 * spread``
    apart. Samples add isotropic noise of standard deviation ``spread``.
    A missing seed means 0.
    """
    gen = rngs.stream(spec.seed or 0, rngs.SYNTHETIC)
    min_sep = 2.0 * spec.spread
    for _ in range(max_tries):
        means = gen.standard_normal((spec.classes, spec.input_dim)) / np.sqrt(spec.input_dim)
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= min_sep:
            break
    else:
        raise ConfigurationError(
            f"could not place {spec.classes} class means {min_sep} apart in {spec.input_dim} dimensions"
        )
    return [
        means[c] + spec.spread * gen.standard_normal((spec.samples_per_class, spec.input_dim))
        for c in range(spec.classes)
    ]


def assign_classes(
    spec: PersonalizationSpec, n_clients: int, gen: np.random.Generator, max_retries: int = 1000
) -> list[tuple[int, ...]]:
    """Draw ``K`` distinct classes per client; redraw everything if a class is left uncovered."""
    if n_clients < 1:
        raise ConfigurationError("need at least one client")
    c, k = spec.total_classes, spec.classes_per_client
    if k * n_clients >= c:
        for _ in range(max_retries):
            picks = [tuple(sorted(gen.choice(c, size=k, replace=False).tolist())) for _ in range(n_clients)]
            if len({x for p in picks for x in p}) == c:
                return picks
    raise ConfigurationError(
        f"could not cover all {c} classes with {n_clients} clients holding {k} classes each "
        f"after {max_retries} attempts; use more clients or a lower degree of personalization"
    )


def round_robin_partition(
    class_sizes: Sequence[int],
    assignments: Sequence[Sequence[int]],
    gen: np.random.Generator,
) -> list[dict[int, np.ndarray]]:
    """Deal each class's shuffled sample indices one at a time to the clients holding it.

    Returns, per client, a map from class id to indices into that class's samples.
    """
    shards: list[dict[int, np.ndarray]] = [{} for _ in assignments]
    for c, n in enumerate(class_sizes):
        holders = [i for i, classes in enumerate(assignments) if c in classes]
        if not holders:
            raise InputError(f"class {c} has no assigned clients")
        if n < 1:
            raise InputError(f"class {c} has no samples")
        order = gen.permutation(n)
        for slot, i in enumerate(holders):
            shards[i][c] = order[slot :: len(holders)]
    return shards


def train_test_split(
    class_samples: Sequence[np.ndarray], train_fraction: float, gen: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Stratified split per class; the test side gets ``floor(n * (1 - f))`` samples."""
    if not 0 < train_fraction < 1:
        raise InputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    train, test = [], []
    for c, samples in enumerate(class_samples):
        n = len(samples)
        n_test = math.floor(n * (1.0 - train_fraction) + 1e-9)
        if n_test < 1 or n - n_test < 1:
            raise InputError(
                f"class {c} with {n} samples cannot be split {train_fraction:g}/{1 - train_fraction:g} "
                "with at least one sample on each side"
            )
        order = gen.permutation(n)
        train.append(samples[order[: n - n_test]])
        test.append(samples[order[n - n_test :]])
    return train, test


def build_federation(
    class_samples: Sequence[np.ndarray],
    personalization: PersonalizationSpec,
    n_clients: int,
    seed: int,
    train_fraction: float = 0.75,
) -> list[ClientDataset]:
    """Assign classes, deal samples Round-Robin, then split each client's shard per class."""
    if len(class_samples) != personalization.total_classes:
        raise ConfigurationError(
            f"data has {len(class_samples)} classes but personalization expects {personalization.total_classes}"
        )
    assignments = assign_classes(personalization, n_clients, rngs.stream(seed, rngs.CLASS_ASSIGNMENT))
    shards = round_robin_partition(
        [len(s) for s in class_samples], assignments, rngs.stream(seed, rngs.PARTITION)
    )
    offsets = np.cumsum([0] + [len(s) for s in class_samples])
    clients = []
    for i, (classes, shard) in enumerate(zip(assignments, shards)):
        gen = rngs.stream(seed, rngs.SPLIT, i)
        try:
            idx_train, idx_test = train_test_split([shard[c] for c in classes], train_fraction, gen)
        except InputError as exc:
            raise InputError(f"client {i} (classes {list(classes)}): {exc}") from exc
        batches = []
        for parts in (idx_train, idx_test):
            x = np.concatenate([class_samples[c][p] for c, p in zip(classes, parts)])
            y = np.concatenate([np.full(len(p), local) for local, p in enumerate(parts)])
            index = np.concatenate([offsets[c] + p for c, p in zip(classes, parts)])
            batches.append((Batch(x, y), index))
        (train, train_index), (test, test_index) = batches
        clients.append(ClientDataset(i, train, test, tuple(classes), 1.0, train_index, test_index))
    return with_alphas(clients)


def with_alphas(clients: Sequence[ClientDataset]) -> list[ClientDataset]:
    alphas = data_weights([c.n_train for c in clients])
    return [
        ClientDataset(c.client_id, c.train, c.test, c.class_ids, float(a), c.train_index, c.test_index)
        for c, a in zip(clients, alphas)
    ]


def subsample_classes(
    class_samples: Sequence[np.ndarray], per_class: int, gen: np.random.Generator
) -> list[np.ndarray]:
    """Keep at most ``per_class`` randomly chosen samples of every class."""
    out = []
    for samples in class_samples:
        if len(samples) > per_class:
            samples = samples[np.sort(gen.choice(len(samples), size=per_class, replace=False))]
        out.append(samples)
    return out
