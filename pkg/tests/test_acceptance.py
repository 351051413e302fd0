"""Acceptance criteria, one test each, at their stated tolerances.

Every test records a ``PASS``/``FAIL criterion N`` line; the lines are echoed
in a summary section at the end of the pytest run. Run this file alone with
``pytest tests/test_acceptance.py``.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from conftest import ACCEPTANCE_LINES
from pflego.cli import main as cli_main
from pflego.data import Degree
from pflego.errors import FormatError
from pflego.fl import AlgorithmConfig, Mode, ParticipationConfig, sample_participants
from pflego.idx import read_idx_images, read_idx_labels
from pflego.orchestrator import ExperimentConfig, final_window, run_experiment
from pflego.orchestrator.verify import forward_pass_counts, gradient_check, oracle_equivalence, unbiasedness_suite

SEEDS = (0, 1, 2, 3, 4)


def record(number, name, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {name} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def desk_run(algorithm, seed, personalization=Degree.HIGH, rounds=100, eval_every=1, rate=0.2, **training):
    """The desk-scale synthetic fixture: I=20, C=10, K=2 (High), D=10, spread 0.5, ~100 train samples per class."""
    cfg = ExperimentConfig(
        algorithm=AlgorithmConfig(algorithm, tau=50, **training),
        seed=seed,
        rounds=rounds,
        eval_every=eval_every,
        clients=20,
        participation_rate=rate,
        personalization=personalization,
    )
    return run_experiment(cfg)


def test_criterion_1_exact_sgd_oracle_equivalence():
    start = time.perf_counter()
    dev = oracle_equivalence(seed=0, rounds=10, rate=0.1)
    elapsed = time.perf_counter() - start
    record(
        1,
        "exact-SGD oracle equivalence",
        dev < 1e-12 and elapsed < 5,
        f"max deviation {dev:.2e} over 10 rounds (tol 1e-12), {elapsed:.2f}s (limit 5s)",
    )


def test_criterion_2_exhaustive_unbiasedness():
    start = time.perf_counter()
    results = unbiasedness_suite(seed=0)
    elapsed = time.perf_counter() - start
    worst = max(r.max_abs_deviation for r in results.values())
    worst_block = max(max(r.block_deviation.values()) for r in results.values())
    subsets = results["fixed r=2"].n_subsets
    record(
        2,
        "exhaustive unbiasedness",
        worst < 1e-12 and subsets == 6 and len(results) == 5 and elapsed < 5,
        f"r=1..4 and binomial: max deviation {worst:.2e}, per-block max {worst_block:.2e} (tol 1e-12); "
        f"r=2 averaged {subsets} subsets; {elapsed:.2f}s (limit 5s)",
    )


def test_criterion_3_gradient_correctness():
    start = time.perf_counter()
    err = gradient_check(seed=0, h=1e-5)
    elapsed = time.perf_counter() - start
    record(
        3,
        "finite-difference gradients",
        err < 1e-6 and elapsed < 10,
        f"max relative error {err:.2e} over every theta and W_i coordinate (tol 1e-6), {elapsed:.2f}s (limit 10s)",
    )


def test_criterion_4_forward_pass_accounting():
    counts = forward_pass_counts(seed=0, taus=(1, 5, 50))
    bad = {k: v for k, v in counts.items() if v != ([2] if k[0] in ("pflego", "fedrecon") else [k[1]])}
    record(
        4,
        "complexity accounting",
        not bad,
        "PFLEGO/FedRecon 2 passes, FedAvg/FedPer tau passes, tau in {1, 5, 50}" + (f"; mismatches {bad}" if bad else ""),
    )


def test_criterion_5_directional_table_reproduction():
    start = time.perf_counter()
    high_ok, none_ok, notes = 0, 0, []
    for seed in SEEDS:
        pf = desk_run("pflego", seed)
        fa = desk_run("fedavg", seed)
        acc_gap = final_window(pf)["mean_test_accuracy"]["mean"] - final_window(fa)["mean_test_accuracy"]["mean"]
        loss_lower = pf[-1].global_train_loss < fa[-1].global_train_loss
        high_ok += acc_gap >= 0.02 and loss_lower
        pf_none = desk_run("pflego", seed, Degree.NONE)
        fa_none = desk_run("fedavg", seed, Degree.NONE)
        none_gap = final_window(fa_none)["mean_test_accuracy"]["mean"] - final_window(pf_none)["mean_test_accuracy"]["mean"]
        none_ok += none_gap >= -0.01
        notes.append(f"s{seed}: high +{100 * acc_gap:.1f}pt loss {'<' if loss_lower else '>='}, none {100 * none_gap:+.1f}pt")
    elapsed = time.perf_counter() - start
    record(
        5,
        "desk-scale High-pers and No-pers ordering",
        high_ok >= 4 and none_ok >= 4 and elapsed < 120,
        f"High-pers {high_ok}/5 seeds, No-pers {none_ok}/5 seeds (need 4/5); {'; '.join(notes)}; {elapsed:.0f}s (limit 120s)",
    )


def rounds_to_reach(reports, threshold):
    for r in reports:
        if r.global_train_loss <= threshold:
            return r.round
    return None


def test_criterion_6_participation_rate_ablation():
    threshold, horizon = 0.3, 150
    start = time.perf_counter()
    rates = (0.2, 0.4, 0.6, 1.0)
    hits = [rounds_to_reach(desk_run("pflego", 0, rounds=horizon, rate=r), threshold) for r in rates]
    elapsed = time.perf_counter() - start
    reached = all(h is not None for h in hits)
    inversions = [b - a for a, b in zip(hits, hits[1:])] if reached else []
    rises = [d for d in inversions if d > 0]
    monotone = reached and (not rises or (len(rises) == 1 and rises[0] <= 5))
    record(
        6,
        "participation-rate ablation",
        monotone and elapsed < 300,
        f"rounds to loss <= {threshold} at r = 20/40/60/100%: {hits} "
        f"(non-increasing, one inversion of <= 5 allowed); {elapsed:.0f}s (limit 300s)",
    )


def test_criterion_7_client_rate_ablation():
    betas = (0.001, 0.004, 0.007)
    ok, notes = 0, []
    for seed in SEEDS:
        losses = [desk_run("pflego", seed, eval_every=100, beta=b, server_rate=0.001)[-1].global_train_loss for b in betas]
        monotone = all(b <= a for a, b in zip(losses, losses[1:]))
        ok += monotone
        notes.append(f"s{seed}: " + " > ".join(f"{x:.3f}" for x in losses) if monotone else f"s{seed}: {losses}")
    record(
        7,
        "client-rate ablation",
        ok >= 4,
        f"final loss non-increasing over beta = {betas} on {ok}/5 seeds (need 4/5); {'; '.join(notes)}",
    )


def test_criterion_8_participation_marginal():
    cfg = ParticipationConfig(100, Mode.FIXED, count=20)
    gen = np.random.default_rng(2024)
    counts = np.zeros(100)
    draws = 10**5
    for _ in range(draws):
        counts[sample_participants(cfg, gen)] += 1
    freq = counts / draws
    worst = float(np.max(np.abs(freq - 0.2)))
    record(
        8,
        "participation marginal",
        worst <= 0.01,
        f"10^5 draws, I=100, r=20: inclusion frequency in [{freq.min():.4f}, {freq.max():.4f}], "
        f"max |f - 0.20| = {worst:.4f} (tol 0.01)",
    )


def test_criterion_9_thread_determinism(tmp_path):
    identical = True
    sizes = []
    for alg in ("pflego", "fedavg", "fedper", "fedrecon"):
        cfg = tmp_path / f"{alg}.yaml"
        cfg.write_text(
            yaml.safe_dump({"algorithm": alg, "seed": 3, "rounds": 10, "synthetic": {}, "output": {"figures": False}})
        )
        outputs = []
        for threads in (1, 2, 4):
            out = tmp_path / f"{alg}-{threads}"
            assert cli_main(["run", "--config", str(cfg), "--threads", str(threads), "--out", str(out)]) == 0
            outputs.append((out / "rounds.csv").read_bytes())
        identical &= outputs[0] == outputs[1] == outputs[2]
        sizes.append(len(outputs[0]))
    record(
        9,
        "thread determinism",
        identical,
        f"rounds.csv byte-identical under 1, 2, 4 threads for all four algorithms ({min(sizes)}-{max(sizes)} bytes)",
    )


def test_criterion_10a_idx_malformed_fixtures(tmp_path):
    errors = []
    cases = {
        "wrong magic": (read_idx_labels, bytes.fromhex("00000803 00000001") + b"\x05"),
        "truncated payload": (read_idx_images, bytes.fromhex("00000803 00000002 00000002 00000002") + bytes(5)),
        "truncated header": (read_idx_images, bytes.fromhex("00000803 00000002")),
        "trailing bytes": (read_idx_labels, bytes.fromhex("00000801 00000001") + b"\x05\x06"),
    }
    for name, (reader, raw) in cases.items():
        path = tmp_path / name.replace(" ", "_")
        path.write_bytes(raw)
        try:
            reader(path)
            errors.append(f"{name}: accepted")
        except FormatError as exc:
            if "offset" not in str(exc):
                errors.append(f"{name}: no offset in {exc}")
    record(10, "IDX malformed fixtures", not errors, "format errors with byte offsets for " + ", ".join(cases) + (f"; {errors}" if errors else ""))


def _find_mnist():
    roots = [os.environ.get("PFLEGO_MNIST_DIR"), Path(__file__).resolve().parents[1] / "data", Path.home() / "data" / "mnist"]
    for root in filter(None, roots):
        root = Path(root)
        found = {}
        for stem in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"):
            for name in (stem, stem + ".gz"):
                if (root / name).is_file():
                    found[stem] = root / name
        if len(found) == 4:
            return found
    return None


def test_criterion_10b_real_mnist():
    files = _find_mnist()
    if files is None:
        line = "SKIP  criterion 10: real MNIST files | not present locally (set PFLEGO_MNIST_DIR to enable)"
        ACCEPTANCE_LINES.append(line)
        pytest.skip(line)
    train = read_idx_images(files["train-images-idx3-ubyte"])
    test = read_idx_images(files["t10k-images-idx3-ubyte"])
    n_train = len(read_idx_labels(files["train-labels-idx1-ubyte"]))
    n_test = len(read_idx_labels(files["t10k-labels-idx1-ubyte"]))
    ok = train.shape == (60000, 784) and test.shape == (10000, 784) and (n_train, n_test) == (60000, 10000)
    record(10, "real MNIST files", ok, f"train {train.shape}, test {test.shape}, labels {n_train}/{n_test}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
