import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geo_opt.born_machine import (
    BitstringDataset,
    MpsModel,
    TrainConfig,
    born_probabilities,
    born_probability,
    canonicalize,
    init_mps,
    load_model,
    log_norm,
    negative_log_likelihood,
    sample,
    save_model,
    split_merged,
    to_strings,
    train,
    two_site_nll_gradient,
)
from geo_opt.errors import InvalidArgument, OutOfSupportError

from conftest import enumerate_amplitudes


def random_mps(n, bond, seed):
    rng = np.random.default_rng(seed)
    dims = [1] + [bond] * (n - 1) + [1]
    return MpsModel([rng.normal(size=(dims[k], 2, dims[k + 1])) for k in range(n)])


def all_bits(n):
    return np.array([[(i >> (n - 1 - k)) & 1 for k in range(n)] for i in range(2 ** n)], dtype=np.uint8)


def test_probabilities_match_enumeration():
    m = random_mps(6, 3, 0)
    amps = enumerate_amplitudes(m.tensors)
    z = sum(a * a for a in amps.values())
    p = born_probabilities(m, all_bits(6))
    ref = np.array([amps[s] ** 2 / z for s in to_strings(all_bits(6))])
    np.testing.assert_allclose(p, ref, rtol=1e-12, atol=1e-15)
    assert math.isclose(log_norm(m), math.log(z), rel_tol=1e-12)


def test_canonicalize_keeps_distribution():
    m = random_mps(7, 4, 1)
    bits = all_bits(7)
    p0 = born_probabilities(m, bits)
    for c in (0, 3, 6):
        np.testing.assert_allclose(born_probabilities(canonicalize(m, c), bits), p0, rtol=1e-10, atol=1e-16)


def test_right_canonical_isometries():
    m = canonicalize(random_mps(6, 3, 2), 0)
    for t in m.tensors[1:]:
        mat = t.reshape(t.shape[0], -1)
        np.testing.assert_allclose(mat @ mat.T, np.eye(t.shape[0]), atol=1e-12)


def test_born_probability_string_and_length_check():
    m = random_mps(4, 2, 3)
    assert born_probability(m, "0110") == pytest.approx(born_probabilities(m, [[0, 1, 1, 0]])[0])
    with pytest.raises(InvalidArgument):
        born_probability(m, "011")


def test_gradient_matches_finite_differences():
    n, bond = 6, 3
    m = random_mps(n, bond, 4)
    rng = np.random.default_rng(5)
    data = BitstringDataset(n, rng.integers(0, 2, size=(40, n)))
    uniq, freq = data.unique_weighted()
    keys = to_strings(uniq)

    def nll_from_merged(merged, bond_idx):
        # rebuild amplitudes with the merged tensor in place of the pair
        ts = m.tensors
        amps = {}
        for s in (to_strings(all_bits(n))):
            v = np.ones(1)
            for k in range(bond_idx):
                v = v @ ts[k][:, int(s[k]), :]
            v = v @ merged[:, int(s[bond_idx]), int(s[bond_idx + 1]), :]
            for k in range(bond_idx + 2, n):
                v = v @ ts[k][:, int(s[k]), :]
            amps[s] = float(v[0])
        z = sum(a * a for a in amps.values())
        return -sum(f * math.log(amps[k] ** 2 / z) for k, f in zip(keys, freq))

    for b in range(n - 1):
        merged, grad = two_site_nll_gradient(m, data, b)
        fd = np.zeros_like(merged)
        h = 1e-6
        for idx in np.ndindex(merged.shape):
            up, dn = merged.copy(), merged.copy()
            up[idx] += h
            dn[idx] -= h
            fd[idx] = (nll_from_merged(up, b) - nll_from_merged(dn, b)) / (2 * h)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) < 1e-6


def test_split_merged_truncates_and_reconstructs():
    rng = np.random.default_rng(6)
    merged = rng.normal(size=(3, 2, 2, 3))
    a, b = split_merged(merged, 12, 0.0, True)
    # the split is normalized, so compare up to the overall scale
    np.testing.assert_allclose(np.einsum("asb,btc->astc", a, b), merged / np.linalg.norm(merged), atol=1e-12)
    a, b = split_merged(merged, 2, 0.0, True)
    assert a.shape[2] == 2 and b.shape[0] == 2


def test_training_reduces_nll_and_respects_bond_cap():
    rng = np.random.default_rng(7)
    rows = np.zeros((200, 8), dtype=np.uint8)
    for r in rows:
        r[rng.choice(8, 4, replace=False)] = 1
    data = BitstringDataset(8, rows)
    m0 = init_mps(8, 2, 0)
    m = train(m0, data, TrainConfig(max_bond_dim=3, n_sweeps=3))
    assert max(m.bond_dims) <= 3
    assert m.history[-1]["nll_after"] < m.history[-1]["nll_before"]
    assert negative_log_likelihood(m, data) == pytest.approx(m.history[-1]["nll_after"])


def test_single_site_training_is_exact():
    data = BitstringDataset.from_strings(["1", "1", "0", "1"])
    m = train(init_mps(1), data)
    assert born_probability(m, "1") == pytest.approx(0.75, abs=1e-12)


def test_nll_out_of_support():
    t = np.zeros((1, 2, 1))
    t[0, 0, 0] = 1.0
    m = MpsModel([t, t.copy()])
    with pytest.raises(OutOfSupportError):
        negative_log_likelihood(m, BitstringDataset.from_strings(["01"]))


def test_sampling_matches_distribution():
    m = random_mps(4, 2, 8)
    s = sample(m, 40000, seed=1)
    keys, counts = np.unique(to_strings(s), return_counts=True)
    emp = dict(zip(keys, counts / counts.sum()))
    p = dict(zip(to_strings(all_bits(4)), born_probabilities(m, all_bits(4))))
    for k, v in p.items():
        assert abs(emp.get(k, 0.0) - v) < 5 * math.sqrt(v * (1 - v) / 40000) + 1e-4


def test_sampling_is_seeded():
    m = random_mps(10, 3, 9)
    np.testing.assert_array_equal(sample(m, 50, seed=3), sample(m, 50, seed=3))


@pytest.mark.parametrize("suffix", [".json", ".npz"])
def test_save_load_roundtrip(tmp_path, suffix):
    m = canonicalize(random_mps(5, 3, 10), 0)
    cfg = TrainConfig(max_bond_dim=7)
    save_model(m, tmp_path / f"m{suffix}", cfg)
    back, cfg2 = load_model(tmp_path / f"m{suffix}")
    assert cfg2 == cfg
    assert back.canonical_center == 0
    for a, b in zip(m.tensors, back.tensors):
        assert a.shape == b.shape
        assert a.tobytes() == b.tobytes()


def test_load_rejects_other_version(tmp_path):
    m = random_mps(3, 2, 11)
    save_model(m, tmp_path / "m.json")
    text = (tmp_path / "m.json").read_text().replace('"version": 1', '"version": 99')
    (tmp_path / "m.json").write_text(text)
    with pytest.raises(InvalidArgument):
        load_model(tmp_path / "m.json")


def test_config_validation():
    with pytest.raises(InvalidArgument):
        TrainConfig(learning_rate=0).validate()
    with pytest.raises(InvalidArgument):
        TrainConfig(learning_rate=float("nan")).validate()
    with pytest.raises(InvalidArgument):
        TrainConfig(max_bond_dim=0).validate()


def test_dataset_validation():
    with pytest.raises(InvalidArgument):
        BitstringDataset(3, np.zeros((0, 3)))
    with pytest.raises(InvalidArgument):
        BitstringDataset(3, np.array([[0, 2, 1]]))
    with pytest.raises(InvalidArgument):
        BitstringDataset(3, np.zeros((2, 4)))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 9), bond=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_normalization_property(n, bond, seed):
    m = random_mps(n, bond, seed)
    assert born_probabilities(m, all_bits(n)).sum() == pytest.approx(1.0, abs=1e-10)
