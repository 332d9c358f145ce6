import numpy as np
import pytest

from anonphy.channel import (
    RNG_LABEL,
    ChannelSet,
    block_generator,
    dump_channel_set,
    generate_channel_set,
    load_channel_set,
)


def test_same_seed_reproduces_bit_for_bit():
    a = generate_channel_set(3, 2, 4, 99)
    b = generate_channel_set(3, 2, 4, 99)
    for ma, mb in zip(a.matrices, b.matrices):
        assert np.array_equal(ma, mb)


def test_different_seeds_differ():
    a = generate_channel_set(2, 2, 2, 0)
    b = generate_channel_set(2, 2, 2, 1)
    assert not np.allclose(a.matrices[0], b.matrices[0])


def test_shapes_and_label():
    cs = generate_channel_set(5, 3, 7, 0)
    assert cs.n_users == 5 and cs.n_rx == 3 and cs.n_tx == 7
    assert all(m.shape == (3, 7) for m in cs.matrices)
    assert cs.rng_label == RNG_LABEL == "numpy-philox4x64-10"


def test_unit_variance_entries():
    cs = generate_channel_set(4, 40, 40, 7)
    flat = np.concatenate([m.ravel() for m in cs.matrices])
    # E|h|^2 = 1, split evenly between the real and imaginary parts
    assert abs(np.mean(np.abs(flat) ** 2) - 1.0) < 0.03
    assert abs(np.var(flat.real) - 0.5) < 0.03
    assert abs(np.mean(flat)) < 0.03


def test_cached_matrices_are_consistent():
    cs = generate_channel_set(2, 3, 5, 11)
    for h, pinv, proj, gram2 in zip(cs.matrices, cs.pinvs, cs.projectors, cs.gram_squares):
        assert np.allclose(h @ pinv @ h, h, atol=1e-10)
        assert np.allclose(proj, h @ pinv, atol=1e-12)
        assert np.allclose(proj @ proj, proj, atol=1e-10)  # idempotent
        assert np.allclose(proj, proj.conj().T, atol=1e-10)
        g = h.conj().T @ h
        assert np.allclose(gram2, g @ g, atol=1e-10)


def test_arrays_are_write_locked():
    cs = generate_channel_set(1, 2, 2, 0)
    with pytest.raises(ValueError):
        cs.matrices[0][0, 0] = 0.0


def test_block_generator_substreams():
    # same key -> same stream; any differing component -> a different stream
    a = block_generator(5, 2, 7).standard_normal(8)
    b = block_generator(5, 2, 7).standard_normal(8)
    assert np.array_equal(a, b)
    c = block_generator(5, 2, 8).standard_normal(8)
    d = block_generator(5, 3, 7).standard_normal(8)
    e = block_generator(6, 2, 7).standard_normal(8)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert not np.array_equal(a, e)


def test_generate_accepts_generator_and_seedsequence():
    ss = np.random.SeedSequence(42)
    a = generate_channel_set(2, 2, 2, np.random.Generator(np.random.Philox(ss)))
    b = generate_channel_set(2, 2, 2, np.random.SeedSequence(42))
    assert np.array_equal(a.matrices[1], b.matrices[1])


def test_from_matrices_validation():
    with pytest.raises(ValueError):
        ChannelSet.from_matrices([])
    with pytest.raises(ValueError):
        ChannelSet.from_matrices([np.eye(2), np.eye(3)])


def test_dump_load_round_trip(tmp_path):
    cs = generate_channel_set(3, 2, 4, 123)
    path = tmp_path / "channels.json"
    dump_channel_set(cs, path)
    back = load_channel_set(path)
    assert back.n_users == cs.n_users
    assert back.rng_label == cs.rng_label
    for ma, mb in zip(cs.matrices, back.matrices):
        assert np.array_equal(ma, mb)  # doubles survive JSON exactly


def test_dimension_validation():
    with pytest.raises(ValueError):
        generate_channel_set(0, 2, 2, 0)
    with pytest.raises(ValueError):
        generate_channel_set(1, 2, 0, 0)
