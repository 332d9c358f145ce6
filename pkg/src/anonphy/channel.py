"""Rayleigh block-fading channel registry for the candidate senders.

Every Monte-Carlo block draws one ChannelSet: K independent N_r x N_t matrices
with i.i.d. circularly-symmetric complex Gaussian entries of unit variance.
The set caches the per-user pseudo-inverse, the column-space projector
H @ pinv(H) and the squared Gram matrix (H^H H)^2, because the detectors and
the precoder constraints reuse them many times per block.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .numerics import pseudo_inverse

RNG_LABEL = "numpy-philox4x64-10"


def _as_generator(seed):
    """Accept an int seed, a SeedSequence or a ready Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def block_generator(seed, point_index, block_index):
    """Independent substream for one Monte-Carlo block.

    Keyed by (point, block) so results do not depend on scheduling order when
    blocks run in parallel.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(point_index), int(block_index)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class ChannelSet:
    """K candidate channels plus cached derived matrices."""

    matrices: tuple          # K matrices, each (n_rx, n_tx)
    pinvs: tuple             # pseudo-inverses, each (n_tx, n_rx)
    projectors: tuple        # H @ pinv(H), each (n_rx, n_rx)
    gram_squares: tuple      # (H^H H)^2, each (n_tx, n_tx)
    rng_label: str = field(default=RNG_LABEL)

    @property
    def n_users(self):
        return len(self.matrices)

    @property
    def n_rx(self):
        return self.matrices[0].shape[0]

    @property
    def n_tx(self):
        return self.matrices[0].shape[1]

    @classmethod
    def from_matrices(cls, matrices, rng_label=RNG_LABEL):
        mats = tuple(np.array(m, dtype=np.complex128) for m in matrices)
        if not mats:
            raise ValueError("ChannelSet needs at least one channel matrix")
        shape = mats[0].shape
        if any(m.shape != shape for m in mats):
            raise ValueError("all channel matrices must share one shape")
        pinvs = tuple(pseudo_inverse(m) for m in mats)
        projectors = tuple(m @ p for m, p in zip(mats, pinvs))
        grams = tuple(m.conj().T @ m for m in mats)
        gram_squares = tuple(g @ g for g in grams)
        for arr in (*mats, *pinvs, *projectors, *gram_squares):
            arr.setflags(write=False)
        return cls(mats, pinvs, projectors, gram_squares, rng_label)


def generate_channel_set(k, n_r, n_t, seed):
    """Draw K independent unit-variance CSCG channel matrices.

    `seed` may be an int, a numpy SeedSequence or a Generator (the simulator
    passes per-block substreams).  An identical int seed reproduces the set
    bit for bit.
    """
    if k < 1 or n_r < 1 or n_t < 1:
        raise ValueError(f"channel set dimensions must be positive, got K={k}, N_r={n_r}, N_t={n_t}")
    rng = _as_generator(seed)
    mats = []
    for _ in range(k):
        re = rng.standard_normal((n_r, n_t))
        im = rng.standard_normal((n_r, n_t))
        mats.append((re + 1j * im) / np.sqrt(2.0))
    return ChannelSet.from_matrices(mats)


def dump_channel_set(cs, path):
    """Write a ChannelSet as JSON with interleaved (re, im) doubles, row-major."""
    payload = {
        "n_users": cs.n_users,
        "n_rx": cs.n_rx,
        "n_tx": cs.n_tx,
        "rng": cs.rng_label,
        "matrices": [
            [float(v) for pair in zip(m.real.ravel(), m.imag.ravel()) for v in pair]
            for m in cs.matrices
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_channel_set(path):
    """Read a ChannelSet written by dump_channel_set; caches are recomputed."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    n_r, n_t = int(payload["n_rx"]), int(payload["n_tx"])
    mats = []
    for flat in payload["matrices"]:
        arr = np.asarray(flat, dtype=np.float64)
        if arr.size != 2 * n_r * n_t:
            raise ValueError("channel dump has wrong entry count")
        mats.append((arr[0::2] + 1j * arr[1::2]).reshape(n_r, n_t))
    if len(mats) != int(payload["n_users"]):
        raise ValueError("channel dump has wrong matrix count")
    return ChannelSet.from_matrices(mats, rng_label=payload.get("rng", RNG_LABEL))
