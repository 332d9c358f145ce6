"""Receiver-side sender identification.

Block-level detectors (MLE, M-Norm, MMSE), the standalone energy gate, the
anonymity entropy of a suspicion distribution, and real-operation counts for
the MLE and M-Norm rules.

Detector statistics are summed over all symbols of a block and one declared
sender is emitted per block; a per-symbol mode is available via the
``per_symbol`` flag.
"""

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import UnsupportedConfigurationError

RULE_MLE = "MLE"
RULE_MNORM = "MNorm"
RULE_MMSE = "MMSE"


@dataclass(frozen=True)
class DetectionResult:
    declared: int            # user index in 1..K
    statistics: np.ndarray   # per-user block statistic, all finite and >= 0
    rule: str


@dataclass(frozen=True)
class EnergyDecision:
    statistic: float
    active: bool
    threshold: float


def _as_block(y_block):
    y = np.atleast_2d(np.asarray(y_block, dtype=np.complex128))
    if y.size == 0:
        raise ValueError("empty receive block")
    return y


def energy_detect(y_block, beta, n_r):
    """Energy gate: mean per-symbol power per antenna against threshold beta."""
    if beta < 0:
        raise ValueError(f"energy threshold must be >= 0, got {beta}")
    y = _as_block(y_block)
    if y.shape[1] != n_r:
        raise ValueError(f"expected symbols of length {n_r}, got {y.shape[1]}")
    t = float(np.mean(np.sum(np.abs(y) ** 2, axis=1)) / n_r)
    return EnergyDecision(statistic=t, active=t > beta, threshold=float(beta))


def false_alarm_probability(beta, n_r, sigma2):
    """P(T > beta) under noise only, where 2*N_r*T/sigma2 is chi-square(2*N_r).

    Reduces to exp(-beta) for N_r=1, sigma2=1.
    """
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be > 0, got {sigma2}")
    if beta < 0:
        raise ValueError(f"energy threshold must be >= 0, got {beta}")
    return float(special.gammaincc(n_r, n_r * beta / sigma2))


def _per_symbol_stats(y, cs, rule, p=None, sigma2=None):
    """Per-symbol per-user statistic matrix, shape (n_symbols, K)."""
    cols = []
    if rule == RULE_MNORM:
        for h in cs.matrices:
            z = y @ h.conj()
            cols.append(np.sum(np.abs(z) ** 2, axis=1))
    elif rule == RULE_MLE:
        eye = np.eye(cs.n_rx)
        for proj in cs.projectors:
            r = y @ (eye - proj).T
            cols.append(np.sum(np.abs(r) ** 2, axis=1))
    elif rule == RULE_MMSE:
        eye = np.eye(cs.n_rx)
        reg = sigma2 * cs.n_tx / p
        for h in cs.matrices:
            gram = h.conj().T @ h + reg * np.eye(cs.n_tx)
            m = eye - h @ np.linalg.solve(gram, h.conj().T)
            r = y @ m.T
            cols.append(np.sum(np.abs(r) ** 2, axis=1))
    else:
        raise ValueError(f"unknown detection rule {rule!r}")
    return np.stack(cols, axis=1)


def _decide(stats, rule, per_symbol):
    pick = np.argmax if rule == RULE_MNORM else np.argmin
    if per_symbol:
        return [
            DetectionResult(int(pick(row)) + 1, row.copy(), rule)
            for row in stats
        ]
    block = stats.sum(axis=0)
    return DetectionResult(int(pick(block)) + 1, block, rule)


def detect_mle(y_block, cs, per_symbol=False):
    """Declare the user minimizing the out-of-column-space residual.

    Needs N_r > N_t; otherwise the projector is (generically) the identity and
    every residual collapses to zero.
    """
    if cs.n_rx <= cs.n_tx:
        raise UnsupportedConfigurationError(
            f"MLE detection needs N_r > N_t, got N_r={cs.n_rx}, N_t={cs.n_tx}"
        )
    y = _as_block(y_block)
    stats = _per_symbol_stats(y, cs, RULE_MLE)
    return _decide(stats, RULE_MLE, per_symbol)


def detect_mnorm(y_block, cs, per_symbol=False):
    """Declare the user maximizing the matched-filter norm sum."""
    y = _as_block(y_block)
    stats = _per_symbol_stats(y, cs, RULE_MNORM)
    return _decide(stats, RULE_MNORM, per_symbol)


def detect_mmse(y_block, cs, p, sigma2, per_symbol=False):
    """Regularized residual detector; usable in both antenna regimes."""
    if p <= 0:
        raise ValueError(f"transmit power must be > 0, got {p}")
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be > 0, got {sigma2}")
    y = _as_block(y_block)
    stats = _per_symbol_stats(y, cs, RULE_MMSE, p=p, sigma2=sigma2)
    return _decide(stats, RULE_MMSE, per_symbol)


def anonymity_entropy(p):
    """Shannon entropy (bits) of a suspicion distribution over the K users."""
    p = np.asarray(p, dtype=np.float64)
    if p.size == 0:
        raise ValueError("empty probability vector")
    if np.any(p < 0):
        raise ValueError("probabilities must be >= 0")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def detector_complexity(rule, k, n_r, n_t):
    """Real-operation counts of the two block detectors.

    MLE counts the projector construction (pseudo-inverse included); M-Norm is
    a single matched filter per user.
    """
    if n_r < 1 or n_t < 1 or k < 0:
        raise ValueError("dimensions must be positive (K may be zero)")
    if rule == RULE_MLE:
        return k * (
            16 * n_r**2 * n_t
            + 24 * n_r * n_t**2
            + 29 * n_t**3
            + 8 * n_r * n_t
            + 8 * n_r
        )
    if rule == RULE_MNORM:
        return k * (8 * n_t * n_r + 8 * n_t)
    raise ValueError(f"no operation count defined for rule {rule!r}")
