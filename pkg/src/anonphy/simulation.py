"""Monte-Carlo engine: modulation, per-block pipeline, sweeps and metrics.

Conventions fixed here and relied on by the tests:

* SNR_dB = 10*log10(p_max / sigma2); the noise variance at a grid point is
  sigma2 = p_max * 10**(-snr_db/10).
* One block = one channel draw, one true sender, `block_len` symbol vectors.
  Per-block RNG substreams are keyed by (seed, point_index, block_index), so
  every precoder sees identical channels, senders, symbols and noise and the
  aggregation order never matters.
* Per-antenna demodulation for ISA/CIA/CI/MMSE (anonymity forbids coherent
  combining); the SVD benchmark combines with the declared sender's channel,
  or the true one when `svd_genie` is set.
"""

from dataclasses import dataclass, replace

import numpy as np

from .channel import block_generator, generate_channel_set
from .detection import (
    anonymity_entropy,
    detect_mle,
    detect_mmse,
    detect_mnorm,
)
from .errors import ConfigError, SolverFailureError
from .precoding import (
    STATUS_DEGRADED,
    benchmark_ci,
    benchmark_mmse,
    benchmark_svd,
    cia_precode_sr,
    cia_precode_ss,
    isa_precode,
    svd_combiner,
)

SCENARIO_SS = "strong_sender"
SCENARIO_SR = "strong_receiver"
PRECODERS = ("isa", "cia", "mmse", "svd", "ci")
DETECTORS = ("auto", "mle", "mnorm", "mmse")
AUDIT_REL_TOL = 1e-6


def psk_modulate(indices, m_order):
    """Map indices to unit-modulus M-PSK points s_m = exp(j(2m+1)pi/M)."""
    idx = np.asarray(indices)
    if np.any((idx < 0) | (idx >= m_order)):
        raise ValueError(f"symbol indices must lie in 0..{m_order - 1}")
    return np.exp(1j * (2 * idx + 1) * np.pi / m_order)


def psk_demodulate(y, m_order):
    """Nearest M-PSK index by phase.

    Decision boundaries sit at angles 2*pi*m/M; a value exactly on a boundary
    resolves to the lower adjacent index.  y = 0 is ambiguous and maps to 0.
    """
    if m_order < 2:
        raise ValueError(f"constellation order must be >= 2, got {m_order}")
    y = np.asarray(y, dtype=np.complex128)
    ang = np.mod(np.angle(y), 2.0 * np.pi)
    v = ang * m_order / (2.0 * np.pi)
    idx = np.floor(v).astype(np.int64)
    on_boundary = (v == idx) & (idx >= 1)
    idx = np.where(on_boundary, idx - 1, idx)
    idx = np.where(idx >= m_order, m_order - 1, idx)
    if np.ndim(y) == 0:
        return int(idx)
    return idx


def constructive_margin(y, s, m_order):
    """Distance of y (after derotation by s) inside the constructive wedge.

    gamma_hat = Re{y s*} - |Im{y s*}| / tan(pi/M); non-negative exactly when
    y demodulates to s with margin gamma_hat.
    """
    if m_order < 2:
        raise ValueError(f"constellation order must be >= 2, got {m_order}")
    s = complex(s)
    if abs(abs(s) - 1.0) > 1e-9:
        raise ValueError("reference symbol must be unit modulus")
    z = complex(y) * s.conjugate()
    return z.real - abs(z.imag) / np.tan(np.pi / m_order)


@dataclass
class SystemConfig:
    k: int = 5
    n_r: int = 10
    n_t: int = 10
    p_max: float = 1.0
    snr_grid: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
    m_order: int = 4
    epsilon: float = 20.0
    zeta: float = 8.0
    delta: float = 0.03
    beta: float = 0.01
    tau: float = 0.1
    gamma_lo: float = 0.0
    gamma_hi: float = 20.0
    block_len: int = 50
    n_blocks: int = 500
    seed: int = 0
    scenario: str = SCENARIO_SS
    precoder: str = "isa"
    detector: str = "auto"
    svd_genie: bool = False
    failure_budget: float = 0.01

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if self.scenario not in (SCENARIO_SS, SCENARIO_SR):
            bad(f"scenario must be one of {SCENARIO_SS!r}, {SCENARIO_SR!r}, got {self.scenario!r}")
        if self.precoder not in PRECODERS:
            bad(f"precoder must be one of {PRECODERS}, got {self.precoder!r}")
        if self.detector not in DETECTORS:
            bad(f"detector must be one of {DETECTORS}, got {self.detector!r}")
        if min(self.k, self.n_r, self.n_t) < 1:
            bad(f"k, n_r, n_t must be positive, got {self.k}, {self.n_r}, {self.n_t}")
        if self.scenario == SCENARIO_SS and self.n_r > self.n_t:
            bad(f"strong_sender needs n_r <= n_t, got n_r={self.n_r}, n_t={self.n_t}")
        if self.scenario == SCENARIO_SR and self.n_r <= self.n_t:
            bad(f"strong_receiver needs n_r > n_t, got n_r={self.n_r}, n_t={self.n_t}")
        if self.precoder == "isa" and self.scenario != SCENARIO_SS:
            bad("the isa precoder requires the strong_sender scenario")
        if self.precoder == "cia" and self.scenario == SCENARIO_SR and self.k < 2:
            bad("strong_receiver cia needs at least two candidate senders")
        if self.detector == "mle" and self.n_r <= self.n_t:
            bad("the mle detector needs n_r > n_t")
        if self.p_max <= 0:
            bad(f"p_max must be > 0, got {self.p_max}")
        if not self.snr_grid:
            bad("snr_grid must be non-empty")
        if self.m_order < 2:
            bad(f"m_order must be >= 2, got {self.m_order}")
        if self.epsilon <= 0:
            bad(f"epsilon must be > 0, got {self.epsilon}")
        if self.zeta < 0:
            bad(f"zeta must be >= 0, got {self.zeta}")
        if self.delta < 0:
            bad(f"delta must be >= 0, got {self.delta}")
        if self.beta < 0:
            bad(f"beta must be >= 0, got {self.beta}")
        if self.tau <= 0:
            bad(f"tau must be > 0, got {self.tau}")
        if not self.gamma_lo < self.gamma_hi:
            bad(f"need gamma_lo < gamma_hi, got [{self.gamma_lo}, {self.gamma_hi}]")
        if self.block_len < 1:
            bad(f"block_len must be >= 1, got {self.block_len}")
        if self.n_blocks < 1:
            bad(f"n_blocks must be >= 1, got {self.n_blocks}")
        if not 0 <= self.failure_budget <= 1:
            bad(f"failure_budget must lie in [0, 1], got {self.failure_budget}")
        return self

    def sigma2(self, snr_db):
        return self.p_max * 10.0 ** (-snr_db / 10.0)

    def resolved_detector(self):
        if self.detector != "auto":
            return self.detector
        return "mnorm" if self.scenario == SCENARIO_SS else "mle"

    def n_streams(self):
        return min(self.n_t, self.n_r) if self.precoder == "svd" else self.n_r


@dataclass
class BlockRecord:
    true_sender: int = 0          # 1-based
    declared: int = 0             # 1-based
    symbol_errors: int = 0
    n_symbols: int = 0
    objective: float = float("nan")
    iterations: float = 0.0
    failed: bool = False
    failure_reason: str = ""
    degraded: bool = False
    ambiguous_demods: int = 0
    # worst-case audit values over the block (relative where a threshold exists)
    power_rel: float = float("-inf")
    anonymity_rel: float = float("-inf")
    margin_gap: float = float("inf")   # min_i (margin_i - gamma*)

    @property
    def correct(self):
        return self.declared == self.true_sender


@dataclass
class PointResult:
    scenario: str
    precoder: str
    detector: str
    snr_db: float
    n_t: int
    n_r: int
    k: int
    epsilon: float
    zeta: float
    delta: float
    blocks: int
    der: float
    ser: float
    entropy_bits: float
    mean_objective: float
    mean_iterations: float
    seed: int
    failures: int = 0
    degraded: int = 0
    power_rel: float = float("-inf")
    anonymity_rel: float = float("-inf")
    margin_gap: float = float("inf")


@dataclass
class SweepReport:
    axis: str
    rows: list
    n_failed: int
    n_blocks: int


def _rel_excess(lhs, threshold):
    if threshold <= 0:
        return lhs - threshold  # absolute when the threshold is zero
    return (lhs - threshold) / threshold


def run_block(cfg, sigma2, rng):
    """One Monte-Carlo block; pure given (cfg, sigma2, rng substream)."""
    cs = generate_channel_set(cfg.k, cfg.n_r, cfg.n_t, rng)
    true_idx = int(rng.integers(cfg.k))
    alias_step = int(rng.integers(cfg.k - 1)) if cfg.k > 1 else 0
    alias_idx = alias_step + (1 if alias_step >= true_idx else 0) if cfg.k > 1 else true_idx
    n_s = cfg.n_streams()
    sym_idx = rng.integers(0, cfg.m_order, size=(cfg.block_len, cfg.n_r))[:, :n_s]
    noise = (
        rng.standard_normal((cfg.block_len, cfg.n_r))
        + 1j * rng.standard_normal((cfg.block_len, cfg.n_r))
    ) * np.sqrt(sigma2 / 2.0)

    h = cs.matrices[true_idx]
    symbols = psk_modulate(sym_idx, cfg.m_order)
    rec = BlockRecord(true_sender=true_idx + 1)

    try:
        xs, rec = _precode_block(cfg, sigma2, cs, true_idx, alias_idx, symbols, rec)
    except SolverFailureError as exc:
        rec.failed = True
        rec.failure_reason = str(exc)
        return rec
    if rec.failed:
        return rec

    y = xs @ h.T + noise

    det_rule = cfg.resolved_detector()
    if det_rule == "mnorm":
        det = detect_mnorm(y, cs)
    elif det_rule == "mle":
        det = detect_mle(y, cs)
    else:
        det = detect_mmse(y, cs, cfg.p_max, sigma2)
    rec.declared = det.declared

    if cfg.precoder == "svd":
        comb = (
            svd_combiner(cs.matrices[true_idx])
            if cfg.svd_genie
            else svd_combiner(cs.matrices[det.declared - 1])
        )
        z = (y @ comb.u.conj()) / comb.singular_values
    else:
        z = y[:, :n_s]
    rec.ambiguous_demods = int(np.count_nonzero(z == 0))
    decided = psk_demodulate(z, cfg.m_order)
    rec.symbol_errors = int(np.count_nonzero(decided != sym_idx))
    rec.n_symbols = int(sym_idx.size)
    return rec


def _precode_block(cfg, sigma2, cs, true_idx, alias_idx, symbols, rec):
    """Transmit vectors x_t (block_len x N_t) plus per-block diagnostics."""
    h = cs.matrices[true_idx]

    if cfg.precoder == "isa":
        res = isa_precode(
            h, sigma2, cfg.epsilon, cfg.p_max, cfg.tau, cfg.gamma_lo, cfg.gamma_hi
        )
        if res.status == "infeasible":
            rec.failed = True
            rec.failure_reason = "isa power minimization infeasible at the initial level"
            return None, rec
        rec.degraded = res.status == STATUS_DEGRADED
        rec.objective = res.achieved
        rec.iterations = float(res.iterations)
        rec.power_rel = _rel_excess(res.diagnostics["power"], cfg.p_max)
        rec.anonymity_rel = _rel_excess(res.diagnostics["anonymity_lhs"], cfg.epsilon)
        xs = symbols @ res.w.T
        return xs, rec

    if cfg.precoder == "mmse":
        w = benchmark_mmse(h, sigma2, cfg.p_max)
        rec.power_rel = _rel_excess(float(np.sum(np.abs(w) ** 2)), cfg.p_max)
        return symbols @ w.T, rec

    if cfg.precoder == "svd":
        w, _ = benchmark_svd(h, cfg.p_max)
        rec.power_rel = _rel_excess(float(np.sum(np.abs(w) ** 2)), cfg.p_max)
        return symbols @ w.T, rec

    # symbol-level designs: cia (scenario-dependent cap) and plain ci
    gammas = []
    xs = np.zeros((cfg.block_len, cfg.n_t), dtype=np.complex128)
    for t in range(cfg.block_len):
        s_t = symbols[t]
        if cfg.precoder == "ci":
            res = benchmark_ci(h, s_t, cfg.p_max, cfg.m_order)
            threshold = None
        elif cfg.scenario == SCENARIO_SS:
            res = cia_precode_ss(h, s_t, cfg.zeta, cfg.p_max, cfg.m_order)
            threshold = cfg.zeta
        else:
            res = cia_precode_sr(
                cs, true_idx + 1, alias_idx + 1, s_t, cfg.delta, cfg.p_max, cfg.m_order
            )
            threshold = cfg.delta
        x = res.w @ s_t
        xs[t] = x
        gammas.append(res.achieved)
        rec.power_rel = max(rec.power_rel, _rel_excess(res.diagnostics["power"], cfg.p_max))
        if threshold is not None:
            rec.anonymity_rel = max(
                rec.anonymity_rel,
                _rel_excess(res.diagnostics["anonymity_lhs"][0], threshold),
            )
        rec.margin_gap = min(
            rec.margin_gap, min(res.diagnostics["margins"]) - res.achieved
        )
    rec.objective = float(np.mean(gammas))
    return xs, rec


def compute_metrics(records, k):
    """Count-based DER/SER/entropy row from a list of block records."""
    records = list(records)
    if not records:
        raise ValueError("no block records to aggregate")
    ok = [r for r in records if not r.failed]
    if not ok:
        raise ValueError("all blocks failed")
    blocks = len(ok)
    der = sum(1 for r in ok if not r.correct) / blocks
    total_syms = sum(r.n_symbols for r in ok)
    ser = sum(r.symbol_errors for r in ok) / total_syms if total_syms else 0.0
    counts = np.zeros(k)
    for r in ok:
        counts[r.declared - 1] += 1
    entropy = anonymity_entropy(counts / blocks)
    return {
        "blocks": blocks,
        "der": der,
        "ser": ser,
        "entropy_bits": entropy,
        "mean_objective": float(np.mean([r.objective for r in ok])),
        "mean_iterations": float(np.mean([r.iterations for r in ok])),
        "failures": len(records) - blocks,
        "degraded": sum(1 for r in ok if r.degraded),
        "power_rel": max(r.power_rel for r in ok),
        "anonymity_rel": max(r.anonymity_rel for r in ok),
        "margin_gap": min(r.margin_gap for r in ok),
    }


def _threshold_field(cfg):
    if cfg.precoder == "isa":
        return "epsilon"
    if cfg.precoder == "cia":
        return "zeta" if cfg.scenario == SCENARIO_SS else "delta"
    raise ConfigError(f"threshold sweeps need an anonymous precoder, got {cfg.precoder!r}")


def _point_config(cfg, axis, value):
    if axis == "snr":
        return replace(cfg), float(value)
    if axis == "antennas":
        n_t, n_r = value
        return replace(cfg, n_t=int(n_t), n_r=int(n_r)), float(cfg.snr_grid[0])
    if axis == "threshold":
        return replace(cfg, **{_threshold_field(cfg): float(value)}), float(cfg.snr_grid[0])
    raise ConfigError(f"unknown sweep axis {axis!r}")


def run_sweep(cfg, axis="snr", values=None, progress=None):
    """Monte-Carlo sweep along one axis; one PointResult per grid value."""
    cfg.validate()
    if values is None:
        if axis != "snr":
            raise ConfigError(f"{axis!r} sweeps need explicit grid values")
        values = list(cfg.snr_grid)
    if not values:
        raise ConfigError("sweep grid must be non-empty")

    rows = []
    total_failed = 0
    total_blocks = 0
    for point_index, value in enumerate(values):
        cfg_pt, snr_db = _point_config(cfg, axis, value)
        cfg_pt.validate()
        sigma2 = cfg_pt.sigma2(snr_db)
        records = []
        for b in range(cfg_pt.n_blocks):
            rng = block_generator(cfg_pt.seed, point_index, b)
            records.append(run_block(cfg_pt, sigma2, rng))
        stats = compute_metrics(records, cfg_pt.k)
        total_failed += stats["failures"]
        total_blocks += len(records)
        rows.append(
            PointResult(
                scenario=cfg_pt.scenario,
                precoder=cfg_pt.precoder,
                detector=cfg_pt.resolved_detector(),
                snr_db=snr_db,
                n_t=cfg_pt.n_t,
                n_r=cfg_pt.n_r,
                k=cfg_pt.k,
                epsilon=cfg_pt.epsilon,
                zeta=cfg_pt.zeta,
                delta=cfg_pt.delta,
                blocks=stats["blocks"],
                der=stats["der"],
                ser=stats["ser"],
                entropy_bits=stats["entropy_bits"],
                mean_objective=stats["mean_objective"],
                mean_iterations=stats["mean_iterations"],
                seed=cfg_pt.seed,
                failures=stats["failures"],
                degraded=stats["degraded"],
                power_rel=stats["power_rel"],
                anonymity_rel=stats["anonymity_rel"],
                margin_gap=stats["margin_gap"],
            )
        )
        if progress is not None:
            progress(point_index, len(values), rows[-1])
    return SweepReport(axis=axis, rows=rows, n_failed=total_failed, n_blocks=total_blocks)
