"""Anonymous precoders and their benchmarks.

Two anonymous designs:

* ISA: per-block max-min per-antenna SINR under a total-power budget and a
  quadratic anonymity cap, solved by bisecting the SINR target over a
  separable power-minimization SDP (semidefinite relaxation, then rank-one
  extraction and transmit phase equalization).
* CIA: per-symbol maximization of the constructive-interference margin under
  power plus an anonymity cap (matched-filter norm in the strong-sender
  scenario, projector-difference alias matching in the strong-receiver
  scenario).

Benchmarks: trace-normalized MMSE, equal-power SVD eigenbeamforming with a
declared-channel combiner, and plain constructive interference (CIA without
the anonymity cap).
"""

from dataclasses import dataclass, field

import numpy as np

from .conic import (
    ConeBlock,
    ConicProgram,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    complex_from_embedding,
    embed_hermitian_psd,
    solve_conic,
)
from .errors import (
    RankExtractionError,
    SolverFailureError,
    UnsupportedConfigurationError,
)
from .numerics import hermitian_eig

STATUS_DEGRADED = "degraded"

RANK_ONE_TOL = 1e-6        # lambda_1 / trace threshold for a clean extraction
EXTRACT_STALL_TOL = 1e-3   # below 1 - this the stall is still only Degraded
REWARD_SLACK = 1e-9        # absorbs solver round-off in the bisection branch


@dataclass
class PrecodeResult:
    w: np.ndarray            # N_t x N_s beamformer
    achieved: float          # Gamma* (ISA, SINR units) or gamma* (CIA/CI, amplitude)
    status: str              # "optimal" | "infeasible" | "degraded"
    iterations: int = 0      # ISA bisection rounds; 0 for the one-shot designs
    diagnostics: dict = field(default_factory=dict)


def _validate_channel(h_mat):
    h = np.atleast_2d(np.asarray(h_mat, dtype=np.complex128))
    if h.size == 0:
        raise ValueError("empty channel matrix")
    return h


def build_p1b(gamma, h_mat, sigma2, epsilon):
    """Power-minimization SDP for a fixed SINR target gamma.

    Variables are N_r embedded-Hermitian PSD blocks Q_i plus one slack per
    inequality.  Rows: per-antenna SINR levels
    Tr(G_i Q_i) - gamma*(sigma2 + sum_{i' != i} Tr(G_i Q_i')) >= 0 with
    G_i = h_i^H h_i, and the anonymity cap Tr(Pi sum_i Q_i) <= epsilon with
    Pi = (H^H H)^2.  Trace coefficients are halved to undo the embedding's
    trace doubling.  The rank-one constraint is dropped (relaxation).
    """
    if gamma < 0:
        raise ValueError(f"SINR target must be >= 0, got {gamma}")
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be > 0, got {sigma2}")
    if epsilon <= 0:
        raise ValueError(f"anonymity threshold must be > 0, got {epsilon}")
    h = _validate_channel(h_mat)
    n_r, n_t = h.shape
    d = 2 * n_t
    blk = d * d
    n = n_r * blk + n_r + 1

    gram = h.conj().T @ h
    pi_vec = (embed_hermitian_psd(gram @ gram) / 2.0).ravel()
    g_vecs = [
        (embed_hermitian_psd(np.outer(h[i].conj(), h[i])) / 2.0).ravel()
        for i in range(n_r)
    ]

    a = np.zeros((n_r + 1, n))
    b = np.zeros(n_r + 1)
    labels = []
    for i in range(n_r):
        for ip in range(n_r):
            coeff = g_vecs[i] if ip == i else -gamma * g_vecs[i]
            a[i, ip * blk:(ip + 1) * blk] = coeff
        a[i, n_r * blk + i] = -1.0
        b[i] = gamma * sigma2
        labels.append(f"sinr_{i}")
    for ip in range(n_r):
        a[n_r, ip * blk:(ip + 1) * blk] = pi_vec
    a[n_r, n_r * blk + n_r] = 1.0
    b[n_r] = epsilon
    labels.append("anonymity")

    c = np.zeros(n)
    half_eye = 0.5 * np.eye(d).ravel()
    for ip in range(n_r):
        c[ip * blk:(ip + 1) * blk] = half_eye

    cones = [ConeBlock("psd", ip * blk, d) for ip in range(n_r)]
    cones.append(ConeBlock("nonneg", n_r * blk, n_r + 1))
    return ConicProgram(c, a, b, cones, labels)


def rank_extract(q_mat, constraints=()):
    """Beamformer from a PSD matrix, descending through lower-rank optima.

    If the dominant-eigenvalue share of the trace is already >= 1 - 1e-6 the
    principal component is returned directly.  Otherwise a null-space descent
    searches for a Hermitian direction preserving Tr(A q) for every matrix A
    in `constraints`, stepping until rank one or no direction remains.  A
    stall raises RankExtractionError carrying the final fidelity; callers
    downgrade to Degraded.
    """
    q = np.atleast_2d(np.asarray(q_mat, dtype=np.complex128))
    if q.shape[0] != q.shape[1]:
        raise ValueError("rank extraction needs a square matrix")
    scale = max(1.0, float(np.abs(q).max()))
    if not np.allclose(q, q.conj().T, atol=1e-8 * scale):
        raise ValueError("rank extraction needs a Hermitian matrix")
    q = (q + q.conj().T) / 2.0
    cons = [np.atleast_2d(np.asarray(m, dtype=np.complex128)) for m in constraints]

    for _ in range(q.shape[0] + 1):
        w, v = hermitian_eig(q)
        if w[0] < -1e-8 * scale:
            raise ValueError("rank extraction needs a PSD matrix")
        if w[0] <= 0:
            return np.zeros(q.shape[0], dtype=np.complex128)
        trace = float(np.sum(np.clip(w, 0.0, None)))
        if w[0] / trace >= 1.0 - RANK_ONE_TOL:
            return np.sqrt(w[0]) * v[:, 0]
        r = int(np.sum(w > 1e-9 * w[0]))
        if r <= 1:
            return np.sqrt(w[0]) * v[:, 0]
        lam = w[:r]
        vr = v[:, :r]

        # Real parametrization of Hermitian r x r cores M:
        # [diag | sqrt2*Re upper | sqrt2*Im upper].
        iu = np.triu_indices(r, k=1)
        rows = []
        for mat in cons:
            core = vr.conj().T @ mat @ vr
            rows.append(
                np.concatenate(
                    [np.real(np.diag(core)), 2.0 * core[iu].real, 2.0 * core[iu].imag]
                )
            )
        sys = np.array(rows) if rows else np.zeros((0, r * r))
        _, sv, vt = np.linalg.svd(sys) if sys.size else (None, np.zeros(0), np.eye(r * r))
        rank_sys = int(np.sum(sv > 1e-9 * max(1.0, sv[0] if sv.size else 1.0)))
        if rank_sys >= r * r:
            break
        u = vt[-1]
        m_core = np.zeros((r, r), dtype=np.complex128)
        m_core[np.diag_indices(r)] = u[:r]
        m_core[iu] = u[r:r + iu[0].size] + 1j * u[r + iu[0].size:]
        m_core = m_core + np.triu(m_core, k=1).conj().T

        # Step length 1/rho kills one eigenvalue of the core while keeping
        # diag(lam) - t*M PSD.
        root = np.sqrt(lam)
        s_mat = (m_core / root[:, None]) / root[None, :]
        rho = float(np.linalg.eigvalsh(s_mat)[-1])
        if rho <= 1e-12:
            m_core = -m_core
            s_mat = -s_mat
            rho = float(np.linalg.eigvalsh(s_mat)[-1])
            if rho <= 1e-12:
                break
        core_new = np.diag(lam) - (1.0 / rho) * m_core
        q = vr @ core_new @ vr.conj().T
        q = (q + q.conj().T) / 2.0

    w, v = hermitian_eig(q)
    trace = float(np.sum(np.clip(w, 0.0, None)))
    fidelity = w[0] / trace if trace > 0 else 1.0
    raise RankExtractionError(
        f"rank extraction stalled at fidelity {fidelity:.3e}", fidelity=fidelity
    )


def transmit_phase_equalize(w_mat, h_mat):
    """Rotate each beamformer column so its own-antenna gain is real and >= 0.

    Column norms, pairwise |h_i q_j| magnitudes and all quadratic forms in
    q_i q_i^H are unchanged.  A column with exactly zero gain is left alone
    (phase undefined).
    """
    w = np.array(w_mat, dtype=np.complex128)
    h = _validate_channel(h_mat)
    for i in range(w.shape[1]):
        gain = complex(h[i] @ w[:, i])
        if gain != 0:
            w[:, i] *= np.exp(-1j * np.angle(gain))
    return w


def _extract_precoder(sol, n_r, n_t):
    """Hermitian Q blocks from the SDP solution, plus rank-one trace ratios."""
    d = 2 * n_t
    blk = d * d
    qs = []
    ratios = []
    for i in range(n_r):
        x_blk = sol.x[i * blk:(i + 1) * blk].reshape(d, d)
        q = complex_from_embedding(x_blk)
        q = (q + q.conj().T) / 2.0
        qs.append(q)
        w_eig, _ = hermitian_eig(q)
        trace = float(np.sum(np.clip(w_eig, 0.0, None)))
        ratios.append(1.0 if trace <= 1e-14 else float(w_eig[0] / trace))
    return qs, ratios


def isa_precode(h_mat, sigma2, epsilon, p_max, tau, gamma_lo, gamma_hi):
    """Max-min per-antenna SINR design via bisection over the dual power min.

    Each bisection round solves build_p1b at the midpoint; a reward
    p_max - sum_i Tr(Q_i) >= 0 moves the left bound, anything else (including
    an infeasible midpoint) moves the right bound.  Terminates when the
    bracket is narrower than tau, then extracts rank-one beamformers and
    applies transmit phase equalization.
    """
    h = _validate_channel(h_mat)
    n_r, n_t = h.shape
    if n_r > n_t:
        raise UnsupportedConfigurationError(
            f"ISA needs the strong-sender regime N_r <= N_t, got {n_r}x{n_t}"
        )
    if p_max <= 0:
        raise ValueError(f"power budget must be > 0, got {p_max}")
    if tau <= 0:
        raise ValueError(f"bisection tolerance must be > 0, got {tau}")
    if not gamma_lo < gamma_hi:
        raise ValueError(f"need gamma_lo < gamma_hi, got [{gamma_lo}, {gamma_hi}]")

    gram = h.conj().T @ h
    pi_mat = gram @ gram

    state = {"warm": None, "uncertified": 0}

    def attempt(gamma):
        sol = solve_conic(build_p1b(gamma, h, sigma2, epsilon), warm_start=state["warm"])
        if sol.status == STATUS_OPTIMAL:
            state["warm"] = sol.diagnostics.get("warm")
            if p_max - sol.objective >= -REWARD_SLACK:
                return sol
            return None
        if sol.status != STATUS_INFEASIBLE:
            # Uncertified solve: branch conservatively, as if the reward were
            # negative, so the returned target is never overstated.
            state["uncertified"] += 1
        return None

    lo, hi = float(gamma_lo), float(gamma_hi)
    best = None
    iterations = 0
    while hi - lo >= tau:
        iterations += 1
        mid = 0.5 * (lo + hi)
        sol = attempt(mid)
        if sol is not None:
            lo, best = mid, (mid, sol)
        else:
            hi = mid

    if best is None:
        if gamma_lo == 0.0:
            return PrecodeResult(
                w=np.zeros((n_t, n_r), dtype=np.complex128),
                achieved=0.0,
                status=STATUS_OPTIMAL,
                iterations=iterations,
                diagnostics={
                    "anonymity_lhs": 0.0,
                    "power": 0.0,
                    "rank_ratios": [1.0] * n_r,
                    "sinr": [0.0] * n_r,
                    "sdp_objective": 0.0,
                    "zero_gain_columns": list(range(n_r)),
                    "uncertified_rounds": state["uncertified"],
                },
            )
        sol = solve_conic(build_p1b(lo, h, sigma2, epsilon), warm_start=state["warm"])
        if sol.status == STATUS_OPTIMAL and p_max - sol.objective >= -REWARD_SLACK:
            best = (lo, sol)
        elif sol.status in (STATUS_OPTIMAL, STATUS_INFEASIBLE):
            return PrecodeResult(
                w=np.zeros((n_t, n_r), dtype=np.complex128),
                achieved=0.0,
                status=STATUS_INFEASIBLE,
                iterations=iterations,
                diagnostics={
                    "failing_constraint": "power or anonymity cap at the initial level",
                    "gamma": lo,
                },
            )
        else:
            raise SolverFailureError(
                f"power-min solve uncertified at the initial level gamma={lo:.6g}",
                diagnostics=sol.diagnostics,
            )

    achieved, sol = best
    qs, ratios = _extract_precoder(sol, n_r, n_t)
    context = [np.outer(h[i].conj(), h[i]) for i in range(n_r)]
    context += [pi_mat, np.eye(n_t, dtype=np.complex128)]

    status = STATUS_OPTIMAL
    cols = []
    for q in qs:
        if float(np.trace(q).real) <= 1e-12 * max(1.0, p_max):
            cols.append(np.zeros(n_t, dtype=np.complex128))
            continue
        try:
            cols.append(rank_extract(q, context))
        except RankExtractionError:
            w_eig, v_eig = hermitian_eig(q)
            cols.append(np.sqrt(max(w_eig[0], 0.0)) * v_eig[:, 0])
            status = STATUS_DEGRADED
    w = np.column_stack(cols) if cols else np.zeros((n_t, 0), dtype=np.complex128)
    w = transmit_phase_equalize(w, h)

    gains = h @ w
    desired = np.abs(np.diag(gains)) ** 2
    interference = np.sum(np.abs(gains) ** 2, axis=1) - desired
    sinr = desired / (sigma2 + interference)
    power = float(np.sum(np.abs(w) ** 2))
    qsum = w @ w.conj().T
    anonymity_lhs = float(np.trace(pi_mat @ qsum).real)
    zero_cols = [i for i in range(n_r) if gains[i, i] == 0]

    return PrecodeResult(
        w=w,
        achieved=float(achieved),
        status=status,
        iterations=iterations,
        diagnostics={
            "anonymity_lhs": anonymity_lhs,
            "power": power,
            "rank_ratios": ratios,
            "sinr": sinr.tolist(),
            "sdp_objective": float(sol.objective),
            "zero_gain_columns": zero_cols,
            "uncertified_rounds": state["uncertified"],
        },
    )


def _solve_margin_program(rows, s, p_max, m_order, extras):
    """Shared margin-maximization SOCP.

    maximize gamma  s.t.  ||x|| <= sqrt(p_max),
                          |Im(h_i x s_i*)| <= (Re(h_i x s_i*) - gamma) tan(pi/M),
                          ||L x|| <= sqrt(bound)  for (bound, L) in extras,
    over x in C^{N_t}; x = W s for the rank-one completion W = x s^H/||s||^2.
    """
    rows = _validate_channel(rows)
    n_streams, n_t = rows.shape
    s = np.asarray(s, dtype=np.complex128).ravel()
    if s.size != n_streams:
        raise ValueError(f"expected {n_streams} symbols, got {s.size}")
    if np.any(np.abs(np.abs(s) - 1.0) > 1e-9):
        raise ValueError("symbols must be unit modulus")
    if m_order < 2:
        raise ValueError(f"constellation order must be >= 2, got {m_order}")
    if p_max <= 0:
        raise ValueError(f"power budget must be > 0, got {p_max}")
    for bound, _ in extras:
        if bound < 0:
            raise ValueError(f"anonymity threshold must be >= 0, got {bound}")

    tan_th = np.tan(np.pi / m_order)
    # A cap with bound >= p_max * sigma_max(L)^2 can never bind inside the
    # power ball; dropping it is exact and keeps the cone data well scaled.
    active = [
        (bound, lin)
        for bound, lin in extras
        if bound < p_max * np.linalg.norm(lin, ord=2) ** 2
    ]
    nx = 2 * n_t
    n_slack = 2 * n_streams
    soc_sizes = [1 + nx] + [1 + 2 * ln.shape[0] for _, ln in active]
    n = 1 + nx + n_slack + sum(soc_sizes)
    m_rows = n_slack + sum(soc_sizes)

    a = np.zeros((m_rows, n))
    b = np.zeros(m_rows)
    labels = []
    slack0 = 1 + nx

    def x_coeff(crow):
        # real row applying complex row vector crow to x: Re and Im parts
        out = np.zeros((2, nx))
        out[0, :n_t] = crow.real
        out[0, n_t:] = -crow.imag
        out[1, :n_t] = crow.imag
        out[1, n_t:] = crow.real
        return out

    r = 0
    for i in range(n_streams):
        pair = x_coeff(np.conj(s[i]) * rows[i])
        re_part, im_part = pair[0], pair[1]
        for sign in (-1.0, 1.0):
            a[r, 1:1 + nx] = tan_th * re_part + sign * im_part
            a[r, 0] = -tan_th
            a[r, slack0 + r] = -1.0
            labels.append(f"wedge_{i}_{'lo' if sign < 0 else 'hi'}")
            r += 1

    pos = slack0 + n_slack
    a[r, pos] = 1.0
    b[r] = np.sqrt(p_max)
    labels.append("power_t")
    r += 1
    for j in range(nx):
        a[r, pos + 1 + j] = 1.0
        a[r, 1 + j] = -1.0
        labels.append(f"power_u{j}")
        r += 1
    pos += 1 + nx

    for e_idx, (bound, lin) in enumerate(active):
        p_rows = lin.shape[0]
        a[r, pos] = 1.0
        b[r] = np.sqrt(bound)
        labels.append(f"anon{e_idx}_t")
        r += 1
        pairs = [x_coeff(lin[j]) for j in range(p_rows)]
        for j in range(p_rows):
            a[r, pos + 1 + j] = 1.0
            a[r, 1:1 + nx] = -pairs[j][0]
            labels.append(f"anon{e_idx}_re{j}")
            r += 1
        for j in range(p_rows):
            a[r, pos + 1 + p_rows + j] = 1.0
            a[r, 1:1 + nx] = -pairs[j][1]
            labels.append(f"anon{e_idx}_im{j}")
            r += 1
        pos += 1 + 2 * p_rows

    c = np.zeros(n)
    c[0] = -1.0

    cones = [ConeBlock("nonneg", slack0, n_slack)]
    pos = slack0 + n_slack
    for size in soc_sizes:
        cones.append(ConeBlock("soc", pos, size))
        pos += size

    sol = solve_conic(ConicProgram(c, a, b, cones, labels))
    if sol.status != STATUS_OPTIMAL:
        raise SolverFailureError(
            f"margin program ended with status {sol.status}",
            diagnostics=sol.diagnostics,
        )
    gamma = float(sol.x[0])
    x = sol.x[1:1 + n_t] + 1j * sol.x[1 + n_t:1 + nx]
    w = np.outer(x, s.conj()) / float(np.vdot(s, s).real)
    margins = [
        float((rows[i] @ x * np.conj(s[i])).real
              - abs((rows[i] @ x * np.conj(s[i])).imag) / tan_th)
        for i in range(n_streams)
    ]
    diagnostics = {
        "power": float(np.sum(np.abs(x) ** 2)),
        "margins": margins,
        "anonymity_lhs": [float(np.sum(np.abs(lin @ x) ** 2)) for _, lin in extras],
    }
    return PrecodeResult(w=w, achieved=gamma, status=STATUS_OPTIMAL, diagnostics=diagnostics)


def cia_precode_ss(h_mat, s, zeta, p_max, m_order):
    """Strong-sender margin maximization with the matched-filter anonymity cap."""
    h = _validate_channel(h_mat)
    if h.shape[0] > h.shape[1]:
        raise UnsupportedConfigurationError(
            f"strong-sender CIA needs N_r <= N_t, got {h.shape[0]}x{h.shape[1]}"
        )
    gram = h.conj().T @ h
    return _solve_margin_program(h, s, p_max, m_order, [(float(zeta), gram)])


def cia_precode_sr(cs, k, k_alias, s, delta, p_max, m_order):
    """Strong-receiver margin maximization with alias projector matching.

    k and k_alias are 1-based user indices into the ChannelSet; the design
    forces the projector-difference image of the transmit signal under the
    true channel to stay within delta, making the alias equally suspicious.
    """
    if not 1 <= k <= cs.n_users or not 1 <= k_alias <= cs.n_users:
        raise ValueError("sender indices must lie in 1..K")
    if k_alias == k:
        raise ValueError("alias must differ from the true sender")
    h = cs.matrices[k - 1]
    lin = (cs.projectors[k_alias - 1] - cs.projectors[k - 1]) @ h
    return _solve_margin_program(h, s, p_max, m_order, [(float(delta), lin)])


def benchmark_ci(h_mat, s, p_max, m_order):
    """Constructive-interference margin maximization, no anonymity cap."""
    h = _validate_channel(h_mat)
    return _solve_margin_program(h, s, p_max, m_order, [])


def benchmark_mmse(h_mat, sigma2, p_max, s=None):
    """Regularized channel-inverse precoder.

    Default normalization makes the average transmit power p_max under
    unit-energy symbols (trace rule); passing the actual symbol vector `s`
    switches to instantaneous normalization ||W s||^2 = p_max.
    """
    if sigma2 <= 0:
        raise ValueError(f"noise variance must be > 0, got {sigma2}")
    if p_max <= 0:
        raise ValueError(f"power budget must be > 0, got {p_max}")
    h = _validate_channel(h_mat)
    n_r = h.shape[0]
    base = h.conj().T @ np.linalg.inv(h @ h.conj().T + (n_r * sigma2 / p_max) * np.eye(n_r))
    if s is None:
        scale = np.sqrt(p_max / float(np.sum(np.abs(base) ** 2)))
    else:
        sv = np.asarray(s, dtype=np.complex128).ravel()
        scale = np.sqrt(p_max) / float(np.linalg.norm(base @ sv))
    return scale * base


@dataclass(frozen=True)
class SvdCombiner:
    """Receive-side recipe: rotate by U^H of a declared channel, then divide
    each stream by its singular value."""

    u: np.ndarray
    singular_values: np.ndarray

    @property
    def n_streams(self):
        return self.u.shape[1]

    def apply(self, y):
        y = np.asarray(y, dtype=np.complex128)
        z = self.u.conj().T @ y if y.ndim == 1 else y @ self.u.conj()
        return z / self.singular_values


def svd_combiner(h_mat, n_streams=None):
    h = _validate_channel(h_mat)
    if n_streams is None:
        n_streams = min(h.shape)
    u, sv, _ = np.linalg.svd(h, full_matrices=False)
    return SvdCombiner(u=u[:, :n_streams], singular_values=sv[:n_streams])


def benchmark_svd(h_mat, p_max):
    """Equal-power eigenbeamforming on the top min(N_t, N_r) modes.

    Returns the precoder and the genie combiner built from the same channel;
    the receiver normally rebuilds the combiner from its declared channel.
    """
    if p_max <= 0:
        raise ValueError(f"power budget must be > 0, got {p_max}")
    h = _validate_channel(h_mat)
    n_s = min(h.shape)
    _, _, vh = np.linalg.svd(h, full_matrices=False)
    w = np.sqrt(p_max / n_s) * vh.conj().T[:, :n_s]
    return w, svd_combiner(h, n_s)
