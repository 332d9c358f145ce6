"""Canonical cone program container and the interior-point solve contract.

A ConicProgram is stated in SeDuMi-style standard form:

    minimize    c' x
    subject to  A x = b
                x restricted cone-wise on disjoint index slices

Cone kinds: "nonneg" (entrywise), "soc" (x[0] >= ||x[1:]||) and "psd"
(dim d occupies d*d consecutive entries, the full matrix row-major; the
coefficient sub-blocks in A and c must be symmetric, which makes the
row-major/column-major distinction immaterial).  Indices not covered by a
cone block are free.

The solve binds CVXOPT's conelp in dualized orientation: the standard form
above is exactly conelp's dual once the equality matrix is transposed, so
conelp's internal variable count equals our row count m.  The programs built
here have few rows (the power-minimization SDP has N_r+1) and large cone
dimension, so dualizing shrinks the interior-point Schur system from
cone-dimension size to m and is what makes the Monte-Carlo sweeps affordable.
Recovered solutions are re-checked against the contract (scaled residuals and
relative gap <= 1e-7) before being reported optimal.

Hermitian matrices enter through the real embedding
M -> [[Re M, -Im M], [Im M, Re M]], which doubles traces; callers halve
trace-form coefficients to compensate (build_p1b does this).
"""

from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix as cvx_matrix
from cvxopt import solvers as cvx_solvers

COEFF_SYM_TOL = 1e-10

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"
STATUS_NUMERICAL = "numerical_failure"

# Certified solves finish well under 30 iterations at the sizes used here;
# runs that would hit 50 are boundary cases that end uncertified anyway, so
# the cap keeps their cost bounded.
_SOLVER_OPTIONS = {
    "show_progress": False,
    "abstol": 1e-8,
    "reltol": 1e-8,
    "feastol": 1e-8,
    "maxiters": 50,
}

CONTRACT_TOL = 1e-7


@dataclass(frozen=True)
class ConeBlock:
    kind: str   # "nonneg" | "soc" | "psd"
    start: int
    dim: int    # matrix side for "psd", vector length otherwise

    @property
    def length(self):
        return self.dim * self.dim if self.kind == "psd" else self.dim


@dataclass
class ConicProgram:
    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    cones: list
    row_labels: list = field(default=None)

    @property
    def dimension(self):
        return self.objective.shape[0]

    @property
    def n_rows(self):
        return self.eq_matrix.shape[0]

    def free_indices(self):
        covered = np.zeros(self.dimension, dtype=bool)
        for blk in self.cones:
            covered[blk.start:blk.start + blk.length] = True
        return np.flatnonzero(~covered)

    def validate(self):
        c = np.asarray(self.objective, dtype=np.float64)
        a = np.asarray(self.eq_matrix, dtype=np.float64)
        b = np.asarray(self.eq_rhs, dtype=np.float64)
        if c.ndim != 1 or a.ndim != 2 or b.ndim != 1:
            raise ValueError("objective/eq_rhs must be vectors, eq_matrix a matrix")
        n = c.shape[0]
        if a.shape != (b.shape[0], n):
            raise ValueError(
                f"shape mismatch: A is {a.shape}, c has {n} entries, b has {b.shape[0]}"
            )
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("program data must be finite")
        if self.row_labels is not None and len(self.row_labels) != a.shape[0]:
            raise ValueError("row_labels length must match the row count")
        covered = np.zeros(n, dtype=bool)
        for blk in self.cones:
            if blk.kind not in ("nonneg", "soc", "psd"):
                raise ValueError(f"unknown cone kind {blk.kind!r}")
            if blk.dim < 1:
                raise ValueError("cone blocks must be non-empty")
            stop = blk.start + blk.length
            if blk.start < 0 or stop > n:
                raise ValueError("cone block exceeds the variable dimension")
            if covered[blk.start:stop].any():
                raise ValueError("cone blocks must not overlap")
            covered[blk.start:stop] = True
            if blk.kind == "psd":
                d = blk.dim
                for row in a:
                    sub = row[blk.start:stop].reshape(d, d)
                    if not np.allclose(sub, sub.T, atol=COEFF_SYM_TOL * max(1.0, np.abs(sub).max())):
                        raise ValueError("PSD coefficient sub-blocks must be symmetric")
                sub = c[blk.start:stop].reshape(d, d)
                if not np.allclose(sub, sub.T, atol=COEFF_SYM_TOL * max(1.0, np.abs(sub).max())):
                    raise ValueError("PSD objective sub-block must be symmetric")
        return self

    def dump_text(self):
        """Debug interchange form; schema documented here, not stability-guaranteed.

        Sections: DIM, OBJ (index value pairs), ROW lines (label rhs then
        index value pairs), CONE lines (kind start dim).
        """
        lines = [f"DIM {self.dimension} ROWS {self.n_rows}"]
        nz = np.flatnonzero(self.objective)
        lines.append("OBJ " + " ".join(f"{i}:{self.objective[i]:.17g}" for i in nz))
        labels = self.row_labels or [f"r{r}" for r in range(self.n_rows)]
        for r in range(self.n_rows):
            nz = np.flatnonzero(self.eq_matrix[r])
            terms = " ".join(f"{i}:{self.eq_matrix[r, i]:.17g}" for i in nz)
            lines.append(f"ROW {labels[r]} = {self.eq_rhs[r]:.17g} : {terms}")
        for blk in self.cones:
            lines.append(f"CONE {blk.kind} {blk.start} {blk.dim}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Solution:
    status: str
    x: np.ndarray
    objective: float
    gap: float
    diagnostics: dict


def embed_hermitian_psd(m):
    """Real symmetric embedding [[Re, -Im], [Im, Re]] of a Hermitian matrix.

    PSD is preserved both ways; eigenvalues double in multiplicity and
    Tr(embedding) = 2 Tr(M), so trace-form coefficients built from this must
    be halved by the caller.
    """
    m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    if m.shape[0] != m.shape[1]:
        raise ValueError("embedding needs a square matrix")
    scale = max(1.0, float(np.abs(m).max()))
    if not np.allclose(m, m.conj().T, atol=1e-10 * scale):
        raise ValueError("embedding needs a Hermitian matrix")
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def complex_from_embedding(s):
    """Inverse of embed_hermitian_psd for (approximately) structured blocks.

    Averages the two real copies, so solver round-off that breaks the exact
    block structure is projected out.
    """
    s = np.asarray(s, dtype=np.float64)
    d2 = s.shape[0]
    if s.ndim != 2 or s.shape[1] != d2 or d2 % 2:
        raise ValueError("expected a square matrix of even dimension")
    d = d2 // 2
    a, b = s[:d, :d], s[d:, d:]
    c, dd = s[d:, :d], s[:d, d:]
    return (a + b) / 2.0 + 1j * (c - dd) / 2.0


def _cone_permutation(prog):
    """Column order (nonneg, soc..., psd...) required by conelp's G/h stacking."""
    nonneg, socs, psds = [], [], []
    for blk in prog.cones:
        idx = np.arange(blk.start, blk.start + blk.length)
        if blk.kind == "nonneg":
            nonneg.append(idx)
        elif blk.kind == "soc":
            socs.append(idx)
        else:
            psds.append((idx, blk.dim))
    dims = {
        "l": int(sum(ix.size for ix in nonneg)),
        "q": [int(ix.size) for ix in socs],
        "s": [int(d) for _, d in psds],
    }
    order = nonneg + socs + [ix for ix, _ in psds]
    perm = np.concatenate(order) if order else np.zeros(0, dtype=int)
    return perm, dims


def _check_solution(prog, x):
    """Scaled equality and cone residuals of a candidate point."""
    resid_eq = 0.0
    if prog.n_rows:
        r = prog.eq_matrix @ x - prog.eq_rhs
        resid_eq = float(np.abs(r).max() / max(1.0, np.abs(prog.eq_rhs).max()))
    resid_cone = 0.0
    for blk in prog.cones:
        seg = x[blk.start:blk.start + blk.length]
        scale = max(1.0, float(np.abs(seg).max()) if seg.size else 1.0)
        if blk.kind == "nonneg":
            viol = max(0.0, float(-seg.min())) if seg.size else 0.0
        elif blk.kind == "soc":
            viol = max(0.0, float(np.linalg.norm(seg[1:]) - seg[0]))
        else:
            sym = seg.reshape(blk.dim, blk.dim)
            sym = (sym + sym.T) / 2.0
            viol = max(0.0, float(-np.linalg.eigvalsh(sym)[0]))
        resid_cone = max(resid_cone, viol / scale)
    return resid_eq, resid_cone


def _blend_interior(vec, dims, frac=0.99):
    """Pull a cone point strictly inside by mixing in each cone's identity."""
    out = np.array(vec, dtype=np.float64).ravel()
    pos = dims["l"]
    out[:pos] = frac * out[:pos] + (1.0 - frac)
    for q in dims["q"]:
        out[pos] = frac * out[pos] + (1.0 - frac)
        pos += q
    for p in dims["s"]:
        blk = out[pos:pos + p * p].reshape(p, p)
        blk[np.diag_indices(p)] = frac * np.diag(blk) + (1.0 - frac)
        blk[~np.eye(p, dtype=bool)] *= frac
        pos += p * p
    return out


def solve_conic(prog, warm_start=None):
    """Solve a validated ConicProgram; deterministic for identical input.

    Status mapping from the dualized conelp call: conelp's "primal
    infeasible" certifies an improving ray for our problem (unbounded);
    "dual infeasible" certifies our constraints are inconsistent
    (infeasible).  "unknown" is salvaged as optimal only when the recovered
    point independently passes the contract tolerances.

    `warm_start` accepts the "warm" entry from a previous Solution's
    diagnostics on a program with the same cone layout (used by the SINR
    bisection, where consecutive programs differ only in the target level).
    A failed warm attempt falls back to one cold solve.
    """
    prog.validate()
    perm, dims = _cone_permutation(prog)
    if perm.size == 0:
        raise ValueError("this binding needs at least one cone block")
    free = prog.free_indices()
    m = prog.n_rows
    if m == 0:
        raise ValueError("program needs at least one equality row")

    g = cvx_matrix(np.ascontiguousarray(prog.eq_matrix[:, perm].T, dtype=np.float64))
    h = cvx_matrix(np.ascontiguousarray(prog.objective[perm], dtype=np.float64))
    cc = cvx_matrix(np.ascontiguousarray(-prog.eq_rhs, dtype=np.float64))
    kwargs = {}
    if free.size:
        kwargs["A"] = cvx_matrix(
            np.ascontiguousarray(prog.eq_matrix[:, free].T, dtype=np.float64)
        )
        kwargs["b"] = cvx_matrix(np.ascontiguousarray(prog.objective[free], dtype=np.float64))

    starts = {}
    if (
        warm_start is not None
        and warm_start.get("dims") == dims
        and warm_start.get("m") == m
    ):
        y_prev = warm_start["y"]
        starts = {
            "primalstart": {
                "x": cvx_matrix(warm_start["x"]),
                "s": cvx_matrix(_blend_interior(warm_start["s"], dims)),
            },
            "dualstart": {
                "y": cvx_matrix(y_prev) if y_prev.size else cvx_matrix(0.0, (0, 1)),
                "z": cvx_matrix(_blend_interior(warm_start["z"], dims)),
            },
        }

    options = dict(_SOLVER_OPTIONS)
    sol = None
    numerical_exc = None
    for attempt_kwargs in ([dict(kwargs, **starts), kwargs] if starts else [kwargs]):
        try:
            sol = cvx_solvers.conelp(cc, g, h, dims, options=options, **attempt_kwargs)
        except ArithmeticError as exc:
            numerical_exc = exc
            sol = None
            continue
        except (ValueError, TypeError) as exc:
            raise ValueError(f"malformed cone program: {exc}") from exc
        if sol["status"] != "unknown":
            break
    if sol is None:
        return Solution(
            STATUS_NUMERICAL, None, None, None,
            {"solver_status": f"exception: {numerical_exc}"},
        )

    status = sol["status"]
    diagnostics = {"solver_status": status, "iterations": sol.get("iterations")}

    def recover():
        x = np.zeros(prog.dimension)
        x[perm] = np.asarray(sol["z"]).ravel()
        if free.size:
            x[free] = np.asarray(sol["y"]).ravel()
        return x

    if status == "primal infeasible":
        return Solution(STATUS_UNBOUNDED, None, None, None, diagnostics)
    if status == "dual infeasible":
        return Solution(STATUS_INFEASIBLE, None, None, None, diagnostics)
    if sol["z"] is None or (free.size and sol["y"] is None):
        return Solution(STATUS_NUMERICAL, None, None, None, diagnostics)

    x = recover()
    obj = float(prog.objective @ x)
    pobj, dobj = sol["primal objective"], sol["dual objective"]
    gap = abs(pobj - dobj) / max(1.0, abs(pobj)) if pobj is not None and dobj is not None else np.inf
    resid_eq, resid_cone = _check_solution(prog, x)
    diagnostics.update(resid_eq=resid_eq, resid_cone=resid_cone, gap=gap)

    if max(resid_eq, resid_cone, gap) <= CONTRACT_TOL:
        diagnostics["warm"] = {
            "dims": dims,
            "m": m,
            "x": np.asarray(sol["x"]).ravel().copy(),
            "s": np.asarray(sol["s"]).ravel().copy(),
            "y": np.asarray(sol["y"]).ravel().copy(),
            "z": np.asarray(sol["z"]).ravel().copy(),
        }
        return Solution(STATUS_OPTIMAL, x, obj, gap, diagnostics)
    # Solver may have claimed optimality, but the recovered point misses the
    # contract tolerances; report honestly.
    return Solution(STATUS_NUMERICAL, x, obj, gap, diagnostics)
