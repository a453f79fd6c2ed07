"""Outer relaxations and inner (certified) approximations of the cone of
bipartite operators with Schmidt number at most k.

Membership in the true cone is not directly computable.  The outer side is
a stack of SDP-representable necessary conditions (positivity, a
partial-transpose trace-norm bound, a realignment trace-norm bound and a
maximally-entangled-fidelity bound); for k = 1 in 2x2 and 2x3 the
partial-transpose condition is exact.  The inner side produces explicit
ensembles of Schmidt-rank <= k pure states; a successful decomposition is a
certificate, a failed search proves nothing.

Robustness consumers must label which side a bound came from: an outer cone
inside a primal minimization yields a lower bound on robustness, inner
certificates yield upper bounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .sdp import HermitianProgram, HExpr
from .tensors import (
    as_dims,
    hermitize,
    max_entangled_projector,
    min_eig,
    partial_transpose,
    realign,
    trace_norm,
)

DECOMP_RESIDUAL_TOL = 1e-7
SEESAW_STALL_TOL = 1e-9
DEFAULT_RESTARTS = 32


# ---------------------------------------------------------------------------
# Outer cone
# ---------------------------------------------------------------------------

_EXACT_PPT_DIMS = {(2, 2), (2, 3), (3, 2)}


@dataclass(frozen=True)
class ConeApprox:
    """Constraint recipe approximating the Schmidt-number-<=k cone.

    mode "outer": every true member satisfies all constraints (superset);
    mode "exact": the constraint set equals the cone (k = 1 in 2x2/2x3 via
    the partial-transpose criterion, or k = min(dims) where the cone is all
    PSD operators); mode "inner" carries no constraints and marks sets whose
    membership is certified by explicit decompositions.
    """

    k: int
    dims: tuple[int, int]
    mode: str
    constraints: tuple[str, ...]

    def check(self, x) -> dict[str, float]:
        """Numeric margins for each constraint; compare against -tol."""
        x = np.asarray(x, dtype=complex)
        da, db = self.dims
        k = self.k
        scale = max(1.0, float(np.trace(x).real))
        out = {}
        for c in self.constraints:
            if c == "psd":
                out[c] = min_eig(x)
            elif c == "ppt":
                out[c] = min_eig(partial_transpose(x, self.dims, 1))
            elif c == "pt_trace_norm":
                out[c] = k * np.trace(x).real - trace_norm(partial_transpose(x, self.dims, 1))
            elif c == "realign_trace_norm":
                out[c] = k * np.trace(x).real - trace_norm(realign(x, self.dims))
            elif c == "max_fid":
                phi = max_entangled_projector(da)
                out[c] = (k / da) * np.trace(x).real - float(np.trace(phi @ x).real)
            else:  # pragma: no cover
                raise ValueError(f"unknown constraint {c}")
            if c != "psd" and c != "ppt":
                out[c] /= scale
        return out

    def passes(self, x, tol: float = 1e-8) -> bool:
        return all(v >= -tol for v in self.check(x).values())


def outer_constraints(k: int, dims) -> ConeApprox:
    """Outer relaxation of the Schmidt-number-<=k cone on the given dims."""
    d = as_dims(dims)
    if d.nsys != 2:
        raise ValueError(f"bipartite dims required, got {tuple(d)}")
    da, db = d[0], d[1]
    if not 1 <= k <= min(da, db):
        raise ValueError(f"k={k} out of range for dims {tuple(d)}")
    if k == min(da, db):
        return ConeApprox(k, (da, db), "exact", ("psd",))
    if k == 1 and (da, db) in _EXACT_PPT_DIMS:
        return ConeApprox(k, (da, db), "exact", ("psd", "ppt"))
    cons = ["psd", "pt_trace_norm", "realign_trace_norm"]
    if da == db:
        cons.append("max_fid")
    return ConeApprox(k, (da, db), "outer", tuple(cons))


def inner_cone(k: int, dims) -> ConeApprox:
    d = as_dims(dims)
    return ConeApprox(k, (d[0], d[1]), "inner", ())


def emit_membership(
    prog: HermitianProgram,
    cone: ConeApprox,
    expr: HExpr,
    prefix: str,
    expr_is_psd_var: bool = False,
) -> None:
    """Add the cone's constraints on an affine Hermitian expression.

    ``expr_is_psd_var`` skips the redundant positivity constraint when the
    expression is a bare PSD variable.
    """
    da, db = cone.dims
    n = da * db
    k = cone.k
    dims = (da, db)
    for c in cone.constraints:
        if c == "psd":
            if not expr_is_psd_var:
                prog.add_psd_constraint(expr, group=f"{prefix}_psd")
        elif c == "ppt":
            prog.add_psd_constraint(
                expr.map(lambda m: partial_transpose(m, dims, 1), n), group=f"{prefix}_ppt"
            )
        elif c == "pt_trace_norm":
            pos = prog.psd_var(f"{prefix}_ptpos", n)
            neg = prog.psd_var(f"{prefix}_ptneg", n)
            prog.add_eq(
                expr.map(lambda m: partial_transpose(m, dims, 1), n) - pos + neg,
                group=f"{prefix}_ptsplit",
            )
            # tr(pos) + tr(neg) - k tr(expr) <= 0
            combo = pos + neg - expr.scale(k).map(lambda m: np.trace(m).real * np.eye(n) / n, n)
            prog.add_scalar_ineq(combo, np.eye(n), 0.0, group=f"{prefix}_ptnorm")
        elif c == "realign_trace_norm":
            u = prog.psd_var(f"{prefix}_reu", da * da)
            v = prog.psd_var(f"{prefix}_rev", db * db)
            side = da * da + db * db

            def offdiag(m, da=da, db=db, side=side):
                r = realign(m, (da, db))
                out = np.zeros((side, side), dtype=complex)
                out[: da * da, da * da :] = r
                out[da * da :, : da * da] = r.conj().T
                return out

            def embed_u(m, da=da, side=side):
                out = np.zeros((side, side), dtype=complex)
                out[: da * da, : da * da] = m
                return out

            def embed_v(m, da=da, side=side):
                out = np.zeros((side, side), dtype=complex)
                out[da * da :, da * da :] = m
                return out

            big = u.map(embed_u, side) + v.map(embed_v, side) + expr.map(offdiag, side)
            prog.add_psd_constraint(big, group=f"{prefix}_reblk")
            combo = u.map(embed_u, side) + v.map(embed_v, side) - expr.scale(2 * k).map(
                lambda m: np.trace(m).real * np.eye(side) / side, side
            )
            prog.add_scalar_ineq(combo, np.eye(side), 0.0, group=f"{prefix}_renorm")
        elif c == "max_fid":
            phi = max_entangled_projector(da)
            prog.add_scalar_ineq(expr, phi - (k / da) * np.eye(n), 0.0, group=f"{prefix}_fid")
        else:  # pragma: no cover
            raise ValueError(f"unknown constraint {c}")


# ---------------------------------------------------------------------------
# Rank-k see-saw: best overlap of a Hermitian operator with Schmidt-rank-<=k
# unit vectors.  Any value found is a valid lower bound on the rank-k max.
# ---------------------------------------------------------------------------

def _seesaw_once(t: np.ndarray, da: int, db: int, k: int, v0: np.ndarray, max_iter: int = 200):
    v = v0.reshape(da, db)
    val = -np.inf
    for _ in range(max_iter):
        _, _, wh = np.linalg.svd(v)
        right = wh[:k, :].T
        # optimize holding the B-side frame
        br = np.einsum("iljm,lp,mq->ipjq", t, right.conj(), right).reshape(da * k, da * k)
        lam, vec = np.linalg.eigh(hermitize(br))
        m = vec[:, -1].reshape(da, k)
        v = m @ right.T
        # optimize holding the A-side frame
        u, _, _ = np.linalg.svd(v)
        left = u[:, :k]
        bl = np.einsum("ip,iljm,jq->plqm", left.conj(), t, left).reshape(k * db, k * db)
        lam, vec = np.linalg.eigh(hermitize(bl))
        nmat = vec[:, -1].reshape(k, db)
        v = left @ nmat
        new_val = float(lam[-1])
        if new_val - val < SEESAW_STALL_TOL * max(1.0, abs(new_val)):
            val = new_val
            break
        val = new_val
    vec = v.reshape(-1)
    nrm = np.linalg.norm(vec)
    if nrm > 0:
        vec = vec / nrm
    a_mat = t.reshape(da * db, da * db)
    return float(np.real(np.vdot(vec, a_mat @ vec))), vec


def witness_value_k(
    a,
    dims,
    k: int,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
    init: np.ndarray | None = None,
):
    """Best <v|A|v> over unit vectors of Schmidt rank <= k, by see-saw.

    Returns (value, vector).  The value is a certified lower bound on the
    rank-k maximum of A; it is not guaranteed to attain it.
    """
    d = as_dims(dims)
    da, db = d[0], d[1]
    a = np.asarray(a, dtype=complex)
    if a.shape != (da * db, da * db):
        raise ValueError(f"operator shape {a.shape} does not match dims {tuple(d)}")
    k = int(k)
    if not 1 <= k <= min(da, db):
        raise ValueError(f"k={k} out of range")
    t = a.reshape(da, db, da, db)
    rng = np.random.default_rng(seed)
    starts: list[np.ndarray] = []
    if init is not None:
        starts.append(np.asarray(init, dtype=complex).reshape(-1))
    # deterministic start: dominant eigenvector truncated to rank k
    lam, vec = np.linalg.eigh(hermitize(a))
    u, s, wh = np.linalg.svd(vec[:, -1].reshape(da, db))
    s[k:] = 0.0
    trunc = ((u[:, : len(s)] * s) @ wh[: len(s), :]).reshape(-1)
    nrm = np.linalg.norm(trunc)
    if nrm > 1e-12:
        starts.append(trunc / nrm)
    from .sampling import rand_schmidt_rank_vec

    while len(starts) < max(1, restarts):
        starts.append(rand_schmidt_rank_vec(rng, da, db, k))
    best_val, best_vec = -np.inf, starts[0]
    for v0 in starts:
        val, v = _seesaw_once(t, da, db, k, v0)
        if val > best_val:
            best_val, best_vec = val, v
    return best_val, best_vec


# ---------------------------------------------------------------------------
# Inner decompositions
# ---------------------------------------------------------------------------

@dataclass
class SnDecomposition:
    """Explicit ensemble certifying Schmidt number <= k up to ``residual``."""

    weights: np.ndarray
    vectors: list
    dims: tuple[int, int]
    k: int
    residual: float

    def reconstruction(self) -> np.ndarray:
        n = self.dims[0] * self.dims[1]
        out = np.zeros((n, n), dtype=complex)
        for w, v in zip(self.weights, self.vectors):
            out += w * np.outer(v, v.conj())
        return out

    def max_excess_schmidt_coeff(self) -> float:
        """Largest (k+1)-th Schmidt coefficient over components."""
        worst = 0.0
        for v in self.vectors:
            s = np.linalg.svd(np.asarray(v).reshape(self.dims), compute_uv=False)
            if len(s) > self.k:
                worst = max(worst, float(s[self.k]))
        return worst


def _local_bases(rng: np.random.Generator, d: int, extra: int) -> list[np.ndarray]:
    from .sampling import haar_unitary

    bases = [np.eye(d, dtype=complex)]
    f = np.exp(2j * np.pi * np.outer(np.arange(d), np.arange(d)) / d) / np.sqrt(d)
    bases.append(f)
    if d == 2:
        bases.append(np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2))
        bases.append(np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2))
    for _ in range(extra):
        bases.append(haar_unitary(rng, d))
    return bases


def _atom_dictionary(rng, rho, da, db, k, n_random: int) -> list[np.ndarray]:
    from .sampling import rand_schmidt_rank_vec

    atoms = []
    # truncated eigenvectors of the target
    lam, vecs = np.linalg.eigh(hermitize(rho))
    for i in range(len(lam)):
        if lam[i] < 1e-12:
            continue
        u, s, wh = np.linalg.svd(vecs[:, i].reshape(da, db))
        s[k:] = 0.0
        v = ((u[:, : len(s)] * s) @ wh[: len(s), :]).reshape(-1)
        nrm = np.linalg.norm(v)
        if nrm > 1e-9:
            atoms.append(v / nrm)
    # products of structured local bases (k = 1 atoms are valid for any k)
    for ba in _local_bases(rng, da, extra=2):
        for bb in _local_bases(rng, db, extra=2):
            for i in range(da):
                for j in range(db):
                    atoms.append(np.kron(ba[:, i], bb[:, j]))
    for _ in range(n_random):
        atoms.append(rand_schmidt_rank_vec(rng, da, db, k))
    return atoms


def _nnls_weights(rho: np.ndarray, atoms: list[np.ndarray]):
    n = rho.shape[0]
    cols = np.empty((2 * n * n, len(atoms)))
    for idx, v in enumerate(atoms):
        p = np.outer(v, v.conj()).reshape(-1)
        cols[:, idx] = np.concatenate([p.real, p.imag])
    target = np.concatenate([rho.reshape(-1).real, rho.reshape(-1).imag])
    w, rnorm = scipy.optimize.nnls(cols, target)
    return w, rnorm


def _truncate_rows(z: np.ndarray, da: int, db: int, k: int) -> np.ndarray:
    """Project each subnormalized ensemble vector onto Schmidt rank <= k."""
    out = np.empty_like(z)
    for j in range(z.shape[0]):
        u, s, wh = np.linalg.svd(z[j].reshape(da, db), full_matrices=False)
        s[k:] = 0.0
        out[j] = ((u * s) @ wh).reshape(-1)
    return out


def _polar_isometry(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m, full_matrices=False)
    return u @ vh


def _alternating_projection(rho, da, db, k, roots, u0, iters, target):
    """Search the isometry orbit of ensembles of rho for one whose vectors
    are all Schmidt rank <= k.  Returns (ensemble rows, deficit)."""
    z = u0 @ roots
    deficit = np.inf
    for _ in range(iters):
        zt = _truncate_rows(z, da, db, k)
        new_deficit = float(np.linalg.norm(z - zt))
        if new_deficit <= target or deficit - new_deficit < 1e-15:
            deficit = new_deficit
            break
        deficit = new_deficit
        u = _polar_isometry(zt @ roots.conj().T)
        z = u @ roots
    return z, deficit


def _lm_polish(rho, da, db, k, z_rows, max_nfev=300):
    """Least-squares refinement of an ensemble with every vector explicitly
    factored at rank k (z_j = A_j B_j); zero residual means an exact
    certified decomposition."""
    m = len(z_rows)
    na, nb = da * k, k * db
    per = 2 * (na + nb)

    def unpack(x):
        rows = []
        for j in range(m):
            o = j * per
            a = (x[o: o + na] + 1j * x[o + na: o + 2 * na]).reshape(da, k)
            b = (x[o + 2 * na: o + 2 * na + nb] + 1j * x[o + 2 * na + nb: o + per]).reshape(k, db)
            rows.append((a, b))
        return rows

    def resid(x):
        rec = np.zeros((da * db, da * db), dtype=complex)
        for a, b in unpack(x):
            zv = (a @ b).reshape(-1)
            rec += np.outer(zv, zv.conj())
        delta = (rho - rec).reshape(-1)
        return np.concatenate([delta.real, delta.imag])

    x0 = []
    for row in z_rows:
        u, s, wh = np.linalg.svd(row.reshape(da, db), full_matrices=False)
        root = np.sqrt(s[:k])
        x0.append((u[:, :k] * root).real.ravel())
        x0.append((u[:, :k] * root).imag.ravel())
        x0.append((root[:, None] * wh[:k, :]).real.ravel())
        x0.append((root[:, None] * wh[:k, :]).imag.ravel())
    sol = scipy.optimize.least_squares(
        resid, np.concatenate(x0), method="trf",
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev,
    )
    atoms = []
    for a, b in unpack(sol.x):
        zv = (a @ b).reshape(-1)
        nrm = np.linalg.norm(zv)
        if nrm > 1e-10:
            atoms.append(zv / nrm)
    return atoms, float(np.linalg.norm(sol.fun))


def _dedup_atoms(atoms):
    out = []
    for v in atoms:
        if all(abs(np.vdot(v, u)) < 1.0 - 1e-12 for u in out):
            out.append(v)
    return out


def inner_decomposition(
    rho,
    dims,
    k: int,
    budget: int = 60,
    target_residual: float = DECOMP_RESIDUAL_TOL,
    seed: int = 0,
) -> SnDecomposition | None:
    """Search for an explicit Schmidt-rank-<=k ensemble reproducing rho.

    Pipeline: sound fast rejection through the outer constraint stack, a
    nonnegative-least-squares fit over structured rank-<=k atoms (catches
    product-basis boundary states exactly), then alternating projections
    between the isometry orbit of ensembles of rho and per-vector rank-k
    truncation, polished by rank-factored least squares.  ``budget`` scales
    the restart count.  Returns None when the search fails; failure is not
    a proof that the Schmidt number exceeds k.
    """
    d = as_dims(dims)
    da, db = d[0], d[1]
    rho = hermitize(np.asarray(rho, dtype=complex))
    if rho.shape != (da * db, da * db):
        raise ValueError(f"state shape {rho.shape} does not match dims {tuple(d)}")
    tr = float(np.trace(rho).real)
    if tr <= 0:
        raise ValueError("state must have positive trace")
    # violating any outer constraint proves SN > k: no decomposition exists
    if not outer_constraints(k, (da, db)).passes(rho, tol=1e-9 * max(1.0, tr)):
        return None
    rng = np.random.default_rng(seed)

    def finish(atoms):
        atoms = _dedup_atoms(atoms)
        if not atoms:
            return None
        w, _ = _nnls_weights(rho, atoms)
        keep = w > 1e-13 * max(1.0, float(w.max()))
        atoms = [a for a, kp in zip(atoms, keep) if kp]
        w = w[keep]
        rec = np.zeros_like(rho)
        for wi, v in zip(w, atoms):
            rec += wi * np.outer(v, v.conj())
        res = float(np.linalg.norm(rho - rec))
        if res > target_residual or len(atoms) == 0:
            return None
        dec = SnDecomposition(
            weights=np.asarray(w, float), vectors=list(atoms), dims=(da, db), k=k, residual=res
        )
        if dec.max_excess_schmidt_coeff() > 1e-8:  # pragma: no cover
            return None
        return dec

    # phase 1: dictionary fit
    dictionary = _atom_dictionary(rng, rho, da, db, k, n_random=40)
    dec = finish(dictionary)
    if dec is not None:
        return dec

    # phase 2: alternating projections + rank-factored polish
    lam, vecs = np.linalg.eigh(rho)
    pos = lam > 1e-14 * max(1.0, lam[-1])
    roots = (vecs[:, pos] * np.sqrt(lam[pos])).T  # rows are sqrt-weighted kets
    r = roots.shape[0]
    restarts = max(4, budget // 15)
    for trial in range(restarts):
        m = min(3 * da * db, r + 2 + 2 * trial)
        if trial == 0:
            u0 = np.eye(m, r, dtype=complex)
        else:
            g = rng.standard_normal((m, r)) + 1j * rng.standard_normal((m, r))
            u0 = _polar_isometry(g)
        z, deficit = _alternating_projection(rho, da, db, k, roots, u0, iters=400, target=1e-12)
        if deficit > 0.1 * tr:
            continue
        zt = _truncate_rows(z, da, db, k)
        atoms, lm_res = _lm_polish(rho, da, db, k, list(zt))
        dec = finish(atoms)
        if dec is not None:
            return dec
    return None


def decomposition_from_ensemble(weights, vectors, dims, k: int) -> SnDecomposition:
    """Wrap a known ensemble (e.g. sampled by construction) as a certificate."""
    d = as_dims(dims)
    rho = np.zeros((d.total, d.total), dtype=complex)
    for wi, v in zip(weights, vectors):
        rho += wi * np.outer(v, np.conj(v))
    dec = SnDecomposition(
        weights=np.asarray(weights, dtype=float),
        vectors=[np.asarray(v, dtype=complex) for v in vectors],
        dims=(d[0], d[1]),
        k=k,
        residual=0.0,
    )
    excess = dec.max_excess_schmidt_coeff()
    if excess > 1e-8:
        raise ValueError(f"ensemble contains a component of Schmidt rank > {k} ({excess:.2e})")
    return dec
