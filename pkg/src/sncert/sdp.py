"""Conic-program representation, Hermitian-to-real embedding, solve contract.

A :class:`ConicProblem` is a block SDP in standard primal form: named real
symmetric PSD variable blocks, a linear objective sum_i tr(C_i X_i) + offset,
scalar affine equalities and inequalities.  :func:`solve` hands the problem
to Clarabel's interior-point solver and returns a :class:`SolveReport` with
certified primal/dual values, the duality gap and residual diagnostics.

On top of this sits :class:`HermitianProgram`, a small modeling layer for
complex Hermitian PSD variables and Hermitian-valued affine constraints.
Hermitian data enters the real problem through the 2n x 2n embedding
[[Re H, -Im H], [Im H, Re H]]; one convention is used everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import functools
import math
import time

import numpy as np
import scipy.sparse as sparse
import clarabel

from .tensors import check_hermitian, hermitize

_SQRT2 = math.sqrt(2.0)


# ---------------------------------------------------------------------------
# Hermitian <-> real embedding
# ---------------------------------------------------------------------------

def embed_hermitian(h) -> np.ndarray:
    """Real symmetric 2n x 2n embedding [[Re H, -Im H], [Im H, Re H]].

    PSD iff H is PSD; every eigenvalue of H appears twice.
    """
    a = check_hermitian(h)
    re, im = a.real, a.imag
    e = np.block([[re, -im], [im, re]])
    return 0.5 * (e + e.T)


def deembed_hermitian(x) -> np.ndarray:
    """Inverse of :func:`embed_hermitian`, averaging over the J-symmetry so
    that arbitrary symmetric matrices map to their Hermitian part."""
    x = np.asarray(x, dtype=float)
    n2 = x.shape[0]
    if n2 % 2:
        raise ValueError(f"embedded side must be even, got {n2}")
    n = n2 // 2
    re = 0.5 * (x[:n, :n] + x[n:, n:])
    im = 0.5 * (x[n:, :n] - x[:n, n:])
    return hermitize(re + 1j * im)


@functools.lru_cache(maxsize=64)
def _svec_index(n: int):
    rows, cols, scale = [], [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
            scale.append(1.0 if i == j else _SQRT2)
    return np.array(rows), np.array(cols), np.array(scale)


def svec_dim(n: int) -> int:
    return n * (n + 1) // 2


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper-triangle vectorization (Clarabel's PSD-triangle order)."""
    n = m.shape[0]
    r, c, s = _svec_index(n)
    return np.asarray(m, dtype=float)[r, c] * s


def unsvec(v: np.ndarray, n: int) -> np.ndarray:
    r, c, s = _svec_index(n)
    out = np.zeros((n, n))
    out[r, c] = np.asarray(v, dtype=float) / s
    out = out + out.T - np.diag(np.diag(out))
    return out


@functools.lru_cache(maxsize=32)
def hermitian_basis(n: int) -> tuple:
    """Orthonormal (trace inner product) basis of n x n Hermitian matrices.

    Order: diagonal units, then real then imaginary off-diagonal pairs.
    Returned arrays are shared; do not mutate.
    """
    out = []
    for i in range(n):
        b = np.zeros((n, n), dtype=complex)
        b[i, i] = 1.0
        out.append(b)
    for i in range(n):
        for j in range(i + 1, n):
            b = np.zeros((n, n), dtype=complex)
            b[i, j] = b[j, i] = 1.0 / _SQRT2
            out.append(b)
            b = np.zeros((n, n), dtype=complex)
            b[i, j] = -1j / _SQRT2
            b[j, i] = 1j / _SQRT2
            out.append(b)
    return tuple(out)


@functools.lru_cache(maxsize=32)
def _sym_basis(n: int) -> tuple:
    """Orthonormal basis of n x n real symmetric matrices."""
    out = []
    for j in range(n):
        for i in range(j + 1):
            b = np.zeros((n, n))
            if i == j:
                b[i, i] = 1.0
            else:
                b[i, j] = b[j, i] = 1.0 / _SQRT2
            out.append(b)
    return tuple(out)


# ---------------------------------------------------------------------------
# Conic problem in standard primal form
# ---------------------------------------------------------------------------

@dataclass
class ConicProblem:
    """min sum_i tr(C_i X_i) + offset over PSD blocks X_i subject to scalar
    affine equalities and inequalities (sum_i tr(A_i X_i) {=, <=} b)."""

    blocks: dict = field(default_factory=dict)      # name -> side
    objective: dict = field(default_factory=dict)   # name -> sym coefficient
    offset: float = 0.0
    eqs: list = field(default_factory=list)         # (coeffs: {name: sym}, rhs)
    ineqs: list = field(default_factory=list)       # (coeffs, rhs), meaning <= rhs

    def add_block(self, name: str, side: int):
        if name in self.blocks:
            raise ValueError(f"duplicate block {name!r}")
        if side < 1:
            raise ValueError("block side must be >= 1")
        self.blocks[name] = int(side)

    def _check_coeffs(self, coeffs):
        for name, g in coeffs.items():
            if name not in self.blocks:
                raise ValueError(f"unknown block {name!r}")
            g = np.asarray(g, dtype=float)
            side = self.blocks[name]
            if g.shape != (side, side):
                raise ValueError(f"coefficient for {name!r} has shape {g.shape}, want {side}")
            if not np.all(np.isfinite(g)):
                raise ValueError(f"coefficient for {name!r} has non-finite entries")
        return {k: 0.5 * (np.asarray(v, float) + np.asarray(v, float).T) for k, v in coeffs.items()}

    def add_eq(self, coeffs, rhs: float):
        self.eqs.append((self._check_coeffs(coeffs), float(rhs)))

    def add_ineq(self, coeffs, rhs: float):
        self.ineqs.append((self._check_coeffs(coeffs), float(rhs)))

    def set_objective(self, coeffs, offset: float = 0.0):
        self.objective = self._check_coeffs(coeffs)
        self.offset = float(offset)
        if not np.isfinite(self.offset):
            raise ValueError("objective offset must be finite")

    # -- serialization (debugging / --dump-problem) -------------------------

    def to_json_dict(self) -> dict:
        def enc(coeffs):
            return {k: v.tolist() for k, v in coeffs.items()}

        return {
            "blocks": dict(self.blocks),
            "objective": enc(self.objective),
            "offset": self.offset,
            "eqs": [{"coeffs": enc(c), "rhs": b} for c, b in self.eqs],
            "ineqs": [{"coeffs": enc(c), "rhs": b} for c, b in self.ineqs],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "ConicProblem":
        p = cls()
        for name, side in d["blocks"].items():
            p.add_block(name, side)
        dec = lambda c: {k: np.asarray(v, float) for k, v in c.items()}
        p.set_objective(dec(d["objective"]), d.get("offset", 0.0))
        for e in d["eqs"]:
            p.add_eq(dec(e["coeffs"]), e["rhs"])
        for e in d["ineqs"]:
            p.add_ineq(dec(e["coeffs"]), e["rhs"])
        return p


@dataclass
class SolveOptions:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 500
    verbose: bool = False
    dump_sink: list | None = None  # collects every solved instance as JSON
    slater_check: bool = False     # also report an interior-point margin


@dataclass
class SolveReport:
    """Outcome of one conic solve.

    ``primal_value``/``dual_value`` include the problem offset.  ``gap`` is
    |primal - dual| when both are available.  ``block_values`` maps block
    names to real symmetric solutions; ``psd_duals`` to the multipliers of
    the block PSD constraints; ``eq_duals``/``ineq_duals`` follow the row
    order the constraints were added in.
    """

    status: str
    primal_value: float | None
    dual_value: float | None
    gap: float | None
    block_values: dict
    psd_duals: dict
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    iterations: int
    wall_time: float
    r_prim: float
    r_dual: float
    solver_status: str
    slater_margin: float | None = None

    def require_optimal(self):
        if self.status != "optimal":
            raise SolverFailure(f"solve ended with status {self.status} ({self.solver_status})")
        return self


class SolverFailure(RuntimeError):
    pass


_STATUS_MAP = {
    "Solved": "optimal",
    "AlmostSolved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def solve(problem: ConicProblem, opts: SolveOptions | None = None) -> SolveReport:
    """Solve a :class:`ConicProblem` with Clarabel.

    Infeasible/unbounded outcomes are reported in the status, not raised.
    The solve is deterministic for identical inputs and options.
    """
    opts = opts or SolveOptions()
    if opts.dump_sink is not None:
        opts.dump_sink.append(problem.to_json_dict())
    names = list(problem.blocks)
    sides = [problem.blocks[n] for n in names]
    dims = [svec_dim(s) for s in sides]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    nvar = int(offs[-1])

    q = np.zeros(nvar)
    for i, nm in enumerate(names):
        if nm in problem.objective:
            q[offs[i]: offs[i + 1]] = svec(problem.objective[nm])

    block_index = {nm: i for i, nm in enumerate(names)}
    r_idx, c_idx, vals, rhs = [], [], [], []
    row_no = 0
    for coeffs, b in list(problem.eqs) + list(problem.ineqs):
        for nm, g in coeffs.items():
            i = block_index[nm]
            seg = svec(g)
            nz = np.nonzero(seg)[0]
            r_idx.extend([row_no] * len(nz))
            c_idx.extend((offs[i] + nz).tolist())
            vals.extend(seg[nz].tolist())
        rhs.append(b)
        row_no += 1
    n_eq = len(problem.eqs)
    n_ineq = len(problem.ineqs)
    a_top = sparse.coo_matrix(
        (vals, (r_idx, c_idx)), shape=(n_eq + n_ineq, nvar)
    ).tocsc()
    # block PSD membership: -x + s = 0 with s in the PSD triangle cones
    a = sparse.vstack([a_top, -sparse.identity(nvar, format="csc")]).tocsc()
    b_vec = np.concatenate([np.asarray(rhs, dtype=float), np.zeros(nvar)])

    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_ineq:
        cones.append(clarabel.NonnegativeConeT(n_ineq))
    for s in sides:
        cones.append(clarabel.PSDTriangleConeT(s))

    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = opts.max_iter
    settings.tol_feas = opts.feas_tol
    settings.tol_gap_abs = opts.gap_tol
    settings.tol_gap_rel = opts.gap_tol
    settings.max_threads = 1

    p_mat = sparse.csc_matrix((nvar, nvar))
    t0 = time.perf_counter()
    try:
        solver = clarabel.DefaultSolver(p_mat, q, a, b_vec, cones, settings)
        sol = solver.solve()
    except BaseException as exc:  # clarabel panics surface as pyo3 errors
        raise SolverFailure(f"solver backend failed: {exc}") from exc
    wall = time.perf_counter() - t0

    raw = str(sol.status).rsplit(".", 1)[-1]
    status = _STATUS_MAP.get(raw, "numerical-failure")

    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    block_values = {}
    psd_duals = {}
    if status == "optimal":
        for i, nm in enumerate(names):
            block_values[nm] = unsvec(x[offs[i]: offs[i + 1]], sides[i])
        zpsd = z[n_eq + n_ineq:]
        for i, nm in enumerate(names):
            psd_duals[nm] = unsvec(zpsd[offs[i]: offs[i + 1]], sides[i])
        primal = float(sol.obj_val) + problem.offset
        dual = float(sol.obj_val_dual) + problem.offset
        gap = abs(primal - dual)
    else:
        primal = dual = gap = None

    report = SolveReport(
        status=status,
        primal_value=primal,
        dual_value=dual,
        gap=gap,
        block_values=block_values,
        psd_duals=psd_duals,
        eq_duals=z[:n_eq].copy(),
        ineq_duals=z[n_eq: n_eq + n_ineq].copy(),
        iterations=int(sol.iterations),
        wall_time=wall,
        r_prim=float(sol.r_prim),
        r_dual=float(sol.r_dual),
        solver_status=raw,
    )
    if opts.slater_check:
        inner_opts = SolveOptions(feas_tol=opts.feas_tol, gap_tol=opts.gap_tol,
                                  max_iter=opts.max_iter)
        report.slater_margin = slater_margin(problem, inner_opts)
    return report


def slater_margin(problem: ConicProblem, opts: SolveOptions | None = None) -> float | None:
    """Largest t such that every PSD block can stay >= t*I while meeting the
    affine constraints (capped at 1).  Positive t certifies an interior
    (Slater) point; None when the auxiliary solve fails.
    """
    aux = ConicProblem()
    for nm, side in problem.blocks.items():
        aux.add_block(nm, side)
    aux.add_block("__slater_t", 1)
    for nm, side in problem.blocks.items():
        aux.add_block("__slater_slack_" + nm, side)
        # X - t I = S, entrywise over a symmetric basis
        for b in _sym_basis(side):
            aux.add_eq(
                {
                    nm: b,
                    "__slater_slack_" + nm: -b,
                    "__slater_t": np.array([[-np.trace(b)]]),
                },
                0.0,
            )
    for coeffs, b in problem.eqs:
        aux.add_eq(coeffs, b)
    for coeffs, b in problem.ineqs:
        aux.add_ineq(coeffs, b)
    aux.add_ineq({"__slater_t": np.ones((1, 1))}, 1.0)
    aux.set_objective({"__slater_t": -np.ones((1, 1))})
    rep = solve(aux, opts)
    if rep.status != "optimal":
        return None
    return -rep.primal_value


# ---------------------------------------------------------------------------
# Hermitian modeling layer
# ---------------------------------------------------------------------------

class HExpr:
    """Affine Hermitian-valued expression over named Hermitian variables.

    Holds a real-linear evaluator; emission into a :class:`ConicProblem`
    samples it on a Hermitian basis of each referenced variable.
    """

    __slots__ = ("side", "vars", "_fn")

    def __init__(self, side: int, vars_, fn):
        self.side = int(side)
        self.vars = frozenset(vars_)
        self._fn = fn

    def __call__(self, assign: dict) -> np.ndarray:
        return self._fn(assign)

    # -- combinators --------------------------------------------------------

    def __add__(self, other: "HExpr") -> "HExpr":
        if self.side != other.side:
            raise ValueError("side mismatch in +")
        return HExpr(self.side, self.vars | other.vars, lambda a: self(a) + other(a))

    def __sub__(self, other: "HExpr") -> "HExpr":
        return self + other.scale(-1.0)

    def scale(self, c: float) -> "HExpr":
        c = float(c)
        return HExpr(self.side, self.vars, lambda a: c * self(a))

    def map(self, f, out_side: int) -> "HExpr":
        """Apply a real-linear, Hermitian-to-Hermitian matrix map."""
        return HExpr(out_side, self.vars, lambda a: f(self(a)))


def hvar(name: str, side: int) -> HExpr:
    return HExpr(side, (name,), lambda a: a[name])


def hconst(m) -> HExpr:
    m = np.asarray(m, dtype=complex)
    return HExpr(m.shape[0], (), lambda a: m)


def hsum(exprs) -> HExpr:
    exprs = list(exprs)
    out = exprs[0]
    for e in exprs[1:]:
        out = out + e
    return out


class HermitianProgram:
    """Small builder for Hermitian SDPs compiled onto :class:`ConicProblem`.

    Every variable is PSD (Hermitian matrices enter through the real
    embedding; scalars are 1x1 nonnegative blocks).  Constraint groups are
    named so their multipliers can be recovered from the solved report.
    """

    def __init__(self):
        self.prob = ConicProblem()
        self.var_side: dict[str, int] = {}
        self.var_scalar: dict[str, bool] = {}
        self._groups: dict[str, dict] = {}
        self._obj_terms: dict[str, np.ndarray] = {}
        self._obj_offset = 0.0

    # -- variables -----------------------------------------------------------

    def psd_var(self, name: str, side: int) -> HExpr:
        self.prob.add_block(name, 2 * side)
        self.var_side[name] = side
        self.var_scalar[name] = False
        return hvar(name, side)

    def scalar_var(self, name: str) -> HExpr:
        """Nonnegative real scalar, usable as a 1x1 Hermitian expression."""
        self.prob.add_block(name, 1)
        self.var_side[name] = 1
        self.var_scalar[name] = True
        return hvar(name, 1)

    # -- functional compilation ----------------------------------------------

    def _zeros_assign(self, vars_):
        return {v: np.zeros((self.var_side[v], self.var_side[v]), dtype=complex) for v in vars_}

    def _coeff_for(self, name: str, c_herm: np.ndarray) -> np.ndarray:
        """ConicProblem coefficient realizing tr(c_herm * H_name)."""
        if self.var_scalar[name]:
            return np.array([[float(c_herm.real.reshape(-1)[0])]])
        return 0.5 * embed_hermitian(hermitize(c_herm))

    def _linearize(self, expr: HExpr):
        """Sample expr on variable bases.

        Returns (const, {var: list of warped basis outputs}) where output p
        is expr(B_p one-hot) - const.
        """
        base = self._zeros_assign(expr.vars)
        const = np.asarray(expr(base), dtype=complex)
        cols = {}
        for v in sorted(expr.vars):
            n = self.var_side[v]
            outs = []
            for bp in hermitian_basis(n):
                a = dict(base)
                a[v] = bp
                outs.append(np.asarray(expr(a), dtype=complex) - const)
            cols[v] = outs
        return const, cols

    def _scalar_coeffs(self, cols, c_herm: np.ndarray):
        """Coefficients realizing the functional tr(c_herm * linear part)."""
        c_herm = hermitize(c_herm)
        coeffs = {}
        for v, outs in cols.items():
            n = self.var_side[v]
            ws = np.array([np.trace(c_herm @ out).real for out in outs])
            cv = np.tensordot(ws, np.stack(hermitian_basis(n)), axes=1)
            coeffs[v] = self._coeff_for(v, cv)
        return coeffs

    # -- constraints -----------------------------------------------------------

    def add_scalar_eq(self, expr: HExpr, c_herm, rhs: float, group: str | None = None):
        """tr(c_herm * expr) = rhs."""
        c_herm = np.asarray(c_herm, dtype=complex)
        const, cols = self._linearize(expr)
        coeffs = self._scalar_coeffs(cols, c_herm)
        shift = float(np.trace(hermitize(c_herm) @ const).real)
        idx = len(self.prob.eqs)
        self.prob.add_eq(coeffs, rhs - shift)
        if group:
            self._groups.setdefault(group, {"kind": "scalar_eq", "rows": []})["rows"].append(idx)

    def add_scalar_ineq(self, expr: HExpr, c_herm, rhs: float, group: str | None = None):
        """tr(c_herm * expr) <= rhs."""
        c_herm = np.asarray(c_herm, dtype=complex)
        const, cols = self._linearize(expr)
        coeffs = self._scalar_coeffs(cols, c_herm)
        shift = float(np.trace(hermitize(c_herm) @ const).real)
        idx = len(self.prob.ineqs)
        self.prob.add_ineq(coeffs, rhs - shift)
        if group:
            self._groups.setdefault(group, {"kind": "scalar_ineq", "rows": []})["rows"].append(idx)

    def add_eq(self, expr: HExpr, group: str | None = None):
        """Hermitian-valued expr = 0, one scalar row per basis functional."""
        const, cols = self._linearize(expr)
        rows = []
        for bq in hermitian_basis(expr.side):
            coeffs = self._scalar_coeffs(cols, bq)
            shift = float(np.trace(bq @ const).real)
            rows.append(len(self.prob.eqs))
            self.prob.add_eq(coeffs, -shift)
        if group:
            self._groups[group] = {"kind": "herm_eq", "rows": rows, "side": expr.side}

    def add_psd_constraint(self, expr: HExpr, group: str | None = None):
        """Hermitian-valued expr >= 0 via an embedded slack block pinned to
        the embedding of the expression."""
        m = expr.side
        slack = f"__psd_{len(self.prob.blocks)}" if group is None else f"__psd_{group}"
        self.prob.add_block(slack, 2 * m)
        const, cols = self._linearize(expr)
        e_const = embed_hermitian(hermitize(const))
        frs = np.stack(_sym_basis(2 * m))
        frs_flat = frs.reshape(frs.shape[0], -1)
        # per variable: weights[r, p] = tr(F_r E(out_p)) and the resulting
        # Hermitian functional matrices cv[r]
        per_var = {}
        for v, outs in cols.items():
            n = self.var_side[v]
            e_outs = np.stack([embed_hermitian(hermitize(o)) for o in outs])
            weights = frs_flat @ e_outs.reshape(e_outs.shape[0], -1).T
            basis_flat = np.stack(hermitian_basis(n)).reshape(n * n, -1)
            cvs = (weights @ basis_flat).reshape(frs.shape[0], n, n)
            per_var[v] = cvs
        for r in range(frs.shape[0]):
            coeffs = {slack: frs[r]}
            for v, cvs in per_var.items():
                coeffs[v] = -self._coeff_for(v, cvs[r])
            self.prob.add_eq(coeffs, float(np.sum(frs[r] * e_const)))
        if group:
            self._groups[group] = {"kind": "psd", "slack": slack, "side": m}

    # -- objective / solve -------------------------------------------------------

    def add_objective_term(self, name: str, c_herm):
        c = self._coeff_for(name, np.asarray(c_herm, dtype=complex))
        if name in self._obj_terms:
            self._obj_terms[name] = self._obj_terms[name] + c
        else:
            self._obj_terms[name] = c

    def set_offset(self, offset: float):
        self._obj_offset = float(offset)

    def solve(self, opts: SolveOptions | None = None) -> "HermitianReport":
        self.prob.set_objective(self._obj_terms, self._obj_offset)
        rep = solve(self.prob, opts)
        return HermitianReport(self, rep)


class HermitianReport:
    """Solved :class:`HermitianProgram` with Hermitian-space accessors."""

    def __init__(self, prog: HermitianProgram, report: SolveReport):
        self.prog = prog
        self.report = report

    @property
    def status(self) -> str:
        return self.report.status

    @property
    def primal_value(self):
        return self.report.primal_value

    @property
    def dual_value(self):
        return self.report.dual_value

    @property
    def gap(self):
        return self.report.gap

    def require_optimal(self) -> "HermitianReport":
        self.report.require_optimal()
        return self

    def value(self, name: str) -> np.ndarray:
        x = self.report.block_values[name]
        if self.prog.var_scalar[name]:
            return x.copy()
        return deembed_hermitian(x)

    def scalar(self, name: str) -> float:
        return float(self.report.block_values[name][0, 0])

    def psd_var_dual(self, name: str) -> np.ndarray:
        """Multiplier of the variable's own PSD membership."""
        z = self.report.psd_duals[name]
        if self.prog.var_scalar[name]:
            return z.copy()
        return 2.0 * deembed_hermitian(z)

    def psd_dual(self, group: str) -> np.ndarray:
        """Hermitian multiplier Y of a grouped `expr >= 0` constraint,
        normalized so that d/d(expr) of the Lagrangian is -Y."""
        g = self.prog._groups[group]
        if g["kind"] != "psd":
            raise KeyError(f"group {group!r} is not a PSD constraint")
        return 2.0 * deembed_hermitian(self.report.psd_duals[g["slack"]])

    def herm_eq_dual(self, group: str) -> np.ndarray:
        """Hermitian multiplier M of a grouped `expr = 0` constraint, with
        Lagrangian term +tr(M expr)."""
        g = self.prog._groups[group]
        if g["kind"] != "herm_eq":
            raise KeyError(f"group {group!r} is not a Hermitian equality")
        m = np.zeros((g["side"], g["side"]), dtype=complex)
        for row, bq in zip(g["rows"], hermitian_basis(g["side"])):
            m += float(self.report.eq_duals[row]) * bq
        return hermitize(m)

    def scalar_dual(self, group: str) -> float:
        g = self.prog._groups[group]
        rows = g["rows"]
        if len(rows) != 1:
            raise KeyError(f"group {group!r} has {len(rows)} rows")
        if g["kind"] == "scalar_eq":
            return float(self.report.eq_duals[rows[0]])
        return float(self.report.ineq_duals[rows[0]])
