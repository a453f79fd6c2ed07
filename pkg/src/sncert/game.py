"""Entanglement-assisted state-discrimination game.

A referee draws a bipartite state sigma_xy from a labelled ensemble and
hands its halves to Alice and Bob, who also share a resource state rho.
Each player measures their received half together with their share of the
resource; they win when both outcome labels match the drawn label.  All
values are exact trace formulas, never sampled.

The k-restricted value (resource limited to Schmidt number <= k) is
bracketed: the upper bound maximizes over the outer relaxation of
measurements generated by Schmidt-number-<=k resources (a single SDP), the
lower bound exhibits explicit free strategies found by see-saw.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cone import emit_membership, outer_constraints, witness_value_k
from .objects import (
    BipartiteState,
    Ensemble,
    Povm,
    TeleportationInstrument,
    apply_choi,
)
from .robustness import SolveDiagnostics, r_ke
from .sdp import HermitianProgram, SolveOptions, hconst, hsum
from .serialize import from_json_dict, to_json_dict
from .tensors import (
    embed_operator,
    heisenberg_weyl_set,
    hermitize,
    kron,
    max_entangled,
    partial_trace,
)


@dataclass(frozen=True)
class GameInstance:
    """Ensemble on the received registers (A', B'), shared resource on
    (A, B), and the Schmidt-number threshold for the restricted value."""

    ensemble: Ensemble
    shared: BipartiteState
    k: int

    def __post_init__(self):
        if not 1 <= self.k <= min(self.ensemble.dims):
            raise ValueError(f"k={self.k} out of range for ensemble dims {self.ensemble.dims}")

    def to_json_dict(self) -> dict:
        return {
            "type": "game_instance",
            "ensemble": to_json_dict(self.ensemble),
            "shared": to_json_dict(self.shared),
            "k": self.k,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GameInstance":
        return cls(from_json_dict(d["ensemble"]), from_json_dict(d["shared"]), int(d["k"]))


@dataclass
class GameResult:
    p_g_value: float
    p_g_k_lower: float
    p_g_k_upper: float
    ratio_lower: float
    ratio_upper: float
    strategy: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    relaxation: tuple = ()

    def __post_init__(self):
        for v in (self.p_g_value, self.p_g_k_lower, self.p_g_k_upper):
            if not -1e-9 <= v <= 1.0 + 1e-9:
                raise ValueError(f"probability {v} outside [0, 1]")
        if self.ratio_lower > self.ratio_upper + 1e-9:
            raise ValueError("inverted ratio bracket")

    def to_json_dict(self) -> dict:
        return {
            "p_g_value": self.p_g_value,
            "p_g_k": [self.p_g_k_lower, self.p_g_k_upper],
            "ratio": [self.ratio_lower, self.ratio_upper],
            "strategy": self.strategy,
            "diagnostics": [d.to_json_dict() for d in self.diagnostics],
            "relaxation": list(self.relaxation),
        }


def _embedded_terms(shared: BipartiteState, ensemble: Ensemble):
    da, db = shared.dims
    dap, dbp = ensemble.dims
    dims4 = (da, dap, dbp, db)
    rho_big = embed_operator(shared.mat, dims4, (0, 3))
    return dims4, rho_big


def play(g: GameInstance, povm_a: Povm, povm_b: Povm) -> float:
    """Exact winning probability for fixed local POVMs.

    Outcome labels index the ensemble grid; POVM outcomes beyond the label
    range are counted as abstentions (losses).
    """
    da, db = g.shared.dims
    dap, dbp = g.ensemble.dims
    if tuple(povm_a.dims) != (da, dap):
        raise ValueError(f"Alice POVM dims {povm_a.dims} do not match ({da}, {dap})")
    if tuple(povm_b.dims) != (db, dbp):
        raise ValueError(f"Bob POVM dims {povm_b.dims} do not match ({db}, {dbp})")
    nx, ny = g.ensemble.shape
    dims4, rho_big = _embedded_terms(g.shared, g.ensemble)
    total = 0.0
    for x in range(min(nx, len(povm_a))):
        ea = embed_operator(povm_a.elements[x], dims4, (0, 1))
        for y in range(min(ny, len(povm_b))):
            p = g.ensemble.probs[x, y]
            if p == 0.0:
                continue
            eb = embed_operator(povm_b.elements[y], dims4, (3, 2))
            sig = embed_operator(g.ensemble.states[x][y].mat, dims4, (1, 2))
            total += p * float(np.trace(ea @ eb @ rho_big @ sig).real)
    return float(total)


def _conditional_operators_for_alice(g: GameInstance, povm_b: Povm):
    """C_x = sum_y p_xy tr_{B',B}[(I (x) M_y)(rho (x) sigma_xy)] on (A, A')."""
    da, db = g.shared.dims
    dap, dbp = g.ensemble.dims
    dims4, rho_big = _embedded_terms(g.shared, g.ensemble)
    nx, ny = g.ensemble.shape
    out = []
    for x in range(nx):
        c = np.zeros((da * dap, da * dap), dtype=complex)
        for y in range(min(ny, len(povm_b))):
            p = g.ensemble.probs[x, y]
            if p == 0.0:
                continue
            eb = embed_operator(povm_b.elements[y], dims4, (3, 2))
            sig = embed_operator(g.ensemble.states[x][y].mat, dims4, (1, 2))
            c += p * partial_trace(eb @ rho_big @ sig, dims4, keep=(0, 1))
        out.append(hermitize(c))
    return out


def _conditional_operators_for_bob(g: GameInstance, povm_a: Povm):
    da, db = g.shared.dims
    dap, dbp = g.ensemble.dims
    dims4, rho_big = _embedded_terms(g.shared, g.ensemble)
    nx, ny = g.ensemble.shape
    out = []
    for y in range(ny):
        c = np.zeros((db * dbp, db * dbp), dtype=complex)
        for x in range(min(nx, len(povm_a))):
            p = g.ensemble.probs[x, y]
            if p == 0.0:
                continue
            ea = embed_operator(povm_a.elements[x], dims4, (0, 1))
            sig = embed_operator(g.ensemble.states[x][y].mat, dims4, (1, 2))
            # keep (B', B) then reorder to Bob's declared (B, B') layout
            c_bp_b = partial_trace(ea @ rho_big @ sig, dims4, keep=(2, 3))
            c += p * _swap_pair(c_bp_b, dbp, db)
        out.append(hermitize(c))
    return out


def _swap_pair(op, d_first, d_second):
    from .tensors import permute_systems

    return permute_systems(op, (d_first, d_second), (1, 0))


def _best_povm(conds, opts) -> tuple[float, list]:
    """Maximize sum_x tr(M_x C_x) over POVMs: a small SDP."""
    n = conds[0].shape[0]
    prog = HermitianProgram()
    exprs = []
    for x in range(len(conds)):
        v = prog.psd_var(f"m{x}", n)
        exprs.append(v)
        prog.add_objective_term(f"m{x}", -conds[x])
    prog.add_eq(hsum(exprs) - hconst(np.eye(n)), group="complete")
    rep = prog.solve(opts).require_optimal()
    return -rep.primal_value, [rep.value(f"m{x}") for x in range(len(conds))], rep


def _clean_povm(mats, dims) -> Povm:
    """Project numerical POVM candidates back onto exact POVM structure."""
    fixed = []
    for m in mats:
        lam, vecs = np.linalg.eigh(hermitize(m))
        lam = np.clip(lam, 0.0, None)
        fixed.append(vecs @ np.diag(lam) @ vecs.conj().T)
    s = sum(fixed)
    lam, vecs = np.linalg.eigh(hermitize(s))
    lam = np.clip(lam, 1e-12, None)
    isq = vecs @ np.diag(1.0 / np.sqrt(lam)) @ vecs.conj().T
    return Povm(tuple(hermitize(isq @ f @ isq) for f in fixed), dims)


def optimize_play(
    g: GameInstance,
    restarts: int = 16,
    seed: int = 0,
    iters: int = 20,
    opts: SolveOptions | None = None,
):
    """See-saw over the two local POVMs; returns the best value found (a
    lower bound on the game value) with the achieving strategy."""
    from .sampling import rand_povm

    opts = opts or SolveOptions()
    da, db = g.shared.dims
    dap, dbp = g.ensemble.dims
    nx, ny = g.ensemble.shape
    rng = np.random.default_rng(seed)
    best = (-np.inf, None, None)
    for trial in range(max(1, restarts)):
        if trial == 0:
            pb = Povm(tuple(np.eye(db * dbp, dtype=complex) / ny for _ in range(ny)), (db, dbp))
        else:
            pb = Povm(tuple(rand_povm(rng, db * dbp, ny)), (db, dbp))
        val_prev = -np.inf
        pa = None
        for _ in range(iters):
            conds_a = _conditional_operators_for_alice(g, pb)
            _, mats_a, _ = _best_povm(conds_a, opts)
            pa = _clean_povm(mats_a, (da, dap))
            conds_b = _conditional_operators_for_bob(g, pa)
            val, mats_b, _ = _best_povm(conds_b, opts)
            pb = _clean_povm(mats_b, (db, dbp))
            if val - val_prev < 1e-9 * max(1.0, abs(val)):
                val_prev = val
                break
            val_prev = val
        val_exact = play(g, pa, pb)
        if val_exact > best[0]:
            best = (val_exact, pa, pb)
    return best


def p_g_k_bounds(
    g: GameInstance,
    restarts: int = 16,
    seed: int = 0,
    opts: SolveOptions | None = None,
):
    """Certified bracket on the k-restricted game value.

    Upper: one SDP over the outer relaxation of distributed measurements on
    the received registers (every free strategy induces elements of the
    Schmidt-number-<=k cone summing to the identity).  Lower: best explicit
    free strategy from a see-saw whose resource step returns a rank-<=k
    pure state.
    """
    opts = opts or SolveOptions()
    dap, dbp = g.ensemble.dims
    n = dap * dbp
    nx, ny = g.ensemble.shape
    cone = outer_constraints(g.k, (dap, dbp))

    prog = HermitianProgram()
    exprs = []
    for x in range(nx):
        for y in range(ny):
            name = f"n{x}_{y}"
            v = prog.psd_var(name, n)
            exprs.append(v)
            emit_membership(prog, cone, v, f"cone{x}_{y}", expr_is_psd_var=True)
            prog.add_objective_term(name, -g.ensemble.probs[x, y] * g.ensemble.states[x][y].mat)
    prog.add_eq(hsum(exprs) - hconst(np.eye(n)), group="complete")
    rep = prog.solve(opts).require_optimal()
    upper = min(1.0, -rep.primal_value)
    diags = [SolveDiagnostics.from_report("pgk-upper", rep)]

    # lower: see-saw with an explicitly certified rank-<=k resource
    from .sampling import rand_schmidt_rank_vec

    rng = np.random.default_rng(seed)
    da, db = g.shared.dims
    best = 0.0
    best_state = None
    n_rounds = 4
    for trial in range(max(1, restarts // 4)):
        v0 = rand_schmidt_rank_vec(rng, da, db, g.k)
        delta = BipartiteState(np.outer(v0, v0.conj()), (da, db))
        for _ in range(n_rounds):
            sub = GameInstance(g.ensemble, delta, g.k)
            val, pa, pb = optimize_play(sub, restarts=1, seed=int(rng.integers(2**31)), opts=opts)
            if val > best:
                best, best_state = val, delta
            # resource step: best rank-k pure state against the induced operator
            grad = _induced_resource_operator(g.ensemble, pa, pb, (da, db))
            _, vec = witness_value_k(grad, (da, db), g.k, restarts=4,
                                     seed=int(rng.integers(2**31)))
            delta = BipartiteState(np.outer(vec, vec.conj()), (da, db))
        sub = GameInstance(g.ensemble, delta, g.k)
        val, pa, pb = optimize_play(sub, restarts=1, seed=int(rng.integers(2**31)), opts=opts)
        if val > best:
            best, best_state = val, delta
    lower = min(best, upper)
    return lower, upper, best_state, diags


def _induced_resource_operator(ensemble: Ensemble, povm_a: Povm, povm_b: Povm, shared_dims):
    """G on (A, B) with value(delta) = tr(delta G) for fixed POVMs."""
    da, db = shared_dims
    dap, dbp = ensemble.dims
    dims4 = (da, dap, dbp, db)
    nx, ny = ensemble.shape
    g_op = np.zeros((da * db, da * db), dtype=complex)
    for x in range(min(nx, len(povm_a))):
        ea = embed_operator(povm_a.elements[x], dims4, (0, 1))
        for y in range(min(ny, len(povm_b))):
            p = ensemble.probs[x, y]
            if p == 0.0:
                continue
            eb = embed_operator(povm_b.elements[y], dims4, (3, 2))
            sig = embed_operator(ensemble.states[x][y].mat, dims4, (1, 2))
            g_op += p * partial_trace(ea @ eb @ sig, dims4, keep=(0, 3))
    return hermitize(g_op)


def evaluate_game(
    g: GameInstance,
    restarts: int = 16,
    seed: int = 0,
    opts: SolveOptions | None = None,
) -> GameResult:
    """Full evaluation: see-saw game value, k-restricted bracket, ratio."""
    val, pa, pb = optimize_play(g, restarts=restarts, seed=seed, opts=opts)
    lo, hi, _, diags = p_g_k_bounds(g, restarts=restarts, seed=seed, opts=opts)
    ratio_lo = val / hi if hi > 0 else np.inf
    ratio_hi = val / lo if lo > 0 else np.inf
    cone = outer_constraints(g.k, g.ensemble.dims)
    return GameResult(
        p_g_value=val,
        p_g_k_lower=lo,
        p_g_k_upper=hi,
        ratio_lower=ratio_lo,
        ratio_upper=ratio_hi,
        strategy={"n_a": len(pa), "n_b": len(pb)},
        diagnostics=diags,
        relaxation=cone.constraints,
    )


# ---------------------------------------------------------------------------
# Constructions realizing the robustness ratio
# ---------------------------------------------------------------------------

def ensemble_from_witness(f_op: np.ndarray, d: int):
    """Ensemble and POVMs whose game ratio reproduces the state robustness.

    The d^4 ensemble states are local rotations of the transposed normalized
    witness, sigma_kl = (U_k (x) U_l) (F/tr F)^T (...)^dag with uniform
    weights; the matching strategies measure in the rotated maximally
    entangled bases on (A, A') and (B, B').  With the shared state rho the
    constructed strategy wins with probability tr(rho F)/(tr F * d^2).
    """
    f_op = np.asarray(f_op, dtype=complex)
    if f_op.shape != (d * d, d * d):
        raise ValueError(f"witness shape {f_op.shape} does not match d={d}")
    vals = np.linalg.eigvalsh(hermitize(f_op))
    if vals[0] < -1e-9:
        raise ValueError("witness must be PSD")
    tr = float(np.trace(f_op).real)
    if tr <= 0:
        raise ValueError("witness must have positive trace")
    f_tilde_t = hermitize(f_op.T / tr)
    us = heisenberg_weyl_set(d)
    states = []
    for uk in us:
        row = []
        for ul in us:
            w = kron(uk, ul)
            row.append(BipartiteState(hermitize(w @ f_tilde_t @ w.conj().T), (d, d)))
        states.append(tuple(row))
    probs = np.full((d * d, d * d), 1.0 / d**4)
    ens = Ensemble(probs, tuple(states))
    omega = max_entangled(d)
    els_a = []
    els_b = []
    for u in us:
        v = kron(np.eye(d), u) @ omega
        els_a.append(np.outer(v, v.conj()))
        els_b.append(np.outer(v, v.conj()))
    return ens, Povm(tuple(els_a), (d, d)), Povm(tuple(els_b), (d, d))


@dataclass
class Theorem5Record:
    r_ke_value: float
    play_value: float
    p_g_k_lower: float
    p_g_k_upper: float
    ratio_lower: float
    ratio_upper: float
    exact_mode: bool
    passed: bool | None

    def to_json_dict(self):
        return {
            "r_ke": self.r_ke_value,
            "play": self.play_value,
            "p_g_k": [self.p_g_k_lower, self.p_g_k_upper],
            "ratio": [self.ratio_lower, self.ratio_upper],
            "exact_mode": self.exact_mode,
            "passed": self.passed,
        }


def verify_theorem5(
    rho: BipartiteState,
    k: int,
    restarts: int = 16,
    seed: int = 0,
    opts: SolveOptions | None = None,
    tol: float = 1e-4,
) -> Theorem5Record:
    """Build the witness-optimal ensemble for rho and check that the game
    advantage ratio brackets 1 + R_ke (asserted in exact-mode dims)."""
    opts = opts or SolveOptions()
    da, db = rho.dims
    if da != db:
        raise ValueError("the construction needs equal local dimensions")
    rep = r_ke(rho, k, restarts=restarts, seed=seed, opts=opts, compute_upper=False)
    f_op = next(w.op for w in rep.witnesses if w.role == "state-witness")
    ens, pa, pb = ensemble_from_witness(f_op, da)
    g = GameInstance(ens, rho, k)
    play_val = play(g, pa, pb)
    lo, hi, _, _ = p_g_k_bounds(g, restarts=restarts, seed=seed, opts=opts)
    ratio_lo = play_val / hi if hi > 0 else np.inf
    ratio_hi = play_val / lo if lo > 0 else np.inf
    target = 1.0 + rep.lower.value
    passed = None
    if rep.exact:
        passed = bool(ratio_lo - tol <= target <= ratio_hi + tol)
    return Theorem5Record(
        r_ke_value=float(rep.lower.value),
        play_value=float(play_val),
        p_g_k_lower=float(lo),
        p_g_k_upper=float(hi),
        ratio_lower=float(ratio_lo),
        ratio_upper=float(ratio_hi),
        exact_mode=rep.exact,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# Assemblages
# ---------------------------------------------------------------------------

@dataclass
class Assemblage:
    """Outcome-and-input-indexed subnormalized states tau[i][x] on the
    output register."""

    tau: tuple                      # tau[i][x]
    preparable_order: int | None    # certified Schmidt-number bound, if any

    def to_json_dict(self):
        from .serialize import encode_matrix

        return {
            "tau": [[encode_matrix(t) for t in row] for row in self.tau],
            "preparable_order": self.preparable_order,
        }


def assemblage_from_instrument(inst: TeleportationInstrument, inputs) -> Assemblage:
    """Conditional output family tau_{i|x} = Lambda_i(omega_x).

    Normalization sum_i tr(tau_{i|x}) = 1 holds for every input; when the
    instrument's resource state carries a Schmidt-number certificate the
    family is flagged preparable at that order.
    """
    ins = [np.asarray(w, dtype=complex) for w in inputs]
    for w in ins:
        if w.shape != (inst.d_in, inst.d_in):
            raise ValueError(f"input shape {w.shape} does not match d_in={inst.d_in}")
    tau = []
    for choi in inst.chois:
        tau.append(tuple(hermitize(apply_choi(choi, w)) for w in ins))
    for x in range(len(ins)):
        total = sum(float(np.trace(tau[i][x]).real) for i in range(len(tau)))
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"assemblage normalization failed for input {x}: {total}")
    order = None
    prov = inst.provenance
    if prov is not None and prov.certificate is not None:
        order = prov.certificate.k
    return Assemblage(tau=tuple(tau), preparable_order=order)
