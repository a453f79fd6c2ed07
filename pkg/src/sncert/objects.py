"""Domain layer: states, POVMs, Choi matrices, distributed measurements,
teleportation instruments and ensembles.

Register conventions (fixed throughout):

* Bipartite operators live on ordered factors; a state shared between the
  ancilla registers is written on (A', B').
* Alice's POVMs act on (A, A') with the fresh input register first; Bob's
  act on (B, B') likewise.  Assembly functions permute Bob's elements into
  the canonical global order (A, A', B', B), or (V, A, A', B) for
  teleportation, with explicit permutation helpers.
* Choi matrices live on V (input copy) tensor B' (output) and use the
  normalized maximally entangled state: J = (id (x) map)(|Omega><Omega|).
  A channel's Choi then has unit trace; the compensating dimension factor
  sits in :func:`apply_choi` alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cone import SnDecomposition, inner_decomposition
from .tensors import (
    as_dims,
    check_hermitian,
    embed_operator,
    hermitize,
    kron,
    max_entangled_projector,
    min_eig,
    partial_trace,
)

PSD_TOL = 1e-9
TRACE_TOL = 1e-9
CHOI_NORMALIZATION = "normalized_max_entangled"


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BipartiteState:
    """Density (sub)matrix with explicit local dimensions."""

    mat: np.ndarray
    dims: tuple[int, int]
    is_substate: bool = False

    def __post_init__(self):
        d = as_dims(self.dims)
        m = check_hermitian(self.mat, d, tol=1e-9)
        object.__setattr__(self, "mat", m)
        object.__setattr__(self, "dims", (d[0], d[1]))
        if min_eig(m) < -PSD_TOL:
            raise ValueError(f"state not PSD: min eigenvalue {min_eig(m):.3e}")
        tr = float(np.trace(m).real)
        if self.is_substate:
            if tr > 1 + TRACE_TOL or tr < -TRACE_TOL:
                raise ValueError(f"substate trace {tr} outside [0, 1]")
        elif abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"state trace {tr} != 1")

    @property
    def da(self) -> int:
        return self.dims[0]

    @property
    def db(self) -> int:
        return self.dims[1]


@dataclass(frozen=True)
class Povm:
    """Outcome-indexed positive operators summing to the identity on a
    declared register pair (first factor = fresh input, second = ancilla)."""

    elements: tuple
    dims: tuple[int, ...]

    def __post_init__(self):
        d = as_dims(self.dims)
        els = tuple(check_hermitian(e, d, tol=1e-9) for e in self.elements)
        object.__setattr__(self, "elements", els)
        object.__setattr__(self, "dims", tuple(d))
        if not els:
            raise ValueError("empty POVM")
        for i, e in enumerate(els):
            if min_eig(e) < -PSD_TOL:
                raise ValueError(f"POVM element {i} not PSD ({min_eig(e):.3e})")
        s = sum(els)
        if np.max(np.abs(s - np.eye(d.total))) > 1e-9:
            raise ValueError("POVM elements do not sum to the identity")

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True)
class DmProvenance:
    state: BipartiteState          # shared resource on (A', B')
    povm_a: Povm                   # on (A, A')
    povm_b: Povm                   # on (B, B')
    certificate: SnDecomposition | None = None


@dataclass(frozen=True)
class DistributedMeasurement:
    """Joint POVM on (A, B) indexed by outcome pairs (a, b)."""

    elements: tuple                # elements[a][b]
    dims: tuple[int, int]
    provenance: DmProvenance | None = None

    def __post_init__(self):
        d = as_dims(self.dims)
        rows = tuple(tuple(check_hermitian(e, d, tol=1e-9) for e in row) for row in self.elements)
        object.__setattr__(self, "elements", rows)
        object.__setattr__(self, "dims", (d[0], d[1]))
        if not rows or not rows[0]:
            raise ValueError("empty measurement")
        nb = len(rows[0])
        if any(len(r) != nb for r in rows):
            raise ValueError("ragged outcome grid")
        s = np.zeros((d.total, d.total), dtype=complex)
        for row in rows:
            for e in row:
                if min_eig(e) < -PSD_TOL:
                    raise ValueError("measurement element not PSD")
                s = s + e
        if np.max(np.abs(s - np.eye(d.total))) > 1e-9:
            raise ValueError("measurement elements do not sum to the identity")

    @property
    def n_a(self) -> int:
        return len(self.elements)

    @property
    def n_b(self) -> int:
        return len(self.elements[0])

    def flat(self):
        for a, row in enumerate(self.elements):
            for b, e in enumerate(row):
                yield (a, b), e


@dataclass(frozen=True)
class ChoiMatrix:
    """Choi operator on V (input copy) tensor output."""

    mat: np.ndarray
    d_in: int
    d_out: int
    normalization: str = CHOI_NORMALIZATION

    def __post_init__(self):
        m = check_hermitian(self.mat, (self.d_in, self.d_out), tol=1e-9)
        object.__setattr__(self, "mat", m)
        if min_eig(m) < -PSD_TOL:
            raise ValueError(f"Choi matrix not PSD ({min_eig(m):.3e})")
        if self.normalization != CHOI_NORMALIZATION:
            raise ValueError(f"unsupported normalization {self.normalization!r}")

    @property
    def dims(self) -> tuple[int, int]:
        return (self.d_in, self.d_out)

    def is_trace_preserving(self, tol: float = 1e-9) -> bool:
        red = partial_trace(self.mat, (self.d_in, self.d_out), [0])
        return bool(np.max(np.abs(red - np.eye(self.d_in) / self.d_in)) <= tol)


@dataclass(frozen=True)
class InstrumentProvenance:
    state: BipartiteState          # shared resource on (A', B)
    povm: Povm                     # on (A, A')
    certificate: SnDecomposition | None = None


@dataclass(frozen=True)
class TeleportationInstrument:
    """Outcome-indexed collection of subchannel Choi matrices, trace
    preserving in aggregate."""

    chois: tuple
    provenance: InstrumentProvenance | None = None

    def __post_init__(self):
        if not self.chois:
            raise ValueError("empty instrument")
        d_in = self.chois[0].d_in
        d_out = self.chois[0].d_out
        if any(c.d_in != d_in or c.d_out != d_out for c in self.chois):
            raise ValueError("mixed dimensions in instrument")
        object.__setattr__(self, "chois", tuple(self.chois))
        total = sum(c.mat for c in self.chois)
        red = partial_trace(total, (d_in, d_out), [0])
        if np.max(np.abs(red - np.eye(d_in) / d_in)) > 1e-8:
            raise ValueError("instrument is not trace preserving in aggregate")

    @property
    def d_in(self) -> int:
        return self.chois[0].d_in

    @property
    def d_out(self) -> int:
        return self.chois[0].d_out

    def __len__(self):
        return len(self.chois)


@dataclass(frozen=True)
class Ensemble:
    """Grid-labelled ensemble {p_xy, sigma_xy} of bipartite states."""

    probs: np.ndarray              # (nx, ny)
    states: tuple                  # states[x][y] : BipartiteState

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        object.__setattr__(self, "probs", p)
        if p.ndim != 2:
            raise ValueError("probs must be a 2-d grid")
        if np.any(p < -TRACE_TOL):
            raise ValueError("negative ensemble probability")
        if abs(p.sum() - 1.0) > TRACE_TOL:
            raise ValueError(f"ensemble probabilities sum to {p.sum()}")
        sts = tuple(tuple(row) for row in self.states)
        object.__setattr__(self, "states", sts)
        if len(sts) != p.shape[0] or any(len(r) != p.shape[1] for r in sts):
            raise ValueError("states grid does not match probs grid")
        d0 = sts[0][0].dims
        if any(s.dims != d0 for row in sts for s in row):
            raise ValueError("mixed dimensions in ensemble")

    @property
    def dims(self) -> tuple[int, int]:
        return self.states[0][0].dims

    @property
    def shape(self) -> tuple[int, int]:
        return tuple(self.probs.shape)


# ---------------------------------------------------------------------------
# Choi correspondence
# ---------------------------------------------------------------------------

def choi_of(map_action, d_in: int) -> ChoiMatrix:
    """Choi matrix (id (x) map)(|Omega><Omega|) of a linear map on d_in."""
    probe = map_action(np.zeros((d_in, d_in), dtype=complex))
    d_out = np.asarray(probe).shape[0]
    units = {}
    for i in range(d_in):
        for j in range(d_in):
            e = np.zeros((d_in, d_in), dtype=complex)
            e[i, j] = 1.0
            units[(i, j)] = np.asarray(map_action(e), dtype=complex)
    # linearity spot check on a random combination
    rng = np.random.default_rng(0)
    c = rng.standard_normal((d_in, d_in)) + 1j * rng.standard_normal((d_in, d_in))
    lin = sum(c[i, j] * units[(i, j)] for i in range(d_in) for j in range(d_in))
    direct = np.asarray(map_action(c), dtype=complex)
    scale = max(1.0, float(np.max(np.abs(direct))))
    if np.max(np.abs(lin - direct)) > 1e-8 * scale:
        raise ValueError("map_action is not linear on the probed inputs")
    j = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for i in range(d_in):
        for jj in range(d_in):
            j += kron(_unit(d_in, i, jj), units[(i, jj)])
    return ChoiMatrix(hermitize(j / d_in), d_in, d_out)


def _unit(d, i, j):
    e = np.zeros((d, d), dtype=complex)
    e[i, j] = 1.0
    return e


def apply_choi(choi: ChoiMatrix, rho) -> np.ndarray:
    """Act with the map: d_in * tr_V[(rho^T (x) I) J], linear in rho."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (choi.d_in, choi.d_in):
        raise ValueError(f"input shape {rho.shape} does not match d_in={choi.d_in}")
    t = choi.mat.reshape(choi.d_in, choi.d_out, choi.d_in, choi.d_out)
    return choi.d_in * np.einsum("mi,mois->os", rho, t)


def adjoint_apply_choi(choi: ChoiMatrix, op) -> np.ndarray:
    """Heisenberg-picture action: the unique map with
    tr(apply(rho) H) = tr(rho adjoint_apply(H)).  Unital when the channel is
    trace preserving."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (choi.d_out, choi.d_out):
        raise ValueError(f"operator shape {op.shape} does not match d_out={choi.d_out}")
    t = choi.mat.reshape(choi.d_in, choi.d_out, choi.d_in, choi.d_out)
    g = np.einsum("oq,iqjo->ij", op, t)
    return choi.d_in * g.T


def choi_identity(d: int) -> ChoiMatrix:
    return ChoiMatrix(max_entangled_projector(d), d, d)


def choi_depolarizing(d: int, p: float) -> ChoiMatrix:
    """Choi of rho -> p rho + (1-p) I/d."""
    m = p * max_entangled_projector(d) + (1 - p) * np.eye(d * d) / (d * d)
    return ChoiMatrix(hermitize(m), d, d)


def measure_prepare_choi(povm: Povm, outputs) -> ChoiMatrix:
    """Choi of the entanglement-breaking map rho -> sum_m tr(F_m rho) tau_m."""
    d_in = as_dims(povm.dims).total
    outs = [np.asarray(t, dtype=complex) for t in outputs]
    if len(outs) != len(povm):
        raise ValueError("one output state per POVM element required")
    d_out = outs[0].shape[0]
    j = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for f, tau in zip(povm.elements, outs):
        j += kron(f.T / d_in, tau)
    return ChoiMatrix(hermitize(j), d_in, d_out)


# ---------------------------------------------------------------------------
# Assembly of distributed measurements and instruments
# ---------------------------------------------------------------------------

def distributed_measurement_from(
    rho: BipartiteState, povm_a: Povm, povm_b: Povm
) -> DistributedMeasurement:
    """Joint POVM realized by local POVMs on a shared bipartite resource.

    M_ab = tr_{A'B'}[(M_a^{AA'} (x) M_b^{BB'}) (I_A (x) rho^{A'B'} (x) I_B)]
    on canonical register order (A, A', B', B).
    """
    da_p, db_p = rho.dims
    da_reg, da_anc = povm_a.dims[0], as_dims(povm_a.dims).total // povm_a.dims[0]
    db_reg, db_anc = povm_b.dims[0], as_dims(povm_b.dims).total // povm_b.dims[0]
    if len(povm_a.dims) != 2 or len(povm_b.dims) != 2:
        raise ValueError("POVMs must act on (register, ancilla) pairs")
    if (povm_a.dims[1], povm_b.dims[1]) != (da_p, db_p):
        raise ValueError(
            f"ancilla dims {(povm_a.dims[1], povm_b.dims[1])} do not match state dims {rho.dims}"
        )
    dims4 = (da_reg, da_p, db_p, db_reg)
    mid = embed_operator(rho.mat, dims4, (1, 2))
    rows = []
    for ma in povm_a.elements:
        ea = embed_operator(ma, dims4, (0, 1))
        row = []
        for mb in povm_b.elements:
            eb = embed_operator(mb, dims4, (3, 2))  # Bob's (B, B') onto registers (3, 2)
            m_ab = partial_trace(ea @ eb @ mid, dims4, keep=(0, 3))
            row.append(hermitize(m_ab))
        rows.append(tuple(row))
    return DistributedMeasurement(
        tuple(rows), (da_reg, db_reg), provenance=DmProvenance(rho, povm_a, povm_b)
    )


def teleportation_instrument_from(rho: BipartiteState, povm: Povm) -> TeleportationInstrument:
    """Instrument of subchannels Lambda_a(phi) = tr_{AA'}[(M_a (x) I)(phi (x) rho)],
    returned as Choi matrices on (V, B)."""
    da_p, db = rho.dims
    if len(povm.dims) != 2 or povm.dims[1] != da_p:
        raise ValueError(f"POVM dims {povm.dims} do not match resource dims {rho.dims}")
    d = povm.dims[0]
    dims4 = (d, d, da_p, db)  # V, A, A', B
    base = kron(max_entangled_projector(d), rho.mat)
    chois = []
    for ma in povm.elements:
        e = embed_operator(ma, dims4, (1, 2))
        j = partial_trace(e @ base, dims4, keep=(0, 3))
        chois.append(ChoiMatrix(hermitize(j), d, db))
    return TeleportationInstrument(tuple(chois), provenance=InstrumentProvenance(rho, povm))


def apply_instrument(inst: TeleportationInstrument, phi) -> list[np.ndarray]:
    """Subnormalized conditional outputs Lambda_a(phi) for an input state."""
    return [apply_choi(c, phi) for c in inst.chois]


# ---------------------------------------------------------------------------
# Simulation preorder and partially-entanglement-breaking certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProductChannel:
    """Bipartite channel that factors as local channels on A and B.

    Its Choi matrix, grouped on the (Alice in/out) | (Bob in/out) cut, is a
    product operator, so the cross-cut Schmidt number is 1 by construction.
    """

    choi_a: ChoiMatrix
    choi_b: ChoiMatrix

    def cut_choi(self) -> ChoiMatrix:
        m = kron(self.choi_a.mat, self.choi_b.mat)
        return ChoiMatrix(
            m, self.choi_a.d_in * self.choi_a.d_out, self.choi_b.d_in * self.choi_b.d_out
        )

    def adjoint_on_joint(self, op) -> np.ndarray:
        """(E_A^dag (x) E_B^dag)(op) for op on A_out (x) B_out."""
        da_o, db_o = self.choi_a.d_out, self.choi_b.d_out
        da_i, db_i = self.choi_a.d_in, self.choi_b.d_in
        op = np.asarray(op, dtype=complex).reshape(da_o, db_o, da_o, db_o)
        ta = self.choi_a.mat.reshape(da_i, da_o, da_i, da_o)
        # adjoint on the A factor: S[(i,j),(o,q)] = d_in * J[(j,q),(i,o)]
        sa = da_i * np.einsum("jqio->ijoq", ta)
        tb = self.choi_b.mat.reshape(db_i, db_o, db_i, db_o)
        sb = db_i * np.einsum("jqio->ijoq", tb)
        out = np.einsum("ijoq,obqc->ibjc", sa, op)
        out = np.einsum("bdoc,iojc->ibjd", sb, out)
        return hermitize(out.reshape(da_i * db_i, da_i * db_i))


@dataclass(frozen=True)
class NpebVerdict:
    certified: bool
    order: int
    decomposition: SnDecomposition | None

    def __bool__(self):
        return self.certified


def npeb_order_bound(choi: ChoiMatrix, n: int, budget: int = 60, seed: int = 0) -> NpebVerdict:
    """Certify that a channel's Choi matrix has Schmidt number <= n by
    producing an explicit decomposition.  A failed search certifies
    nothing."""
    if n < 1:
        raise ValueError("n must be >= 1")
    tr = float(np.trace(choi.mat).real)
    if tr <= 0:
        raise ValueError("Choi matrix has nonpositive trace")
    n_eff = min(n, choi.d_in, choi.d_out)
    dec = inner_decomposition(choi.mat, choi.dims, n_eff, budget=budget, seed=seed)
    return NpebVerdict(dec is not None, n, dec)


def simulate_npeb(
    m: DistributedMeasurement,
    weights,
    response,
    channels,
) -> DistributedMeasurement:
    """Simulate a new distributed measurement by classical pre/post
    processing and Heisenberg-picture channels:

    N_mn = sum_{i,j,lam} p_lam p(m,n | i,j,lam) E_lam^dag[M_ij].

    ``response`` has shape (n_m, n_n, n_a, n_b, n_lam) and sums to one over
    its first two axes; each channel must be trace preserving so that the
    adjoints are unital and the output is again a POVM.
    """
    p = np.asarray(weights, dtype=float)
    if p.ndim != 1 or np.any(p < -1e-12) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a probability distribution")
    r = np.asarray(response, dtype=float)
    if r.ndim != 5 or r.shape[2:] != (m.n_a, m.n_b, len(p)):
        raise ValueError(f"response shape {r.shape} does not match measurement/weights")
    if np.any(r < -1e-12):
        raise ValueError("response kernel has negative entries")
    col = r.sum(axis=(0, 1))
    if np.max(np.abs(col - 1.0)) > 1e-9:
        raise ValueError("response kernel does not sum to one over outputs")
    if len(channels) != len(p):
        raise ValueError("one channel per weight required")
    for ch in channels:
        for c in (ch.choi_a, ch.choi_b):
            if not c.is_trace_preserving(tol=1e-8):
                raise ValueError("simulating channels must be trace preserving")
    da, db = m.dims
    d_in0 = (channels[0].choi_a.d_in, channels[0].choi_b.d_in)
    for ch in channels:
        if (ch.choi_a.d_out, ch.choi_b.d_out) != (da, db):
            raise ValueError("channel output dims must match the measurement registers")
        if (ch.choi_a.d_in, ch.choi_b.d_in) != d_in0:
            raise ValueError("all simulating channels must share input dims")
    heis = []
    for ch in channels:
        lifted = {}
        for (a, b), e in m.flat():
            lifted[(a, b)] = ch.adjoint_on_joint(e)
        heis.append(lifted)
    d_new = d_in0
    n_m, n_n = r.shape[0], r.shape[1]
    rows = []
    for mm in range(n_m):
        row = []
        for nn in range(n_n):
            acc = np.zeros((d_new[0] * d_new[1],) * 2, dtype=complex)
            for lam in range(len(p)):
                for (a, b), lifted in heis[lam].items():
                    w = p[lam] * r[mm, nn, a, b, lam]
                    if w != 0.0:
                        acc += w * lifted
            row.append(hermitize(acc))
        rows.append(tuple(row))
    return DistributedMeasurement(tuple(rows), d_new)
