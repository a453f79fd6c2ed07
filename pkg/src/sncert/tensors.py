"""Dense complex linear algebra over tensor-product index structure.

Operators are plain complex ndarrays; subsystem structure is carried by an
explicit ``dims`` argument (a sequence of local dimensions or a
:class:`SystemDims`).  Subsystems are ordered left to right as tensor
factors, matching the row ordering of :func:`numpy.kron`.  All functions are
pure and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
import math
import string

import numpy as np

HERMITIAN_TOL = 1e-10
RANK_TOL = 1e-8


@dataclass(frozen=True)
class SystemDims:
    """Ordered local dimensions of a tensor-product space."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims:
            raise ValueError("at least one subsystem required")
        if any(d < 2 for d in dims):
            raise ValueError(f"local dimensions must be >= 2, got {dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return math.prod(self.dims)

    @property
    def nsys(self) -> int:
        return len(self.dims)

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def as_dims(dims) -> SystemDims:
    if isinstance(dims, SystemDims):
        return dims
    if isinstance(dims, int):
        return SystemDims((dims,))
    return SystemDims(tuple(dims))


def check_matrix(m) -> np.ndarray:
    """Coerce to a finite complex 2-d array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"expected a matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def check_hermitian(m, dims=None, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate Hermiticity (max-norm deviation) and the dims annotation."""
    a = check_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"not square: {a.shape}")
    dev = float(np.max(np.abs(a - a.conj().T)))
    if dev > tol:
        raise ValueError(f"not Hermitian: deviation {dev:.3e} > {tol:.1e}")
    if dims is not None:
        d = as_dims(dims)
        if d.total != a.shape[0]:
            raise ValueError(
                f"dims {tuple(d)} with total {d.total} do not match matrix side {a.shape[0]}"
            )
    return a


def hermitize(m) -> np.ndarray:
    """Hermitian part (M + M†)/2; cleanup after long contractions."""
    a = np.asarray(m, dtype=complex)
    return 0.5 * (a + a.conj().T)


def dag(m) -> np.ndarray:
    return np.asarray(m).conj().T


def min_eig(m) -> float:
    return float(np.linalg.eigvalsh(hermitize(m))[0])


def kron(*ops) -> np.ndarray:
    """Kronecker product of one or more matrices, left to right."""
    out = check_matrix(ops[0])
    for op in ops[1:]:
        out = np.kron(out, check_matrix(op))
    return out


def partial_trace(op, dims, keep) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    ``keep`` is a set of subsystem indices; the kept factors stay in their
    original order.  The full trace is preserved: tr(out) = tr(in).
    """
    d = as_dims(dims)
    a = check_matrix(op)
    if a.shape != (d.total, d.total):
        raise ValueError(f"operator shape {a.shape} does not match dims {tuple(d)}")
    keep = sorted({int(i) for i in keep})
    if any(i < 0 or i >= d.nsys for i in keep):
        raise IndexError(f"keep indices {keep} out of range for {d.nsys} subsystems")
    n = d.nsys
    letters = string.ascii_lowercase
    row = [letters[i] for i in range(n)]
    col = [letters[n + i] if i in keep else letters[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(letters[n + i] for i in keep)
    spec = "".join(row) + "".join(col) + "->" + out
    t = a.reshape(tuple(d) * 2)
    dk = math.prod(d[i] for i in keep)
    return np.einsum(spec, t).reshape(dk, dk)


def partial_transpose(op, dims, subsystems) -> np.ndarray:
    """Transpose the listed tensor factors in the computational basis."""
    d = as_dims(dims)
    a = check_matrix(op)
    if a.shape != (d.total, d.total):
        raise ValueError(f"operator shape {a.shape} does not match dims {tuple(d)}")
    if isinstance(subsystems, int):
        subsystems = (subsystems,)
    subs = {int(i) for i in subsystems}
    if any(i < 0 or i >= d.nsys for i in subs):
        raise IndexError(f"subsystem indices {sorted(subs)} out of range")
    n = d.nsys
    axes = list(range(2 * n))
    for i in subs:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return a.reshape(tuple(d) * 2).transpose(axes).reshape(d.total, d.total)


def permute_systems(op, dims, order) -> np.ndarray:
    """Reorder tensor factors so that new factor i is old factor order[i]."""
    d = as_dims(dims)
    a = check_matrix(op)
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(d.nsys)):
        raise ValueError(f"order {order} is not a permutation of 0..{d.nsys - 1}")
    n = d.nsys
    axes = list(order) + [n + i for i in order]
    return a.reshape(tuple(d) * 2).transpose(axes).reshape(d.total, d.total)


def embed_operator(op, full_dims, subsystems) -> np.ndarray:
    """Tensor ``op`` (acting on the listed registers, in that order) with
    identities on every other register of ``full_dims``."""
    d = as_dims(full_dims)
    a = check_matrix(op)
    subs = tuple(int(i) for i in subsystems)
    if len(set(subs)) != len(subs):
        raise ValueError("duplicate subsystem indices")
    if any(i < 0 or i >= d.nsys for i in subs):
        raise IndexError(f"subsystem indices {subs} out of range")
    dsub = math.prod(d[i] for i in subs)
    if a.shape != (dsub, dsub):
        raise ValueError(f"operator shape {a.shape} does not match registers {subs}")
    rest = [i for i in range(d.nsys) if i not in subs]
    cur_order = list(subs) + rest  # current factor i is register cur_order[i]
    big = np.kron(a, np.eye(math.prod(d[i] for i in rest) if rest else 1, dtype=complex))
    cur_dims = [d[i] for i in cur_order]
    # position of each target register inside the current ordering
    inv = [cur_order.index(i) for i in range(d.nsys)]
    return permute_systems(big, cur_dims, inv)


def realign(op, dims) -> np.ndarray:
    """Realignment map of a bipartite operator.

    For op with row index (a, b) and column index (a', b') the result has
    row index (a, a') and column index (b, b'); entries are rearranged, not
    transformed.  Applying :func:`unrealign` recovers the input exactly.
    """
    d = as_dims(dims)
    if d.nsys != 2:
        raise ValueError(f"realign needs bipartite dims, got {tuple(d)}")
    a = check_matrix(op)
    da, db = d[0], d[1]
    if a.shape != (da * db, da * db):
        raise ValueError(f"operator shape {a.shape} does not match dims {tuple(d)}")
    return a.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)


def unrealign(r, dims) -> np.ndarray:
    """Inverse of :func:`realign` for the given original bipartite dims."""
    d = as_dims(dims)
    if d.nsys != 2:
        raise ValueError(f"unrealign needs bipartite dims, got {tuple(d)}")
    a = check_matrix(r)
    da, db = d[0], d[1]
    if a.shape != (da * da, db * db):
        raise ValueError(f"realigned shape {a.shape} does not match dims {tuple(d)}")
    return a.reshape(da, da, db, db).transpose(0, 2, 1, 3).reshape(da * db, da * db)


def trace_norm(m) -> float:
    """Sum of singular values."""
    a = check_matrix(m)
    try:
        s = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise ArithmeticError(f"SVD failed in trace_norm: {exc}") from exc
    return float(np.sum(s))


def schmidt_decompose(psi, dims, tol: float = HERMITIAN_TOL):
    """Schmidt decomposition of a unit vector on a bipartite space.

    Returns ``(coeffs, left, right)`` with descending positive coefficients
    and orthonormal local kets as the columns of ``left`` and ``right``;
    sum_i coeffs[i] * kron(left[:, i], right[:, i]) reconstructs the input.
    """
    d = as_dims(dims)
    if d.nsys != 2:
        raise ValueError(f"schmidt_decompose needs bipartite dims, got {tuple(d)}")
    v = np.asarray(psi, dtype=complex).reshape(-1)
    if v.shape[0] != d.total:
        raise ValueError(f"vector length {v.shape[0]} does not match dims {tuple(d)}")
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > max(tol, 1e-10):
        raise ValueError(f"not a unit vector: norm {nrm}")
    m = v.reshape(d[0], d[1])
    u, s, vh = np.linalg.svd(m)
    r = int(np.sum(s > RANK_TOL))
    r = max(r, 1)
    return s[:r].copy(), u[:, :r].copy(), vh[:r, :].T.copy()


def schmidt_rank(psi, dims, tol: float = RANK_TOL) -> int:
    d = as_dims(dims)
    v = np.asarray(psi, dtype=complex).reshape(d[0], d[1])
    s = np.linalg.svd(v, compute_uv=False)
    return int(np.sum(s > tol))


def max_entangled(d: int) -> np.ndarray:
    """Unit vector (1/sqrt(d)) sum_i |ii> on a d x d bipartite space."""
    if d < 2:
        raise ValueError("d must be >= 2")
    v = np.zeros(d * d, dtype=complex)
    v[:: d + 1] = 1.0 / math.sqrt(d)
    return v


def max_entangled_projector(d: int) -> np.ndarray:
    v = max_entangled(d)
    return np.outer(v, v.conj())


def shift_clock(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Generalized-Pauli shift X|j> = |j+1 mod d> and clock Z|j> = w^j |j>."""
    x = np.zeros((d, d), dtype=complex)
    for j in range(d):
        x[(j + 1) % d, j] = 1.0
    w = np.exp(2j * np.pi / d)
    z = np.diag(w ** np.arange(d))
    return x, z


def heisenberg_weyl_set(d: int) -> list[np.ndarray]:
    """The d^2 unitaries X^s Z^t, ordered with index a = s*d + t.

    Pairwise trace-orthogonal: tr(U_a† U_b) = d * delta_ab.  Phases are the
    bare X^s Z^t products; only conjugation actions are used downstream, so
    no phase normalization is applied.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    x, z = shift_clock(d)
    out = []
    xs = np.eye(d, dtype=complex)
    for _ in range(d):
        zt = np.eye(d, dtype=complex)
        for _ in range(d):
            out.append(xs @ zt)
            zt = zt @ z
        xs = xs @ x
    return out
