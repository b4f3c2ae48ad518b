"""Matrix primitives, seminorms and graph norms shared by every other module.

All models are finite dimensional: operators are plain complex numpy arrays,
either stored densely or as block-diagonal stacks over an index partition
(used by the lattice builders, whose Dirac operators never mix Fourier modes).
Everything here is pure and safe to call from multiple threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

__all__ = [
    "PreconditionError",
    "ComplexMatrix",
    "HermitianOperator",
    "BlockDiagonalOperator",
    "AlgebraElement",
    "SpectralTripleModel",
    "commutator",
    "op_norm",
    "hermitian_spectrum",
    "lip_seminorm",
    "graph_norm",
    "hermitian_coefficient_basis",
    "projection_commutator_norm",
    "compress_to_indices",
    "operator_dim",
]

# Relative tolerance for accepting a matrix as Hermitian.  Inputs beyond it are
# rejected, never symmetrized, so invariant violations surface at the boundary.
HERMITICITY_RTOL = 1e-12


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold for the given input."""


#: A finite complex matrix in row-major order.  Plain ndarray; the alias marks
#: contract boundaries in signatures.
ComplexMatrix = np.ndarray


def as_complex_matrix(obj, *, square: bool = False) -> np.ndarray:
    """Coerce to a 2-d complex array, rejecting non-finite entries."""
    a = np.asarray(obj, dtype=complex)
    if a.ndim != 2:
        raise PreconditionError(f"expected a matrix, got ndim={a.ndim}")
    if not np.all(np.isfinite(a)):
        raise PreconditionError("matrix has non-finite entries")
    if square and a.shape[0] != a.shape[1]:
        raise PreconditionError(f"expected a square matrix, got shape {a.shape}")
    return a


def _max_abs(a: np.ndarray) -> float:
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(a: np.ndarray, rtol: float = HERMITICITY_RTOL) -> bool:
    return _max_abs(a - a.conj().T) <= rtol * (1.0 + _max_abs(a))


@dataclass(frozen=True)
class HermitianOperator:
    """A Hermitian operator (dense matrix or block-diagonal) with its dimension.

    Hermiticity is enforced on construction within ``1e-12 * (1 + max|entry|)``.
    """

    dim: int
    matrix: object

    def __post_init__(self):
        if isinstance(self.matrix, BlockDiagonalOperator):
            if self.matrix.dim != self.dim:
                raise PreconditionError(
                    f"dim={self.dim} does not match operator dim {self.matrix.dim}")
            if not self.matrix.is_hermitian():
                raise PreconditionError("block operator is not Hermitian")
            return
        m = as_complex_matrix(self.matrix, square=True)
        if m.shape[0] != self.dim:
            raise PreconditionError(
                f"dim={self.dim} does not match matrix shape {m.shape}")
        if not is_hermitian(m):
            defect = _max_abs(m - m.conj().T)
            raise PreconditionError(
                f"matrix is not Hermitian (defect {defect:.3e} beyond tolerance)")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def spectrum(self) -> np.ndarray:
        return hermitian_spectrum(self)

    def apply(self, xi: np.ndarray) -> np.ndarray:
        return self.matrix @ xi if isinstance(self.matrix, np.ndarray) \
            else self.matrix.apply(xi)

    def to_dense(self) -> np.ndarray:
        return self.matrix if isinstance(self.matrix, np.ndarray) \
            else self.matrix.to_dense()


@dataclass(frozen=True)
class BlockDiagonalOperator:
    """Operator that is block diagonal over a partition of the Hilbert basis.

    ``index_blocks[b]`` lists the global basis indices of block ``b`` and
    ``blocks[b]`` is the matrix acting on them.  A leading axis of length 1 in
    ``blocks`` means one shared block repeated over every index block, which the
    lattice models use heavily (base-direction operators do not depend on the
    fiber sector).  Blocks all have one common size; operations never couple
    distinct blocks, so norms and spectra reduce to stacked small problems.
    """

    dim: int
    index_blocks: np.ndarray   # (nb, bd) integer
    blocks: np.ndarray         # (nb, bd, bd) or (1, bd, bd) repeated

    def __post_init__(self):
        idx = np.asarray(self.index_blocks, dtype=np.int64)
        blk = np.asarray(self.blocks, dtype=complex)
        if idx.ndim != 2 or blk.ndim != 3:
            raise PreconditionError("index_blocks must be (nb, bd), blocks (nb, bd, bd)")
        nb, bd = idx.shape
        if blk.shape[1:] != (bd, bd) or blk.shape[0] not in (1, nb):
            raise PreconditionError(
                f"blocks shape {blk.shape} incompatible with partition {idx.shape}")
        flat = np.sort(idx.ravel())
        if flat.size != self.dim or not np.array_equal(flat, np.arange(self.dim)):
            raise PreconditionError("index blocks must partition range(dim)")
        if not np.all(np.isfinite(blk)):
            raise PreconditionError("blocks have non-finite entries")
        idx.flags.writeable = False
        blk.flags.writeable = False
        object.__setattr__(self, "index_blocks", idx)
        object.__setattr__(self, "blocks", blk)

    @property
    def n_blocks(self) -> int:
        return self.index_blocks.shape[0]

    @property
    def block_dim(self) -> int:
        return self.index_blocks.shape[1]

    @property
    def repeated(self) -> bool:
        return self.blocks.shape[0] == 1 and self.n_blocks > 1

    def full_blocks(self) -> np.ndarray:
        """Blocks with the repeat axis expanded (view when possible)."""
        if self.blocks.shape[0] == self.n_blocks:
            return self.blocks
        return np.broadcast_to(self.blocks, (self.n_blocks,) + self.blocks.shape[1:])

    def is_hermitian(self, rtol: float = HERMITICITY_RTOL) -> bool:
        blk = self.blocks
        return _max_abs(blk - np.conj(np.swapaxes(blk, 1, 2))) <= rtol * (1.0 + _max_abs(blk))

    def adjoint(self) -> "BlockDiagonalOperator":
        return BlockDiagonalOperator(
            self.dim, self.index_blocks, np.conj(np.swapaxes(self.blocks, 1, 2)))

    def scaled(self, s: complex) -> "BlockDiagonalOperator":
        return BlockDiagonalOperator(self.dim, self.index_blocks, s * self.blocks)

    def add(self, other: "BlockDiagonalOperator") -> "BlockDiagonalOperator":
        self._check_partner(other)
        return BlockDiagonalOperator(
            self.dim, self.index_blocks, self.blocks + other.blocks)

    def matmul(self, other: "BlockDiagonalOperator") -> "BlockDiagonalOperator":
        self._check_partner(other)
        return BlockDiagonalOperator(
            self.dim, self.index_blocks, self.blocks @ other.blocks)

    def _check_partner(self, other: "BlockDiagonalOperator"):
        if not isinstance(other, BlockDiagonalOperator):
            raise PreconditionError("expected a block-diagonal operand")
        if self.dim != other.dim or not np.array_equal(self.index_blocks, other.index_blocks):
            raise PreconditionError("block partitions differ")

    def apply(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=complex)
        out = np.empty(self.dim, dtype=complex)
        full = self.full_blocks()
        for b in range(self.n_blocks):
            out[self.index_blocks[b]] = full[b] @ xi[self.index_blocks[b]]
        return out

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.dim, self.dim), dtype=complex)
        full = self.full_blocks()
        for b in range(self.n_blocks):
            ix = self.index_blocks[b]
            dense[np.ix_(ix, ix)] = full[b]
        return dense

    def spectrum(self) -> np.ndarray:
        return hermitian_spectrum(self)


#: Operators the generic routines accept.
OperatorLike = Union[np.ndarray, HermitianOperator, BlockDiagonalOperator]


def _raw(op: OperatorLike):
    """Unwrap to ndarray (dense) or BlockDiagonalOperator."""
    if isinstance(op, HermitianOperator):
        return op.matrix
    if isinstance(op, BlockDiagonalOperator):
        return op
    return as_complex_matrix(op, square=True)


def operator_dim(op: OperatorLike) -> int:
    r = _raw(op)
    return r.dim if isinstance(r, BlockDiagonalOperator) else r.shape[0]


def commutator(a: OperatorLike, b: OperatorLike):
    """[a, b] = ab - ba.  Both operands must share a dimension (and, for
    block-diagonal operands, a partition)."""
    ra, rb = _raw(a), _raw(b)
    if isinstance(ra, BlockDiagonalOperator) or isinstance(rb, BlockDiagonalOperator):
        if not (isinstance(ra, BlockDiagonalOperator) and isinstance(rb, BlockDiagonalOperator)):
            # mixed dense/block: fall back to dense arithmetic
            da = ra.to_dense() if isinstance(ra, BlockDiagonalOperator) else ra
            db = rb.to_dense() if isinstance(rb, BlockDiagonalOperator) else rb
            return commutator(da, db)
        ra._check_partner(rb)
        blk = ra.blocks @ rb.blocks - rb.blocks @ ra.blocks
        if blk.shape[0] > 1 and not np.any(blk):
            # exact cancellation; collapse to one repeated zero block
            blk = blk[:1]
        return BlockDiagonalOperator(ra.dim, ra.index_blocks, blk)
    if ra.shape != rb.shape:
        raise PreconditionError(f"dimension mismatch: {ra.shape} vs {rb.shape}")
    return ra @ rb - rb @ ra


_NORMAL_DETECT_RTOL = 1e-13


def _normal_sign(blocks: np.ndarray) -> int:
    """1 if (each) matrix is Hermitian to within the detection tolerance,
    -1 if anti-Hermitian, 0 otherwise.  Commutators of Hermitian operators
    are anti-Hermitian up to summation-order noise, far below the detector."""
    swapped = np.conj(np.swapaxes(blocks, -1, -2))
    scale = float(np.max(np.abs(blocks))) if blocks.size else 0.0
    if scale == 0.0:
        return 1
    if float(np.max(np.abs(blocks - swapped))) <= _NORMAL_DETECT_RTOL * scale:
        return 1
    if float(np.max(np.abs(blocks + swapped))) <= _NORMAL_DETECT_RTOL * scale:
        return -1
    return 0


def op_norm(a: OperatorLike) -> float:
    """Largest singular value.  Exact for block-diagonal operators as the max
    over blocks; relative accuracy ~1e-15 via LAPACK, well inside the 1e-10
    contract.  (Anti-)Hermitian inputs take a symmetric eigensolver path,
    which is substantially faster than the general SVD."""
    r = _raw(a)
    if isinstance(r, BlockDiagonalOperator):
        if r.blocks.size == 0 or not r.blocks.any():
            return 0.0
        sign = _normal_sign(r.blocks)
        if sign:
            ev = np.linalg.eigvalsh(r.blocks if sign > 0 else 1j * r.blocks)
            return float(np.max(np.abs(ev)))
        s = np.linalg.svd(r.blocks, compute_uv=False)
        return float(np.max(s))
    if r.size == 0 or not r.any():
        return 0.0
    sign = _normal_sign(r)
    if sign:
        ev = np.linalg.eigvalsh(r if sign > 0 else 1j * r)
        return float(np.max(np.abs(ev)))
    return float(np.linalg.svd(r, compute_uv=False)[0])


def hermitian_spectrum(h: OperatorLike) -> np.ndarray:
    """All eigenvalues of a Hermitian operator, ascending, with multiplicity.

    Rejects inputs violating the Hermiticity tolerance.  Eigenvector phases are
    never exposed; nothing downstream may depend on them.
    """
    r = _raw(h)
    if isinstance(r, BlockDiagonalOperator):
        if not r.is_hermitian():
            raise PreconditionError("operator is not Hermitian within tolerance")
        vals = np.linalg.eigvalsh(r.full_blocks())
        return np.sort(vals.ravel())
    if not is_hermitian(r):
        raise PreconditionError("matrix is not Hermitian within tolerance")
    vals = np.linalg.eigvalsh(r)
    if not np.all(np.isfinite(vals)):
        raise PreconditionError("eigensolver produced non-finite values")
    return vals


def graph_norm(d: OperatorLike, xi: np.ndarray) -> float:
    """``norm(xi) + norm(D xi)`` with Euclidean vector norms."""
    r = _raw(d)
    xi = np.asarray(xi, dtype=complex)
    if xi.ndim != 1 or xi.shape[0] != operator_dim(r):
        raise PreconditionError(
            f"vector length {xi.shape} does not match operator dim {operator_dim(r)}")
    dxi = r.apply(xi) if isinstance(r, BlockDiagonalOperator) else r @ xi
    return float(np.linalg.norm(xi) + np.linalg.norm(dxi))


@dataclass(frozen=True)
class AlgebraElement:
    """An algebra element: coefficients over a model basis plus the realized
    matrix.  Coefficients are the source of truth; the matrix is a cache that
    ``SpectralTripleModel.element`` recomputes from the basis."""

    coefficients: np.ndarray
    matrix: OperatorLike

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)


def _vectorize(op: OperatorLike) -> np.ndarray:
    """Flatten an operator to a coefficient vector for span computations.
    Block operators flatten blockwise (all model bases share one partition)."""
    r = _raw(op)
    if isinstance(r, BlockDiagonalOperator):
        return r.full_blocks().ravel()
    return r.ravel()


def _shared_repeated_partition(ops) -> np.ndarray:
    """Common index partition if every operator is block diagonal with one
    repeated block over the same partition, else None."""
    idx = None
    for op in ops:
        r = _raw(op)
        if not isinstance(r, BlockDiagonalOperator) or r.blocks.shape[0] != 1:
            return None
        if idx is None:
            idx = r.index_blocks
        elif not np.array_equal(idx, r.index_blocks):
            return None
    return idx


def basis_vector_stack(basis, hilbert_dim: int):
    """Vectorized basis rows plus the matching identity vector.

    When every basis element is a repeated-block operator over one partition,
    vectorization uses the single stored block; the span geometry is the same
    up to a harmless overall scale, and the expansion of large models is
    avoided entirely.
    """
    if _shared_repeated_partition(basis) is not None:
        v = np.stack([_raw(b).blocks[0].ravel() for b in basis])
        bd = _raw(basis[0]).block_dim
        ident = np.eye(bd, dtype=complex).ravel()
        return v, ident
    v = np.stack([_vectorize(b) for b in basis])
    return v, np.eye(hilbert_dim, dtype=complex).ravel()


def projection_commutator_norm(mask: np.ndarray, op: OperatorLike) -> float:
    """Norm of [p, op] for the diagonal projection p = diag(mask), mask 0/1.

    Entrywise (mask_i - mask_j) * op_ij; never materializes p for block
    operators.
    """
    mask = np.asarray(mask, dtype=float)
    r = _raw(op)
    if isinstance(r, BlockDiagonalOperator):
        full = r.full_blocks()
        worst = 0.0
        for b in range(r.n_blocks):
            mb = mask[r.index_blocks[b]]
            if mb.min() == mb.max():
                continue  # constant mask on the block: commutator vanishes there
            diff = mb[:, None] - mb[None, :]
            worst = max(worst, op_norm(full[b] * diff))
        return worst
    diff = mask[:, None] - mask[None, :]
    return op_norm(r * diff)


def compress_to_indices(op: OperatorLike, indices: np.ndarray) -> np.ndarray:
    """Dense submatrix of op on the given (small) index set."""
    ix = np.asarray(indices, dtype=np.int64)
    r = _raw(op)
    if isinstance(r, BlockDiagonalOperator):
        pos = {int(g): k for k, g in enumerate(ix)}
        out = np.zeros((ix.size, ix.size), dtype=complex)
        full = r.full_blocks()
        for b in range(r.n_blocks):
            local = [(j, pos[int(g)]) for j, g in enumerate(r.index_blocks[b])
                     if int(g) in pos]
            if not local:
                continue
            loc, glob = zip(*local)
            out[np.ix_(glob, glob)] = full[b][np.ix_(loc, loc)]
        return out
    return r[np.ix_(ix, ix)]


@dataclass(frozen=True)
class SpectralTripleModel:
    """A finite model of a spectral triple: a matrix *-algebra basis and a
    Hermitian Dirac operator on one shared Hilbert dimension.

    The basis must be linearly independent, closed under adjoints as a span,
    and contain the identity in its span; all three are verified on build.
    An optional grading is validated as a self-adjoint unitary commuting with
    the algebra and anticommuting with the Dirac operator.
    """

    hilbert_dim: int
    algebra_basis: tuple
    dirac: OperatorLike
    label: str = ""
    grading: OperatorLike = None
    #: optional structural annotation attached by builders (e.g. graph data);
    #: not part of the core contract and never required.
    structure: object = None
    identity_coefficients: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        basis = tuple(self.algebra_basis)
        if not basis:
            raise PreconditionError("algebra basis is empty")
        for b in basis:
            if operator_dim(b) != self.hilbert_dim:
                raise PreconditionError("basis matrix dimension mismatch")
        if operator_dim(self.dirac) != self.hilbert_dim:
            raise PreconditionError("Dirac dimension mismatch")
        d = _raw(self.dirac)
        if isinstance(d, BlockDiagonalOperator):
            if not d.is_hermitian():
                raise PreconditionError("Dirac operator is not Hermitian")
        elif not isinstance(self.dirac, HermitianOperator):
            object.__setattr__(self, "dirac", HermitianOperator(self.hilbert_dim, d))
        object.__setattr__(self, "algebra_basis", basis)

        v, ident = basis_vector_stack(basis, self.hilbert_dim)
        gram = v @ v.conj().T
        scale = np.max(np.abs(np.diag(gram)))
        eig = np.linalg.eigvalsh(gram)
        if eig[0] <= 1e-10 * max(scale, 1.0):
            raise PreconditionError("algebra basis is not linearly independent")

        # identity in span: least squares through the Gram system
        c_id = self._span_solve(v, gram, ident)
        if np.linalg.norm(c_id @ v - ident) > 1e-8 * np.sqrt(ident.size):
            raise PreconditionError("identity is not in the span of the algebra basis")
        c_id.flags.writeable = False
        object.__setattr__(self, "identity_coefficients", c_id)

        # adjoint closure of the span
        adj = tuple(self._adjoint_of(b) for b in basis)
        w_all, _ = basis_vector_stack(adj, self.hilbert_dim)
        for w in w_all:
            c_w = self._span_solve(v, gram, w)
            if np.linalg.norm(c_w @ v - w) > 1e-8 * (1.0 + np.linalg.norm(w)):
                raise PreconditionError("algebra basis span is not closed under adjoints")

        if self.grading is not None:
            self._check_grading()

    def _check_grading(self):
        g = _raw(self.grading)
        d = _raw(self.dirac)
        if operator_dim(g) != self.hilbert_dim:
            raise PreconditionError("grading dimension mismatch")
        gd = g.to_dense() if isinstance(g, BlockDiagonalOperator) else g
        scale = 1.0 + _max_abs(gd)
        if _max_abs(gd - gd.conj().T) > 1e-12 * scale:
            raise PreconditionError("grading is not self-adjoint")
        if _max_abs(gd @ gd - np.eye(self.hilbert_dim)) > 1e-12 * scale:
            raise PreconditionError("grading is not unitary")
        dd = d.to_dense() if isinstance(d, BlockDiagonalOperator) else d
        anti = gd @ dd + dd @ gd
        if _max_abs(anti) > 1e-12 * (1.0 + _max_abs(dd)):
            raise PreconditionError("grading does not anticommute with the Dirac")
        for b in self.algebra_basis:
            bb = _raw(b)
            bb = bb.to_dense() if isinstance(bb, BlockDiagonalOperator) else bb
            if _max_abs(gd @ bb - bb @ gd) > 1e-12 * (1.0 + _max_abs(bb)):
                raise PreconditionError("grading does not commute with the algebra")

    @staticmethod
    def _adjoint_of(op: OperatorLike):
        r = _raw(op)
        if isinstance(r, BlockDiagonalOperator):
            return r.adjoint()
        return r.conj().T

    @staticmethod
    def _span_solve(v: np.ndarray, gram: np.ndarray, target: np.ndarray) -> np.ndarray:
        # minimal-norm coefficients c with  sum_i c_i basis_i ~ target
        return np.linalg.solve(gram, v @ target.conj()).conj()

    def _basis_tensor(self) -> np.ndarray:
        """Stacked basis, cached; block bases stack their (shared-partition)
        block arrays so repeated blocks are never expanded."""
        cached = getattr(self, "_basis_tensor_cache", None)
        if cached is None:
            first = _raw(self.algebra_basis[0])
            if isinstance(first, BlockDiagonalOperator):
                shapes = {_raw(b).blocks.shape for b in self.algebra_basis}
                if len(shapes) == 1:
                    cached = np.stack([_raw(b).blocks for b in self.algebra_basis])
                else:
                    cached = np.stack([_raw(b).full_blocks() for b in self.algebra_basis])
            else:
                cached = np.stack([_raw(b) for b in self.algebra_basis])
            object.__setattr__(self, "_basis_tensor_cache", cached)
        return cached

    def element(self, coefficients: Sequence[complex]) -> AlgebraElement:
        """Realize the coefficient vector as a matrix over this basis."""
        c = np.asarray(coefficients, dtype=complex)
        if c.shape != (len(self.algebra_basis),):
            raise PreconditionError(
                f"expected {len(self.algebra_basis)} coefficients, got {c.shape}")
        first = _raw(self.algebra_basis[0])
        stack = self._basis_tensor()
        if isinstance(first, BlockDiagonalOperator):
            blocks = np.tensordot(c, stack, axes=1)
            mat = BlockDiagonalOperator(self.hilbert_dim, first.index_blocks, blocks)
        else:
            mat = np.tensordot(c, stack, axes=1)
        return AlgebraElement(c, mat)

    def identity_element(self) -> AlgebraElement:
        return self.element(self.identity_coefficients)


def lip_seminorm(model: SpectralTripleModel, a) -> float:
    """Lipschitz seminorm ``norm([D, a])`` of an algebra element against the
    model Dirac.  Accepts an AlgebraElement or a raw matrix on the model
    Hilbert space."""
    mat = a.matrix if isinstance(a, AlgebraElement) else a
    if operator_dim(mat) != model.hilbert_dim:
        raise PreconditionError("element dimension does not match the model")
    return op_norm(commutator(_raw(model.dirac), _raw(mat)))


def hermitian_coefficient_basis(model: SpectralTripleModel) -> np.ndarray:
    """Real basis of the self-adjoint part of the algebra span.

    Returns a complex array of shape (n_basis, n_real): column k is a
    coefficient vector c with  sum_i c_i basis_i  Hermitian, and the columns
    span all such c over the reals.  Used by the samplers and the distance
    solvers, which optimize over self-adjoint elements only.
    """
    basis = model.algebra_basis
    n = len(basis)
    v, _ = basis_vector_stack(basis, model.hilbert_dim)
    gram = v @ v.conj().T
    # J: coefficients of each basis adjoint, so adjoint(sum c_i b_i) realizes
    # as sum (J conj(c))_i b_i
    adj = tuple(SpectralTripleModel._adjoint_of(b) for b in basis)
    w_all, _ = basis_vector_stack(adj, model.hilbert_dim)
    jm = np.empty((n, n), dtype=complex)
    for i in range(n):
        jm[:, i] = np.linalg.solve(gram, v @ w_all[i].conj()).conj()
    # fixed points of c -> J conj(c), as a real-linear problem on (Re c, Im c)
    a_r, a_i = jm.real, jm.imag
    top = np.hstack([a_r, a_i])
    bot = np.hstack([a_i, -a_r])
    m = np.vstack([top, bot]) - np.eye(2 * n)
    _, s, vh = np.linalg.svd(m)
    tol = max(s[0], 1.0) * 1e-9
    if np.any(s <= tol):
        null = vh[np.flatnonzero(s <= tol).min():]
    else:
        null = np.empty((0, 2 * n))
    cols = null[:, :n] + 1j * null[:, n:]
    return cols.T
