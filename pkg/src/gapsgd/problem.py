"""Problem definitions: datasets, losses, block-separable penalties, derived constants.

Everything here is immutable after construction and safe to share across
concurrent solver runs; the operations are pure functions of their inputs.
"""

import dataclasses
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, xlogy


class DegenerateProblemError(ValueError):
    """Raised when the design matrix carries no information (all zeros)."""


def soft_threshold(v, t):
    """Coordinate-wise shrinkage: sign(v) * max(|v| - t, 0)."""
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


class Dataset:
    """Sparse design matrix with both row (CSR) and column (CSC) access, plus responses.

    Parameters
    ----------
    matrix : array or scipy sparse matrix, shape (n, d)
    y : array, shape (n,)
        Real responses for regression; {0, 1} labels for logistic models.
    x_true : array or None
        Planted coefficients when the data is synthetic; purely informational.
    """

    def __init__(self, matrix, y, x_true=None):
        a = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        a.sum_duplicates()
        a.sort_indices()
        n, d = a.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset must be non-empty, got shape {(n, d)}")
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape[0] != n:
            raise ValueError(f"y has {y.shape[0]} entries, expected {n}")
        self.n = n
        self.d = d
        self.A = a
        self.A_csc = a.tocsc()
        self.y = y
        self.x_true = None if x_true is None else np.asarray(x_true, dtype=np.float64)
        self._col_norms = None
        for arr in (self.A.data, self.A.indices, self.A.indptr,
                    self.A_csc.data, self.A_csc.indices, self.A_csc.indptr, self.y):
            arr.flags.writeable = False

    def column_norms(self):
        """Euclidean norm of every column, cached."""
        if self._col_norms is None:
            csc = self.A_csc
            cols = np.repeat(np.arange(self.d), np.diff(csc.indptr))
            norms = np.sqrt(np.bincount(cols, weights=csc.data ** 2, minlength=self.d))
            norms.flags.writeable = False
            self._col_norms = norms
        return self._col_norms

    def row_entries(self, i):
        """(column indices, values) of sample i."""
        a = self.A
        s, e = a.indptr[i], a.indptr[i + 1]
        return a.indices[s:e], a.data[s:e]

    def views_agree(self):
        """Round-trip check that the CSR and CSC views hold identical entries."""
        back = self.A_csc.tocsr()
        back.sort_indices()
        return (np.array_equal(back.indptr, self.A.indptr)
                and np.array_equal(back.indices, self.A.indices)
                and np.array_equal(back.data, self.A.data))


class BlockPartition:
    """Ordered disjoint coordinate groups covering {0..d-1}."""

    def __init__(self, groups):
        groups = [np.asarray(g, dtype=np.intp) for g in groups]
        if not groups or any(g.size == 0 for g in groups):
            raise ValueError("every group must be non-empty")
        for g in groups:
            if np.any(np.diff(g) <= 0):
                raise ValueError("group indices must be sorted and unique")
        allidx = np.concatenate(groups)
        d = allidx.size
        if np.unique(allidx).size != d or allidx.min() != 0 or allidx.max() != d - 1:
            raise ValueError("groups must partition {0..d-1}")
        self.groups = groups
        self.d = d
        self.q = len(groups)
        block_of = np.empty(d, dtype=np.intp)
        for j, g in enumerate(groups):
            block_of[g] = j
        block_of.flags.writeable = False
        self.block_of = block_of
        # fast path when groups are consecutive ranges laid out in order
        starts = np.array([g[0] for g in groups], dtype=np.intp)
        stops = np.array([g[-1] + 1 for g in groups], dtype=np.intp)
        sizes = np.array([g.size for g in groups], dtype=np.intp)
        self.is_contiguous = bool(
            np.all(stops - starts == sizes)
            and starts[0] == 0
            and np.all(starts[1:] == stops[:-1])
        )
        self.starts = starts
        self.stops = stops
        self.sizes = sizes

    @classmethod
    def contiguous(cls, d, q):
        """q consecutive ranges of near-equal size."""
        if not 1 <= q <= d:
            raise ValueError(f"need 1 <= q <= d, got q={q}, d={d}")
        return cls(np.array_split(np.arange(d), q))

    @classmethod
    def singletons(cls, d):
        return cls.contiguous(d, d)


class SquaredLoss:
    """Per-sample 0.5 * (y_i - z)^2."""

    name = "squared"
    curvature = 1.0

    def value(self, z, y):
        return 0.5 * (y - z) ** 2

    def deriv(self, z, y):
        return z - y

    def conjugate(self, u, y):
        return 0.5 * u * u + u * y

    def validate_labels(self, y):
        pass


class LogisticLoss:
    """Per-sample -y_i * z + log(1 + exp(z)) with labels in {0, 1}."""

    name = "logistic"
    curvature = 0.25

    def value(self, z, y):
        return np.logaddexp(0.0, z) - y * z

    def deriv(self, z, y):
        return expit(z) - y

    def conjugate(self, u, y):
        # finite only for u + y in [0, 1]; +inf signals an infeasible dual point
        t = np.asarray(u + y, dtype=np.float64)
        out = np.full(t.shape, np.inf)
        ok = (t >= -1e-12) & (t <= 1.0 + 1e-12)
        tc = np.clip(t[ok], 0.0, 1.0)
        out[ok] = xlogy(tc, tc) + xlogy(1.0 - tc, 1.0 - tc)
        return out

    def validate_labels(self, y):
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("logistic loss requires labels in {0, 1}")


class L1Penalty:
    """Sum of absolute values; blocks of any size, dual norm is the max-abs."""

    name = "l1"

    def value(self, x, partition):
        return float(np.sum(np.abs(x)))

    def block_value(self, v):
        return float(np.sum(np.abs(v)))

    def block_dual_norm(self, v):
        return float(np.max(np.abs(v))) if np.size(v) else 0.0

    def block_prox(self, v, t):
        return soft_threshold(v, t)


class GroupL2Penalty:
    """Euclidean norm per block; self-dual."""

    name = "group_l2"

    def value(self, x, partition):
        return float(sum(math.sqrt(float(np.sum(x[g] ** 2))) for g in partition.groups))

    def block_value(self, v):
        return float(np.sqrt(np.sum(v ** 2)))

    def block_dual_norm(self, v):
        return float(np.sqrt(np.sum(v ** 2)))

    def block_prox(self, v, t):
        nrm = math.sqrt(float(np.sum(v ** 2)))
        if nrm <= t:
            return np.zeros_like(v)
        return (1.0 - t / nrm) * v


LOSSES = {"squared": SquaredLoss(), "logistic": LogisticLoss()}
REGULARIZERS = {"l1": L1Penalty(), "group_l2": GroupL2Penalty()}


@dataclasses.dataclass(frozen=True)
class ProblemSpec:
    """A fully specified sparsity-regularized risk minimization instance.

    The objective is  mean_i f_i(a_i' x) + mu_p * ||x - x0||^2 + lam * sum_j Omega_j(x_Gj).
    """

    dataset: Dataset
    partition: BlockPartition
    loss: object
    reg: object
    lam: float
    mu_p: float = 0.0
    x0_anchor: np.ndarray = None

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.mu_p < 0:
            raise ValueError(f"mu_p must be nonnegative, got {self.mu_p}")
        if self.partition.d != self.dataset.d:
            raise ValueError("partition does not cover the dataset features")
        self.loss.validate_labels(self.dataset.y)
        if self.x0_anchor is not None:
            anchor = np.asarray(self.x0_anchor, dtype=np.float64)
            if anchor.shape != (self.dataset.d,):
                raise ValueError("x0_anchor must have length d")
            object.__setattr__(self, "x0_anchor", anchor)

    @property
    def anchor(self):
        if self.x0_anchor is None:
            return np.zeros(self.dataset.d)
        return self.x0_anchor


@dataclasses.dataclass(frozen=True)
class LipschitzConstants:
    """Per-sample smoothness bounds: L is block-wise, T covers the full gradient."""

    L: float
    T: float
    per_block_L: np.ndarray


def _check_x(spec, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (spec.dataset.d,):
        raise ValueError(f"x has shape {x.shape}, expected ({spec.dataset.d},)")
    return x


def primal_objective(spec, x):
    """mean_i f_i(a_i' x) + mu_p ||x - x0||^2 + lam * Omega(x)."""
    x = _check_x(spec, x)
    z = spec.dataset.A @ x
    val = float(np.mean(spec.loss.value(z, spec.dataset.y)))
    if spec.mu_p > 0:
        val += spec.mu_p * float(np.sum((x - spec.anchor) ** 2))
    return val + spec.lam * spec.reg.value(x, spec.partition)


def full_gradient(spec, x):
    """Gradient of the smooth part (loss mean plus the quadratic perturbation)."""
    x = _check_x(spec, x)
    ds = spec.dataset
    g = spec.loss.deriv(ds.A @ x, ds.y)
    out = (ds.A.T @ g) / ds.n
    if spec.mu_p > 0:
        out = out + 2.0 * spec.mu_p * (x - spec.anchor)
    return out


def _gather_rows(csr, batch):
    """Concatenate the stored entries of the given rows.

    Returns (cols, vals, row_id) where row_id maps each entry back to its
    position inside the batch. Repeated rows are kept (weighted sampling).
    """
    starts = csr.indptr[batch]
    lens = csr.indptr[batch + 1] - starts
    if lens.sum() == 0:
        return (np.empty(0, dtype=np.intp), np.empty(0), np.empty(0, dtype=np.intp))
    cols = np.concatenate([csr.indices[s:s + l] for s, l in zip(starts, lens)])
    vals = np.concatenate([csr.data[s:s + l] for s, l in zip(starts, lens)])
    row_id = np.repeat(np.arange(batch.size), lens)
    return cols, vals, row_id


def partial_gradient(spec, x, batch, block):
    """Mini-batch gradient of the smooth part restricted to one block.

    batch may contain repeated sample indices; each occurrence contributes to
    the average. The perturbation term enters in full (it has no sample index).
    """
    x = _check_x(spec, x)
    ds, part = spec.dataset, spec.partition
    batch = np.asarray(batch, dtype=np.intp).ravel()
    if batch.size == 0:
        raise ValueError("batch must be non-empty")
    if batch.min() < 0 or batch.max() >= ds.n:
        raise ValueError("batch indices out of range")
    if not 0 <= block < part.q:
        raise ValueError(f"block {block} out of range [0, {part.q})")
    cols, vals, row_id = _gather_rows(ds.A, batch)
    z = np.zeros(batch.size)
    np.add.at(z, row_id, vals * x[cols])
    g = spec.loss.deriv(z, ds.y[batch])
    group = part.groups[block]
    out = np.zeros(group.size)
    mask = part.block_of[cols] == block
    if mask.any():
        pos = np.searchsorted(group, cols[mask])
        np.add.at(out, pos, vals[mask] * g[row_id[mask]])
    out /= batch.size
    if spec.mu_p > 0:
        out += 2.0 * spec.mu_p * (x[group] - spec.anchor[group])
    return out


def lipschitz_constants(spec):
    """Data-driven smoothness bounds.

    L = c * max_i max_j ||a_{i,Gj}||^2 and T = c * max_i ||a_i||^2, where c is
    the loss curvature (1 for squared error, 1/4 for logistic); the quadratic
    perturbation shifts both by 2 * mu_p.
    """
    ds, part = spec.dataset, spec.partition
    a = ds.A
    rows = np.repeat(np.arange(ds.n), np.diff(a.indptr))
    sq = a.data ** 2
    row_sq = np.bincount(rows, weights=sq, minlength=ds.n)
    if row_sq.max() == 0.0:
        raise DegenerateProblemError("design matrix is all zeros")
    blk = part.block_of[a.indices]
    per_row_block = np.bincount(rows * part.q + blk, weights=sq,
                                minlength=ds.n * part.q).reshape(ds.n, part.q)
    c = spec.loss.curvature
    shift = 2.0 * spec.mu_p
    return LipschitzConstants(
        L=float(c * per_row_block.max() + shift),
        T=float(c * row_sq.max() + shift),
        per_block_L=c * per_row_block.max(axis=0) + shift,
    )


def blockwise_dual_norms(vec, partition, reg):
    """Omega_j^D(vec_Gj) for every block, vectorized where the layout allows."""
    vec = np.asarray(vec, dtype=np.float64)
    if isinstance(reg, GroupL2Penalty):
        return np.sqrt(np.bincount(partition.block_of, weights=vec ** 2,
                                   minlength=partition.q))
    if isinstance(reg, L1Penalty) and partition.is_contiguous:
        return np.maximum.reduceat(np.abs(vec), partition.starts)
    return np.array([reg.block_dual_norm(vec[g]) for g in partition.groups])


def lambda_max(spec):
    """Smallest regularization weight at which the zero vector is optimal.

    Evaluated at x = 0 with the default zero anchor, so the perturbation term
    contributes nothing. spec.lam itself is ignored.
    """
    ds = spec.dataset
    g0 = spec.loss.deriv(np.zeros(ds.n), ds.y)
    corr = (ds.A.T @ g0) / ds.n
    return float(blockwise_dual_norms(corr, spec.partition, spec.reg).max())
