"""Gamma-Poisson factorization model: data containers, generative
processes, and cost functions.

The model places independent Gamma(alpha_k, beta_k) activations on a K x N
matrix H and observes Poisson counts with intensity W @ H, where the F x K
dictionary W is a free nonnegative parameter. Each count v_fn decomposes
into K latent components c_fkn summing to v_fn, which gives three
equivalent ways of generating data:

* hierarchical: draw H, then component-wise Poisson counts;
* negative multinomial: draw each component block from its NM marginal;
* compound: draw an NB total per component, split it multinomially.

All three produce the same joint law of (C, V).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import ParameterError, ShapeError

__all__ = [
    "SparseCountMatrix",
    "ComponentTensor",
    "GapModel",
    "generate_hierarchical",
    "generate_nm",
    "generate_compound",
    "kl_divergence",
    "joint_nll",
]


class SparseCountMatrix:
    """Nonnegative integer matrix stored as triplets, document-major.

    Rows index features (f), columns index documents (n). Only strictly
    positive entries are stored; triplets are kept sorted by (doc, row) and
    an index pointer gives each document's contiguous slice.
    """

    __slots__ = ("n_rows", "n_docs", "rows", "docs", "values", "indptr")

    def __init__(self, n_rows, n_docs, rows, docs, values):
        n_rows = int(n_rows)
        n_docs = int(n_docs)
        rows = np.asarray(rows, dtype=np.int64)
        docs = np.asarray(docs, dtype=np.int64)
        values = np.asarray(values, dtype=np.int64)
        if n_rows < 0 or n_docs < 0:
            raise ShapeError("matrix dimensions must be nonnegative")
        if not (rows.shape == docs.shape == values.shape) or rows.ndim != 1:
            raise ShapeError("triplet arrays must be 1-D and of equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ParameterError("row index out of range")
            if docs.min() < 0 or docs.max() >= n_docs:
                raise ParameterError("document index out of range")
            if values.min() < 1:
                raise ParameterError("stored counts must be >= 1")
        order = np.lexsort((rows, docs))
        rows, docs, values = rows[order], docs[order], values[order]
        if rows.size > 1:
            dup = (docs[1:] == docs[:-1]) & (rows[1:] == rows[:-1])
            if dup.any():
                i = int(np.flatnonzero(dup)[0])
                raise ParameterError(
                    f"duplicate entry at row {rows[i]}, document {docs[i]}"
                )
        self.n_rows = n_rows
        self.n_docs = n_docs
        self.rows = rows
        self.docs = docs
        self.values = values
        self.indptr = np.zeros(n_docs + 1, dtype=np.int64)
        np.add.at(self.indptr, docs + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)

    @classmethod
    def from_dense(cls, array):
        array = np.asarray(array)
        if array.ndim != 2:
            raise ShapeError("expected a 2-D array")
        if np.any(array < 0):
            raise ParameterError("counts must be nonnegative")
        rows, docs = np.nonzero(array)
        return cls(array.shape[0], array.shape[1], rows, docs, array[rows, docs])

    @property
    def shape(self):
        return (self.n_rows, self.n_docs)

    @property
    def nnz(self):
        return self.values.size

    def doc_entries(self, n):
        """Row indices and counts of document ``n`` (views, do not mutate)."""
        lo, hi = self.indptr[n], self.indptr[n + 1]
        return self.rows[lo:hi], self.values[lo:hi]

    def to_dense(self):
        out = np.zeros(self.shape, dtype=np.int64)
        out[self.rows, self.docs] = self.values
        return out

    def row_means(self):
        """Per-feature empirical mean across documents."""
        if self.n_docs == 0:
            return np.zeros(self.n_rows)
        sums = np.zeros(self.n_rows)
        np.add.at(sums, self.rows, self.values.astype(np.float64))
        return sums / self.n_docs

    def total(self):
        return int(self.values.sum())

    def __eq__(self, other):
        if not isinstance(other, SparseCountMatrix):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.rows, other.rows)
            and np.array_equal(self.docs, other.docs)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return (
            f"SparseCountMatrix(shape={self.shape}, nnz={self.nnz}, "
            f"total={self.total()})"
        )


class ComponentTensor:
    """Latent split of each stored count across the K components.

    ``split[i, k]`` is the share of triplet ``i`` of the backing count
    matrix assigned to component k; rows sum to the stored counts. Cells
    with zero observed count carry an identically zero split and are not
    stored.
    """

    __slots__ = ("counts", "split")

    def __init__(self, counts: SparseCountMatrix, split):
        split = np.asarray(split, dtype=np.int64)
        if split.ndim != 2 or split.shape[0] != counts.nnz:
            raise ShapeError(
                f"split must be (nnz, K) = ({counts.nnz}, K), got {split.shape}"
            )
        if np.any(split < 0):
            raise ParameterError("component counts must be nonnegative")
        if not np.array_equal(split.sum(axis=1), counts.values):
            raise ParameterError("component splits must sum to the stored counts")
        self.counts = counts
        self.split = split

    @property
    def n_components(self):
        return self.split.shape[1]

    def to_dense(self):
        F, N = self.counts.shape
        out = np.zeros((F, self.n_components, N), dtype=np.int64)
        out[self.counts.rows, :, self.counts.docs] = self.split
        return out


class GapModel:
    """Dictionary W (F x K, nonnegative) with Gamma hyperparameters.

    ``alpha`` and ``beta`` are length-K vectors of shapes and rates for the
    activation priors, one pair per component.
    """

    __slots__ = ("w", "alpha", "beta")

    def __init__(self, w, alpha, beta):
        w = np.asarray(w, dtype=np.float64)
        alpha = np.asarray(alpha, dtype=np.float64)
        beta = np.asarray(beta, dtype=np.float64)
        if w.ndim != 2:
            raise ShapeError(f"dictionary must be 2-D, got shape {w.shape}")
        k = w.shape[1]
        if alpha.shape != (k,) or beta.shape != (k,):
            raise ShapeError(
                f"hyperparameters must have shape ({k},), got "
                f"{alpha.shape} and {beta.shape}"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("dictionary entries must be finite and nonnegative")
        if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
            raise ParameterError("shape parameters must be positive")
        if np.any(beta <= 0) or not np.all(np.isfinite(beta)):
            raise ParameterError("rate parameters must be positive")
        self.w = w
        self.alpha = alpha
        self.beta = beta

    @property
    def n_rows(self):
        return self.w.shape[0]

    @property
    def n_components(self):
        return self.w.shape[1]

    def column_norms(self):
        """L1 norm of each dictionary column."""
        return self.w.sum(axis=0)

    def expected_column(self):
        """Expectation of one data column, sum_k (alpha_k / beta_k) w_k."""
        return self.w @ (self.alpha / self.beta)

    def __repr__(self):
        return f"GapModel(F={self.n_rows}, K={self.n_components})"


def _package(c_dense):
    """Compress a dense F x K x N component tensor into (tensor, counts)."""
    v = c_dense.sum(axis=1)
    counts = SparseCountMatrix.from_dense(v)
    split = c_dense[counts.rows, :, counts.docs]
    return ComponentTensor(counts, split), counts


def generate_hierarchical(model: GapModel, n_docs, rng):
    """Generate data by the two-level process: activations then counts.

    Returns ``(h, components, counts)`` where ``h`` is the K x n_docs
    activation matrix, components the latent splits, and counts the
    observed matrix.
    """
    if n_docs < 1:
        raise ParameterError(f"need at least one document, got {n_docs}")
    K = model.n_components
    h = rng.gamma(
        model.alpha[:, None], 1.0 / model.beta[:, None], size=(K, n_docs)
    )
    rates = model.w[:, :, None] * h[None, :, :]
    c = rng.poisson(rates)
    components, counts = _package(c)
    return h, components, counts


def generate_nm(model: GapModel, n_docs, rng):
    """Generate data componentwise from the negative multinomial marginal.

    Each component block c_kn follows the NM law with weights given by the
    k-th dictionary column; the activation matrix is never materialized.
    """
    if n_docs < 1:
        raise ParameterError(f"need at least one document, got {n_docs}")
    F, K = model.w.shape
    c = np.empty((F, K, n_docs), dtype=np.int64)
    for k in range(K):
        lam = rng.gamma(model.alpha[k], 1.0 / model.beta[k], size=n_docs)
        c[:, k, :] = rng.poisson(model.w[:, [k]] * lam[None, :])
    components, counts = _package(c)
    return components, counts


def generate_compound(model: GapModel, n_docs, rng):
    """Generate data as multinomial splits of NB component totals."""
    if n_docs < 1:
        raise ParameterError(f"need at least one document, got {n_docs}")
    F, K = model.w.shape
    c = np.zeros((F, K, n_docs), dtype=np.int64)
    for k in range(K):
        total = model.w[:, k].sum()
        if total == 0.0:
            continue  # empty component contributes nothing
        lam = rng.gamma(model.alpha[k], total / model.beta[k], size=n_docs)
        trials = rng.poisson(lam)
        c[:, k, :] = rng.multinomial(trials, model.w[:, k] / total).T
    components, counts = _package(c)
    return components, counts


def kl_divergence(counts: SparseCountMatrix, approx) -> float:
    """Generalized Kullback-Leibler divergence D(V | Vhat).

    ``sum_fn [v log(v / vhat) - v + vhat]`` with 0 log 0 = 0. Returns +inf
    when a positive count meets a zero approximation.
    """
    approx = np.asarray(approx, dtype=np.float64)
    if approx.shape != counts.shape:
        raise ShapeError(
            f"approximation has shape {approx.shape}, expected {counts.shape}"
        )
    at = approx[counts.rows, counts.docs]
    if np.any(at <= 0.0):
        return float("inf")
    v = counts.values.astype(np.float64)
    return float(np.sum(v * np.log(v / at)) - v.sum() + approx.sum())


def joint_nll(model: GapModel, counts: SparseCountMatrix, h) -> float:
    """Exact negative log of the joint density of (V, H) given the model.

    Evaluated as the KL data term plus the activation penalty plus the
    count-dependent constant, so the result equals
    ``-log p(V, H | W, alpha, beta)`` including all normalizers.
    """
    h = np.asarray(h, dtype=np.float64)
    K, N = model.n_components, counts.n_docs
    if h.shape != (K, N):
        raise ShapeError(f"activations have shape {h.shape}, expected {(K, N)}")
    if np.any(h <= 0):
        raise ParameterError("activations must be strictly positive")
    data_term = kl_divergence(counts, model.w @ h)
    penalty = float(
        np.sum((1.0 - model.alpha)[:, None] * np.log(h) + model.beta[:, None] * h)
        - N * np.sum(model.alpha * np.log(model.beta))
    )
    v = counts.values.astype(np.float64)
    const = float(
        np.sum(gammaln(v + 1.0) + v - v * np.log(v)) + N * np.sum(gammaln(model.alpha))
    )
    return data_term + penalty + const
