"""Exact marginal likelihood with the activations integrated out.

Marginalizing the Gamma activations turns the model into a superposition
of K negative multinomial component blocks, and the likelihood of a count
matrix becomes a finite sum over every admissible way of splitting each
count v_fn into K nonnegative parts. Documents are independent, so the
sum factorizes per document; within a document the enumerator walks the
cartesian product of per-cell compositions depth-first, scoring each full
assignment in the log domain and folding it into a streaming log-sum-exp.

The number of admissible splits grows combinatorially with the counts, so
every entry point takes a term budget and refuses (rather than truncates)
when the enumeration would exceed it.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BudgetExceededError, ParameterError, ShapeError
from .model import GapModel, SparseCountMatrix

__all__ = [
    "EventProbs",
    "AdmissibleSetSpec",
    "event_probs",
    "enumerate_compositions",
    "admissible_cardinality",
    "enumeration_terms",
    "marginal_nll",
    "marginal_nll_decomposed",
    "MarginalParts",
    "DEFAULT_TERM_BUDGET",
]

DEFAULT_TERM_BUDGET = 10**8

_NEG_INF = float("-inf")


@dataclass(frozen=True)
class EventProbs:
    """Per-column event probabilities p_fk = w_fk / (|w_k| + beta_k) and
    the leftover mass p0_k = beta_k / (|w_k| + beta_k)."""

    p: np.ndarray
    p0: np.ndarray


def event_probs(model: GapModel) -> EventProbs:
    """Event probabilities of the model's NM component blocks.

    An empty dictionary column yields p_fk = 0 with p0_k = 1.
    """
    denom = model.column_norms() + model.beta
    return EventProbs(p=model.w / denom[None, :], p0=model.beta / denom)


def enumerate_compositions(total, k):
    """Yield all length-``k`` nonnegative integer vectors summing to ``total``.

    Vectors are produced in lexicographic order without repetition; there
    are C(total + k - 1, k - 1) of them.
    """
    total = int(total)
    k = int(k)
    if total < 0:
        raise ParameterError(f"total must be nonnegative, got {total}")
    if k < 1:
        raise ParameterError(f"need at least one part, got {k}")
    if k == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in enumerate_compositions(total - first, k - 1):
            yield (first,) + rest


def admissible_cardinality(counts: SparseCountMatrix, k) -> int:
    """Exact number of admissible component tensors for the count matrix.

    The product over stored cells of C(v + k - 1, k - 1), computed in
    arbitrary precision. Cells with zero count admit a single split.
    """
    k = int(k)
    if k < 1:
        raise ParameterError(f"need at least one component, got {k}")
    out = 1
    for v in counts.values.tolist():
        out *= math.comb(v + k - 1, k - 1)
    return out


def enumeration_terms(counts: SparseCountMatrix, k) -> int:
    """Terms the per-document enumeration visits: the sum over documents of
    the product of per-cell composition counts."""
    k = int(k)
    if k < 1:
        raise ParameterError(f"need at least one component, got {k}")
    total = 0
    values = counts.values.tolist()
    indptr = counts.indptr
    for n in range(counts.n_docs):
        prod = 1
        for i in range(indptr[n], indptr[n + 1]):
            prod *= math.comb(values[i] + k - 1, k - 1)
        total += prod
    return total


@dataclass(frozen=True)
class AdmissibleSetSpec:
    """Size descriptor of the admissible component set for (counts, K)."""

    counts: SparseCountMatrix
    n_components: int
    cardinality: int
    n_terms: int

    @classmethod
    def describe(cls, counts, n_components):
        return cls(
            counts=counts,
            n_components=int(n_components),
            cardinality=admissible_cardinality(counts, n_components),
            n_terms=enumeration_terms(counts, n_components),
        )


class MarginalParts(NamedTuple):
    """Additive split of the per-document marginal cost: the data-coupled
    interaction term, the column-norm regularizer, and the constant."""

    interaction: float
    regularizer: float
    constant: float


def _composition_cache(values, k):
    cache = {}
    for v in values:
        if v not in cache:
            cache[v] = list(enumerate_compositions(v, k))
    return cache


def _cell_options(comps, logp_row, lgfact):
    """Score each composition of one cell: sum_k [c_k log p_fk - log c_k!]."""
    scores = []
    for comp in comps:
        s = 0.0
        for k, ck in enumerate(comp):
            if ck:
                lp = logp_row[k]
                if lp == _NEG_INF:
                    s = _NEG_INF
                    break
                s += ck * lp - lgfact[ck]
        scores.append(s)
    return scores


def _descend(cells, idx, m, score, lgtab, acc):
    if idx == len(cells):
        t = score
        for k, mk in enumerate(m):
            t += lgtab[k][mk]
        if t <= acc[0]:
            acc[1] += math.exp(t - acc[0])
        elif acc[0] == _NEG_INF:
            acc[0] = t
            acc[1] = 1.0
        else:
            acc[1] = acc[1] * math.exp(acc[0] - t) + 1.0
            acc[0] = t
        return
    scores, comps = cells[idx]
    nk = len(m)
    for s, comp in zip(scores, comps):
        ns = score + s
        if ns == _NEG_INF:
            continue
        for k in range(nk):
            m[k] += comp[k]
        _descend(cells, idx + 1, m, ns, lgtab, acc)
        for k in range(nk):
            m[k] -= comp[k]


def _doc_log_sum(cells, lgtab, n_components, first_slice=None):
    """Log of the summed scores over one document's admissible splits.

    ``first_slice`` restricts the outermost cell to a composition range,
    which partitions the term stream into independent chunks whose
    log-sum-exp merge reproduces the full sum.
    """
    if first_slice is not None and cells:
        scores, comps = cells[0]
        lo, hi = first_slice
        cells = [(scores[lo:hi], comps[lo:hi])] + cells[1:]
    acc = [_NEG_INF, 0.0]
    _descend(cells, 0, [0] * n_components, 0.0, lgtab, acc)
    if acc[0] == _NEG_INF:
        return _NEG_INF
    return acc[0] + math.log(acc[1])


def _prepare(model, counts):
    if model.n_rows != counts.n_rows:
        raise ShapeError(
            f"model has {model.n_rows} rows but counts have {counts.n_rows}"
        )
    ep = event_probs(model)
    with np.errstate(divide="ignore"):
        logp = np.log(ep.p)
    logp_rows = logp.tolist()
    values = counts.values.tolist()
    rows = counts.rows.tolist()
    k = model.n_components
    comp_cache = _composition_cache(values, k)
    max_v = max(values, default=0)
    lgfact = [math.lgamma(c + 1.0) for c in range(max_v + 1)]

    indptr = counts.indptr
    doc_cells = []
    max_total = 0
    for n in range(counts.n_docs):
        lo, hi = int(indptr[n]), int(indptr[n + 1])
        cells = []
        tot = 0
        for i in range(lo, hi):
            v = values[i]
            comps = comp_cache[v]
            cells.append((_cell_options(comps, logp_rows[rows[i]], lgfact), comps))
            tot += v
        doc_cells.append(cells)
        max_total = max(max_total, tot)

    lgtab = [
        [math.lgamma(a + m) - math.lgamma(a) for m in range(max_total + 1)]
        for a in model.alpha.tolist()
    ]
    return ep, doc_cells, lgtab


def _doc_log_sums(model, counts, threads=1):
    _, doc_cells, lgtab = _prepare(model, counts)
    k = model.n_components
    if threads > 1 and counts.n_docs > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(
                pool.map(lambda cells: _doc_log_sum(cells, lgtab, k), doc_cells)
            )
    return [_doc_log_sum(cells, lgtab, k) for cells in doc_cells]


def _check_budget(counts, k, budget):
    spec = AdmissibleSetSpec.describe(counts, k)
    if budget is not None and spec.n_terms > budget:
        raise BudgetExceededError(spec.cardinality, spec.n_terms, int(budget))


def marginal_nll(
    model: GapModel,
    counts: SparseCountMatrix,
    budget=DEFAULT_TERM_BUDGET,
    threads=1,
) -> float:
    """Exact negative log marginal likelihood of the count matrix.

    Computed by exhaustive enumeration of admissible component splits; the
    call refuses with :class:`BudgetExceededError` when the enumeration
    would visit more than ``budget`` terms (``budget=None`` disables the
    check). Returns +inf when the model assigns the data zero mass.
    """
    _check_budget(counts, model.n_components, budget)
    doc_sums = _doc_log_sums(model, counts, threads=threads)
    ep = event_probs(model)
    tail = counts.n_docs * float(np.sum(model.alpha * np.log(ep.p0)))
    return -(sum(doc_sums) + tail)


def marginal_nll_decomposed(
    model: GapModel,
    counts: SparseCountMatrix,
    budget=DEFAULT_TERM_BUDGET,
    threads=1,
) -> MarginalParts:
    """Per-document split of the marginal cost into interaction,
    column-norm regularizer, and constant.

    N times the sum of the three parts equals :func:`marginal_nll`. The
    regularizer sum_k alpha_k log(|w_k| + beta_k) depends on the dictionary
    only through its column norms, which is what drives empty columns when
    the rank is over-specified.
    """
    _check_budget(counts, model.n_components, budget)
    doc_sums = _doc_log_sums(model, counts, threads=threads)
    interaction = -sum(doc_sums) / counts.n_docs
    regularizer = float(
        np.sum(model.alpha * np.log(model.column_norms() + model.beta))
    )
    constant = -float(np.sum(model.alpha * np.log(model.beta)))
    return MarginalParts(interaction, regularizer, constant)
