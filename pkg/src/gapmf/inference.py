"""Gibbs sampling over the latent variables and Monte Carlo EM estimation
of the dictionary.

The sampler alternates the two closed-form conditionals: each activation
h_kn is Gamma distributed given the component splits of its document, and
each stored count v_fn is split across components by a multinomial whose
odds are w_fk h_kn. Documents are conditionally independent given the
dictionary, so each document's chain runs on its own deterministic random
substream keyed by (seed, EM iteration, document); serial and threaded
execution consume identical streams and produce identical results.

Three M-steps are provided, differing in which latent variables the
complete set retains:

* ``ch``  ratio of summed splits to summed activations;
* ``h``   multiplicative update that never increases its objective;
* ``c``   closed-form rescaled split average, whose iterates keep the
          rows of the dictionary summing to a data-determined constant
          whenever beta_k / alpha_k is constant across components.

The per-document sweep kernel is JIT compiled and releases the GIL, so a
thread pool gives genuine parallelism across documents.
"""

import csv
import io
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import (
    DegenerateSupportError,
    NumericalError,
    ParameterError,
    BudgetExceededError,
)
from .marginal import marginal_nll
from .model import ComponentTensor, GapModel, SparseCountMatrix
from .rng import make_rng, substream

__all__ = [
    "GibbsState",
    "SampleSums",
    "McemConfig",
    "TraceRecord",
    "initial_state",
    "gibbs_sweep",
    "collect_sums",
    "mstep_ch",
    "mstep_h",
    "mstep_c",
    "init_w",
    "run_mcem",
    "write_trace_csv",
    "read_trace_csv",
]


@dataclass
class GibbsState:
    """Current sampler state: activations ``h`` (K x N), component splits
    aligned with the count matrix triplets, and the generator used by the
    single-stream entry points."""

    h: np.ndarray
    components: ComponentTensor
    rng: np.random.Generator


@dataclass
class SampleSums:
    """Sufficient statistics accumulated over the retained Gibbs samples.

    ``sc[f, k]``    sum of component splits,
    ``sh[k]``       sum of activations,
    ``srat[f, k]``  sum of h_kn * v_fn / [W H]_fn over stored cells,
    ``j``           number of retained samples.
    """

    sc: np.ndarray
    sh: np.ndarray
    srat: np.ndarray
    j: int


@dataclass
class McemConfig:
    """Protocol of one MCEM run.

    ``burn_in`` defaults to half of ``n_gibbs``. ``w_floor`` only affects
    the multiplicative (``h``) update, which otherwise keeps exact zeros
    forever.
    """

    n_iters: int
    algorithm: str
    seed: int
    n_gibbs: int = 300
    burn_in: Optional[int] = None
    w_floor: float = 0.0
    trace_every: int = 1

    def __post_init__(self):
        if self.burn_in is None:
            self.burn_in = self.n_gibbs // 2
        if self.algorithm not in ("c", "h", "ch"):
            raise ParameterError(
                f"unknown algorithm {self.algorithm!r}, expected 'c', 'h' or 'ch'"
            )
        if self.n_iters < 0:
            raise ParameterError("n_iters must be nonnegative")
        if not 0 <= self.burn_in < self.n_gibbs:
            raise ParameterError(
                f"need 0 <= burn_in < n_gibbs, got {self.burn_in} and {self.n_gibbs}"
            )
        if self.seed < 0:
            raise ParameterError("seed must be nonnegative")
        if self.w_floor < 0:
            raise ParameterError("w_floor must be nonnegative")
        if self.trace_every < 1:
            raise ParameterError("trace_every must be positive")


@dataclass
class TraceRecord:
    """Per-iteration diagnostics emitted by :func:`run_mcem`."""

    iteration: int
    cpu_seconds: float
    column_norms: np.ndarray
    marginal_nll: Optional[float] = field(default=None)


@njit(cache=True, nogil=True)
def _doc_chain(gen, w_nz, scale, alpha, v, c, h, n_sweeps, burn_in, sc, sh, srat):
    """Run ``n_sweeps`` Gibbs sweeps on one document, in place.

    ``w_nz`` holds the dictionary rows of the document's stored cells,
    ``scale`` the per-component 1 / (beta_k + sum_f w_fk). Statistics are
    accumulated for sweeps past ``burn_in``. The multinomial split is
    drawn as a chain of conditional binomials over the unnormalized odds.
    Returns 0, or 1 when a stored count meets an all-zero odds row.
    """
    m, n_comp = c.shape
    for j in range(n_sweeps):
        for k in range(n_comp):
            tot = 0
            for i in range(m):
                tot += c[i, k]
            h[k] = gen.gamma(alpha[k] + tot, scale[k])
        record = j >= burn_in
        for i in range(m):
            denom = 0.0
            for k in range(n_comp):
                denom += w_nz[i, k] * h[k]
            if denom <= 0.0:
                return 1
            rem = denom
            dn = v[i]
            for k in range(n_comp - 1):
                odds = w_nz[i, k] * h[k]
                if dn > 0:
                    pk = odds / rem
                    if pk > 1.0:
                        pk = 1.0
                    ck = gen.binomial(dn, pk)
                else:
                    ck = 0
                c[i, k] = ck
                dn -= ck
                rem -= odds
            c[i, n_comp - 1] = dn
            if record:
                r = v[i] / denom
                for k in range(n_comp):
                    sc[i, k] += c[i, k]
                    srat[i, k] += r * h[k]
        if record:
            for k in range(n_comp):
                sh[k] += h[k]
    return 0


_KERNEL_WARM = False


def _warm_kernel():
    """Trigger JIT compilation outside any timed section."""
    global _KERNEL_WARM
    if _KERNEL_WARM:
        return
    gen = np.random.default_rng(0)
    k = 2
    _doc_chain(
        gen,
        np.ones((1, k)),
        np.full(k, 0.5),
        np.ones(k),
        np.ones(1, dtype=np.int64),
        np.array([[1, 0]], dtype=np.int64),
        np.ones(k),
        1,
        0,
        np.zeros((1, k)),
        np.zeros(k),
        np.zeros((1, k)),
    )
    _KERNEL_WARM = True


def _chain_all_docs(model, counts, h, split, n_sweeps, burn_in, rng_for_doc, threads):
    """Advance every document's chain; mutates ``h`` and ``split``.

    Returns (sc_flat, sh_per_doc, srat_flat) where the flat arrays align
    with the count matrix triplets. Writes are disjoint per document, so
    a thread pool over documents is deterministic.
    """
    _warm_kernel()
    w = model.w
    alpha = model.alpha
    scale = 1.0 / (model.beta + model.w.sum(axis=0))
    rows, values, indptr = counts.rows, counts.values, counts.indptr
    sc_flat = np.zeros((counts.nnz, model.n_components))
    srat_flat = np.zeros((counts.nnz, model.n_components))
    sh_all = np.zeros((counts.n_docs, model.n_components))

    def task(n):
        lo, hi = int(indptr[n]), int(indptr[n + 1])
        w_nz = w[rows[lo:hi]]
        h_buf = np.ascontiguousarray(h[:, n])
        status = _doc_chain(
            rng_for_doc(n),
            w_nz,
            scale,
            alpha,
            values[lo:hi],
            split[lo:hi],
            h_buf,
            n_sweeps,
            burn_in,
            sc_flat[lo:hi],
            sh_all[n],
            srat_flat[lo:hi],
        )
        h[:, n] = h_buf
        return status

    if threads > 1 and counts.n_docs > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            statuses = list(pool.map(task, range(counts.n_docs)))
    else:
        statuses = [task(n) for n in range(counts.n_docs)]
    bad = [n for n, s in enumerate(statuses) if s != 0]
    if bad:
        raise DegenerateSupportError(
            f"document {bad[0]} has a positive count on a row where the "
            f"current intensity is identically zero"
        )
    return sc_flat, sh_all, srat_flat


def initial_state(model: GapModel, counts: SparseCountMatrix, seed) -> GibbsState:
    """Deterministic chain start: activations at their prior mean, splits
    drawn by one multinomial pass keyed on substream (seed, 0, doc)."""
    K, N = model.n_components, counts.n_docs
    h = np.tile((model.alpha / model.beta)[:, None], (1, N))
    split = np.zeros((counts.nnz, K), dtype=np.int64)
    for n in range(N):
        lo, hi = int(counts.indptr[n]), int(counts.indptr[n + 1])
        if lo == hi:
            continue
        odds = model.w[counts.rows[lo:hi]] * h[:, n]
        denom = odds.sum(axis=1)
        if np.any(denom <= 0.0):
            raise DegenerateSupportError(
                f"document {n} has a positive count on a row of the initial "
                f"dictionary that is identically zero"
            )
        split[lo:hi] = substream(seed, 0, n).multinomial(
            counts.values[lo:hi], odds / denom[:, None]
        )
    return GibbsState(h=h, components=ComponentTensor(counts, split), rng=make_rng(seed))


def gibbs_sweep(state: GibbsState, model: GapModel, counts: SparseCountMatrix) -> GibbsState:
    """One full sweep of the two conditionals, using the state's generator.

    Activations are refreshed first from the current splits, then every
    stored count is re-split given the new activations; cells with zero
    count stay untouched (their split is identically zero).
    """
    h = state.h.copy()
    split = state.components.split.copy()
    _chain_all_docs(model, counts, h, split, 1, 1, lambda n: state.rng, threads=1)
    return GibbsState(h=h, components=ComponentTensor(counts, split), rng=state.rng)


def collect_sums(
    model: GapModel,
    counts: SparseCountMatrix,
    state: GibbsState,
    n_gibbs: int,
    burn_in: int,
    substreams=None,
    threads: int = 1,
):
    """Run ``n_gibbs`` sweeps from ``state`` and accumulate statistics over
    the last ``n_gibbs - burn_in`` samples.

    With ``substreams=(seed, iteration)`` each document consumes its own
    generator keyed by (seed, iteration, doc), which is what makes
    ``threads > 1`` admissible; without it the state's single generator is
    used and execution must stay serial. Returns the sums and the final
    state for a warm restart.
    """
    if not 0 <= burn_in < n_gibbs:
        raise ParameterError(
            f"need 0 <= burn_in < n_gibbs, got {burn_in} and {n_gibbs}"
        )
    if substreams is None:
        if threads > 1:
            raise ParameterError(
                "threads > 1 requires per-document substreams; pass substreams="
            )
        rng_for_doc = lambda n: state.rng
    else:
        seed, iteration = substreams
        rng_for_doc = lambda n: substream(seed, iteration, n)
    h = state.h.copy()
    split = state.components.split.copy()
    sc_flat, sh_all, srat_flat = _chain_all_docs(
        model, counts, h, split, n_gibbs, burn_in, rng_for_doc, threads
    )
    F, K = model.w.shape
    sc = np.zeros((F, K))
    srat = np.zeros((F, K))
    np.add.at(sc, counts.rows, sc_flat)
    np.add.at(srat, counts.rows, srat_flat)
    sums = SampleSums(sc=sc, sh=sh_all.sum(axis=0), srat=srat, j=n_gibbs - burn_in)
    new_state = GibbsState(
        h=h, components=ComponentTensor(counts, split), rng=state.rng
    )
    return sums, new_state


def mstep_ch(sums: SampleSums) -> np.ndarray:
    """Update for the complete set {C, H}: w_fk = sc_fk / sh_k."""
    if np.any(sums.sh <= 0.0):
        raise DegenerateSupportError("a component accumulated zero activation mass")
    return sums.sc / sums.sh[None, :]


def mstep_h(w_prev, sums: SampleSums, w_floor: float = 0.0) -> np.ndarray:
    """Multiplicative update for the complete set {V, H}.

    ``w_fk = w_prev_fk * srat_fk / sh_k``; exact zeros are fixed points.
    Entries below ``w_floor`` are clamped up to it (the default floor of 0
    keeps zeros absorbing).
    """
    if np.any(sums.sh <= 0.0):
        raise DegenerateSupportError("a component accumulated zero activation mass")
    w = w_prev * sums.srat / sums.sh[None, :]
    return np.maximum(w, w_floor)


def mstep_c(model: GapModel, sums: SampleSums, n_docs: int) -> np.ndarray:
    """Closed-form update for the complete set {C}:
    w_fk = (beta_k / alpha_k) * sc_fk / (J * N).

    This is the exact minimizer of the component-only objective; summed
    over k it ties each dictionary row to (beta/alpha-weighted) average
    counts, hence constant row sums along the iterates when beta_k/alpha_k
    does not depend on k.
    """
    if sums.j < 1:
        raise ParameterError("need at least one retained sample")
    return (model.beta / model.alpha)[None, :] * sums.sc / (sums.j * n_docs)


def init_w(counts: SparseCountMatrix, k, alpha, beta) -> np.ndarray:
    """Deterministic start: w_fk = (1/K)(beta_k/alpha_k) * mean_n v_fn."""
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    if alpha.shape != (k,) or beta.shape != (k,):
        raise ParameterError(f"hyperparameters must have shape ({k},)")
    return counts.row_means()[:, None] * (beta / alpha)[None, :] / k


def _as_hyper(x, k, name):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(k, float(arr))
    if arr.shape != (k,):
        raise ParameterError(f"{name} must be a scalar or length-{k} vector")
    return arr


def run_mcem(
    counts: SparseCountMatrix,
    k: int,
    alpha,
    beta,
    config: McemConfig,
    trace_sink=None,
    eval_ml_budget: int = 0,
    threads: int = 1,
    iterate_sink=None,
):
    """Estimate the dictionary by Monte Carlo EM.

    Starts from the deterministic initializer, runs ``config.n_iters``
    EM iterations with a warm-restarted Gibbs chain, and applies the
    configured M-step. Emits a :class:`TraceRecord` at iteration 0, then
    every ``config.trace_every`` iterations and at the last one; records
    carry the exact marginal cost whenever ``eval_ml_budget`` is positive
    and the enumeration fits the budget. ``trace_sink`` receives each
    record as it is produced; ``iterate_sink`` receives ``(iteration, w)``
    after every M-step. CPU time excludes the marginal evaluations.

    Returns the final model and the list of trace records.
    """
    alpha = _as_hyper(alpha, k, "alpha")
    beta = _as_hyper(beta, k, "beta")
    w = init_w(counts, k, alpha, beta)
    model = GapModel(w, alpha, beta)
    state = initial_state(model, counts, config.seed)
    _warm_kernel()

    records = []
    instrumentation = 0.0
    t0 = time.process_time()

    def record(iteration, current):
        nonlocal instrumentation
        cpu = time.process_time() - t0 - instrumentation
        cml = None
        if eval_ml_budget:
            mark = time.process_time()
            try:
                cml = marginal_nll(
                    current, counts, budget=eval_ml_budget, threads=threads
                )
            except BudgetExceededError:
                cml = None
            instrumentation += time.process_time() - mark
        rec = TraceRecord(iteration, cpu, current.column_norms(), cml)
        records.append(rec)
        if trace_sink is not None:
            trace_sink(rec)

    record(0, model)
    for i in range(1, config.n_iters + 1):
        sums, state = collect_sums(
            model,
            counts,
            state,
            config.n_gibbs,
            config.burn_in,
            substreams=(config.seed, i),
            threads=threads,
        )
        if config.algorithm == "ch":
            w = mstep_ch(sums)
        elif config.algorithm == "h":
            w = mstep_h(model.w, sums, config.w_floor)
        else:
            w = mstep_c(model, sums, counts.n_docs)
        if not np.all(np.isfinite(w)):
            raise NumericalError(f"non-finite dictionary entry at iteration {i}")
        model = GapModel(w, alpha, beta)
        if iterate_sink is not None:
            iterate_sink(i, w)
        if i % config.trace_every == 0 or i == config.n_iters:
            record(i, model)
    return model, records


def write_trace_csv(records, dest):
    """Write trace records as CSV: iter, cpu_seconds, one column norm per
    component, and a trailing c_ml column when any record carries one.
    Floats are rendered in shortest round-trip decimal."""
    own = isinstance(dest, (str, bytes)) or hasattr(dest, "__fspath__")
    handle = open(dest, "w", newline="") if own else dest
    try:
        k = records[0].column_norms.size if records else 0
        include_ml = any(r.marginal_nll is not None for r in records)
        writer = csv.writer(handle)
        header = ["iter", "cpu_seconds"] + [f"norm_w_{i + 1}" for i in range(k)]
        if include_ml:
            header.append("c_ml")
        writer.writerow(header)
        for r in records:
            row = [str(r.iteration), repr(float(r.cpu_seconds))]
            row += [repr(float(x)) for x in r.column_norms]
            if include_ml:
                row.append("" if r.marginal_nll is None else repr(float(r.marginal_nll)))
            writer.writerow(row)
    finally:
        if own:
            handle.close()


def read_trace_csv(source):
    """Read a trace CSV back into arrays.

    Returns a dict with ``iter`` (int array), ``cpu_seconds``, ``norms``
    (R x K), and ``c_ml`` (float array with NaN where absent, or None when
    the column is missing).
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    handle = open(source, "r", newline="") if own else source
    try:
        reader = csv.reader(handle)
        header = next(reader)
        norm_cols = [i for i, name in enumerate(header) if name.startswith("norm_w_")]
        ml_col = header.index("c_ml") if "c_ml" in header else None
        iters, cpu, norms, cml = [], [], [], []
        for row in reader:
            iters.append(int(row[0]))
            cpu.append(float(row[1]))
            norms.append([float(row[i]) for i in norm_cols])
            if ml_col is not None:
                cml.append(float(row[ml_col]) if row[ml_col] else float("nan"))
    finally:
        if own:
            handle.close()
    return {
        "iter": np.asarray(iters, dtype=np.int64),
        "cpu_seconds": np.asarray(cpu),
        "norms": np.asarray(norms),
        "c_ml": np.asarray(cml) if ml_col is not None else None,
    }
