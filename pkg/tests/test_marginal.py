import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapmf import substream
from gapmf.distributions import NegMultParams, nm_log_pmf
from gapmf.errors import BudgetExceededError, ParameterError, ShapeError
from gapmf.marginal import (
    AdmissibleSetSpec,
    admissible_cardinality,
    enumerate_compositions,
    enumeration_terms,
    event_probs,
    marginal_nll,
    marginal_nll_decomposed,
    _doc_log_sum,
    _prepare,
)
from gapmf.model import GapModel, SparseCountMatrix

from oracles import materialized_marginal_nll, mc_marginal_nll


def random_instance(key, max_dim=3, max_count=3, zero_column=False):
    gen = substream(555, key)
    f = int(gen.integers(1, max_dim + 1))
    k = int(gen.integers(1, max_dim + 1))
    n = int(gen.integers(1, max_dim + 1))
    w = gen.random((f, k)) * 1.5
    if zero_column:
        w[:, 0] = 0.0
    model = GapModel(w, gen.uniform(0.5, 2.0, k), gen.uniform(0.5, 2.0, k))
    counts = SparseCountMatrix.from_dense(gen.integers(0, max_count + 1, (f, n)))
    return model, counts


class TestEventProbs:
    def test_zero_column(self):
        model = GapModel(np.array([[0.0, 1.0]]), np.ones(2), np.ones(2))
        ep = event_probs(model)
        assert ep.p0[0] == 1.0
        assert ep.p[0, 0] == 0.0

    def test_single_cell(self):
        model = GapModel(np.array([[1.0]]), np.ones(1), np.ones(1))
        ep = event_probs(model)
        assert ep.p[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_column_sums(self):
        w = np.array([[0.638, 0.075], [0.009, 0.568], [0.044, 0.126], [0.309, 0.231]])
        model = GapModel(w, np.ones(2), np.ones(2))
        ep = event_probs(model)
        norms = w.sum(axis=0)
        np.testing.assert_allclose(ep.p.sum(axis=0), norms / (norms + 1.0), atol=1e-12)
        np.testing.assert_allclose(ep.p.sum(axis=0) + ep.p0, 1.0, atol=1e-12)


class TestCompositions:
    def test_small_case_order(self):
        assert list(enumerate_compositions(2, 2)) == [(0, 2), (1, 1), (2, 0)]

    def test_zero_total(self):
        assert list(enumerate_compositions(0, 4)) == [(0, 0, 0, 0)]

    def test_counted_case(self):
        out = list(enumerate_compositions(4, 3))
        assert len(out) == 15
        assert len(set(out)) == 15

    @given(v=st.integers(0, 8), k=st.integers(1, 4))
    @settings(max_examples=80, deadline=None)
    def test_compositions_properties(self, v, k):
        out = list(enumerate_compositions(v, k))
        assert len(out) == math.comb(v + k - 1, k - 1)
        assert len(set(out)) == len(out)
        assert out == sorted(out)
        assert all(sum(c) == v and min(c) >= 0 for c in out)


class TestCardinality:
    def test_empty_matrix(self):
        counts = SparseCountMatrix.from_dense(np.zeros((2, 2), dtype=int))
        assert admissible_cardinality(counts, 3) == 1

    def test_single_cell(self):
        counts = SparseCountMatrix.from_dense(np.array([[2]]))
        assert admissible_cardinality(counts, 2) == 3

    def test_product_matches_independent_per_cell_arithmetic(self):
        gen = substream(556, 0)
        counts = SparseCountMatrix.from_dense(gen.integers(0, 5, (4, 100)))
        k = 3
        expected = 1
        for v in counts.values:
            v = int(v)
            # binomial coefficient rebuilt from factorials
            expected *= math.factorial(v + k - 1) // (
                math.factorial(k - 1) * math.factorial(v)
            )
        assert admissible_cardinality(counts, k) == expected

    def test_terms_are_per_document_products(self):
        counts = SparseCountMatrix.from_dense(np.array([[2, 1], [1, 0]]))
        # doc 0: C(3,1)*C(2,1) = 6, doc 1: C(2,1) = 2
        assert enumeration_terms(counts, 2) == 8
        assert admissible_cardinality(counts, 2) == 12
        spec = AdmissibleSetSpec.describe(counts, 2)
        assert (spec.cardinality, spec.n_terms) == (12, 8)


class TestMarginalNll:
    def test_single_component_reduces_to_nm(self):
        model, counts = random_instance(1)
        model = GapModel(model.w[:, :1], model.alpha[:1], model.beta[:1])
        params = NegMultParams.from_weights(model.alpha[0], model.beta[0], model.w[:, 0])
        dense = counts.to_dense()
        direct = -sum(nm_log_pmf(params, dense[:, n]) for n in range(counts.n_docs))
        assert marginal_nll(model, counts) == pytest.approx(direct, abs=1e-10)

    def test_all_zero_counts_closed_form(self):
        model, _ = random_instance(2)
        counts = SparseCountMatrix.from_dense(
            np.zeros((model.n_rows, 4), dtype=int)
        )
        norms = model.column_norms()
        expected = -4 * float(
            np.sum(model.alpha * np.log(model.beta / (norms + model.beta)))
        )
        assert marginal_nll(model, counts) == pytest.approx(expected, abs=1e-10)

    def test_hand_instance(self):
        # one row, two unit columns, a single count of 1: mass is exactly 1/4
        model = GapModel(np.array([[1.0, 1.0]]), np.ones(2), np.ones(2))
        counts = SparseCountMatrix.from_dense(np.array([[1]]))
        assert marginal_nll(model, counts) == pytest.approx(math.log(4.0), abs=1e-12)

    def test_hand_instance_against_monte_carlo(self):
        model = GapModel(np.array([[1.0, 1.0]]), np.ones(2), np.ones(2))
        counts = SparseCountMatrix.from_dense(np.array([[1]]))
        estimate, se = mc_marginal_nll(model, counts, 10**6, seed=3)
        exact = marginal_nll(model, counts)
        assert abs(estimate - exact) < 3 * se
        assert abs(estimate - exact) / exact < 0.01

    @pytest.mark.parametrize("key", [3, 4, 5, 6])
    def test_matches_materialized_summation(self, key):
        model, counts = random_instance(key, zero_column=(key == 5))
        ours = marginal_nll(model, counts)
        reference = materialized_marginal_nll(model, counts)
        assert ours == pytest.approx(reference, abs=1e-10)

    def test_matches_monte_carlo_integration(self):
        model, counts = random_instance(7)
        estimate, se = mc_marginal_nll(model, counts, 2 * 10**6, seed=7)
        assert abs(estimate - marginal_nll(model, counts)) < 3 * se

    def test_scaling_invariance(self):
        for key in range(10):
            model, counts = random_instance(key)
            gen = substream(557, key)
            lam = gen.uniform(0.2, 5.0, model.n_components)
            scaled = GapModel(model.w * lam, model.alpha, model.beta * lam)
            a = marginal_nll(model, counts)
            b = marginal_nll(scaled, counts)
            assert abs(a - b) < 1e-10

    def test_permutation_invariance(self):
        model, counts = random_instance(8)
        k = model.n_components
        perm = substream(558, 0).permutation(k)
        permuted = GapModel(model.w[:, perm], model.alpha[perm], model.beta[perm])
        assert abs(marginal_nll(model, counts) - marginal_nll(permuted, counts)) < 1e-10

    def test_unexplained_count_gives_infinity(self):
        model = GapModel(np.array([[1.0], [0.0]]), np.ones(1), np.ones(1))
        counts = SparseCountMatrix.from_dense(np.array([[1], [2]]))
        assert marginal_nll(model, counts) == math.inf

    def test_budget_error_carries_cardinality(self):
        counts = SparseCountMatrix.from_dense(np.full((3, 3), 10))
        model = GapModel(np.ones((3, 3)), np.ones(3), np.ones(3))
        with pytest.raises(BudgetExceededError) as err:
            marginal_nll(model, counts, budget=1000)
        assert err.value.cardinality == admissible_cardinality(counts, 3)
        assert err.value.n_terms == enumeration_terms(counts, 3)
        assert err.value.n_terms > 1000
        # completes exactly once the budget allows it
        value = marginal_nll(model, counts, budget=err.value.n_terms)
        assert math.isfinite(value)

    def test_threads_match_serial(self):
        model, counts = random_instance(9)
        assert marginal_nll(model, counts, threads=4) == marginal_nll(model, counts)

    def test_model_data_shape_mismatch(self):
        model = GapModel(np.ones((2, 1)), np.ones(1), np.ones(1))
        counts = SparseCountMatrix.from_dense(np.array([[1], [1], [1]]))
        with pytest.raises(ShapeError):
            marginal_nll(model, counts)


class TestDecomposition:
    def test_recomposition_identity(self):
        for key in (1, 3, 7):
            model, counts = random_instance(key)
            parts = marginal_nll_decomposed(model, counts)
            total = counts.n_docs * (
                parts.interaction + parts.regularizer + parts.constant
            )
            assert total == pytest.approx(marginal_nll(model, counts), abs=1e-10)

    def test_regularizer_at_zero_dictionary(self):
        model = GapModel(np.zeros((2, 3)), np.full(3, 1.5), np.full(3, 0.7))
        counts = SparseCountMatrix.from_dense(np.zeros((2, 2), dtype=int))
        parts = marginal_nll_decomposed(model, counts)
        expected = 3 * 1.5 * math.log(0.7)  # sum_k alpha_k log beta_k
        assert parts.regularizer == pytest.approx(expected, abs=1e-12)
        assert parts.constant == pytest.approx(-expected, abs=1e-12)

    def test_regularizer_separability(self):
        model, counts = random_instance(4)
        parts = marginal_nll_decomposed(model, counts)
        w2 = model.w.copy()
        w2[:, 0] *= 2.0
        doubled = GapModel(w2, model.alpha, model.beta)
        parts2 = marginal_nll_decomposed(doubled, counts)
        norms, norms2 = model.column_norms(), doubled.column_norms()
        delta = model.alpha[0] * (
            math.log(norms2[0] + model.beta[0]) - math.log(norms[0] + model.beta[0])
        )
        assert parts2.regularizer - parts.regularizer == pytest.approx(delta, abs=1e-12)
        assert parts2.constant == parts.constant


class TestPartitionedEnumeration:
    def test_chunked_merge_matches_serial(self):
        # splitting the outermost cell's compositions must not move the result
        model, counts = random_instance(6)
        if counts.nnz == 0:
            model, counts = random_instance(3)
        _, doc_cells, lgtab = _prepare(model, counts)
        k = model.n_components
        for cells in doc_cells:
            full = _doc_log_sum(cells, lgtab, k)
            if not cells:
                continue
            n_first = len(cells[0][0])
            for n_chunks in (2, 3, 4):
                bounds = np.linspace(0, n_first, n_chunks + 1).astype(int)
                parts = [
                    _doc_log_sum(cells, lgtab, k, first_slice=(int(a), int(b)))
                    for a, b in zip(bounds[:-1], bounds[1:])
                    if a < b
                ]
                merged = float(np.logaddexp.reduce(parts))
                if math.isfinite(full):
                    assert abs(merged - full) < 1e-12
                else:
                    assert merged == full
