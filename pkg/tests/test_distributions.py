import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chi2_contingency, nbinom

from gapmf import substream
from gapmf.distributions import (
    NegBinParams,
    NegMultParams,
    nb_log_pmf,
    nb_sample,
    nm_log_pmf,
    nm_sample_compound,
    nm_sample_mixture,
)
from gapmf.errors import ParameterError, ShapeError

from oracles import count_vectors, empirical_pmf, nm_exact_pmf, tv_distance

# frozen arbitrary-precision reference values (oracles.mp_nb_log_pmf / mp_nm_log_pmf)
NB_2_03_3 = -2.9389739397353824
NM_1_23_12 = -3.611918412977808


class TestNegBinPmf:
    def test_geometric_cases(self):
        params = NegBinParams(1.0, 0.5)
        assert nb_log_pmf(params, 0) == pytest.approx(math.log(0.5), abs=1e-15)
        assert nb_log_pmf(params, 2) == pytest.approx(math.log(0.125), abs=1e-15)

    def test_against_high_precision_oracle(self):
        assert nb_log_pmf(NegBinParams(2.0, 0.3), 3) == pytest.approx(
            NB_2_03_3, abs=1e-13
        )

    def test_mass_sums_to_one_specific(self):
        params = NegBinParams(2.0, 0.3)
        total = sum(math.exp(nb_log_pmf(params, c)) for c in range(201))
        assert abs(total - 1.0) < 1e-10

    @pytest.mark.parametrize(
        "alpha,p", [(0.5, 0.1), (1.0, 0.5), (2.0, 0.3), (5.0, 0.7), (0.25, 0.9)]
    )
    def test_mass_sums_to_one_grid(self, alpha, p):
        c_max = int(nbinom.ppf(1 - 1e-13, alpha, 1 - p)) + 60
        total = sum(math.exp(nb_log_pmf(NegBinParams(alpha, p), c)) for c in range(c_max))
        assert abs(total - 1.0) < 1e-8

    def test_parameter_domain(self):
        with pytest.raises(ParameterError):
            NegBinParams(0.0, 0.5)
        with pytest.raises(ParameterError):
            NegBinParams(1.0, 1.0)
        with pytest.raises(ParameterError):
            NegBinParams(1.0, -0.1)
        with pytest.raises(ParameterError):
            nb_log_pmf(NegBinParams(1.0, 0.5), -1)

    def test_zero_probability_edge(self):
        params = NegBinParams(2.0, 0.0)
        assert nb_log_pmf(params, 0) == 0.0
        assert nb_log_pmf(params, 1) == -math.inf

    @given(
        alpha=st.floats(0.05, 50.0),
        p=st.floats(0.0, 0.99),
        c=st.integers(0, 500),
    )
    @settings(max_examples=200, deadline=None)
    def test_never_nan(self, alpha, p, c):
        value = nb_log_pmf(NegBinParams(alpha, p), c)
        assert not math.isnan(value)
        if p > 0:
            assert math.isfinite(value)


class TestNegMultPmf:
    @given(
        alpha=st.floats(0.05, 50.0),
        p=st.floats(0.0, 0.98),
        c=st.integers(0, 300),
    )
    @settings(max_examples=200, deadline=None)
    def test_univariate_reduction_is_bit_exact(self, alpha, p, c):
        nm = nm_log_pmf(NegMultParams(alpha, np.array([p])), np.array([c]))
        nb = nb_log_pmf(NegBinParams(alpha, p), c)
        assert nm == nb

    def test_all_zero_counts(self):
        params = NegMultParams(1.7, np.array([0.2, 0.1, 0.3]))
        expected = 1.7 * math.log(params.p0)
        assert nm_log_pmf(params, np.zeros(3, dtype=int)) == pytest.approx(
            expected, abs=1e-15
        )

    def test_against_high_precision_oracle(self):
        value = nm_log_pmf(NegMultParams(1.0, np.array([0.2, 0.3])), np.array([1, 2]))
        assert value == pytest.approx(NM_1_23_12, abs=1e-13)

    def test_mass_sums_to_one(self):
        params = NegMultParams(1.0, np.array([0.2, 0.3]))
        total = sum(
            math.exp(nm_log_pmf(params, np.array(c))) for c in count_vectors(2, 60)
        )
        assert abs(total - 1.0) < 1e-8

    def test_shape_mismatch(self):
        params = NegMultParams(1.0, np.array([0.2, 0.3]))
        with pytest.raises(ShapeError):
            nm_log_pmf(params, np.array([1, 2, 3]))

    def test_zero_probability_convention(self):
        params = NegMultParams(1.0, np.array([0.4, 0.0]))
        assert math.isfinite(nm_log_pmf(params, np.array([2, 0])))
        assert nm_log_pmf(params, np.array([0, 1])) == -math.inf

    def test_parameter_validation(self):
        with pytest.raises(ParameterError):
            NegMultParams(1.0, np.array([0.6, 0.5]))
        with pytest.raises(ParameterError):
            NegMultParams(1.0, np.array([0.5, 0.2]), p0=0.5)
        params = NegMultParams.from_weights(1.0, 2.0, np.array([1.0, 1.0]))
        assert params.p0 == pytest.approx(0.5, abs=1e-15)
        np.testing.assert_allclose(params.p, [0.25, 0.25])

    @given(
        alpha=st.floats(0.05, 20.0),
        data=st.data(),
    )
    @settings(max_examples=150, deadline=None)
    def test_never_nan(self, alpha, data):
        dim = data.draw(st.integers(1, 4))
        raw = data.draw(
            st.lists(st.floats(0.0, 1.0), min_size=dim, max_size=dim)
        )
        p = np.array(raw)
        if p.sum() >= 0.99:
            p = 0.98 * p / p.sum()
        c = np.array(data.draw(st.lists(st.integers(0, 50), min_size=dim, max_size=dim)))
        value = nm_log_pmf(NegMultParams(alpha, p), c)
        assert not math.isnan(value)


class TestNegBinSampler:
    def test_zero_probability_is_deterministic(self):
        params = NegBinParams(1.0, 0.0)
        gen = substream(1, 1)
        assert all(nb_sample(params, gen) == 0 for _ in range(100))
        assert nb_sample(params, gen, size=17).sum() == 0

    def test_moments(self):
        draws = nb_sample(NegBinParams(2.0, 0.5), substream(20, 0), size=10**6)
        mean, var = 2.0, 4.0  # alpha p/(1-p) and alpha p/(1-p)^2
        se = math.sqrt(var / draws.size)
        assert abs(draws.mean() - mean) < 3 * se
        assert abs(draws.var() - var) < 0.05 * var

    def test_histogram_matches_pmf(self):
        params = NegBinParams(2.0, 0.5)
        draws = nb_sample(params, substream(20, 1), size=10**6)
        emp = np.bincount(draws, minlength=45)[:45] / draws.size
        exact = np.array([math.exp(nb_log_pmf(params, c)) for c in range(45)])
        assert tv_distance(emp, exact) < 0.01


class TestNegMultSamplers:
    def test_mixture_zero_weights(self):
        gen = substream(2, 0)
        for _ in range(50):
            assert nm_sample_mixture(1.0, 1.0, np.zeros(3), gen).sum() == 0

    def test_mixture_mean(self):
        draws = nm_sample_mixture(2.0, 1.0, np.array([1.0, 3.0]), substream(21, 0), size=10**6)
        expected = np.array([2.0, 6.0])  # alpha * p_f / p0
        var = expected * (1.0 + expected / 2.0)
        se = np.sqrt(var / draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - expected) < 3 * se)

    def test_mixture_matches_exact_pmf(self):
        alpha, beta, w = 2.0, 1.0, np.array([1.0, 3.0])
        draws = nm_sample_mixture(alpha, beta, w, substream(21, 1), size=10**6)
        support = count_vectors(2, 8)
        emp = empirical_pmf(draws, support)
        exact = nm_exact_pmf(alpha, beta, w, support)
        assert tv_distance(emp, exact) < 0.01

    def test_compound_zero_coordinate(self):
        draws = nm_sample_compound(1.0, 1.0, np.array([1.0, 0.0]), substream(22, 0), size=2000)
        assert draws[:, 1].sum() == 0

    def test_compound_all_zero_weights(self):
        assert nm_sample_compound(1.0, 1.0, np.zeros(2), substream(22, 1)).sum() == 0

    def test_compound_matches_mixture_law(self):
        alpha, beta, w = 1.5, 2.0, np.array([1.0, 2.0, 0.5])
        mix = nm_sample_mixture(alpha, beta, w, substream(23, 0), size=10**6)
        comp = nm_sample_compound(alpha, beta, w, substream(23, 1), size=10**6)
        support = count_vectors(3, 8)
        pm = empirical_pmf(mix, support)
        pc = empirical_pmf(comp, support)
        assert tv_distance(pm, pc) < 0.01
        se = np.sqrt(mix.var(axis=0) / mix.shape[0] + comp.var(axis=0) / comp.shape[0])
        assert np.all(np.abs(mix.mean(axis=0) - comp.mean(axis=0)) < 3 * se)

    def test_compound_vs_mixture_chi_square(self):
        # pooled-bin two-sample test at a fixed seed
        alpha, beta, w = 1.5, 2.0, np.array([1.0, 2.0, 0.5])
        n = 10**6
        mix = nm_sample_mixture(alpha, beta, w, substream(424, 0), size=n)
        comp = nm_sample_compound(alpha, beta, w, substream(424, 1), size=n)
        support = count_vectors(3, 8)
        exact = nm_exact_pmf(alpha, beta, w, support)
        keep = exact * n >= 5
        cm = empirical_pmf(mix, support) * n
        cc = empirical_pmf(comp, support) * n
        table = np.array(
            [
                np.append(cm[keep], n - cm[keep].sum()),
                np.append(cc[keep], n - cc[keep].sum()),
            ]
        )
        _, p_value, _, _ = chi2_contingency(table)
        assert p_value > 0.001
