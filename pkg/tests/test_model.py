import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beliefq.errors import ParameterError
from beliefq.model import (ChannelChain, EnvState, ServerParams, SystemConfig,
                           config_from_dict, config_to_dict, from_gamma_rho,
                           load_config, mu_star_full, mu_star_no,
                           stationary_moments, step_environment,
                           symmetric_system)

from conftest import random_valid_config


class TestChannelChain:
    def test_gamma_rho_values(self):
        c = ChannelChain(0.25, 0.25)
        assert c.gamma == 0.5
        assert c.rho == 0.5

    def test_gamma_undefined_for_frozen_chain(self):
        with pytest.raises(ParameterError, match="frozen"):
            ChannelChain(0.0, 0.0).gamma

    def test_transition_matrix_rows(self):
        P = ChannelChain(0.3, 0.6).transition_matrix()
        assert np.allclose(P, [[0.7, 0.3], [0.6, 0.4]])
        assert np.allclose(P.sum(axis=1), 1.0)

    def test_probability_bounds_enforced(self):
        with pytest.raises(ParameterError, match=r"\[0, 1\]"):
            ChannelChain(1.2, 0.1)


class TestGammaRhoConversion:
    def test_direct_substitution(self):
        c = from_gamma_rho(0.5, 0.5)
        assert c.p == pytest.approx(0.25, abs=0)
        assert c.q == pytest.approx(0.25, abs=0)

    def test_rho_zero_is_iid(self):
        c = from_gamma_rho(0.5, 0.0)
        assert (c.p, c.q) == (0.5, 0.5)

    def test_rho_one_is_frozen(self):
        c = from_gamma_rho(0.5, 1.0)
        assert (c.p, c.q) == (0.0, 0.0)

    def test_rho_below_admissible_range_names_bound(self):
        with pytest.raises(ParameterError, match="1 - min"):
            from_gamma_rho(0.25, -3.0)

    def test_rho_above_one(self):
        with pytest.raises(ParameterError, match="<= 1"):
            from_gamma_rho(0.5, 1.01)

    def test_gamma_out_of_range(self):
        with pytest.raises(ParameterError, match="gamma"):
            from_gamma_rho(1.5, 0.2)

    def test_negative_rho_admissible(self):
        c = from_gamma_rho(0.5, -0.6)
        assert 0.0 <= c.p <= 1.0 and 0.0 <= c.q <= 1.0
        assert c.rho == pytest.approx(-0.6)

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    @settings(max_examples=200, derandomize=True)
    def test_round_trip(self, p, q):
        if p + q == 0.0:
            return
        c = ChannelChain(p, q)
        back = from_gamma_rho(c.gamma, c.rho)
        assert back.p == pytest.approx(p, abs=1e-12)
        assert back.q == pytest.approx(q, abs=1e-12)


class TestClosedForms:
    def test_benchmark_values(self, benchmark):
        assert mu_star_no(benchmark) == pytest.approx(0.5, abs=1e-12)
        assert mu_star_full(benchmark) == pytest.approx(0.65, abs=1e-12)

    def test_no_info_degenerate_channel(self):
        cfg = SystemConfig(
            0.4,
            ServerParams(from_gamma_rho(0.3, 0.2), 0.3, 0.6),
            ServerParams(from_gamma_rho(0.5, 0.2), 0.3, 0.7))
        best = ServerParams(from_gamma_rho(0.5, 0.2), 0.7, 0.7)
        cfg_best = SystemConfig(0.4, ServerParams(from_gamma_rho(0.3, 0.2), 0.3, 0.7),
                                best, check_ordering=False)
        assert mu_star_no(cfg_best) == pytest.approx(0.7)
        assert mu_star_no(cfg) <= mu_star_full(cfg)

    def test_no_info_asymmetric_evaluation(self):
        # stationary means: 0.9*0.8 + 0.1*0.2 = 0.74 and 0.1*0.9 + 0.9*0.1 = 0.18
        cfg = SystemConfig(
            0.5,
            ServerParams(from_gamma_rho(0.9, 0.3), 0.2, 0.8),
            ServerParams(from_gamma_rho(0.1, 0.3), 0.1, 0.9))
        assert mu_star_no(cfg) == pytest.approx(0.74, abs=1e-12)

    def test_full_info_identical_servers_binomial_form(self):
        for gamma in (0.2, 0.5, 0.8):
            cfg = symmetric_system(0.4, gamma=gamma, mu0=0.1, mu1=0.9)
            gbar = 1.0 - gamma
            expected = gbar ** 2 * 0.1 + (1.0 - gbar ** 2) * 0.9
            assert mu_star_full(cfg) == pytest.approx(expected, abs=1e-12)

    def test_full_info_always_good_states(self):
        cfg = SystemConfig(
            0.5,
            ServerParams(from_gamma_rho(1.0, 0.3), 0.2, 0.8),
            ServerParams(from_gamma_rho(1.0, 0.3), 0.1, 0.9))
        assert mu_star_full(cfg) == pytest.approx(0.9, abs=1e-12)

    def test_frozen_chain_rejected(self):
        cfg = symmetric_system(1.0)
        with pytest.raises(ParameterError):
            mu_star_no(cfg)

    def test_no_below_full_on_random_configs(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            cfg = random_valid_config(rng)
            assert mu_star_no(cfg) <= mu_star_full(cfg) + 1e-12


class TestStationaryMoments:
    def test_benchmark(self, benchmark_server):
        mean, var = stationary_moments(benchmark_server)
        assert mean == pytest.approx(0.5, abs=1e-12)
        assert var == pytest.approx(0.25, abs=1e-12)

    def test_plain_bernoulli(self):
        s = ServerParams(from_gamma_rho(0.3, 0.4), 0.6, 0.6)
        mean, var = stationary_moments(s)
        assert mean == pytest.approx(0.6)
        assert var == pytest.approx(0.24)

    def test_pinned_good_state(self):
        s = ServerParams(from_gamma_rho(1.0, 0.2), 0.1, 0.7)
        mean, var = stationary_moments(s)
        assert mean == pytest.approx(0.7)
        assert var == pytest.approx(0.21)


class TestStepEnvironment:
    def test_frozen_chain_never_moves(self, benchmark):
        cfg = symmetric_system(1.0)
        for draws in ((0.0, 0.0), (0.99, 0.99)):
            s = step_environment(EnvState(1, 0), cfg, draws)
            assert (s.x1, s.x2) == (1, 0)

    def test_period_two_chain_flips(self):
        cfg = SystemConfig(0.5,
                           ServerParams(ChannelChain(1.0, 1.0), 0.2, 0.8),
                           ServerParams(ChannelChain(1.0, 1.0), 0.2, 0.8))
        s = step_environment(EnvState(0, 1), cfg, (0.5, 0.5))
        assert (s.x1, s.x2) == (1, 0)

    def test_empirical_transition_frequencies(self, benchmark):
        rng = np.random.default_rng(11)
        n = 200_000
        counts = np.zeros((2, 2))
        state = EnvState(0, 0)
        for _ in range(n):
            nxt = step_environment(state, benchmark, rng.random(2))
            counts[state.x1, nxt.x1] += 1
            state = nxt
        P = benchmark.server1.chain.transition_matrix()
        for i in range(2):
            row_n = counts[i].sum()
            for j in range(2):
                phat = counts[i, j] / row_n
                se = np.sqrt(P[i, j] * (1 - P[i, j]) / row_n)
                assert abs(phat - P[i, j]) < 3 * se + 1e-9

    def test_state_bits_validated(self):
        with pytest.raises(ParameterError, match="bits"):
            EnvState(2, 0)


class TestSystemConfig:
    def test_ordering_violations_named(self):
        good = ServerParams(from_gamma_rho(0.5, 0.5), 0.2, 0.8)
        with pytest.raises(ParameterError, match=r"mu0\(2\) <= mu0\(1\)"):
            SystemConfig(0.5, ServerParams(from_gamma_rho(0.5, 0.5), 0.1, 0.8), good)
        with pytest.raises(ParameterError, match=r"mu1\(1\) <= mu1\(2\)"):
            SystemConfig(0.5, ServerParams(from_gamma_rho(0.5, 0.5), 0.2, 0.9), good)
        with pytest.raises(ParameterError, match=r"mu0\(1\) < mu1\(1\)"):
            SystemConfig(0.5, ServerParams(from_gamma_rho(0.5, 0.5), 0.8, 0.8), good)

    def test_ordering_override(self):
        s1 = ServerParams(from_gamma_rho(0.5, 0.5), 0.1, 0.9)
        s2 = ServerParams(from_gamma_rho(0.5, 0.5), 0.2, 0.8)
        cfg = SystemConfig(0.5, s1, s2, check_ordering=False)
        assert cfg.server1.mu0 == 0.1

    def test_within_server_monotonicity(self):
        with pytest.raises(ParameterError, match="mu0 <= mu1"):
            ServerParams(from_gamma_rho(0.5, 0.5), 0.9, 0.2)


class TestConfigJson:
    def test_round_trip(self, benchmark):
        doc = config_to_dict(benchmark)
        again = config_from_dict(doc)
        assert again == benchmark

    def test_gamma_rho_form(self):
        doc = {"lambda": 0.4,
               "server1": {"gamma": 0.5, "rho": 0.5, "mu0": 0.2, "mu1": 0.8},
               "server2": {"gamma": 0.5, "rho": 0.3, "mu0": 0.2, "mu1": 0.8}}
        cfg = config_from_dict(doc)
        assert cfg.server1.chain.p == pytest.approx(0.25)
        assert cfg.server2.chain.rho == pytest.approx(0.3)

    def test_exactly_one_parametrization(self):
        server = {"gamma": 0.5, "rho": 0.5, "p": 0.25, "q": 0.25,
                  "mu0": 0.2, "mu1": 0.8}
        doc = {"lambda": 0.5, "server1": server,
               "server2": {"p": 0.25, "q": 0.25, "mu0": 0.2, "mu1": 0.8}}
        with pytest.raises(ParameterError, match="exactly one"):
            config_from_dict(doc)
        with pytest.raises(ParameterError, match="exactly one"):
            config_from_dict({"lambda": 0.5,
                              "server1": {"mu0": 0.2, "mu1": 0.8},
                              "server2": {"p": 0.25, "q": 0.25,
                                          "mu0": 0.2, "mu1": 0.8}})

    def test_missing_field(self):
        with pytest.raises(ParameterError, match="missing"):
            config_from_dict({"lambda": 0.5})

    def test_load_from_file(self, tmp_path, benchmark):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config_to_dict(benchmark)))
        assert load_config(str(path)) == benchmark
