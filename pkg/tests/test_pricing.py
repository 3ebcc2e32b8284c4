import math

import numpy as np
import pytest

from adoptions.errors import ConfigError, ConvergenceError
from adoptions.model import DAY, JumpDiffusionParams, LogADE, LogLaplacian, LogNormal, OptionSpec
from adoptions.pricing import (
    closed_form_price,
    mc_price,
    merton_european_price,
    price_sensitivities,
)
from adoptions.simulation import RngSpec

from oracles import black_scholes_call, geometric_asian_call

GBM = JumpDiffusionParams(0.1, 0.2, 0.0, LogNormal(0.0, 0.0))
JUMPY = JumpDiffusionParams(0.1, 0.2, 5.0, LogNormal(0.1, 0.2))
CTR_SPEC = OptionSpec(theta=1, K=0.75, S=30 * DAY, T=60 * DAY, m=30, c=0.2, c_tilde=0.2)


class TestMonteCarlo:
    def test_deterministic_path(self):
        p = JumpDiffusionParams(0.1, 0.0, 0.0, LogNormal(0, 0))
        spec = OptionSpec(1, 1e-12, S=0.0, T=1.0, m=10)
        res = mc_price(100.0, p, spec, 50, RngSpec(1))
        # the m-point average of t_i = i/m gives mean time (m+1)/(2m)
        expected = 100 * math.exp(0.1 * (11 / 20)) * math.exp(-0.1) - 1e-12 * math.exp(-0.1)
        assert res.pi0 == pytest.approx(expected, rel=1e-12)
        assert res.std_error < 1e-12

    def test_continuous_limit_of_deterministic_path(self):
        p = JumpDiffusionParams(0.1, 0.0, 0.0, LogNormal(0, 0))
        spec = OptionSpec(1, 1e-12, S=0.25, T=1.0, m=20_000)
        res = mc_price(100.0, p, spec, 2, RngSpec(1))
        assert res.pi0 == pytest.approx(100 * math.exp(-0.1 * 0.75 / 2), rel=1e-4)

    def test_worthless_option(self):
        p = JumpDiffusionParams(0.1, 0.0, 0.0, LogNormal(0, 0))
        spec = OptionSpec(1, 2 * 100 * math.exp(0.1), S=0.0, T=1.0, m=10)
        assert mc_price(100.0, p, spec, 100, RngSpec(1)).pi0 == 0.0

    def test_result_invariants_and_record(self):
        res = mc_price(1.0, JUMPY, CTR_SPEC, 2000, RngSpec(4))
        assert res.ci95_low <= res.pi0 <= res.ci95_high
        assert res.ci95_high - res.pi0 == pytest.approx(1.96 * res.std_error)
        rec = res.to_record()
        assert rec["method"] == "monte_carlo" and rec["z"] == 2000
        assert rec["inputs"]["seed"] == 4

    def test_linear_in_theta(self):
        a = mc_price(1.0, JUMPY, CTR_SPEC, 2000, RngSpec(4)).pi0
        b = mc_price(1.0, JUMPY, CTR_SPEC.with_(theta=3), 2000, RngSpec(4)).pi0
        assert b == pytest.approx(3 * a, rel=1e-13)

    def test_standard_error_scaling(self):
        se1 = mc_price(1.0, JUMPY, CTR_SPEC, 10_000, RngSpec(8)).std_error
        se4 = mc_price(1.0, JUMPY, CTR_SPEC, 40_000, RngSpec(8)).std_error
        assert se1 / se4 == pytest.approx(2.0, rel=0.2)

    def test_backends_agree(self):
        a = mc_price(1.0, JUMPY, CTR_SPEC, 3000, RngSpec(2), backend="numba")
        b = mc_price(1.0, JUMPY, CTR_SPEC, 3000, RngSpec(2), backend="numpy")
        assert a.pi0 == pytest.approx(b.pi0, rel=1e-12)
        assert a.std_error == pytest.approx(b.std_error, rel=1e-9)

    def test_rejections(self):
        with pytest.raises(ConfigError):
            mc_price(1.0, JUMPY, CTR_SPEC, 1, RngSpec(1))
        rw = JumpDiffusionParams(0.1, 0.2, 0.0, LogNormal(0, 0), risk_neutral=False)
        with pytest.raises(ConfigError):
            mc_price(1.0, rw, CTR_SPEC, 10, RngSpec(1))


class TestClosedForm:
    def test_gbm_reference_value(self):
        spec = OptionSpec(1, 100.0, S=0.0, T=1.0, m=50)
        res = closed_form_price(100.0, GBM, spec)
        assert res.pi0 == pytest.approx(6.77, abs=5e-3)
        assert res.pi0 == pytest.approx(geometric_asian_call(100, 100, 0.1, 0.2, 1.0), rel=1e-12)
        assert res.std_error == 0 and res.ci95_low == res.pi0 == res.ci95_high

    def test_discrete_moments_match_mc(self):
        spec = OptionSpec(1, 100.0, S=0.0, T=1.0, m=50)
        exact = closed_form_price(100.0, GBM, spec, averaging="discrete").pi0
        mc = mc_price(100.0, GBM, spec, 200_000, RngSpec(21))
        assert mc.contains(exact)

    def test_small_strike_limit(self):
        spec = CTR_SPEC.with_(K=1e-12)
        res = closed_form_price(1.0, JUMPY, spec)
        t = res.terms
        expected = math.exp(-(0.1 + 5.0) * spec.T) * sum(
            (5.0 * spec.T) ** k / math.factorial(k) * om for k, om in zip(t.k, t.Omega))
        assert res.pi0 == pytest.approx(expected, rel=1e-9)

    def test_linear_in_theta(self):
        a = closed_form_price(1.0, JUMPY, CTR_SPEC).pi0
        assert closed_form_price(1.0, JUMPY, CTR_SPEC.with_(theta=2)).pi0 == pytest.approx(2 * a,
                                                                                         rel=1e-14)

    def test_series_truncation_and_remainder(self):
        res = closed_form_price(1.0, JUMPY, CTR_SPEC)
        t = res.terms
        assert t.weights[-1] < 1e-12 and t.k[-1] > t.lam_t
        assert t.remainder_bound(CTR_SPEC.ctr_ratio) < 1e-9 * res.pi0
        tail = t.weights * t.values
        assert np.all(np.diff(tail[int(math.ceil(t.lam_t)) + 2:]) <= 0)

    def test_k_max_too_small(self):
        p = JumpDiffusionParams(0.1, 0.2, 200.0, LogNormal(0.0, 0.05))
        with pytest.raises(ConvergenceError) as info:
            closed_form_price(1.0, p, OptionSpec(1, 1.0, S=0.0, T=1.0, m=10), k_max=20)
        assert info.value.best is not None

    @pytest.mark.parametrize("params,spec", [
        (JumpDiffusionParams(0.1, 0.2, 1.0, LogLaplacian(0, 0.2)), CTR_SPEC),
        (JUMPY, CTR_SPEC.with_(gamma=1.0)),
    ])
    def test_unsupported(self, params, spec):
        with pytest.raises(ConfigError):
            closed_form_price(1.0, params, spec)

    def test_zero_variance_uses_intrinsic(self):
        p = JumpDiffusionParams(0.1, 0.0, 0.0, LogNormal(0, 0))
        spec = OptionSpec(1, 50.0, S=0.0, T=1.0, m=10)
        res = closed_form_price(100.0, p, spec)
        assert res.pi0 == pytest.approx(math.exp(-0.1) * (100 * math.exp(0.05) - 50), rel=1e-13)


class TestMerton:
    @pytest.mark.parametrize("K,T", [(80, 0.5), (100, 1.0), (120, 2.0)])
    def test_black_scholes_reduction(self, K, T):
        got = merton_european_price(100.0, GBM, K, T).pi0
        assert got == pytest.approx(black_scholes_call(100, K, 0.1, 0.2, T), rel=1e-10)

    def test_matches_terminal_mc(self):
        p = JumpDiffusionParams(0.05, 0.2, 1.0, LogNormal(-0.1, 0.15))
        cf = merton_european_price(100.0, p, 100.0, 1.0).pi0
        # S = T with m = 1 is a single step with lambda*dt = 1, which the one-jump-per-step
        # scheme rejects; a one-point window at T on a 200-step grid is the same payoff
        spec = OptionSpec(1, 100.0, S=1.0 - 1 / 200, T=1.0, m=1)
        mc = mc_price(100.0, p, spec, 200_000, RngSpec(5))
        assert mc.contains(cf)

    def test_single_step_european_rejected_when_jumps_too_likely(self):
        p = JumpDiffusionParams(0.05, 0.2, 1.0, LogNormal(-0.1, 0.15))
        with pytest.raises(ConfigError):
            mc_price(100.0, p, OptionSpec(1, 100.0, S=1.0, T=1.0, m=1), 100, RngSpec(5))

    def test_deep_out_of_the_money(self):
        p = JumpDiffusionParams(0.05, 0.2, 1.0, LogNormal(-0.1, 0.15))
        fwd = 100 * math.exp((0.05 + 1.0 * p.zeta) * 1.0)
        assert merton_european_price(100.0, p, 10 * fwd * 10, 1.0).pi0 < 1e-4 * 100


class TestSensitivities:
    def test_closed_form_signs(self):
        sens = {s.name: s for s in price_sensitivities(1.0, JUMPY, CTR_SPEC.with_(c=0.3))}
        assert sens["x0"].derivative > 0
        assert sens["K"].derivative < 0
        assert all(s.ok for s in sens.values())

    def test_theta_doubles(self):
        a = closed_form_price(1.0, JUMPY, CTR_SPEC).pi0
        b = closed_form_price(1.0, JUMPY, CTR_SPEC.with_(theta=2.0)).pi0
        assert b == 2 * a

    def test_mc_signs_with_common_random_numbers(self):
        p = JumpDiffusionParams(0.1, 0.3, 4.0, LogADE(5.0, 5.0, 0.5, 0.5))
        spec = CTR_SPEC.with_(c=0.5)
        sens = price_sensitivities(1.0, p, spec, z=4000, rng=RngSpec(3))
        assert {s.name for s in sens} == {"x0", "K", "r", "T", "sigma", "theta", "c_tilde", "c"}
        assert all(s.ok for s in sens), [s.to_record() for s in sens if not s.ok]
