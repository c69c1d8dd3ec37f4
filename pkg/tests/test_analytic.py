import math

import pytest

from aloha_diversity.analytic import (
    ChannelParams,
    DegenerateChannelError,
    UnreachableTargetError,
    incremental_gain,
    load_for_target_plr,
    packet_loss,
    peak_approx_af_two,
    peak_approx_two,
    peak_throughput,
    peak_throughput_af_two,
    rate_bound,
    sic_gain_two,
    throughput_af_two,
    throughput_sa,
    throughput_uplink,
    throughput_uplink_two,
)

E_INV = 1.0 / math.e

# small (rho, eps) grid reused by the identity checks
GRID = [(r, e) for r in (0.25, 0.5, 1.0, 1.5, 2.5) for e in (0.0, 0.1, 0.3, 0.5, 0.8)]


class TestChannelParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            ChannelParams(rho=-0.1, eps=0.2)
        with pytest.raises(ValueError):
            ChannelParams(rho=1.0, eps=1.2)
        with pytest.raises(ValueError):
            ChannelParams(rho=1.0, eps=0.2, k_relays=0)


class TestSingleReceiver:
    def test_classic_peak(self):
        assert throughput_sa(ChannelParams(1.0, 0.0)) == pytest.approx(E_INV, abs=1e-12)

    def test_no_traffic(self):
        assert throughput_sa(ChannelParams(0.0, 0.5)) == 0.0

    def test_effective_load_substitution(self):
        # rho(1-eps) = 1 lands back on the ideal peak
        assert throughput_sa(ChannelParams(1.25, 0.2)) == pytest.approx(E_INV, abs=1e-12)


class TestTwoReceivers:
    def test_ideal_channel_collapses_to_single_receiver(self):
        p = ChannelParams(1.0, 0.0, 2)
        assert throughput_uplink_two(p) == pytest.approx(E_INV, abs=1e-12)

    def test_no_traffic(self):
        assert throughput_uplink_two(ChannelParams(0.0, 0.3, 2)) == 0.0

    def test_against_enumeration_oracle(self):
        # frozen from oracle_throughput(1.25, 0.2, 2)
        assert throughput_uplink_two(ChannelParams(1.25, 0.2, 2)) == pytest.approx(
            0.494803512813123, abs=1e-12
        )


class TestGeneralK:
    def test_k1_reduces_to_single_receiver(self):
        for rho, eps in GRID:
            p = ChannelParams(rho, eps, 1)
            assert throughput_uplink(p) == pytest.approx(throughput_sa(p), abs=1e-12)

    def test_k2_matches_two_receiver_form(self):
        for rho, eps in GRID:
            p = ChannelParams(rho, eps, 2)
            assert throughput_uplink(p) == pytest.approx(throughput_uplink_two(p), abs=1e-12)

    def test_k3_frozen_oracle_value(self):
        # frozen from oracle_throughput(1.0, 0.5, 3)
        assert throughput_uplink(ChannelParams(1.0, 0.5, 3)) == pytest.approx(
            0.607628827473002, abs=1e-12
        )

    def test_monotone_in_k(self):
        for rho, eps in GRID:
            if rho == 0:
                continue
            vals = [throughput_uplink(ChannelParams(rho, eps, k)) for k in range(1, 7)]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))


class TestIncrementalGain:
    def test_definition_at_k2(self):
        p = ChannelParams(1.1, 0.4, 2)
        assert incremental_gain(p) == pytest.approx(
            throughput_uplink_two(p) - throughput_sa(p), abs=1e-12
        )

    def test_k5_difference_of_closed_forms(self):
        assert incremental_gain(ChannelParams(1.0, 0.5, 5)) == pytest.approx(
            0.057505047335705, abs=1e-12
        )

    def test_no_gain_without_erasures(self):
        for k in (2, 3, 6):
            assert incremental_gain(ChannelParams(1.3, 0.0, k)) == pytest.approx(0.0, abs=1e-12)

    def test_needs_two_receivers(self):
        with pytest.raises(ValueError):
            incremental_gain(ChannelParams(1.0, 0.2, 1))


class TestPacketLoss:
    def test_erasure_floor(self):
        for k in range(1, 8):
            z = packet_loss(ChannelParams(1e-9, 0.2, k))
            assert z == pytest.approx(0.2**k, abs=1e-6)

    def test_classic_loss_at_peak(self):
        assert packet_loss(ChannelParams(1.0, 0.0, 1)) == pytest.approx(1 - E_INV, abs=1e-12)

    def test_range_and_monotonicity(self):
        for eps in (0.1, 0.4, 0.7):
            for k in (1, 2, 4):
                prev = -1.0
                for rho in (0.01, 0.1, 0.5, 1.0, 2.0, 5.0):
                    z = packet_loss(ChannelParams(rho, eps, k))
                    assert 0.0 <= z <= 1.0
                    assert z >= prev - 1e-12
                    prev = z

    def test_nonincreasing_in_k(self):
        for rho, eps in GRID:
            zs = [packet_loss(ChannelParams(rho, eps, k)) for k in range(1, 6)]
            assert all(b <= a + 1e-12 for a, b in zip(zs, zs[1:]))


class TestPeakThroughput:
    def test_classic_optimum(self):
        pk = peak_throughput(0.0, 1)
        assert pk.rho_star == pytest.approx(1.0, abs=1e-6)
        assert pk.t_star == pytest.approx(E_INV, abs=1e-10)

    def test_two_receivers_ideal_channel(self):
        assert peak_throughput(0.0, 2).rho_star == pytest.approx(1.0, abs=1e-6)

    def test_peak_is_attained_at_argmax(self):
        for eps in (0.0, 0.2, 0.6):
            for k in (1, 2, 4):
                pk = peak_throughput(eps, k)
                assert pk.rho_star > 0
                p = ChannelParams(pk.rho_star, eps, k)
                assert pk.t_star == pytest.approx(throughput_uplink(p), abs=1e-12)

    def test_degenerate_channel_rejected(self):
        with pytest.raises(DegenerateChannelError):
            peak_throughput(1.0, 2)


class TestPeakApproxTwo:
    def test_ideal_channel(self):
        assert peak_approx_two(0.0) == pytest.approx(E_INV, abs=1e-12)

    @pytest.mark.parametrize("eps", [0.1, 0.5])
    def test_tracks_exact_optimum(self, eps):
        exact = peak_throughput(eps, 2).t_star
        assert abs(peak_approx_two(eps) - exact) / exact < 0.006


class TestLoadForTargetPlr:
    def test_floor_behaviour(self):
        rho = load_for_target_plr(0.2, 1, 0.2 + 1e-4)
        assert 0 < rho < 1e-3

    def test_roundtrip(self):
        for eps, k, target in [(0.2, 2, 0.05), (0.1, 3, 0.02), (0.5, 2, 0.4)]:
            rho = load_for_target_plr(eps, k, target)
            assert packet_loss(ChannelParams(rho, eps, k)) == pytest.approx(target, abs=1e-8)

    def test_unreachable_target(self):
        with pytest.raises(UnreachableTargetError):
            load_for_target_plr(0.5, 2, 0.2)  # below the 0.25 erasure floor


class TestCollisionCancellation:
    def test_zero_without_erasures(self):
        assert sic_gain_two(ChannelParams(1.3, 0.0, 2)) == 0.0

    def test_zero_when_everything_fades(self):
        assert sic_gain_two(ChannelParams(1.3, 1.0, 2)) == 0.0

    def test_af_is_sum(self):
        p = ChannelParams(1.25, 0.2, 2)
        assert throughput_af_two(p) == pytest.approx(
            throughput_uplink_two(p) + sic_gain_two(p), abs=1e-15
        )

    def test_af_collapses_without_erasures(self):
        p = ChannelParams(0.9, 0.0, 2)
        assert throughput_af_two(p) == pytest.approx(throughput_sa(p), abs=1e-12)

    def test_af_peak_approximation(self):
        # evaluated at load 1/(1-eps), which is not the true argmax, so the
        # approximation is looser than its plain two-receiver counterpart
        for eps in (0.1, 0.2, 0.4):
            exact = peak_throughput_af_two(eps).t_star
            assert abs(peak_approx_af_two(eps) - exact) / exact < 0.03


class TestRateBound:
    def test_full_subset_is_uplink_throughput(self):
        for rho, eps in GRID:
            for k in (1, 2, 4):
                p = ChannelParams(rho, eps, k)
                assert rate_bound(p, k).bound == pytest.approx(throughput_uplink(p), abs=1e-12)

    def test_singleton_at_k2_is_exclusive_rate(self):
        p = ChannelParams(1.25, 0.2, 2)
        expect = throughput_uplink_two(p) - throughput_sa(p)
        assert rate_bound(p, 1).bound == pytest.approx(expect, abs=1e-12)

    def test_increasing_in_subset_size(self):
        p = ChannelParams(1.0, 0.5, 5)
        bounds = [rate_bound(p, s).bound for s in range(1, 6)]
        assert all(b >= a - 1e-12 for a, b in zip(bounds, bounds[1:]))

    def test_subset_size_validated(self):
        with pytest.raises(ValueError):
            rate_bound(ChannelParams(1.0, 0.2, 3), 4)
