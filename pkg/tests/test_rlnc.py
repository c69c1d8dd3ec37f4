import io
import math

import numpy as np
import pytest

from aloha_diversity.analytic import ChannelParams, rate_bound
from aloha_diversity.gf import GF256, field_for_name
from aloha_diversity.rlnc import (
    CodedPacket,
    CorruptedStreamError,
    SourcePacket,
    allocate_rates,
    encode_relay,
    gateway_decode,
    genie_budgets,
    read_coded_packets,
    run_downlink_experiment,
    verify_rank_conditions,
    write_coded_packets,
)
from aloha_diversity.uplink import CollectionLedger, PacketId

# chi-square critical values at the 0.99 quantile, for the coefficient
# uniformity checks below
CHI2_99_DF254 = 309.354
CHI2_99_DF15 = 30.578


def _pid(n):
    return PacketId(n, 1)


def _ledger(sets):
    fs = tuple(frozenset(s) for s in sets)
    union = set().union(*fs)
    return CollectionLedger(n_slots=10, per_relay_sets=fs, union_count=len(union))


class TestRates:
    def test_symmetric_and_covers_bounds(self):
        p = ChannelParams(1.0, 0.5, 3)
        rv = allocate_rates(p, slack=0.05)
        assert len(set(rv.per_relay)) == 1
        r = rv.per_relay[0]
        for s in range(1, 4):
            assert s * r >= rate_bound(p, s).bound * 1.05 - 1e-12

    def test_zero_slack_is_tight_somewhere(self):
        p = ChannelParams(1.0, 0.5, 3)
        r = allocate_rates(p, slack=0.0).per_relay[0]
        gaps = [r * s - rate_bound(p, s).bound for s in range(1, 4)]
        assert min(gaps) == pytest.approx(0.0, abs=1e-12)

    def test_negative_slack_rejected(self):
        with pytest.raises(ValueError):
            allocate_rates(ChannelParams(1.0, 0.2, 2), slack=-0.1)

    def test_budget_rounding(self):
        rv = allocate_rates(ChannelParams(1.0, 0.5, 2), slack=0.0)
        n = 1000
        for r, b in zip(rv.per_relay, rv.budgets(n)):
            assert b == math.ceil(n * r)

    def test_genie_budgets_cover_every_subset(self):
        led = _ledger([{_pid(1), _pid(2), _pid(3)}, {_pid(3), _pid(4)}])
        budgets = genie_budgets(led)
        # receiver 0 alone must cover its 2 exclusive packets, receiver 1 its 1;
        # jointly the pair must cover all 4, i.e. 2 each
        assert budgets == (2, 2)


class TestEncode:
    def _packets(self, n, m=4, seed=0):
        rng = np.random.default_rng(seed)
        return [
            SourcePacket(_pid(i + 1), tuple(int(v) for v in rng.integers(0, 256, m)))
            for i in range(n)
        ]

    def test_mixture_is_coefficient_combination(self):
        pkts = self._packets(5)
        coded = encode_relay(pkts, 8, GF256, rng=1, relay=2)
        assert len(coded) == 8
        for cp in coded:
            assert cp.relay == 2
            assert set(cp.coefficients) == {pk.id for pk in pkts}
            assert all(v != 0 for v in cp.coefficients.values())
            expect = [0, 0, 0, 0]
            for pk in pkts:
                c = cp.coefficients[pk.id]
                for t in range(4):
                    expect[t] ^= GF256.mul(c, pk.payload[t])
            assert list(cp.payload) == expect

    def test_empty_receiver_sends_padding(self):
        coded = encode_relay([], 3, GF256, rng=1, payload_symbols=6)
        assert [cp.coefficients for cp in coded] == [{}, {}, {}]
        assert all(cp.payload == (0,) * 6 for cp in coded)

    def test_mismatched_payload_lengths_rejected(self):
        pkts = [SourcePacket(_pid(1), (1, 2)), SourcePacket(_pid(2), (1, 2, 3))]
        with pytest.raises(ValueError):
            encode_relay(pkts, 1, GF256, rng=1)

    def test_negative_count_rejected(self):
        with pytest.raises(ValueError):
            encode_relay(self._packets(2), -1, GF256, rng=1)

    def test_coefficients_uniform_on_nonzero_elements(self):
        pkts = self._packets(40)
        coded = encode_relay(pkts, 700, GF256, rng=2024)
        values = [v for cp in coded for v in cp.coefficients.values()]
        counts = np.bincount(values, minlength=256)
        assert counts[0] == 0
        n, cells = len(values), 255
        chi2 = float(((counts[1:] - n / cells) ** 2 / (n / cells)).sum())
        assert chi2 < CHI2_99_DF254

    def test_wide_field_coefficients_uniform(self):
        fld = field_for_name("gf65536")
        pkts = self._packets(50)
        coded = encode_relay(pkts, 400, fld, rng=7)
        values = np.array([v for cp in coded for v in cp.coefficients.values()])
        assert (values > 0).all() and (values < 1 << 16).all()
        # bucket into 16 cells to keep expected counts healthy
        counts = np.bincount((values - 1) >> 12, minlength=16)
        n, cells = values.size, 16
        chi2 = float(((counts - n / cells) ** 2 / (n / cells)).sum())
        assert chi2 < CHI2_99_DF15


class TestGatewayDecode:
    def _scenario(self, seed=3):
        """Two receivers sharing one packet; enough mixtures to decode."""
        rng = np.random.default_rng(seed)
        payloads = {
            _pid(i): tuple(int(v) for v in rng.integers(0, 256, 4)) for i in (1, 2, 3)
        }
        held0 = [SourcePacket(_pid(i), payloads[_pid(i)]) for i in (1, 2)]
        held1 = [SourcePacket(_pid(i), payloads[_pid(i)]) for i in (2, 3)]
        coded = encode_relay(held0, 3, GF256, rng=rng, relay=0)
        coded += encode_relay(held1, 3, GF256, rng=rng, relay=1)
        return payloads, coded

    def test_full_recovery(self):
        payloads, coded = self._scenario()
        report = gateway_decode(coded, GF256, k_relays=2)
        assert report.n_variables == 3  # the shared packet merged into one column
        assert report.rank == 3
        assert report.success
        assert report.recovered == payloads
        assert verify_rank_conditions(report) == []

    def test_insufficient_equations_fail_cleanly(self):
        payloads, coded = self._scenario()
        # one equation per receiver: two mixtures cannot pin three packets
        starved = [
            next(cp for cp in coded if cp.relay == 0),
            next(cp for cp in coded if cp.relay == 1),
        ]
        report = gateway_decode(starved, GF256, k_relays=2)
        assert not report.success
        assert verify_rank_conditions(report) == [frozenset({0, 1})]
        for pid, payload in report.recovered.items():
            assert payload == payloads[pid]

    def test_subset_shortfall_is_flagged(self):
        coded = [
            CodedPacket(relay=0, coefficients={_pid(1): 1, _pid(2): 1}, payload=(0,)),
        ]
        report = gateway_decode(coded, GF256, k_relays=2)
        assert not report.success
        assert frozenset({0}) in verify_rank_conditions(report)

    def test_ledger_reveals_silent_receiver(self):
        # receiver 1 collected a packet but sent nothing; only the ledger knows
        led = _ledger([{_pid(1)}, {_pid(2)}])
        coded = encode_relay([SourcePacket(_pid(1), (5,))], 2, GF256, rng=1, relay=0)
        report = gateway_decode(coded, GF256, ledger=led)
        assert not report.success
        assert report.subset_diagnostics[frozenset({1})] == (0, 1)
        assert frozenset({1}) in verify_rank_conditions(report)

    def test_contradictory_equations_raise(self):
        coded = [
            CodedPacket(relay=0, coefficients={_pid(1): 1}, payload=(3,)),
            CodedPacket(relay=0, coefficients={_pid(1): 1}, payload=(4,)),
        ]
        with pytest.raises(CorruptedStreamError):
            gateway_decode(coded, GF256, k_relays=1)

    def test_empty_stream(self):
        report = gateway_decode([], GF256, k_relays=2)
        assert report.n_variables == 0
        assert report.rank == 0
        assert report.success  # nothing was collected, nothing to deliver


class TestWireFormat:
    def _roundtrip(self, field_name):
        fld = field_for_name(field_name)
        pkts = [
            SourcePacket(PacketId(9, 2), (1, 2, 3)),
            SourcePacket(PacketId(40000, 1), (fld.order - 1, 0, 7)),
        ]
        coded = encode_relay(pkts, 4, fld, rng=5, relay=1)
        buf = io.BytesIO()
        write_coded_packets(buf, coded, fld.l_bits)
        buf.seek(0)
        back = read_coded_packets(buf, fld.l_bits, payload_symbols=3)
        assert back == coded

    def test_roundtrip_gf256(self):
        self._roundtrip("gf256")

    def test_roundtrip_gf65536(self):
        self._roundtrip("gf65536")

    def test_truncated_stream_detected(self):
        coded = encode_relay([SourcePacket(_pid(1), (1, 2))], 2, GF256, rng=1)
        buf = io.BytesIO()
        write_coded_packets(buf, coded, 8)
        data = buf.getvalue()
        with pytest.raises(CorruptedStreamError):
            read_coded_packets(io.BytesIO(data[:-3]), 8, payload_symbols=2)

    def test_empty_stream_reads_back_empty(self):
        assert read_coded_packets(io.BytesIO(b""), 8, payload_symbols=2) == []


class TestEndToEnd:
    P = ChannelParams(1.0, 0.5, 3)

    def test_generous_slack_decodes_exactly(self):
        out = run_downlink_experiment(self.P, 400, GF256, rng=101, slack=0.5)
        assert out.report.success
        assert out.payloads_exact
        assert out.report.rank == out.report.n_variables == out.ledger.union_count

    def test_deterministic_given_seed(self):
        a = run_downlink_experiment(self.P, 300, GF256, rng=17)
        b = run_downlink_experiment(self.P, 300, GF256, rng=17)
        assert a.report == b.report
        assert a.budgets == b.budgets

    def test_genie_budgets_match_ledger(self):
        out = run_downlink_experiment(self.P, 300, GF256, rng=23, genie=True)
        assert out.budgets == genie_budgets(out.ledger)

    def test_successful_decode_satisfies_counting_bounds(self):
        for seed in range(6):
            out = run_downlink_experiment(self.P, 300, GF256, rng=seed, slack=0.3)
            if out.report.success:
                assert verify_rank_conditions(out.report) == []
