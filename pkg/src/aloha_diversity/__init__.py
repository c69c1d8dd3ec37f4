"""Slotted Aloha with multi-receiver diversity: closed-form analytics, Monte
Carlo simulation, and a random-linear-coded downlink to a central gateway."""

from .analytic import (
    ChannelParams,
    PeakPoint,
    SubsetRateBound,
    incremental_gain,
    load_for_target_plr,
    packet_loss,
    peak_approx_two,
    peak_throughput,
    rate_bound,
    sic_gain_two,
    throughput_af_two,
    throughput_sa,
    throughput_uplink,
    throughput_uplink_two,
)
from .gf import GF256, GaloisField, field_for_name, gauss_jordan
from .rlnc import (
    CodedPacket,
    DecodeReport,
    RateVector,
    SourcePacket,
    allocate_rates,
    encode_relay,
    gateway_decode,
    run_downlink_experiment,
    verify_rank_conditions,
)
from .uplink import (
    CollectionLedger,
    Estimate,
    PacketId,
    SlotOutcome,
    brute_force_collection_pmf,
    estimate_plr,
    exclusive_count,
    oracle_throughput,
    partition_counts,
    run_uplink,
    sic_postprocess_two,
    simulate_slot,
    throughput_estimate,
)

__version__ = "0.1.0"
