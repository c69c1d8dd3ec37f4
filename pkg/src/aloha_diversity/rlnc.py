"""Random-linear-coded downlink: rate allocation, per-receiver encoding, and
gateway decoding on the duplicate-merged reduced system.

Each receiver independently mixes the packets it collected with coefficients
drawn uniformly from the nonzero field elements; packets a receiver never saw
simply contribute no coefficient. The gateway merges columns that refer to
the same packet across receivers and solves one dense system, reporting per
subset whether enough equations arrived to cover the packets only that
subset of receivers can deliver.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .analytic import ChannelParams, rate_bound
from .gf import GaloisField, gauss_jordan
from .uplink import CollectionLedger, PacketId, partition_counts, run_uplink

__all__ = [
    "RateVector",
    "SourcePacket",
    "CodedPacket",
    "DecodeReport",
    "CorruptedStreamError",
    "allocate_rates",
    "genie_budgets",
    "encode_relay",
    "gateway_decode",
    "verify_rank_conditions",
    "write_coded_packets",
    "read_coded_packets",
    "run_downlink_experiment",
    "DEFAULT_PAYLOAD_SYMBOLS",
]

DEFAULT_PAYLOAD_SYMBOLS = 16


class CorruptedStreamError(RuntimeError):
    """The merged system is self-contradictory: an encoder or merge bug."""


@dataclass(frozen=True)
class RateVector:
    """Downlink slots per uplink slot granted to each receiver, plus the
    multiplicative margin that was applied on top of the asymptotic bounds."""

    per_relay: tuple[float, ...]
    slack: float

    def budgets(self, n_slots: int) -> tuple[int, ...]:
        """Coded packets each receiver emits for an n-slot uplink horizon."""
        return tuple(math.ceil(n_slots * r) for r in self.per_relay)


@dataclass(frozen=True)
class SourcePacket:
    id: PacketId
    payload: tuple[int, ...]


@dataclass(frozen=True)
class CodedPacket:
    """One downlink transmission: nonzero mixing coefficients keyed by packet
    identity, and the coefficient-weighted payload sum."""

    relay: int
    coefficients: dict[PacketId, int]
    payload: tuple[int, ...]


@dataclass(frozen=True)
class DecodeReport:
    n_variables: int
    rank: int
    recovered: dict[PacketId, tuple[int, ...]]
    success: bool
    # per receiver subset: (equations available, packets only that subset can supply)
    subset_diagnostics: dict[frozenset[int], tuple[int, int]]


def allocate_rates(p: ChannelParams, slack: float = 0.05) -> RateVector:
    """Symmetric rate allocation covering every subset bound with margin.

    The per-receiver rate is (1 + slack) times the tightest bound-per-member
    over subset sizes; the model is receiver-symmetric, so the symmetric
    corner of the feasible region is the natural operating point.
    """
    if slack < 0:
        raise ValueError("slack must be >= 0")
    r = max(rate_bound(p, s).bound / s for s in range(1, p.k_relays + 1))
    return RateVector(per_relay=(r * (1.0 + slack),) * p.k_relays, slack=slack)


def genie_budgets(ledger: CollectionLedger) -> tuple[int, ...]:
    """Minimal symmetric per-receiver budgets for one realized ledger.

    Sized from the realized exclusive counts rather than the asymptotic
    bounds, so every counting condition holds with zero margin to spare.
    """
    parts = partition_counts(ledger)
    k = ledger.k_relays
    best = 0
    for m in range(1, 1 << k):
        s = frozenset(j for j in range(k) if m >> j & 1)
        req = sum(c for sub, c in parts.items() if sub <= s)
        best = max(best, math.ceil(req / len(s)))
    return (best,) * k


def encode_relay(
    packets: Sequence[SourcePacket],
    n_coded: int,
    fld: GaloisField,
    rng,
    relay: int = 0,
    payload_symbols: int | None = None,
) -> list[CodedPacket]:
    """Emit ``n_coded`` random mixtures of this receiver's collected packets.

    Coefficients are i.i.d. uniform on the nonzero field elements; a receiver
    holding nothing sends all-zero payloads with empty coefficient maps.
    """
    if n_coded < 0:
        raise ValueError("n_coded must be >= 0")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    if packets:
        m = len(packets[0].payload)
        if any(len(pk.payload) != m for pk in packets):
            raise ValueError("payload lengths differ within one receiver")
    else:
        m = DEFAULT_PAYLOAD_SYMBOLS if payload_symbols is None else payload_symbols
    if not packets:
        return [CodedPacket(relay=relay, coefficients={}, payload=(0,) * m) for _ in range(n_coded)]
    ids = [pk.id for pk in packets]
    w = np.array([pk.payload for pk in packets], dtype=fld.dtype)  # (n_pkts, m)
    coeffs = rng.integers(1, fld.order, size=(n_coded, len(packets)), dtype=np.int64).astype(fld.dtype)
    mixed = fld.matmul(coeffs, w)
    return [
        CodedPacket(
            relay=relay,
            coefficients=dict(zip(ids, coeffs[i].tolist())),
            payload=tuple(mixed[i].tolist()),
        )
        for i in range(n_coded)
    ]


def _receipt_sets(
    coded: Sequence[CodedPacket], k: int, ledger: CollectionLedger | None
) -> list[set[PacketId]]:
    if ledger is not None:
        return [set(s) for s in ledger.per_relay_sets]
    sets: list[set[PacketId]] = [set() for _ in range(k)]
    for cp in coded:
        sets[cp.relay].update(cp.coefficients)
    return sets


def gateway_decode(
    coded: Sequence[CodedPacket],
    fld: GaloisField,
    ledger: CollectionLedger | None = None,
    k_relays: int | None = None,
) -> DecodeReport:
    """Merge all receivers' mixtures into one reduced system and solve it.

    Columns are keyed by packet identity, so duplicates collected at several
    receivers collapse into a single unknown. When the originating ledger is
    supplied, the per-subset diagnostics count packets a silent receiver is
    sitting on; otherwise receipt sets are inferred from coefficient supports.
    """
    if k_relays is None:
        k_relays = (
            ledger.k_relays if ledger is not None else (max((c.relay for c in coded), default=0) + 1)
        )
    cols: set[PacketId] = set()
    for cp in coded:
        cols.update(cp.coefficients)
    order = sorted(cols)
    col_of = {pid: i for i, pid in enumerate(order)}
    n_eq = len(coded)
    m = len(coded[0].payload) if coded else 0
    if any(len(cp.payload) != m for cp in coded):
        raise ValueError("payload lengths differ across coded packets")
    a = np.zeros((n_eq, len(order)), dtype=fld.dtype)
    rhs = np.zeros((n_eq, m), dtype=fld.dtype)
    for i, cp in enumerate(coded):
        for pid, v in cp.coefficients.items():
            a[i, col_of[pid]] = v
        rhs[i] = cp.payload
    if len(order):
        rank_, res = gauss_jordan(fld, a, rhs)
        if res.inconsistent:
            raise CorruptedStreamError("merged system has contradictory equations")
        recovered = {
            order[c]: tuple(int(v) for v in res.solved_values[i])
            for i, c in enumerate(res.solved_cols)
        }
    else:
        rank_, recovered = 0, {}

    receipt = _receipt_sets(coded, k_relays, ledger)
    union: set[PacketId] = set().union(*receipt) if receipt else set()
    eq_per_relay = [0] * k_relays
    for cp in coded:
        eq_per_relay[cp.relay] += 1
    diagnostics: dict[frozenset[int], tuple[int, int]] = {}
    for mask in range(1, 1 << k_relays):
        s = frozenset(j for j in range(k_relays) if mask >> j & 1)
        only_s: set[PacketId] = set().union(*(receipt[j] for j in s))
        for j in set(range(k_relays)) - s:
            only_s -= receipt[j]
        diagnostics[s] = (sum(eq_per_relay[j] for j in s), len(only_s))

    success = set(recovered) == union
    return DecodeReport(
        n_variables=len(order),
        rank=rank_,
        recovered=recovered,
        success=success,
        subset_diagnostics=diagnostics,
    )


def verify_rank_conditions(report: DecodeReport) -> list[frozenset[int]]:
    """Receiver subsets with fewer equations than packets only they can supply."""
    return sorted(
        (s for s, (eq, req) in report.subset_diagnostics.items() if eq < req),
        key=lambda s: (len(s), sorted(s)),
    )


# -- wire format -----------------------------------------------------------

_REC_HEAD = struct.Struct("<BI")
_COEF_HEAD = struct.Struct("<IH")


def write_coded_packets(f: BinaryIO, coded: Iterable[CodedPacket], l_bits: int) -> None:
    """Length-prefixed binary records; symbol width and payload length are
    conveyed out of band (they are experiment constants)."""
    width = l_bits // 8
    for cp in coded:
        f.write(_REC_HEAD.pack(cp.relay, len(cp.coefficients)))
        for pid in sorted(cp.coefficients):
            f.write(_COEF_HEAD.pack(pid.slot, pid.arrival_index))
            f.write(cp.coefficients[pid].to_bytes(width, "little"))
        for sym in cp.payload:
            f.write(sym.to_bytes(width, "little"))


def read_coded_packets(f: BinaryIO, l_bits: int, payload_symbols: int) -> list[CodedPacket]:
    width = l_bits // 8
    out: list[CodedPacket] = []
    while True:
        head = f.read(_REC_HEAD.size)
        if not head:
            return out
        if len(head) < _REC_HEAD.size:
            raise CorruptedStreamError("truncated record header")
        relay, n_coeff = _REC_HEAD.unpack(head)
        body = f.read(n_coeff * (_COEF_HEAD.size + width) + payload_symbols * width)
        if len(body) < n_coeff * (_COEF_HEAD.size + width) + payload_symbols * width:
            raise CorruptedStreamError("truncated record body")
        coeffs: dict[PacketId, int] = {}
        pos = 0
        for _ in range(n_coeff):
            slot, ai = _COEF_HEAD.unpack_from(body, pos)
            pos += _COEF_HEAD.size
            coeffs[PacketId(slot, ai)] = int.from_bytes(body[pos : pos + width], "little")
            pos += width
        payload = tuple(
            int.from_bytes(body[pos + i * width : pos + (i + 1) * width], "little")
            for i in range(payload_symbols)
        )
        out.append(CodedPacket(relay=relay, coefficients=coeffs, payload=payload))


# -- end-to-end experiment --------------------------------------------------


@dataclass(frozen=True)
class DownlinkOutcome:
    report: DecodeReport
    ledger: CollectionLedger
    payloads_exact: bool  # every recovered payload matches the original
    budgets: tuple[int, ...]


def run_downlink_experiment(
    p: ChannelParams,
    n_slots: int,
    fld: GaloisField,
    rng,
    slack: float = 0.05,
    payload_symbols: int = DEFAULT_PAYLOAD_SYMBOLS,
    genie: bool = False,
) -> DownlinkOutcome:
    """Uplink run, per-receiver encoding, and gateway decode in one pass.

    ``genie=True`` sizes budgets from the realized ledger instead of the
    asymptotic rate bounds (tightness experiments).
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    sim_rng, payload_rng, code_rng = rng.spawn(3)
    ledger, _ = run_uplink(p, n_slots, sim_rng)
    union = sorted(set().union(*ledger.per_relay_sets)) if ledger.k_relays else []
    draws = payload_rng.integers(0, fld.order, size=(len(union), payload_symbols), dtype=np.int64)
    originals = {pid: tuple(int(v) for v in draws[i]) for i, pid in enumerate(union)}
    budgets = (
        genie_budgets(ledger) if genie else allocate_rates(p, slack).budgets(n_slots)
    )
    coded: list[CodedPacket] = []
    relay_rngs = code_rng.spawn(p.k_relays)
    for j in range(p.k_relays):
        held = [SourcePacket(pid, originals[pid]) for pid in sorted(ledger.per_relay_sets[j])]
        coded.extend(
            encode_relay(held, budgets[j], fld, relay_rngs[j], relay=j, payload_symbols=payload_symbols)
        )
    report = gateway_decode(coded, fld, ledger=ledger)
    exact = all(report.recovered[pid] == originals[pid] for pid in report.recovered)
    return DownlinkOutcome(report=report, ledger=ledger, payloads_exact=exact, budgets=budgets)
