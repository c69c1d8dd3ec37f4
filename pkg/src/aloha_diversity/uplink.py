"""Seeded Monte Carlo simulation of the multi-receiver slotted-Aloha uplink.

Arrivals per slot are Poisson; each (packet, receiver) link erases
independently; a receiver decodes a slot only when exactly one packet
survived there. Idle slots and collisions are indistinguishable at a
receiver: both read as an erasure.

Reproducibility: a run splits its generator into one child stream per block
of ``BLOCK_SLOTS`` slots (``Generator.spawn``), so results are bit-identical
for a given seed no matter how blocks are scheduled.

The exact conditional collection distributions at the bottom of the module
(`brute_force_collection_pmf`, `collection_pmf`, `oracle_throughput`) are
deliberately independent of the closed forms in :mod:`.analytic`; they exist
to cross-check them.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .analytic import ChannelParams

__all__ = [
    "PacketId",
    "SlotOutcome",
    "CollectionLedger",
    "Estimate",
    "simulate_slot",
    "run_uplink",
    "throughput_estimate",
    "exclusive_count",
    "partition_counts",
    "intersection_counts",
    "estimate_plr",
    "sic_postprocess_two",
    "simulate_sic_two",
    "brute_force_collection_pmf",
    "collection_pmf",
    "oracle_throughput",
]

BLOCK_SLOTS = 1 << 16

RngLike = "np.random.Generator | int"


class PacketId(NamedTuple):
    """Identity of an uplink packet: (slot, index of arrival within the slot),
    both 1-based. Total order follows slot, then arrival index."""

    slot: int
    arrival_index: int


@dataclass(frozen=True)
class SlotOutcome:
    """One slot as seen by every receiver.

    ``per_relay[k]`` is the decoded PacketId or None for an erasure.
    ``unfaded[k]`` lists every packet that reached receiver k unfaded
    (retained so collision composition stays decidable after the fact).
    """

    slot: int
    arrivals: int
    per_relay: tuple[PacketId | None, ...]
    unfaded: tuple[tuple[PacketId, ...], ...]


@dataclass(frozen=True)
class CollectionLedger:
    """Per-receiver collected-packet sets accumulated over a run."""

    n_slots: int
    per_relay_sets: tuple[frozenset[PacketId], ...]
    union_count: int
    # distinct packets collected in each slot; kept for standard errors
    slot_counts: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def k_relays(self) -> int:
        return len(self.per_relay_sets)


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_err: float
    n_samples: int


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _poisson_cdf(rho: float, tail: float = 1e-15) -> np.ndarray:
    """Cumulative Poisson probabilities out to a tail mass below ``tail``."""
    terms = [math.exp(-rho)]
    u = 0
    while 1.0 - sum(terms) > tail and u < 400:
        u += 1
        terms.append(terms[-1] * rho / u)
    return np.cumsum(terms)


def _sample_poisson(rho: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-transform Poisson draws: exact and cheap for the loads used here."""
    if rho == 0.0:
        return np.zeros(size, dtype=np.int64)
    cdf = _poisson_cdf(rho)
    return np.searchsorted(cdf, rng.random(size), side="left").astype(np.int64)


class _BlockResult(NamedTuple):
    arrivals: np.ndarray  # (n,) packets offered per slot
    starts: np.ndarray  # (n,) first packet index of each slot
    slot_of: np.ndarray  # (N,) slot of each packet
    unfaded: np.ndarray  # (N, K) survival flags per link
    decoded_slots: list[np.ndarray]  # per relay: slots decoded
    decoded_pkts: list[np.ndarray]  # per relay: packet index decoded there
    mask: np.ndarray  # (N,) bitmask of receivers that decoded the packet
    slot_counts: np.ndarray  # (n,) distinct packets collected per slot


def _simulate_block(p: ChannelParams, n_slots: int, rng: np.random.Generator) -> _BlockResult:
    k = p.k_relays
    arrivals = _sample_poisson(p.rho, n_slots, rng)
    n_pkts = int(arrivals.sum())
    starts = np.concatenate(([0], np.cumsum(arrivals)[:-1]))
    slot_of = np.repeat(np.arange(n_slots), arrivals)
    unfaded = (
        rng.random((n_pkts, k)) < (1.0 - p.eps)
        if n_pkts
        else np.zeros((0, k), dtype=bool)
    )
    pkt_index = np.arange(n_pkts)
    mask = np.zeros(n_pkts, dtype=np.uint32)
    decoded_slots: list[np.ndarray] = []
    decoded_pkts: list[np.ndarray] = []
    for j in range(k):
        w = unfaded[:, j].astype(np.float64)
        cnt = np.bincount(slot_of, weights=w, minlength=n_slots)
        dec = np.nonzero(cnt == 1.0)[0]
        # in a singly-occupied slot the weighted index sum is the survivor itself
        idx = np.bincount(slot_of, weights=w * pkt_index, minlength=n_slots)
        pkts = idx[dec].astype(np.int64)
        decoded_slots.append(dec)
        decoded_pkts.append(pkts)
        mask[pkts] |= np.uint32(1 << j)
    slot_counts = np.bincount(slot_of[mask > 0], minlength=n_slots).astype(np.int64)
    return _BlockResult(arrivals, starts, slot_of, unfaded, decoded_slots, decoded_pkts, mask, slot_counts)


def simulate_slot(p: ChannelParams, rng, slot: int = 1, arrivals: int | None = None) -> SlotOutcome:
    """Draw a single slot. ``arrivals`` may be pinned for conditional studies."""
    rng = _as_rng(rng)
    u = int(_sample_poisson(p.rho, 1, rng)[0]) if arrivals is None else int(arrivals)
    k = p.k_relays
    unfaded = rng.random((u, k)) < (1.0 - p.eps)
    ids = [PacketId(slot, j + 1) for j in range(u)]
    per_relay: list[PacketId | None] = []
    unfaded_sets: list[tuple[PacketId, ...]] = []
    for j in range(k):
        alive = [ids[i] for i in range(u) if unfaded[i, j]]
        per_relay.append(alive[0] if len(alive) == 1 else None)
        unfaded_sets.append(tuple(alive))
    return SlotOutcome(slot=slot, arrivals=u, per_relay=tuple(per_relay), unfaded=tuple(unfaded_sets))


def _materialize_trace(block: _BlockResult, offset: int) -> list[SlotOutcome]:
    out = []
    n_slots = block.arrivals.shape[0]
    decoded_at = {}
    for j, (slots, pkts) in enumerate(zip(block.decoded_slots, block.decoded_pkts)):
        for s, x in zip(slots, pkts):
            decoded_at[(int(s), j)] = int(x)
    k = block.unfaded.shape[1]
    for s in range(n_slots):
        u = int(block.arrivals[s])
        start = int(block.starts[s])
        ids = [PacketId(offset + s + 1, a + 1) for a in range(u)]
        per_relay = []
        unfaded_sets = []
        for j in range(k):
            alive = tuple(ids[a] for a in range(u) if block.unfaded[start + a, j])
            unfaded_sets.append(alive)
            x = decoded_at.get((s, j))
            per_relay.append(ids[x - start] if x is not None else None)
        out.append(
            SlotOutcome(slot=offset + s + 1, arrivals=u, per_relay=tuple(per_relay), unfaded=tuple(unfaded_sets))
        )
    return out


def run_uplink(
    p: ChannelParams, n_slots: int, rng, keep_trace: bool = False
) -> tuple[CollectionLedger, list[SlotOutcome] | None]:
    """Simulate ``n_slots`` slots; returns the ledger and, on request, the trace.

    The trace is only materialized when asked for: collision-cancellation and
    downlink stages need it, long throughput runs do not.
    """
    if n_slots < 1:
        raise ValueError("n_slots must be >= 1")
    rng = _as_rng(rng)
    k = p.k_relays
    n_blocks = (n_slots + BLOCK_SLOTS - 1) // BLOCK_SLOTS
    streams = rng.spawn(n_blocks)
    collected: list[list[tuple[int, int]]] = [[] for _ in range(k)]
    slot_counts = np.zeros(n_slots, dtype=np.int64)
    trace: list[SlotOutcome] | None = [] if keep_trace else None
    union = 0
    for b, stream in enumerate(streams):
        offset = b * BLOCK_SLOTS
        size = min(BLOCK_SLOTS, n_slots - offset)
        block = _simulate_block(p, size, stream)
        ai = np.arange(block.slot_of.size) - block.starts[block.slot_of] + 1
        for j in range(k):
            pkts = block.decoded_pkts[j]
            slots = offset + block.slot_of[pkts] + 1
            collected[j].extend(zip(slots.tolist(), ai[pkts].tolist()))
        union += int(np.count_nonzero(block.mask))
        slot_counts[offset : offset + size] = block.slot_counts
        if trace is not None:
            trace.extend(_materialize_trace(block, offset))
    sets = tuple(frozenset(PacketId(s, a) for s, a in pairs) for pairs in collected)
    ledger = CollectionLedger(
        n_slots=n_slots, per_relay_sets=sets, union_count=union, slot_counts=slot_counts
    )
    return ledger, trace


def throughput_estimate(ledger: CollectionLedger) -> Estimate:
    """Collected packets per slot with its standard error over i.i.d. slots."""
    c = ledger.slot_counts
    if c is None:
        raise ValueError("ledger was built without slot counts")
    n = c.size
    se = float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=float(c.mean()), std_err=se, n_samples=n)


# -- set accounting --------------------------------------------------------


def _check_subset(ledger: CollectionLedger, subset: Iterable[int]) -> frozenset[int]:
    s = frozenset(subset)
    if not s:
        raise ValueError("subset must be nonempty")
    if not s <= set(range(ledger.k_relays)):
        raise ValueError(f"subset {sorted(s)} out of range for K={ledger.k_relays}")
    return s


def exclusive_count(ledger: CollectionLedger, subset: Iterable[int]) -> int:
    """Packets seen by at least one receiver in ``subset`` and by none outside it."""
    s = _check_subset(ledger, subset)
    inside: set[PacketId] = set().union(*(ledger.per_relay_sets[j] for j in s))
    for j in set(range(ledger.k_relays)) - s:
        inside -= ledger.per_relay_sets[j]
    return len(inside)


def partition_counts(ledger: CollectionLedger) -> dict[frozenset[int], int]:
    """Counts of packets received by exactly each nonempty receiver subset.

    These cells are disjoint and cover the union, so the values sum to
    ``union_count``.
    """
    k = ledger.k_relays
    owners: dict[PacketId, int] = {}
    for j, s in enumerate(ledger.per_relay_sets):
        for pid in s:
            owners[pid] = owners.get(pid, 0) | (1 << j)
    counts = {
        frozenset(j for j in range(k) if m & (1 << j)): 0
        for m in range(1, 1 << k)
    }
    for m in owners.values():
        counts[frozenset(j for j in range(k) if m & (1 << j))] += 1
    return counts


def intersection_counts(ledger: CollectionLedger) -> dict[frozenset[int], int]:
    """|intersection of A_j over j in S| for every nonempty subset S."""
    k = ledger.k_relays
    out: dict[frozenset[int], int] = {}
    for r in range(1, k + 1):
        for combo in itertools.combinations(range(k), r):
            inter = set(ledger.per_relay_sets[combo[0]])
            for j in combo[1:]:
                inter &= ledger.per_relay_sets[j]
            out[frozenset(combo)] = len(inter)
    return out


# -- tagged-user loss estimation -------------------------------------------


def estimate_plr(p: ChannelParams, n_trials: int, rng) -> Estimate:
    """Fraction of probe packets decoded by no receiver.

    Each trial injects one probe into a slot with Poisson-many interferers;
    the probe is lost at a receiver if its own link erases it or any
    interferer survives there alongside it.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    rng = _as_rng(rng)
    k = p.k_relays
    interferers = _sample_poisson(p.rho, n_trials, rng)
    probe_alive = rng.random((n_trials, k)) < (1.0 - p.eps)
    surviving_interf = rng.binomial(interferers[:, None], 1.0 - p.eps, size=(n_trials, k))
    decoded = probe_alive & (surviving_interf == 0)
    lost = ~decoded.any(axis=1)
    frac = float(lost.mean())
    se = math.sqrt(frac * (1.0 - frac) / n_trials)
    return Estimate(mean=frac, std_err=se, n_samples=n_trials)


# -- two-receiver collision cancellation -----------------------------------


def _sic_events_in_slot(outcome: SlotOutcome) -> int:
    if len(outcome.per_relay) != 2:
        raise ValueError("collision cancellation is defined for exactly 2 receivers")
    events = 0
    for a, b in ((0, 1), (1, 0)):
        x = outcome.per_relay[a]
        if x is not None and len(outcome.unfaded[b]) == 2 and x in outcome.unfaded[b]:
            events += 1
    return events


def sic_postprocess_two(trace: Sequence[SlotOutcome]) -> int:
    """Extra packets recoverable by cancelling a decoded packet out of the
    other receiver's two-packet collision; one per qualifying slot side."""
    return sum(_sic_events_in_slot(o) for o in trace)


def simulate_sic_two(p: ChannelParams, n_slots: int, rng) -> Estimate:
    """Cancellation events per slot, estimated without materializing a trace."""
    if p.k_relays != 2:
        raise ValueError("collision cancellation is defined for exactly 2 receivers")
    rng = _as_rng(rng)
    n_blocks = (n_slots + BLOCK_SLOTS - 1) // BLOCK_SLOTS
    streams = rng.spawn(n_blocks)
    per_slot = np.zeros(n_slots, dtype=np.int64)
    for b, stream in enumerate(streams):
        offset = b * BLOCK_SLOTS
        size = min(BLOCK_SLOTS, n_slots - offset)
        block = _simulate_block(p, size, stream)
        cnt = [
            np.bincount(block.slot_of, weights=block.unfaded[:, j].astype(np.float64), minlength=size)
            for j in range(2)
        ]
        for a, bb in ((0, 1), (1, 0)):
            dec, pkts = block.decoded_slots[a], block.decoded_pkts[a]
            sel = (cnt[bb][dec] == 2.0) & block.unfaded[pkts, bb]
            np.add.at(per_slot, offset + dec[sel], 1)
    n = n_slots
    se = float(per_slot.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=float(per_slot.mean()), std_err=se, n_samples=n)


# -- exact conditional collection distributions ----------------------------


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def brute_force_collection_pmf(u: int, k_relays: int, eps: float) -> np.ndarray:
    """Pr{c distinct packets collected | u arrivals}, by pattern enumeration.

    Every per-receiver erasure pattern (2^u of them) is enumerated and mapped
    to that receiver's decode outcome; receiver patterns are independent, so
    the joint walk over all 2^(uK) patterns factors into a product over the
    per-receiver outcome laws without changing the result. Bounded to
    u * k_relays <= 24 like the naive joint enumeration it replicates.
    """
    if u * k_relays > 24:
        raise ValueError(f"u*K = {u * k_relays} exceeds the enumeration bound 24")
    if u == 0:
        out = np.zeros(k_relays + 1)
        out[0] = 1.0
        return out
    # outcome law of one receiver: index 0 = erasure, j>=1 = packet j decoded
    law = np.zeros(u + 1)
    for pattern in range(1 << u):
        alive = pattern.bit_count()
        prob = (1.0 - eps) ** alive * eps ** (u - alive)
        if alive == 1:
            law[pattern.bit_length()] += prob
        else:
            law[0] += prob
    pmf = np.zeros(k_relays + 1)
    for combo in itertools.product(range(u + 1), repeat=k_relays):
        prob = math.prod(law[x] for x in combo)
        c = len({x for x in combo if x != 0})
        pmf[c] += prob
    return pmf


def collection_pmf(u: int, k_relays: int, eps: float) -> np.ndarray:
    """Pr{c distinct packets collected | u arrivals}, closed combinatorial form.

    Conditioned on d receivers decoding anything (binomial), the decoded
    packets are i.i.d. uniform over the u arrivals; the number of distinct
    values follows from surjection counting. Valid for any u, unlike the
    enumeration above.
    """
    pmf = np.zeros(k_relays + 1)
    if u == 0:
        pmf[0] = 1.0
        return pmf
    p_dec = u * (1.0 - eps) * eps ** (u - 1)
    for d in range(k_relays + 1):
        pd = math.comb(k_relays, d) * p_dec**d * (1.0 - p_dec) ** (k_relays - d)
        if pd == 0.0:
            continue
        for c in range(min(d, u) + 1):
            occ = math.comb(u, c) * _stirling2(d, c) * math.factorial(c) / u**d
            pmf[c] += pd * occ
    return pmf


def oracle_throughput(rho: float, eps: float, k_relays: int, tail: float = 1e-12) -> float:
    """Poisson-weighted mean of the conditional collection count.

    Uses exhaustive pattern enumeration where it is affordable and the
    combinatorial law beyond; the Poisson sum is truncated once the remaining
    mass drops below ``tail``.
    """
    total = 0.0
    weight = math.exp(-rho)
    cum = 0.0
    u = 0
    while cum < 1.0 - tail and u < 500:
        if u * k_relays <= 16 and u <= 10:
            pmf = brute_force_collection_pmf(u, k_relays, eps)
        else:
            pmf = collection_pmf(u, k_relays, eps)
        total += weight * float(np.arange(k_relays + 1) @ pmf)
        cum += weight
        u += 1
        weight *= rho / u if u else 0.0
    return total
