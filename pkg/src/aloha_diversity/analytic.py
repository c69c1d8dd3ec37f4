"""Closed-form performance of a slotted-Aloha uplink observed by K receivers.

Every transmitted packet is independently erased (probability ``eps``) on each
user-receiver link; two or more surviving packets in the same slot at the same
receiver destroy each other. The expressions below give single-receiver and
multi-receiver throughput, per-packet loss probability, the gain available to
collision cancellation at a central gateway for two receivers, and the
per-subset lower bounds on downlink forwarding rates.

All functions are pure and operate in 64-bit floating point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "ChannelParams",
    "PeakPoint",
    "SubsetRateBound",
    "DegenerateChannelError",
    "UnreachableTargetError",
    "throughput_sa",
    "throughput_uplink_two",
    "throughput_uplink",
    "incremental_gain",
    "packet_loss",
    "peak_throughput",
    "peak_approx_two",
    "load_for_target_plr",
    "sic_gain_two",
    "throughput_af_two",
    "peak_throughput_af_two",
    "peak_approx_af_two",
    "rate_bound",
]


class DegenerateChannelError(ValueError):
    """eps = 1 erases everything; throughput is identically zero."""


class UnreachableTargetError(ValueError):
    """The requested loss rate is below the pure-erasure floor eps**K."""


@dataclass(frozen=True)
class ChannelParams:
    """Offered load (mean packets per slot), per-link erasure probability,
    and number of receivers."""

    rho: float
    eps: float
    k_relays: int = 1

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"eps must be in [0, 1], got {self.eps}")
        if self.rho < 0.0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        if self.k_relays < 1:
            raise ValueError(f"k_relays must be >= 1, got {self.k_relays}")


@dataclass(frozen=True)
class PeakPoint:
    """Throughput-maximizing load and the throughput achieved there."""

    rho_star: float
    t_star: float


@dataclass(frozen=True)
class SubsetRateBound:
    """Minimum sum of downlink rates over any receiver subset of a given size."""

    subset_size: int
    bound: float


def _t_up(rho: float, eps: float, k: int) -> float:
    return sum(
        (-1) ** (j - 1) * math.comb(k, j) * rho * (1 - eps) ** j * math.exp(-rho * (1 - eps**j))
        for j in range(1, k + 1)
    )


def throughput_sa(p: ChannelParams) -> float:
    """Decoded packets per slot at a single receiver: rho(1-eps)e^{-rho(1-eps)}."""
    x = p.rho * (1 - p.eps)
    return x * math.exp(-x)


def throughput_uplink_two(p: ChannelParams) -> float:
    """Distinct packets collected per slot by two receivers (closed form)."""
    rho, eps = p.rho, p.eps
    return 2 * rho * (1 - eps) * math.exp(-rho * (1 - eps)) - rho * (1 - eps) ** 2 * math.exp(
        -rho * (1 - eps**2)
    )


def throughput_uplink(p: ChannelParams) -> float:
    """Distinct packets collected per slot by the full receiver set.

    Alternating binomial sum over subset sizes; reduces to ``throughput_sa``
    at K=1 and to ``throughput_uplink_two`` at K=2.
    """
    return _t_up(p.rho, p.eps, p.k_relays)


def incremental_gain(p: ChannelParams) -> float:
    """Extra throughput from the K-th receiver: T(K) - T(K-1).

    Computed as the literal difference of the two closed forms.
    """
    if p.k_relays < 2:
        raise ValueError("incremental gain needs k_relays >= 2")
    return _t_up(p.rho, p.eps, p.k_relays) - _t_up(p.rho, p.eps, p.k_relays - 1)


def packet_loss(p: ChannelParams) -> float:
    """Probability that a transmitted packet is collected by no receiver.

    Monotone increasing in rho; tends to eps**K as rho -> 0.
    """
    rho, eps, k = p.rho, p.eps, p.k_relays
    z = sum(
        (-1) ** j * math.comb(k, j) * (1 - eps) ** j * math.exp(-rho * (1 - eps**j))
        for j in range(0, k + 1)
    )
    return min(1.0, max(0.0, z))


def _golden_max(f, lo: float, hi: float, tol: float) -> float:
    """Argmax of a unimodal f on [lo, hi] by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def _maximize_load(f, eps: float, tol: float = 1e-8) -> PeakPoint:
    """Peak of a throughput curve over rho in (0, 10/(1-eps)].

    A coarse grid scan locates the bracket (and confirms a single interior
    hump); golden-section search refines it. Should the scan ever surface
    more than one local maximum the whole grid is refined tenfold before
    taking the best bracket.
    """
    if eps >= 1.0:
        raise DegenerateChannelError("eps = 1: zero throughput for every load")
    hi = 10.0 / (1.0 - eps)
    for n_grid in (400, 4000):
        grid = [hi * (i + 1) / n_grid for i in range(n_grid)]
        vals = [f(r) for r in grid]
        peaks = [
            i
            for i in range(1, n_grid - 1)
            if vals[i] >= vals[i - 1] and vals[i] >= vals[i + 1]
        ]
        if len(peaks) <= 1:
            break
    i = max(range(len(vals)), key=vals.__getitem__)
    lo = grid[i - 1] if i > 0 else grid[0] / 2
    up = grid[i + 1] if i + 1 < len(grid) else hi
    rho_star = _golden_max(f, lo, up, tol)
    return PeakPoint(rho_star=rho_star, t_star=f(rho_star))


def peak_throughput(eps: float, k_relays: int) -> PeakPoint:
    """Numerically maximize the K-receiver throughput over the offered load."""
    return _maximize_load(lambda r: _t_up(r, eps, k_relays), eps)


def peak_approx_two(eps: float) -> float:
    """Two-receiver peak throughput evaluated at load 1/(1-eps): 2/e - (1-eps)e^{-1-eps}.

    Tracks the true optimum to within 0.6% relative for eps in [0, 0.9].
    """
    if not 0.0 <= eps < 1.0:
        raise DegenerateChannelError("approximation defined for 0 <= eps < 1")
    return 2.0 / math.e - (1 - eps) * math.exp(-1 - eps)


def load_for_target_plr(eps: float, k_relays: int, zeta_target: float) -> float:
    """Largest load sustaining a given per-packet loss rate.

    The loss probability rises monotonically from eps**K (rho -> 0) towards 1,
    so the crossing is unique; bisection stops when the bracketed loss values
    differ by at most 1e-10.
    """
    floor = eps**k_relays
    if not floor < zeta_target < 1.0:
        raise UnreachableTargetError(
            f"target {zeta_target} outside reachable range ({floor}, 1)"
        )

    def loss(rho: float) -> float:
        return packet_loss(ChannelParams(rho=rho, eps=eps, k_relays=k_relays))

    lo, hi = 0.0, 1.0
    while loss(hi) < zeta_target:
        hi *= 2.0
        if hi > 1e9:  # pragma: no cover - loss(rho) -> 1, so this cannot trip
            raise RuntimeError("bisection bracket blew up")
    while loss(hi) - loss(lo) > 1e-10:
        mid = 0.5 * (lo + hi)
        if loss(mid) < zeta_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def sic_gain_two(p: ChannelParams) -> float:
    """Extra packets per slot a two-receiver gateway recovers by cancelling a
    decoded packet out of a two-packet collision: 2 rho^2 eps (1-eps)^3 e^{-rho(1-eps^2)}."""
    rho, eps = p.rho, p.eps
    return 2 * rho**2 * eps * (1 - eps) ** 3 * math.exp(-rho * (1 - eps**2))


def throughput_af_two(p: ChannelParams) -> float:
    """Two-receiver throughput when the gateway also cancels resolvable collisions."""
    return throughput_uplink_two(p) + sic_gain_two(p)


def peak_throughput_af_two(eps: float) -> PeakPoint:
    """Numerically maximize the collision-cancelling two-receiver throughput."""
    return _maximize_load(
        lambda r: throughput_af_two(ChannelParams(rho=r, eps=eps, k_relays=2)), eps
    )


def peak_approx_af_two(eps: float) -> float:
    """Collision-cancelling peak at load 1/(1-eps): 2/e - e^{-1-eps}(1-3eps+2eps^2)."""
    if not 0.0 <= eps < 1.0:
        raise DegenerateChannelError("approximation defined for 0 <= eps < 1")
    return 2.0 / math.e - math.exp(-1 - eps) * (1 - 3 * eps + 2 * eps**2)


def rate_bound(p: ChannelParams, subset_size: int) -> SubsetRateBound:
    """Minimum asymptotic sum-rate any receiver subset of this size must forward.

    Equals the packets-per-slot collected exclusively by the subset: the full
    union rate minus the rate collected by the complementary receivers, via an
    alternating tail over the complement size. At subset_size == K the tail is
    empty and the bound is the whole uplink throughput.
    """
    k = p.k_relays
    if not 1 <= subset_size <= k:
        raise ValueError(f"subset_size must be in [1, {k}], got {subset_size}")
    rho, eps = p.rho, p.eps
    tail = sum(
        (-1) ** j
        * math.comb(k - subset_size, j)
        * rho
        * (1 - eps) ** j
        * math.exp(-rho * (1 - eps**j))
        for j in range(1, k - subset_size + 1)
    )
    return SubsetRateBound(subset_size=subset_size, bound=_t_up(rho, eps, k) + tail)
