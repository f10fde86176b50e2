"""Closed-form machinery for the root-path spine chain.

The spine chain is the two-state process along a root-to-leaf path:
state 0 (unoccupied) stays 0 with probability p and moves to 1 with
probability q = 1-p; state 1 (occupied) always returns to 0.  N_h counts
the visits to 0 among steps 1..h.  E[a^N_h] has an exact binomial double
sum and a saddle-point closed form whose ratio tends to 1 in h.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln

from .errors import BudgetError, DomainError
from .tree import omega_for_delta


@dataclass(frozen=True)
class SpineChainParams:
    """(p, q, a) with p+q=1, plus an optional inhomogeneity radius.

    delta_inhom > 0 evaluates the upper-bound variant with p and q both
    inflated by delta_inhom (term-wise domination of the exact sums).
    """

    p: float
    q: float
    a: float
    delta_inhom: float = 0.0

    def __post_init__(self):
        if abs(self.p + self.q - 1.0) > 1e-12:
            raise DomainError(f"p+q must be 1, got {self.p + self.q}")
        if not (0.0 <= self.p <= 1.0):
            raise DomainError(f"p must be in [0,1], got {self.p}")
        if self.a <= 0.0:
            raise DomainError(f"a must be positive, got {self.a}")
        if self.delta_inhom < 0.0:
            raise DomainError("delta_inhom must be >= 0")

    def effective(self) -> tuple[float, float]:
        return self.p + self.delta_inhom, self.q + self.delta_inhom


def _log_terms(h: int, p: float, q: float, a: float) -> np.ndarray:
    """Log of every term of the two binomial sums (all terms positive).

    xlogy keeps zero-exponent factors at 0 even when the base is 0.
    """
    from scipy.special import xlogy
    la = math.log(a)
    k = np.arange(0, h // 2 + 1, dtype=float)
    t1 = (gammaln(h - k + 1) - gammaln(k + 1) - gammaln(h - 2 * k + 1)
          + xlogy(h - 2 * k, p) + xlogy(k, q) + (h - k) * la)
    k = np.arange(1, (h + 1) // 2 + 1, dtype=float)
    t2 = (gammaln(h - k + 1) - gammaln(k) - gammaln(h - 2 * k + 2)
          + xlogy(h - 2 * k + 1, p) + xlogy(k, q) + (h - k) * la)
    out = np.concatenate([t1, t2])
    assert not np.isnan(out).any()
    return out


def spine_moment_exact_log(h: int, params: SpineChainParams) -> float:
    """log E[a^N_h] by the exact binomial double sum, via scaled and sorted
    compensated accumulation (values underflow float64 for large h)."""
    if h < 1:
        raise DomainError("need h >= 1")
    p, q = params.effective()
    logs = _log_terms(h, p, q, params.a)
    finite = logs[np.isfinite(logs)]
    if len(finite) == 0:
        return -math.inf
    m = finite.max()
    vals = np.exp(np.sort(finite - m))
    # compensated (Kahan) summation of the scaled terms
    total, c = 0.0, 0.0
    for x in vals:
        y = x - c
        t = total + y
        c = (t - total) - y
        total = t
    return float(m + math.log(total))


def spine_moment_exact(h: int, params: SpineChainParams) -> float:
    """E[a^N_h]; may underflow to 0 for large h, see the log variant."""
    val = spine_moment_exact_log(h, params)
    return 0.0 if val == -math.inf else math.exp(val)


def spine_moment_bruteforce(h: int, params: SpineChainParams) -> float:
    """Path-enumeration oracle: sum over all valid {0,1} paths from state 0.

    Exponential in h; also verifies N_h >= floor(h/2) on every path (the
    occupied state always returns to 0, so ones never repeat).
    """
    if h > 24:
        raise DomainError("brute force limited to h <= 24")
    p, q = params.effective()
    a = params.a
    total = 0.0
    stack = [(0, 0, 0, 1.0)]  # (step, state, zeros, prob-weight)
    while stack:
        step, state, zeros, w = stack.pop()
        if step == h:
            assert zeros >= h // 2
            total += w * a ** zeros
            continue
        if state == 0:
            stack.append((step + 1, 0, zeros + 1, w * p))
            if q > 0:
                stack.append((step + 1, 1, zeros, w * q))
        else:
            stack.append((step + 1, 0, zeros + 1, w * 1.0))
    return total


def spine_moment_approx_log(h: int, params: SpineChainParams) -> float:
    """log of the saddle-point closed form for E[a^N_h].

    (1 + p(1-eps)/(2 eps)) ((1+eps)/2) ((pa/2)(1 + sqrt(1+4q/(a p^2))))^h
    with eps = 1/sqrt(1+4q/(a p^2)); exact when q = 0.
    """
    if h < 1:
        raise DomainError("need h >= 1")
    p, q = params.effective()
    a = params.a
    if p == 0.0:
        raise DomainError("approximation undefined at p=0")
    x = q / (a * p * p)
    root = math.sqrt(1.0 + 4.0 * x)
    eps = 1.0 / root
    prefactor = (1.0 + p * (1.0 - eps) / (2.0 * eps)) * (1.0 + eps) / 2.0
    base = 0.5 * p * a * (1.0 + root)
    return math.log(prefactor) + h * math.log(base)


def spine_moment_approx(h: int, params: SpineChainParams) -> float:
    """Saddle-point closed form; may underflow for large h, see log variant."""
    return math.exp(spine_moment_approx_log(h, params))


# branching threshold: the smallest b0 with
# exp(2*1.01*(w b)^2 / lambda) <= 1.01 for every b >= b0, at
# w = (1+delta) ln(b)/b and lambda = w (1+w)^b.

_THRESH = math.log(math.log(1.01))


def _slack_log(b: float, delta: float) -> float:
    """log of 2*1.01*(w b)^2/lambda; condition holds iff <= log(ln 1.01)."""
    w = (1.0 + delta) * math.log(b) / b
    log_lam = math.log(w) + b * math.log1p(w)
    return math.log(2.0 * 1.01) + 2.0 * math.log(w * b) - log_lam


def _condition(b: float, delta: float) -> bool:
    return _slack_log(b, delta) <= _THRESH


def branching_threshold(delta: float, cap: int = 10 ** 9) -> int:
    """Smallest b0 such that the slack condition holds for ALL b >= b0.

    Strategy: exhaustive scan over small b, geometric scan beyond, then
    bisection in the (eventually decreasing) tail, with the tail certified
    by 64 doubling steps of strict decrease plus the condition holding.
    Raises BudgetError when the last violation lies beyond the cap.
    """
    if delta <= 0:
        raise DomainError("delta must be positive")

    small_limit = min(cap, 4096)
    last_viol = 0
    for b in range(2, small_limit + 1):
        if not _condition(b, delta):
            last_viol = b
    if small_limit == cap:
        candidate = max(2, last_viol + 1)
        _certify_tail(candidate, delta, cap)
        return candidate

    # geometric scan beyond the exhaustive range
    points = []
    b = float(small_limit)
    while b <= float(cap):
        points.append(int(b))
        b *= 1.25
    points.append(int(cap))
    viol = [pt for pt in points if not _condition(pt, delta)]
    if viol:
        if viol[-1] >= points[-2]:
            raise BudgetError(
                f"condition still violated near the cap {cap} for delta={delta}")
        lo = viol[-1]  # violated
        hi = next(pt for pt in points if pt > lo and _condition(pt, delta))
        # bisect the crossing in the decreasing tail
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if _condition(mid, delta):
                hi = mid
            else:
                lo = mid
        candidate = hi
    else:
        candidate = max(2, last_viol + 1)
    # exact integer refinement: walk back over a window to catch stragglers
    window_start = max(2, candidate - 256)
    for b in range(candidate - 1, window_start - 1, -1):
        if not _condition(b, delta):
            candidate = b + 1
            break
    _certify_tail(candidate, delta, cap)
    return candidate


def _certify_tail(candidate: int, delta: float, cap: int) -> None:
    """Check the condition holds and the slack is decreasing over 64
    doubling steps past the candidate."""
    prev = _slack_log(candidate, delta)
    if prev > _THRESH:
        raise BudgetError(
            f"candidate b0={candidate} fails its own condition for delta={delta}")
    b = float(candidate)
    for _ in range(64):
        b *= 2.0
        cur = _slack_log(b, delta)
        if cur > _THRESH:
            raise BudgetError(
                f"condition violated again at b={b:g} for delta={delta}")
        if cur > prev + 1e-12:
            raise BudgetError(
                f"slack not decreasing at b={b:g} for delta={delta}")
        prev = cur


@dataclass(frozen=True)
class SlowdownExponent:
    d: float
    residual: float  # d - (1 + delta/2)


def slowdown_exponent(b: float, delta: float) -> SlowdownExponent:
    """Predicted relaxation-time exponent
    d = 1 + ln(lambda/(1.01 w b)^2) / (2 ln b) at w = (1+delta) ln(b)/b."""
    if b < 2:
        raise DomainError("need b >= 2")
    w = (1.0 + delta) * math.log(b) / b
    log_lam = math.log(w) + b * math.log1p(w)
    num = log_lam - 2.0 * math.log(1.01 * w * b)
    d = 1.0 + num / (2.0 * math.log(b))
    return SlowdownExponent(d=d, residual=d - (1.0 + delta / 2.0))
