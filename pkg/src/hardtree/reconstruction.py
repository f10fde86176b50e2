"""Root reconstruction from leaf configurations.

The estimator labels the tree bottom-up: a leaf keeps its spin, an internal
vertex is labeled occupied exactly when all of its children are labeled
unoccupied, and the output is the root label.  Alongside the labeling this
module computes the estimator's effectiveness (covariance with the true
root spin) and sensitivity (fraction of single-leaf flips that change the
output), both exactly and by sampling.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import DomainError, StructuralError
from .gibbs import WeightScheme, broadcast_sample, enumerate_states
from .glauber import build_matrix, conductance, spectral_report
from .rng import make_rng
from .tree import ModelParams, TreeShape


@dataclass(frozen=True)
class Labeling:
    """Per-vertex labels of the bottom-up recursion plus the root output."""

    labels: np.ndarray
    output: int


def greedy_label(leaf_values: np.ndarray, shape: TreeShape) -> Labeling:
    """Label every vertex: leaves keep their value, a parent gets
    1 - max(children labels); output is the root label."""
    leaf_values = np.asarray(leaf_values)
    if len(leaf_values) != shape.num_leaves:
        raise StructuralError(
            f"expected {shape.num_leaves} leaf values, got {len(leaf_values)}")
    labels = np.zeros(shape.n, dtype=np.int8)
    labels[shape.first_leaf:] = leaf_values.astype(np.int8)
    for d in range(shape.h - 1, -1, -1):
        kids = labels[shape.level_slice(d + 1)].reshape(-1, shape.b)
        labels[shape.level_slice(d)] = 1 - kids.max(axis=1)
    return Labeling(labels=labels, output=int(labels[0]))


def greedy_label_at_height(values: np.ndarray, shape: TreeShape, ell: int) -> int:
    """Run the labeling with the depth-(h-ell) vertices as inputs."""
    if ell < 0 or ell >= shape.h:
        raise DomainError(f"level offset {ell} outside [0, {shape.h - 1}]")
    top = TreeShape(shape.b, shape.h - ell)
    return greedy_label(values, top).output


@dataclass(frozen=True)
class JointRootStats:
    """Joint law of (root spin, estimator output) with its effectiveness.

    p[x][y] = P(spin(root)=x and output=y); r_eff is the minimum over x of
    p[x][x] - P(spin=x) P(output=x), signed (may be <= 0 below threshold).
    """

    p: np.ndarray
    r_eff: float

    @property
    def p_output_zero(self) -> float:
        return float(self.p[0, 0] + self.p[1, 0])

    @property
    def p_output_one(self) -> float:
        return float(self.p[0, 1] + self.p[1, 1])


def _joint_from_matrix(J: np.ndarray) -> JointRootStats:
    spin = J.sum(axis=1)
    out = J.sum(axis=0)
    r = min(J[0, 0] - spin[0] * out[0], J[1, 1] - spin[1] * out[1])
    return JointRootStats(p=J, r_eff=float(r))


def exact_joint_stats(shape: TreeShape, omega: float) -> JointRootStats:
    """O(h) joint law of (root spin, output) under the broadcast measure.

    Conditioned on its parent being unoccupied, a subtree root's pair
    (spin, label) has a 4-state law; sibling subtrees are independent given
    the parent spin, which closes the recursion over heights.
    """
    if omega < 0:
        raise DomainError("omega must be >= 0")
    p1 = omega / (1.0 + omega)
    p0 = 1.0 - p1
    J = np.array([[p0, 0.0], [0.0, p1]])
    b = shape.b
    for _ in range(shape.h):
        g0 = J[0, 0] + J[1, 0]  # P(label = 0)
        q0 = J[0, 0] / (J[0, 0] + J[0, 1])  # P(label = 0 | spin = 0)
        all_zero_free = g0 ** b
        all_zero_blocked = q0 ** b
        J = np.array([
            [p0 * (1.0 - all_zero_free), p0 * all_zero_free],
            [p1 * (1.0 - all_zero_blocked), p1 * all_zero_blocked],
        ])
    return _joint_from_matrix(J)


def joint_stats_by_enumeration(shape: TreeShape, params: ModelParams) -> JointRootStats:
    """Enumeration oracle for exact_joint_stats."""
    space = enumerate_states(shape, WeightScheme.broadcast(params))
    occm = space.occupancy_matrix()
    J = np.zeros((2, 2))
    for i in range(len(space)):
        out = greedy_label(occm[i, shape.first_leaf:], shape).output
        J[int(occm[i, 0]), out] += space.probs[i]
    return _joint_from_matrix(J)


def _flip_changes_output(labels: np.ndarray, cnt1: np.ndarray,
                         shape: TreeShape, leaf: int) -> bool:
    """Does flipping one leaf change the root label?  O(h) path walk using
    per-vertex counts of children labeled 1."""
    u = leaf
    cur = 1 - labels[u]
    while u != 0:
        p = (u - 1) // shape.b
        others_have_one = (cnt1[p] - (labels[u] == 1)) >= 1
        new_label = 0 if (others_have_one or cur == 1) else 1
        if new_label == labels[p]:
            return False
        u = p
        cur = new_label
    return True


def _label_state(leaf_values: np.ndarray, shape: TreeShape):
    lab = greedy_label(leaf_values, shape)
    cnt1 = np.zeros(shape.first_leaf, dtype=np.int32)
    for d in range(1, shape.h + 1):
        kids = lab.labels[shape.level_slice(d)].reshape(-1, shape.b)
        parents = shape.level_slice(d - 1)
        cnt1[parents] = (kids == 1).sum(axis=1)
    return lab, cnt1


def flip_count(leaf_values: np.ndarray, shape: TreeShape) -> int:
    """Number of leaves whose flip changes the output."""
    lab, cnt1 = _label_state(leaf_values, shape)
    flips = 0
    for leaf in range(shape.first_leaf, shape.n):
        if _flip_changes_output(lab.labels, cnt1, shape, leaf):
            flips += 1
    return flips


def sensitivity_of(leaf_values: np.ndarray, shape: TreeShape) -> float:
    """Fraction (over all n vertices) of leaves whose flip changes the output."""
    return flip_count(leaf_values, shape) / shape.n


@dataclass(frozen=True)
class SensitivityEstimate:
    mean: float
    stderr: float
    samples: int
    with_indicator: bool


def sensitivity_sample(shape: TreeShape, omega: float, samples: int,
                       rng=None, seed: int = 0,
                       with_indicator: bool = True) -> SensitivityEstimate:
    """Monte Carlo average sensitivity over broadcast draws.

    With the indicator (default) each draw contributes S(sigma) only when
    the output is 1, matching the average used by the conductance bound.
    """
    if samples < 1:
        raise DomainError("need at least one sample")
    if rng is None:
        rng = make_rng(seed)
    vals = np.empty(samples)
    for k in range(samples):
        cfg = broadcast_sample(shape, omega, rng=rng)
        leaf_values = cfg.occ[shape.first_leaf:]
        lab, cnt1 = _label_state(leaf_values, shape)
        if with_indicator and lab.output != 1:
            vals[k] = 0.0
            continue
        flips = 0
        for leaf in range(shape.first_leaf, shape.n):
            if _flip_changes_output(lab.labels, cnt1, shape, leaf):
                flips += 1
        vals[k] = flips / shape.n
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
    return SensitivityEstimate(mean=mean, stderr=stderr, samples=samples,
                               with_indicator=with_indicator)


def exact_average_sensitivity(shape: TreeShape, params: ModelParams,
                              with_indicator: bool = True) -> float:
    """Exact average sensitivity by enumeration (oracle for the sampler)."""
    space = enumerate_states(shape, WeightScheme.broadcast(params))
    occm = space.occupancy_matrix()
    total = 0.0
    for i in range(len(space)):
        leaf_values = occm[i, shape.first_leaf:]
        lab, cnt1 = _label_state(leaf_values, shape)
        if with_indicator and lab.output != 1:
            continue
        flips = 0
        for leaf in range(shape.first_leaf, shape.n):
            if _flip_changes_output(lab.labels, cnt1, shape, leaf):
                flips += 1
        total += space.probs[i] * flips / shape.n
    return total


def _pow_int(x: float, b: int) -> float:
    """x**b for x in [0,1] and possibly huge integer b, via exp/log."""
    if x <= 0.0:
        return 0.0 if b > 0 else 1.0
    if x >= 1.0:
        return 1.0
    return math.exp(b * math.log(x))


@dataclass(frozen=True)
class ZeroProbSeries:
    """values[i] for i = 1..h is the probability the estimator outputs 0 on
    the broadcast tree of height i-1 (values[0] is unused)."""

    omega: float
    b: int
    values: np.ndarray

    def __getitem__(self, i: int) -> float:
        if i < 1 or i >= len(self.values):
            raise DomainError(f"index {i} outside 1..{len(self.values) - 1}")
        return float(self.values[i])


def zero_prob_series(h: int, b: int, omega: float) -> ZeroProbSeries:
    """Two-step recurrence for the output-zero probabilities.

    g[1] = 1/(1+w); g[2] = g[1] (1 - (1/(1+w))^b);
    g[i+1] = w/(1+w) (1 - (1 - g[i-1]^b)^b) + 1/(1+w) (1 - g[i]^b).
    """
    if h < 1:
        raise DomainError("need h >= 1")
    w = omega
    g = np.full(h + 1, np.nan)
    g[1] = 1.0 / (1.0 + w)
    if h >= 2:
        g[2] = g[1] * (1.0 - _pow_int(g[1], b))
    for i in range(2, h):
        inner = 1.0 - _pow_int(g[i - 1], b)
        g[i + 1] = (w / (1.0 + w) * (1.0 - _pow_int(inner, b))
                    + 1.0 / (1.0 + w) * (1.0 - _pow_int(g[i], b)))
    return ZeroProbSeries(omega=w, b=b, values=g)


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    worst_margin: float
    first_violation: int | None


def zero_prob_bound_check(b: int, delta: float, h_max: int) -> BoundCheck:
    """Check g_i <= 1.01^(1/b) / (1+w) for all i <= h_max at
    w = (1+delta) ln(b) / b; reports the worst margin or first violation."""
    from .tree import omega_for_delta
    w = omega_for_delta(delta, b)
    series = zero_prob_series(h_max, b, w)
    bound = math.exp(math.log(1.01) / b) / (1.0 + w)
    margins = bound - series.values[1:]
    worst = float(margins.min())
    if worst >= 0:
        return BoundCheck(holds=True, worst_margin=worst, first_violation=None)
    first = int(np.argmax(margins < 0)) + 1
    return BoundCheck(holds=False, worst_margin=worst, first_violation=first)


def path_sensitivity_bound(h: int, b: int, omega: float) -> float:
    """E[a^N] along the root path, a = 1.01 w (1+w) / lambda, where N counts
    unoccupied vertices strictly above a fixed leaf.

    The spin sequence down a root path is the two-state chain with
    0->1 rate w/(1+w) and 1->0 rate 1; an h-step vector iteration over
    (E[a^N; state 0], E[a^N; state 1]) evaluates the expectation exactly.
    """
    lam = omega * (1.0 + omega) ** b
    a = 1.01 * omega * (1.0 + omega) / lam
    p = 1.0 / (1.0 + omega)
    q = omega / (1.0 + omega)
    f0, f1 = 1.0, 0.0
    for _ in range(h):
        f0, f1 = (f0 * p + f1) * a, f0 * q
    return f0 + f1


@dataclass(frozen=True)
class EstimatorCutReport:
    """Conductance of the cut {output = 1} with the quantities tying it to
    the relaxation-time lower bound."""

    phi: float
    s_bar: float
    r_eff: float
    t_rel: float
    bound_holds: bool | None  # phi <= s_bar / r_eff^2; None when r_eff <= 0

    @property
    def trel_lower(self) -> float:
        return self.r_eff ** 2 / self.s_bar if self.s_bar > 0 else math.inf


def estimator_cut_report(shape: TreeShape, params: ModelParams,
                         boundary=None) -> EstimatorCutReport:
    """Exact conductance of the estimator cut under the broadcast measure,
    with the sensitivity/effectiveness chain evaluated on the same space.

    Degenerate cuts (the output constant over the state space, e.g. under a
    full boundary) surface the conductance domain error.
    """
    scheme = WeightScheme.broadcast(params)
    chain = build_matrix(shape, scheme, boundary)
    occm = chain.space.occupancy_matrix()
    n_states = len(chain)
    outputs = np.zeros(n_states, dtype=bool)
    s_vals = np.zeros(n_states)
    for i in range(n_states):
        leaf_values = occm[i, shape.first_leaf:]
        lab, cnt1 = _label_state(leaf_values, shape)
        outputs[i] = lab.output == 1
        flips = 0
        for leaf in range(shape.first_leaf, shape.n):
            if _flip_changes_output(lab.labels, cnt1, shape, leaf):
                flips += 1
        s_vals[i] = flips / shape.n
    phi = conductance(chain, outputs)
    s_bar = float(chain.pi[outputs] @ s_vals[outputs])
    stats = exact_joint_stats(shape, params.omega)
    rep = spectral_report(chain)
    if stats.r_eff > 0:
        holds = phi <= s_bar / stats.r_eff ** 2 + 1e-12
    else:
        holds = None
    return EstimatorCutReport(phi=phi, s_bar=s_bar, r_eff=stats.r_eff,
                              t_rel=rep.t_rel, bound_holds=holds)
