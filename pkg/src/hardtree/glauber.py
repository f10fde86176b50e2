"""Single-site heat-bath dynamics: trajectories, explicit transition
matrices, spectral gap / relaxation time, conductance, and mixing times.

Vertex selection is uniform over the free vertices: leaves frozen by an
explicit boundary are never selected.  The paper-time chain (selection
uniform over all n vertices, frozen picks being null moves) has eigenvalues
related by an exact affine map, so its relaxation time is
t_rel * n / n_free; reports carry the factor.
"""

from dataclasses import dataclass
import io
import math

import numpy as np
import scipy.sparse as sp

from .errors import (BudgetError, CapacityError, ConsistencyError, DomainError,
                     StructuralError)
from .gibbs import StateSpace, WeightScheme, enumerate_states
from .rng import make_rng
from .tree import BoundaryCondition, Configuration, TreeShape, validate

DENSE_CAP = 2 * 10 ** 5
SPARSE_CAP = 10 ** 7
SPARSE_THRESHOLD = 10 ** 4
DENSE_EIG_LIMIT = 2000


def _free_vertices(shape: TreeShape, boundary: BoundaryCondition) -> np.ndarray:
    if boundary.is_free():
        return np.arange(shape.n)
    return np.arange(shape.first_leaf)


def glauber_step(config: Configuration, shape: TreeShape, scheme: WeightScheme,
                 boundary: BoundaryCondition, rng) -> Configuration:
    """One heat-bath update at a uniformly chosen free vertex.

    If every neighbor of the chosen vertex is unoccupied the vertex
    resamples: occupied with probability a/(1+a) for its activity a;
    otherwise it is set unoccupied.
    """
    if not validate(config, shape, boundary):
        raise StructuralError("input configuration invalid for shape/boundary")
    free = _free_vertices(shape, boundary)
    v = int(free[rng.integers(len(free))])
    occ = np.array(config.occ)
    blocked = False
    if v > 0 and occ[shape.parent(v)]:
        blocked = True
    if not blocked:
        for w in shape.children(v):
            if occ[w]:
                blocked = True
                break
    if blocked:
        occ[v] = False
    else:
        a = (scheme.leaf_activity if v >= shape.first_leaf
             else scheme.internal_activity)
        occ[v] = rng.random() < a / (1.0 + a)
    return Configuration(occ)


@dataclass(frozen=True)
class ChainMatrix:
    """Explicit transition matrix over an enumerated state space.

    P is row-stochastic (dense ndarray or scipy CSR); pi is the exact
    stationary vector.  n_free/n records the vertex-selection convention.
    """

    space: StateSpace
    P: object
    pi: np.ndarray
    n_free: int

    def __len__(self):
        return len(self.pi)

    @property
    def is_dense(self) -> bool:
        return isinstance(self.P, np.ndarray)

    def dense(self) -> np.ndarray:
        return self.P if self.is_dense else self.P.toarray()

    @property
    def time_factor(self) -> float:
        """Multiplier converting chain time to uniform-over-all-vertices time."""
        return self.space.shape.n / self.n_free

    def check_detailed_balance(self, tol: float = 1e-10) -> float:
        """Max |pi(x)P(x,y) - pi(y)P(y,x)|; raises above tol."""
        if self.is_dense:
            F = self.P * self.pi[:, None]
            gap = float(np.max(np.abs(F - F.T)))
        else:
            F = self.P.multiply(self.pi[:, None]).tocsr()
            gap = float(np.max(np.abs((F - F.T).data))) if (F - F.T).nnz else 0.0
        if gap > tol:
            raise ConsistencyError(f"detailed balance violated by {gap}")
        return gap


def build_matrix(shape: TreeShape, scheme: WeightScheme,
                 boundary: BoundaryCondition | None = None) -> ChainMatrix:
    """Exact transition matrix of the heat-bath dynamics on the enumerated
    state space; stationary vector taken from the exact Gibbs weights."""
    if boundary is None:
        boundary = BoundaryCondition.free()
    space = enumerate_states(shape, scheme, boundary)
    N = len(space)
    if N > SPARSE_CAP:
        raise CapacityError(f"{N} states exceeds sparse cap", estimate=N)
    free = _free_vertices(shape, boundary)
    n_free = len(free)
    act = scheme.activities(shape)

    # neighbor bit masks
    nbr = np.zeros(shape.n, dtype=np.uint64)
    for v in range(shape.n):
        bits = 0
        if v > 0:
            bits |= 1 << shape.parent(v)
        for w in shape.children(v):
            bits |= 1 << w
        nbr[v] = bits

    masks = space.masks
    rows, cols, vals = [], [], []
    diag = np.zeros(N)
    pick = 1.0 / n_free
    for v in free:
        bit = np.uint64(1 << int(v))
        blocked = (masks & nbr[v]) != 0
        occ_target = masks | bit
        unocc_target = masks & ~bit
        p_occ = np.where(blocked, 0.0, pick * act[v] / (1.0 + act[v]))
        p_unocc = np.where(blocked, pick, pick / (1.0 + act[v]))
        # occupied-target contribution
        same = occ_target == masks
        diag += np.where(same, p_occ, 0.0)
        idx = space.index_of(occ_target[~same])
        rows.append(np.nonzero(~same)[0])
        cols.append(idx)
        vals.append(p_occ[~same])
        # unoccupied-target contribution
        same = unocc_target == masks
        diag += np.where(same, p_unocc, 0.0)
        idx = space.index_of(unocc_target[~same])
        rows.append(np.nonzero(~same)[0])
        cols.append(idx)
        vals.append(p_unocc[~same])

    rows = np.concatenate(rows + [np.arange(N)])
    cols = np.concatenate(cols + [np.arange(N)])
    vals = np.concatenate(vals + [diag])
    keep = vals != 0.0
    P = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(N, N))
    if N <= SPARSE_THRESHOLD:
        P = np.asarray(P.todense())
    pi = space.probs
    # row sums and stationarity are structural guarantees; verify cheaply
    rs = P.sum(axis=1)
    rs = np.asarray(rs).ravel()
    if np.max(np.abs(rs - 1.0)) > 1e-12:
        raise ConsistencyError("row sums deviate from 1")
    flow = pi @ P if isinstance(P, np.ndarray) else np.asarray(pi @ P).ravel()
    if np.max(np.abs(flow - pi)) > 1e-10:
        raise ConsistencyError("stationary vector mismatch")
    return ChainMatrix(space=space, P=P, pi=pi, n_free=n_free)


@dataclass(frozen=True)
class SpectralReport:
    """Second eigenvalue data of a reversible chain.

    gap = 1 - max(gamma2, |gamma_min|); t_rel = 1/gap.  binding records
    which of gamma2 / gamma_min attains the maximum modulus.
    """

    gamma2: float
    gamma_min: float
    gap: float
    t_rel: float
    binding: str
    method: str

    @classmethod
    def from_eigs(cls, gamma2: float, gamma_min: float, method: str) -> "SpectralReport":
        top = max(gamma2, abs(gamma_min))
        binding = "gamma2" if gamma2 >= abs(gamma_min) else "gamma_min"
        gap = 1.0 - top
        return cls(gamma2=gamma2, gamma_min=gamma_min, gap=gap,
                   t_rel=(1.0 / gap if gap > 0 else math.inf),
                   binding=binding, method=method)


def _symmetrize(chain: ChainMatrix):
    d = np.sqrt(chain.pi)
    if chain.is_dense:
        A = chain.P * (d[:, None] / d[None, :])
        A = 0.5 * (A + A.T)
        return A
    D = sp.diags(d)
    Dinv = sp.diags(1.0 / d)
    A = (D @ chain.P @ Dinv).tocsr()
    return 0.5 * (A + A.T)


def _power_top(matvec, n, v0, tol=1e-12, max_iter=200000):
    """Largest-magnitude eigenpair by power iteration with Rayleigh quotient."""
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    for it in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, v, 0.0
        v_new = w / nw
        lam = float(v_new @ matvec(v_new))
        res = np.linalg.norm(matvec(v_new) - lam * v_new)
        v = v_new
        if res <= tol:
            break
    return lam, v, res


def spectral_report(chain: ChainMatrix, validate_balance: bool = True) -> SpectralReport:
    """gamma2 and gamma_min via the symmetric similarity transform.

    Dense eigensolve below DENSE_EIG_LIMIT states; otherwise shifted power
    iterations with the known top eigenvector deflated.  Residuals are
    checked against 1e-8.
    """
    if validate_balance:
        # reuse the detailed-balance invariant with the spectral tolerance
        try:
            chain.check_detailed_balance(tol=1e-8)
        except ConsistencyError:
            raise
    N = len(chain)
    if N == 1:
        return SpectralReport(gamma2=0.0, gamma_min=0.0, gap=1.0, t_rel=1.0,
                              binding="gamma2", method="trivial")
    A = _symmetrize(chain)
    if N <= DENSE_EIG_LIMIT:
        dense = A if isinstance(A, np.ndarray) else A.toarray()
        eigs = np.linalg.eigvalsh(dense)
        return SpectralReport.from_eigs(gamma2=float(eigs[-2]),
                                        gamma_min=float(eigs[0]), method="dense")
    return _spectral_power(A, chain.pi)


def _spectral_power(A, pi) -> SpectralReport:
    n = len(pi)
    top = np.sqrt(pi)
    top /= np.linalg.norm(top)
    rng = make_rng(1234)

    def defl_matvec(shift_sign):
        # (shift_sign * A + I) restricted to the complement of the top vector
        def mv(v):
            v = v - (top @ v) * top
            w = A @ v
            w = shift_sign * w + v
            return w - (top @ w) * top
        return mv

    v0 = rng.standard_normal(n)
    lam_plus, vec, res1 = _power_top(defl_matvec(+1.0), n, v0)
    gamma2 = lam_plus - 1.0
    v0 = rng.standard_normal(n)
    lam_minus, vec2, res2 = _power_top(defl_matvec(-1.0), n, v0)
    gamma_min = 1.0 - lam_minus
    # residuals in the original matrix
    for vv, gg in ((vec, gamma2), (vec2, gamma_min)):
        vv = vv - (top @ vv) * top
        nv = np.linalg.norm(vv)
        if nv > 0:
            vv = vv / nv
            res = np.linalg.norm(A @ vv - gg * vv)
            if res > 1e-8:
                raise ConsistencyError(f"eigenvalue residual {res} above 1e-8")
    return SpectralReport.from_eigs(gamma2=float(gamma2),
                                    gamma_min=float(gamma_min), method="power")


def conductance(chain: ChainMatrix, in_set: np.ndarray) -> float:
    """Phi_S = flow(S, complement) / (pi(S) pi(complement))."""
    in_set = np.asarray(in_set, dtype=bool)
    if in_set.shape != chain.pi.shape:
        raise StructuralError("set indicator does not match state count")
    ps = float(chain.pi[in_set].sum())
    if not in_set.any() or in_set.all():
        raise DomainError("conductance needs a proper nonempty subset")
    P = chain.P
    if chain.is_dense:
        flow = float(chain.pi[in_set] @ P[np.ix_(in_set, ~in_set)].sum(axis=1))
    else:
        sub = P[in_set][:, ~in_set]
        flow = float(chain.pi[in_set] @ np.asarray(sub.sum(axis=1)).ravel())
    return flow / (ps * (1.0 - ps))


def best_conductance_exhaustive(chain: ChainMatrix) -> tuple[float, int]:
    """Minimum Phi_S over all proper subsets; exponential, for tiny chains."""
    N = len(chain)
    if N > 16:
        raise CapacityError(f"{N} states too many for exhaustive cuts")
    best, best_mask = math.inf, 0
    for mask in range(1, (1 << N) - 1):
        ind = np.array([(mask >> i) & 1 for i in range(N)], dtype=bool)
        phi = conductance(chain, ind)
        if phi < best:
            best, best_mask = phi, mask
    return best, best_mask


def _tv_rows(M: np.ndarray, pi: np.ndarray) -> float:
    return float(0.5 * np.abs(M - pi[None, :]).sum(axis=1).max())


def _extreme_states(chain: ChainMatrix) -> list[int]:
    counts = chain.space.occupancy_matrix().sum(axis=1)
    return [int(np.argmin(counts)), int(np.argmax(counts))]


def empirical_mixing(chain: ChainMatrix, eps: float = 1.0 / (2.0 * math.e),
                     starts: str = "extremes", budget: int = 10 ** 6) -> int:
    """Smallest t with TV(P^t(x0, .), pi) <= eps over the chosen starts.

    starts="extremes" follows the two extreme-occupancy states;
    starts="all" computes the true worst-start distance d(t) via repeated
    squaring and binary search (d is non-increasing in t).
    """
    if eps >= 1.0:
        return 0
    N = len(chain)
    pi = chain.pi
    P = chain.dense() if N <= 4096 or chain.is_dense else None
    if P is None:
        raise CapacityError(f"{N} states too many for matrix powering")
    if starts == "all":
        if _tv_rows(np.eye(N), pi) <= eps:
            return 0
        # bracket by squaring: M_k = P^(2^k)
        powers = [P]
        t = 1
        while _tv_rows(powers[-1], pi) > eps:
            powers.append(powers[-1] @ powers[-1])
            t *= 2
            if t > budget:
                raise BudgetError(f"no mixing within {budget} steps")
        lo, hi = t // 2, t  # d(lo) > eps >= d(hi), except t=1
        if t == 1:
            return 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            M = None
            k, rem = 0, mid
            while rem:
                if rem & 1:
                    M = powers[k] if M is None else M @ powers[k]
                rem >>= 1
                k += 1
            if _tv_rows(M, pi) <= eps:
                hi = mid
            else:
                lo = mid
        return hi
    if starts != "extremes":
        raise DomainError(f"unknown starts mode {starts!r}")
    rows = _extreme_states(chain)
    dists = np.zeros((len(rows), N))
    for i, s in enumerate(rows):
        dists[i, s] = 1.0
    t = 0
    while True:
        tv = float(0.5 * np.abs(dists - pi[None, :]).sum(axis=1).max())
        if tv <= eps:
            return t
        if t >= budget:
            raise BudgetError(f"no mixing within {budget} steps")
        dists = dists @ P
        t += 1


def autocorrelation_mixing_proxy(shape: TreeShape, scheme: WeightScheme,
                                 boundary: BoundaryCondition, seed: int = 0,
                                 steps: int = 200000) -> dict:
    """Heuristic mixing proxy from the root-occupancy autocorrelation time.

    Used when the state space is not enumerable; always flagged heuristic.
    """
    rng = make_rng(seed)
    cfg = Configuration.empty(shape.n)
    series = np.empty(steps, dtype=np.float64)
    for t in range(steps):
        cfg = glauber_step(cfg, shape, scheme, boundary, rng)
        series[t] = cfg.occ[0]
    x = series - series.mean()
    var = float(x @ x) / steps
    if var == 0.0:
        return {"tau_int": float("nan"), "heuristic": True, "steps": steps}
    tau = 1.0
    for lag in range(1, steps // 2):
        c = float(x[:-lag] @ x[lag:]) / ((steps - lag) * var)
        if c <= 0.05:
            break
        tau += 2.0 * c
    return {"tau_int": tau, "heuristic": True, "steps": steps}


def spectral_csv_row(shape: TreeShape, scheme: WeightScheme,
                     boundary: BoundaryCondition, report: SpectralReport,
                     phi: float | None, descriptor: str,
                     lam: float, omega: float | None,
                     delta: float | None) -> str:
    buf = io.StringIO()
    for val in (shape.b, shape.h, shape.n):
        buf.write(f"{val},")
    for val in (lam, omega, delta):
        buf.write("" if val is None else f"{val:.17g}")
        buf.write(",")
    buf.write(f"{boundary.kind},{report.gap:.17g},{report.t_rel:.17g},"
              f"{report.gamma2:.17g},{report.gamma_min:.17g},")
    buf.write("" if phi is None else f"{phi:.17g}")
    buf.write(f",{descriptor}")
    return buf.getvalue()
