"""Tree topology, model parameters, configurations and boundary conditions.

Vertices of the complete b-ary tree of height h are indexed in level order:
the root is 0, the children of v are b*v+1 .. b*v+b, and the leaves are the
last b**h indices.  The root has b children throughout.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np

from .errors import DomainError, StructuralError

MAX_BRANCHING = 2 ** 16
MAX_HEIGHT = 60
# materialized trees (arrays indexed by vertex) refuse to allocate past this
MAX_MATERIALIZED = 2 ** 26


def tree_size(b: int, h: int) -> int:
    """Vertex count (b**(h+1)-1)/(b-1), overflow-checked via integer math."""
    if b < 2 or b > MAX_BRANCHING:
        raise DomainError(f"branching factor {b} outside [2, {MAX_BRANCHING}]")
    if h < 0 or h > MAX_HEIGHT:
        raise DomainError(f"height {h} outside [0, {MAX_HEIGHT}]")
    return (b ** (h + 1) - 1) // (b - 1)


@dataclass(frozen=True)
class TreeShape:
    """Complete b-ary tree of height h with level-order vertex indexing."""

    b: int
    h: int
    n: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", tree_size(self.b, self.h))

    @property
    def num_leaves(self) -> int:
        return self.b ** self.h

    @property
    def first_leaf(self) -> int:
        return self.n - self.num_leaves

    def parent(self, v: int) -> int:
        if v <= 0 or v >= self.n:
            raise DomainError(f"vertex {v} has no parent")
        return (v - 1) // self.b

    def children(self, v: int) -> range:
        lo = self.b * v + 1
        if lo >= self.n:
            return range(0)
        return range(lo, lo + self.b)

    def depth(self, v: int) -> int:
        d = 0
        while v > 0:
            v = (v - 1) // self.b
            d += 1
        return d

    def level_slice(self, d: int) -> slice:
        """Contiguous index range of the vertices at depth d."""
        if d < 0 or d > self.h:
            raise DomainError(f"depth {d} outside [0, {self.h}]")
        start = (self.b ** d - 1) // (self.b - 1)
        return slice(start, start + self.b ** d)

    def depths(self) -> np.ndarray:
        """Depth of every vertex, in index order."""
        out = np.empty(self.n, dtype=np.int64)
        for d in range(self.h + 1):
            out[self.level_slice(d)] = d
        return out


def solve_omega(lam: float, b: int) -> float:
    """Unique positive root of omega*(1+omega)**b = lam.

    Bracketed bisection refined by Newton steps on the monotone log form
    g(w) = ln w + b*ln(1+w) - ln lam, which cannot overflow.  The map
    w*(1+w)**b >= w, so [0, max(lam, 1)] brackets the root.
    """
    if lam <= 0:
        raise DomainError(f"activity must be positive, got {lam}")
    if b < 1:
        raise DomainError(f"branching factor must be >= 1, got {b}")
    log_lam = math.log(lam)

    def g(w):
        return math.log(w) + b * math.log1p(w) - log_lam

    lo = min(lam, 1.0) * 1e-3
    while g(lo) > 0.0:
        lo *= 1e-3
    hi = max(lam, 1.0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * max(1.0, lo):
            break
    w = 0.5 * (lo + hi)
    # Newton polish: g'(w) = 1/w + b/(1+w)
    for _ in range(16):
        gw = g(w)
        step = gw / (1.0 / w + b / (1.0 + w))
        w_new = w - step
        if w_new <= 0.0:
            break
        w = w_new
        if abs(gw) <= 1e-15:
            break
    return w


def omega_for_delta(delta: float, b: int) -> float:
    """omega = (1+delta) * ln(b) / b for delta > -1."""
    if b < 2:
        raise DomainError(f"branching factor must be >= 2, got {b}")
    if (1.0 + delta) * math.log(b) <= 0.0:
        raise DomainError(f"(1+delta)*ln(b) must be positive, got delta={delta}")
    return (1.0 + delta) * math.log(b) / b


def uniqueness_threshold(b: int) -> float:
    """Critical activity b**b / (b-1)**(b+1)."""
    if b < 2:
        raise DomainError(f"branching factor must be >= 2, got {b}")
    if b <= 256:
        # exact integer ratio, correctly rounded on conversion
        from fractions import Fraction
        return float(Fraction(b ** b, (b - 1) ** (b + 1)))
    return math.exp(b * math.log(b) - (b + 1) * math.log(b - 1))


@dataclass(frozen=True)
class ModelParams:
    """Activity pair (lambda, omega) linked by lambda = omega*(1+omega)**b.

    Construct with exactly one of lam / omega / delta; the others are derived.
    """

    b: int
    lam: float
    omega: float
    delta: float | None = None

    def __post_init__(self):
        if self.lam <= 0 or self.omega <= 0:
            raise DomainError("activities must be positive")
        expect = self.omega * (1.0 + self.omega) ** self.b
        if abs(expect - self.lam) > 1e-10 * max(1.0, abs(self.lam)):
            raise DomainError(
                f"lambda={self.lam} inconsistent with omega={self.omega} at b={self.b}")

    @classmethod
    def from_lambda(cls, b: int, lam: float) -> "ModelParams":
        return cls(b=b, lam=lam, omega=solve_omega(lam, b))

    @classmethod
    def from_omega(cls, b: int, omega: float) -> "ModelParams":
        if omega <= 0:
            raise DomainError(f"omega must be positive, got {omega}")
        return cls(b=b, lam=omega * (1.0 + omega) ** b, omega=omega)

    @classmethod
    def from_delta(cls, b: int, delta: float) -> "ModelParams":
        omega = omega_for_delta(delta, b)
        return cls(b=b, lam=omega * (1.0 + omega) ** b, omega=omega, delta=delta)


def _bits_to_hex(bits: np.ndarray) -> str:
    """Pack a bit vector into hex, MSB of the first digit = entry 0."""
    nbits = len(bits)
    pad = (-nbits) % 4
    padded = np.concatenate([bits.astype(np.uint8), np.zeros(pad, dtype=np.uint8)])
    digits = []
    for i in range(0, len(padded), 4):
        val = padded[i] << 3 | padded[i + 1] << 2 | padded[i + 2] << 1 | padded[i + 3]
        digits.append(format(int(val), "x"))
    return "".join(digits)


def _hex_to_bits(s: str, nbits: int) -> np.ndarray:
    if len(s) * 4 < nbits:
        raise StructuralError(f"hex string {s!r} too short for {nbits} bits")
    bits = np.zeros(len(s) * 4, dtype=bool)
    for i, ch in enumerate(s):
        val = int(ch, 16)
        bits[4 * i] = val & 8
        bits[4 * i + 1] = val & 4
        bits[4 * i + 2] = val & 2
        bits[4 * i + 3] = val & 1
    if bits[nbits:].any():
        raise StructuralError("nonzero padding bits in hex string")
    return bits[:nbits]


@dataclass(frozen=True)
class Configuration:
    """Occupancy pattern over the vertices of a tree, in level order."""

    occ: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "occ", np.asarray(self.occ, dtype=bool))
        self.occ.setflags(write=False)

    def __eq__(self, other):
        return isinstance(other, Configuration) and np.array_equal(self.occ, other.occ)

    def __hash__(self):
        return hash(self.occ.tobytes())

    @property
    def size(self) -> int:
        return len(self.occ)

    def count(self) -> int:
        return int(self.occ.sum())

    def to_hex(self) -> str:
        return _bits_to_hex(self.occ)

    @classmethod
    def from_hex(cls, s: str, n: int) -> "Configuration":
        return cls(_hex_to_bits(s, n))

    @classmethod
    def empty(cls, n: int) -> "Configuration":
        return cls(np.zeros(n, dtype=bool))


def is_independent(occ: np.ndarray, shape: TreeShape) -> bool:
    """True iff no vertex and its parent are both occupied."""
    if len(occ) != shape.n:
        raise StructuralError(
            f"configuration size {len(occ)} != vertex count {shape.n}")
    if shape.n == 1:
        return True
    v = np.arange(1, shape.n)
    parents = (v - 1) // shape.b
    return not np.any(occ[v] & occ[parents])


BOUNDARY_KINDS = ("free", "explicit", "U", "L")


@dataclass(frozen=True)
class BoundaryCondition:
    """Occupancy pattern frozen on the leaves.

    kind "free" leaves all leaves unconstrained; every other kind freezes
    every leaf (occupied leaves are exactly the set bits).  Kinds "U"/"L"
    tag patterns produced by the recursive upper/lower construction in
    :mod:`hardtree.boundary`.
    """

    kind: str
    leaf_occ: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise DomainError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "free":
            if self.leaf_occ is not None:
                raise StructuralError("free boundary carries no leaf pattern")
        else:
            if self.leaf_occ is None:
                raise StructuralError(f"{self.kind} boundary requires a leaf pattern")
            object.__setattr__(self, "leaf_occ", np.asarray(self.leaf_occ, dtype=bool))
            self.leaf_occ.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, BoundaryCondition) or self.kind != other.kind:
            return False
        if self.kind == "free":
            return True
        return np.array_equal(self.leaf_occ, other.leaf_occ)

    @classmethod
    def free(cls) -> "BoundaryCondition":
        return cls(kind="free")

    @classmethod
    def explicit(cls, leaf_occ) -> "BoundaryCondition":
        return cls(kind="explicit", leaf_occ=np.asarray(leaf_occ, dtype=bool))

    def is_free(self) -> bool:
        return self.kind == "free"

    def check_shape(self, shape: TreeShape) -> None:
        if not self.is_free() and len(self.leaf_occ) != shape.num_leaves:
            raise StructuralError(
                f"boundary has {len(self.leaf_occ)} leaves, tree has {shape.num_leaves}")

    def to_json(self, shape: TreeShape) -> str:
        self.check_shape(shape)
        payload = {"b": shape.b, "h": shape.h, "kind": self.kind}
        if not self.is_free():
            payload["leaf_bits"] = _bits_to_hex(self.leaf_occ)
        return json.dumps(payload, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> tuple["BoundaryCondition", TreeShape]:
        payload = json.loads(s)
        shape = TreeShape(b=payload["b"], h=payload["h"])
        kind = payload["kind"]
        if kind == "free":
            return cls.free(), shape
        bits = _hex_to_bits(payload["leaf_bits"], shape.num_leaves)
        return cls(kind=kind, leaf_occ=bits), shape


def validate(config: Configuration, shape: TreeShape,
             boundary: BoundaryCondition) -> bool:
    """True iff config is an independent set agreeing with the boundary."""
    if config.size != shape.n:
        raise StructuralError(
            f"configuration size {config.size} != vertex count {shape.n}")
    boundary.check_shape(shape)
    if not is_independent(config.occ, shape):
        return False
    if boundary.is_free():
        return True
    return bool(np.array_equal(config.occ[shape.first_leaf:], boundary.leaf_occ))


def count_independent_sets(shape: TreeShape,
                           boundary: BoundaryCondition | None = None) -> int:
    """Exact count of independent sets compatible with the boundary.

    Bottom-up (unoccupied, occupied) pair recursion; exact integer arithmetic.
    """
    if boundary is None:
        boundary = BoundaryCondition.free()
    boundary.check_shape(shape)
    if boundary.is_free():
        unocc, occ = 1, 1
        for _ in range(shape.h):
            unocc, occ = (unocc + occ) ** shape.b, unocc ** shape.b
        return unocc + occ
    # leaves frozen: per-leaf (unocc, occ) counts are (1,0) or (0,1)
    unocc = [0 if bit else 1 for bit in boundary.leaf_occ]
    occ = [1 if bit else 0 for bit in boundary.leaf_occ]
    for _ in range(shape.h):
        b = shape.b
        nxt_unocc, nxt_occ = [], []
        for i in range(0, len(unocc), b):
            tot = 1
            blocked = 1
            for j in range(i, i + b):
                tot *= unocc[j] + occ[j]
                blocked *= unocc[j]
            nxt_unocc.append(tot)
            nxt_occ.append(blocked)
        unocc, occ = nxt_unocc, nxt_occ
    return unocc[0] + occ[0]
