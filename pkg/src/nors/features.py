"""Symbolic feature trees and their numeric evaluation.

A feature is either the flowed initial condition or an iterated integral

    I[ xi^j * prod_i  d^{a_i} f_i ]

where each child f_i is an earlier feature, a_i is a spatial-derivative
multi-index, and j counts forcing factors.  Trees are canonicalized (factor
multisets sorted), deduplicated by canonical string, scored by a recursive
degree, and generated level by level up to a height with widths
alpha = (m, l, p, q):

    level n adds  I[xi^j prod_{i<=k} d^{a_i} f_i]  with  f_i in level n-1,
    |a_i| <= q,  0 <= j <= p,  1 <= k + j <= m if j == 0 else l,

keeping only trees whose degree stays under the cap.  ``compat`` mode
restricts level 1 to pure forcing integrals I[xi^j], which reproduces the
reference feature listings at height 2 exactly; ``literal`` mode applies the
inductive rule verbatim and yields a superset.
"""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import semigroup, spectral
from .grid import Grid, check_spacetime, check_spatial
from .semigroup import SemigroupContext


# ---------------------------------------------------------------------------
# trees


class FeatureTree:
    """Base class; concrete trees carry a cached canonical string."""

    canon: str

    def __eq__(self, other):
        return isinstance(other, FeatureTree) and self.canon == other.canon

    def __hash__(self):
        return hash(self.canon)

    def __repr__(self):
        return self.canon


class InitialFlow(FeatureTree):
    """The primitive feature: heat flow of the initial condition."""

    def __init__(self):
        self.canon = "Ic[u0]"


class Integral(FeatureTree):
    """I[xi^j * prod d^a child]; factors stored sorted for canonical form."""

    def __init__(self, forcing_power: int, factors):
        if forcing_power < 0:
            raise ValueError("forcing power must be >= 0")
        # multi-indices are stored with trailing zeros stripped, so the same
        # logical derivative has one canonical spelling in any dimension
        factors = tuple(
            sorted(((_strip(tuple(int(x) for x in a)), c) for a, c in factors),
                   key=lambda fc: (fc[1].canon, fc[0]))
        )
        if forcing_power + len(factors) < 1:
            raise ValueError("an integral needs a forcing or at least one factor")
        self.forcing_power = int(forcing_power)
        self.factors = factors
        body = ",".join(
            f"({','.join(map(str, a))}|{c.canon})" for a, c in factors
        )
        self.canon = f"I[xi^{self.forcing_power};{body}]"


def initial_flow() -> InitialFlow:
    return InitialFlow()


def integral(*factors, xi: int = 0) -> Integral:
    """Convenience builder: factors are trees or (tree, axis) / (tree, a) pairs.

    ``integral(t)`` is I[t]; ``integral((t, 0), xi=1)`` is I[xi * d_1 t].
    """
    norm = []
    for f in factors:
        if isinstance(f, FeatureTree):
            norm.append(((), f))
        else:
            tree, ax = f
            norm.append(((ax,) if isinstance(ax, int) else tuple(ax), tree))
    return Integral(xi, [(_axis_to_multi(a), t) for a, t in norm])


def _strip(a: tuple[int, ...]) -> tuple[int, ...]:
    while a and a[-1] == 0:
        a = a[:-1]
    return a


def _axis_to_multi(a: tuple[int, ...]) -> tuple[int, ...]:
    """Builder shorthand: a 1-tuple (axis,) means one derivative on ``axis``
    in up to two dimensions; full multi-indices pass through."""
    if a == ():
        return ()
    if len(a) == 1:
        axis = a[0]
        multi = [0] * (axis + 1)
        multi[axis] = 1
        return tuple(multi)
    return tuple(a)


def _pad(a: tuple[int, ...], d: int) -> tuple[int, ...]:
    return tuple(a) + (0,) * (d - len(a))


# ---------------------------------------------------------------------------
# degrees


@dataclass(frozen=True)
class DegreeRules:
    """Recursive degree: deg I[f] = gain + deg f, derivatives subtract |a|,
    products add, each forcing factor contributes ``forcing_degree``."""

    integral_gain: float = 2.0
    forcing_degree: float = -1.5  # -(d+2)/2 with d = 1
    init_degree: float = 2.0
    cap: float = 7.5

    def __post_init__(self):
        if not self.cap > 0:
            raise ValueError("degree cap must be positive")

    @staticmethod
    def for_dimension(d: int, integral_gain: float = 2.0, init_degree: float = 2.0,
                      cap: float = 7.5) -> "DegreeRules":
        return DegreeRules(integral_gain, -(d + 2) / 2.0, init_degree, cap)


def degree(tree: FeatureTree, rules: DegreeRules) -> float:
    if isinstance(tree, InitialFlow):
        return rules.init_degree
    total = rules.integral_gain + tree.forcing_power * rules.forcing_degree
    for a, child in tree.factors:
        total += degree(child, rules) - sum(a)
    return total


# ---------------------------------------------------------------------------
# model specification and basis


@dataclass(frozen=True)
class ModelSpec:
    spatial_dim: int
    additive_width: int = 3
    multiplicative_width: int = 1
    forcing_order: int = 1
    derivative_order: int = 0
    height: int = 2
    rules: DegreeRules | None = None
    mode: str = "literal"  # or "compat"

    def __post_init__(self):
        if min(self.additive_width, self.multiplicative_width,
               self.forcing_order, self.derivative_order) < 0:
            raise ValueError("widths and orders must be >= 0")
        if self.height < 0:
            raise ValueError("height must be >= 0")
        if self.mode not in ("literal", "compat"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.rules is None:
            object.__setattr__(self, "rules", DegreeRules.for_dimension(self.spatial_dim))

    @property
    def alpha(self) -> tuple[int, int, int, int]:
        return (self.additive_width, self.multiplicative_width,
                self.forcing_order, self.derivative_order)


@dataclass(frozen=True)
class ModelBasis:
    """Ordered, deduplicated features with height/degree metadata."""

    spec: ModelSpec
    trees: tuple[FeatureTree, ...]
    heights: tuple[int, ...]
    degrees: tuple[float, ...]
    index: dict = field(repr=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(
            self, "index", {t.canon: i for i, t in enumerate(self.trees)}
        )

    def __len__(self):
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)

    def __contains__(self, tree: FeatureTree):
        return tree.canon in self.index

    def lines(self) -> list[str]:
        """Stable listing: canonical string, height, degree."""
        return [
            f"{t.canon}\t{h}\t{d:g}"
            for t, h, d in zip(self.trees, self.heights, self.degrees)
        ]

    def content_hash(self) -> str:
        return hashlib.sha256("\n".join(self.lines()).encode()).hexdigest()


def _multi_indices(d: int, q: int) -> list[tuple[int, ...]]:
    """All derivative multi-indices with |a| <= q, zero first."""
    out = [a for a in itertools.product(range(q + 1), repeat=d) if sum(a) <= q]
    out.sort(key=lambda a: (sum(a), a))
    return out


def generate_model(spec: ModelSpec) -> ModelBasis:
    """Run the inductive construction up to ``spec.height``."""
    rules = spec.rules
    m, l, p, q = spec.alpha
    members: dict[str, tuple[FeatureTree, int, float]] = {}
    root = initial_flow()
    members[root.canon] = (root, 0, degree(root, rules))

    for level in range(1, spec.height + 1):
        pool = [(t, deg) for t, _, deg in members.values()]
        # factor options: (adjusted degree, canon, a, tree), sorted for pruning
        options = []
        for tree, deg in pool:
            for a in _multi_indices(spec.spatial_dim, q):
                options.append((deg - sum(a), tree.canon, a, tree))
        options.sort(key=lambda o: (o[0], o[1], o[2]))
        compat_level1 = spec.mode == "compat" and level == 1

        new: list[Integral] = []
        emitted_any = False
        for j in range(0, p + 1):
            min_k = 1 if j == 0 else 0
            max_k = (m if j == 0 else l) - j
            if max_k < min_k:
                continue
            if compat_level1:
                if j == 0:
                    continue
                max_k = 0  # pure forcing integrals only
            budget = rules.cap - rules.integral_gain - j * rules.forcing_degree

            def emit(chosen):
                tree = Integral(j, [(a, t) for _, _, a, t in chosen])
                new.append(tree)

            def rec(start: int, chosen: list, left: float, k: int):
                nonlocal emitted_any
                if k >= min_k and (k > 0 or j > 0):
                    emitted_any = True
                    emit(chosen)
                if k == max_k:
                    return
                for i in range(start, len(options)):
                    if options[i][0] > left:
                        break  # options sorted ascending: all later ones exceed
                    chosen.append(options[i])
                    rec(i, chosen, left - options[i][0], k + 1)
                    chosen.pop()

            rec(0, [], budget, 0)

        if level == 1 and not emitted_any:
            raise ValueError(
                f"widths alpha={spec.alpha} admit no level-1 features"
            )
        for tree in new:
            if tree.canon not in members:
                members[tree.canon] = (tree, level, degree(tree, rules))

    entries = sorted(members.values(), key=lambda e: (e[1], e[2], e[0].canon))
    return ModelBasis(
        spec=spec,
        trees=tuple(e[0] for e in entries),
        heights=tuple(e[1] for e in entries),
        degrees=tuple(e[2] for e in entries),
    )


# ---------------------------------------------------------------------------
# numeric evaluation


def evaluate_features(basis: ModelBasis, u0: np.ndarray, xi: np.ndarray,
                      ctx: SemigroupContext) -> list[np.ndarray]:
    """Evaluate every feature into a space-time field, sharing subtrees.

    Each distinct subtree is integrated exactly once per call; derivative
    values are cached per (subtree, multi-index).
    """
    u0 = check_spatial(ctx.grid, u0, "u0")
    xi = check_spacetime(ctx.grid, xi, "xi")
    d = ctx.grid.spatial_dim
    tree_vals: dict[str, np.ndarray] = {}
    deriv_vals: dict[tuple[str, tuple[int, ...]], np.ndarray] = {}

    def value(tree: FeatureTree) -> np.ndarray:
        got = tree_vals.get(tree.canon)
        if got is not None:
            return got
        if isinstance(tree, InitialFlow):
            val = semigroup.heat_evolve(ctx, u0)
        else:
            parts = []
            if tree.forcing_power == 1:
                parts.append(xi)
            elif tree.forcing_power > 1:
                parts.append(xi ** tree.forcing_power)
            for a, child in tree.factors:
                parts.append(factor_value(a, child))
            integrand = semigroup.pointwise_product(*parts)
            val = semigroup.duhamel_integral(ctx, integrand)
        tree_vals[tree.canon] = val
        return val

    def factor_value(a: tuple[int, ...], child: FeatureTree) -> np.ndarray:
        a = _pad(a, d)
        if not any(a):
            return value(child)
        key = (child.canon, a)
        got = deriv_vals.get(key)
        if got is not None:
            return got
        val = value(child)
        for axis, order in enumerate(a):
            for _ in range(order):
                val = spectral.derivative(val, axis, d)
        deriv_vals[key] = val
        return val

    return [value(t) for t in basis.trees]


def assemble_input(features: list[np.ndarray], grid: Grid) -> np.ndarray:
    """Stack final-time feature slices with normalized coordinates.

    Returns shape (X_1, ..., X_d, m + d): channel c < m is feature c at t=T,
    the remaining d channels are the grid coordinates in [0, 1).
    """
    if not features:
        raise ValueError("need at least one feature")
    finals = []
    for f in features:
        f = np.asarray(f, dtype=np.float64)
        want = grid.spacetime_shape
        if f.shape == want:
            finals.append(f[-1])
        elif f.shape == grid.space_shape:
            finals.append(f)
        else:
            raise ValueError(f"feature shape {f.shape} fits neither {want} nor {grid.space_shape}")
    return np.stack(finals + grid.meshgrid(), axis=-1)


def pretty(tree: FeatureTree) -> str:
    """Human-oriented rendering, e.g. I[xi (I[xi])^2 (d1 Ic[u0])]."""
    if isinstance(tree, InitialFlow):
        return "Ic[u0]"
    parts = []
    if tree.forcing_power == 1:
        parts.append("xi")
    elif tree.forcing_power > 1:
        parts.append(f"xi^{tree.forcing_power}")
    grouped: list[tuple[str, int]] = []
    for a, child in tree.factors:
        term = pretty(child)
        if any(a):
            ops = " ".join(f"d{i + 1}" * n for i, n in enumerate(a) if n)
            term = f"{ops} {term}"
        if grouped and grouped[-1][0] == term:
            grouped[-1] = (term, grouped[-1][1] + 1)
        else:
            grouped.append((term, 1))
    for term, count in grouped:
        parts.append(f"({term})" + (f"^{count}" if count > 1 else ""))
    return "I[" + " ".join(parts) + "]"
