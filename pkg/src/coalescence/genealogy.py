"""Ancestral trees of terminal boxes and their conditional laws.

Read backwards from a level-N box, the consumption links form a
branching tree: the root's children are the M_N boxes it merged, theirs
the M_{N-1} boxes they merged, and so on down to level 0. Depth nu in the
tree is level N - nu. The tree of a size-j box is distributed as a
branching process with reversed offspring laws f_N, f_{N-1}, ..., f_1
conditioned on exactly j individuals at depth N.
"""
from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence, Union

import numpy as np

from . import polynomial as poly
from .errors import (
    BudgetExceededError,
    InsufficientSamplesError,
    NullConditioningError,
    TractabilityError,
)
from .mechanisms import Affine, FiniteSupport, Mechanism, QuadraticStep
from .simulator import RunLog, _build_levels

MAX_EXACT_HORIZON = 6
MAX_EXACT_SUPPORT = 3
MIN_CONDITIONED_SAMPLES = 1000


@dataclass
class TreeNode:
    level: int
    index: int
    size: int
    draw: Optional[int]
    children: list["TreeNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"size": self.size, "M": self.draw, "children": [c.to_dict() for c in self.children]}


@dataclass
class AncestralTree:
    root: TreeNode
    horizon: int

    def nodes_by_depth(self) -> list[list[TreeNode]]:
        out = [[self.root]]
        while True:
            nxt = [c for node in out[-1] for c in node.children]
            if not nxt:
                return out
            out.append(nxt)

    @property
    def height(self) -> int:
        return len(self.nodes_by_depth()) - 1

    def leaves_at_depth(self, depth: int) -> int:
        layers = self.nodes_by_depth()
        if depth >= len(layers):
            return 0
        return sum(1 for n in layers[depth] if not n.children)

    def to_json(self) -> str:
        return json.dumps(self.root.to_dict(), sort_keys=True)

    def to_dot(self, name: str = "ancestry") -> str:
        lines = [f"digraph {name} {{", "  node [shape=circle];"]
        for depth, layer in enumerate(self.nodes_by_depth()):
            for node in layer:
                nid = f"n{node.level}_{node.index}"
                fill = ', style=filled, fillcolor="#dddddd"' if node.size == 0 else ""
                lines.append(f'  {nid} [label="{node.size}"{fill}];')
                for c in node.children:
                    lines.append(f"  {nid} -> n{c.level}_{c.index};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def extract_tree(log: RunLog, terminal_index: int) -> AncestralTree:
    """The ancestral tree of box ``terminal_index`` (0-based) at the log's top level."""
    top = log.levels[-1]
    if not 0 <= terminal_index < top.count:
        raise IndexError(f"terminal index {terminal_index} outside 0..{top.count - 1}")
    N = log.horizon

    def make(n, i):
        lv = log.levels[n]
        draw = None if n == 0 else int(lv.draws[i])
        return TreeNode(n, i, int(lv.sizes[i]), draw)

    root = make(N, terminal_index)
    stack = [root]
    while stack:
        node = stack.pop()
        if node.level == 0:
            continue
        for c in log.levels[node.level].children(node.index):
            child = make(node.level - 1, c)
            node.children.append(child)
            stack.append(child)
    return AncestralTree(root, N)


def ancestor_counts(tree: AncestralTree) -> list[int]:
    """k_nu = number of depth-nu nodes for nu = 0..N (zero past the tree's height)."""
    layers = tree.nodes_by_depth()
    return [len(layers[nu]) if nu < len(layers) else 0 for nu in range(tree.horizon + 1)]


def ancestor_count_array(log: RunLog, nu: int) -> np.ndarray:
    """k_nu for every top-level box at once, via the contiguous descendant ranges."""
    N = log.horizon
    if not 0 <= nu <= N:
        raise ValueError(f"nu must lie in 0..{N}")
    top = log.levels[-1].count
    lo = np.arange(top, dtype=np.int64)
    hi = lo + 1
    for n in range(N, N - nu, -1):
        off = log.levels[n].offsets
        lo, hi = off[lo], off[hi]
    return hi - lo


# ---------------------------------------------------------------------------
# conditional laws


@dataclass(frozen=True)
class ConditionalLaw:
    """P(K_nu = k | K_N = j) for k = 0..len(probs)-1."""

    N: int
    nu: int
    j: int
    probs: tuple
    provenance: str
    sample_size: Optional[int] = None

    def as_dict(self) -> dict[int, float]:
        return {k: p for k, p in enumerate(self.probs) if p}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "probability_exact", "probability", "provenance", "sample_size"])
        for k, p in enumerate(self.probs):
            exact = str(p) if isinstance(p, Fraction) else ""
            w.writerow([k, exact, repr(float(p)), self.provenance,
                        "" if self.sample_size is None else self.sample_size])
        return buf.getvalue()


def total_variation(p, q) -> float:
    """TV distance between two laws given as sequences or {k: prob} mappings."""
    if not isinstance(p, dict):
        p = dict(enumerate(p.probs if isinstance(p, ConditionalLaw) else p))
    if not isinstance(q, dict):
        q = dict(enumerate(q.probs if isinstance(q, ConditionalLaw) else q))
    keys = set(p) | set(q)
    return 0.5 * sum(abs(float(p.get(k, 0)) - float(q.get(k, 0))) for k in keys)


def _as_polynomial(m: Mechanism) -> list:
    if isinstance(m, FiniteSupport):
        coeffs = list(m.p)
    elif isinstance(m, (Affine, QuadraticStep)):
        coeffs = m.pmf(2)
    else:
        raise TractabilityError(f"exact conditioning needs finite-support mechanisms, got {m.family}")
    if not m.is_exact:
        coeffs = [Fraction(x) for x in coeffs]
    return poly.trim([Fraction(x) for x in coeffs])


def _compose_steps(polys: Sequence[list]) -> list:
    """f_last o ... o f_first for polynomials listed innermost first; identity when empty."""
    out = [Fraction(0), Fraction(1)]
    for p in polys:
        out = poly.compose(p, out)
    return out


def exact_conditional(mechs: Sequence[Mechanism], N: int, nu: int, j: int) -> ConditionalLaw:
    """Exact rational law of the depth-nu ancestor count of a size-j level-N box.

    Joint weights are [z1^k z2^j] Phi_{N,N-nu}(z1 Phi_{N-nu,0}(z2)) =
    q_k [z2^j] P(z2)^k with q the outer and P the inner composed polynomial;
    they are normalized by [z2^j] phi*_N.
    """
    mechs = list(mechs)
    if len(mechs) != N:
        raise ValueError(f"need exactly N={N} mechanisms, got {len(mechs)}")
    if N > MAX_EXACT_HORIZON:
        raise TractabilityError(f"exact conditioning is limited to N <= {MAX_EXACT_HORIZON}")
    if not 0 <= nu <= N:
        raise ValueError(f"nu must lie in 0..{N}")
    polys = [_as_polynomial(m) for m in mechs]
    if any(len(p) > MAX_EXACT_SUPPORT for p in polys):
        raise TractabilityError(f"exact conditioning is limited to support size <= {MAX_EXACT_SUPPORT}")
    inner = _compose_steps(polys[: N - nu])
    outer = _compose_steps(polys[N - nu:])
    joint = []
    pk = [Fraction(1)]
    for q in outer:
        joint.append(q * (pk[j] if j < len(pk) else Fraction(0)))
        pk = poly.mul(pk, inner)
    total = sum(joint)
    if total == 0:
        raise NullConditioningError(f"conditioning on null event: P(K*_{N} = {j}) = 0")
    probs = [w / total for w in joint]
    while len(probs) > 1 and probs[-1] == 0:
        probs.pop()
    return ConditionalLaw(N, nu, j, tuple(probs), "exact")


def _law_from_samples(ks: np.ndarray, N, nu, j, provenance) -> ConditionalLaw:
    counts = np.bincount(ks)
    n = int(counts.sum())
    return ConditionalLaw(N, nu, j, tuple(float(c) / n for c in counts), provenance, n)


def empirical_conditional(logs: Union[RunLog, Sequence[RunLog]], nu: int, j: int,
                          min_samples: int = MIN_CONDITIONED_SAMPLES) -> ConditionalLaw:
    """Empirical law of k_nu among top-level boxes of size j, pooled over replicas."""
    logs = [logs] if isinstance(logs, RunLog) else list(logs)
    N = logs[0].horizon
    ks = []
    for lg in logs:
        sel = lg.levels[-1].sizes == j
        ks.append(ancestor_count_array(lg, nu)[sel])
    ks = np.concatenate(ks)
    if len(ks) < min_samples:
        raise InsufficientSamplesError(f"only {len(ks)} boxes of size {j} (need {min_samples})")
    return _law_from_samples(ks, N, nu, j, "empirical")


def ancestor_law(logs: Union[RunLog, Sequence[RunLog]], nu: int) -> dict[int, float]:
    """Unconditioned empirical law of k_nu over all top-level boxes."""
    logs = [logs] if isinstance(logs, RunLog) else list(logs)
    ks = np.concatenate([ancestor_count_array(lg, nu) for lg in logs])
    c = np.bincount(ks)
    return {k: v / len(ks) for k, v in enumerate(c) if v}


def mixture_of_conditionals(logs: Union[RunLog, Sequence[RunLog]], nu: int) -> dict[int, float]:
    """sum_j P^(K_N = j) * law(k_nu | K_N = j), every observed j included."""
    logs = [logs] if isinstance(logs, RunLog) else list(logs)
    sizes = np.concatenate([lg.levels[-1].sizes for lg in logs])
    ks = np.concatenate([ancestor_count_array(lg, nu) for lg in logs])
    out: Counter = Counter()
    total = len(sizes)
    for j in np.unique(sizes):
        sel = sizes == j
        weight = sel.sum() / total
        cond = np.bincount(ks[sel]) / sel.sum()
        for k, p in enumerate(cond):
            if p:
                out[k] += weight * p
    return dict(out)


# ---------------------------------------------------------------------------
# conditioned branching process by rejection


def _reversed_draws(mechs, N, rng):
    """One unconditioned branching process over g_nu = f_{N-nu+1}; draws keyed by level."""
    draws = {}
    need = 1
    for n in range(N, 0, -1):
        if need == 0:
            draws[n] = np.zeros(0, dtype=np.int64)
            continue
        m = mechs[n - 1].sample_many(rng, need)
        draws[n] = m
        need = int(m.sum())
    return draws, need


def bgw_conditioned_sample(mechs: Sequence[Mechanism], N: int, j: int, rng: np.random.Generator,
                           budget: int = 100_000) -> AncestralTree:
    """A tree from the reversed branching process, accepted iff depth N holds exactly j individuals.

    ``mechs`` are the forward mechanisms f_1..f_N; the root reproduces with
    f_N. Raises ``BudgetExceededError`` after ``budget`` rejected attempts.
    """
    mechs = list(mechs)
    if len(mechs) != N:
        raise ValueError(f"need exactly N={N} mechanisms")
    for _ in range(budget):
        draws, leaves = _reversed_draws(mechs, N, rng)
        if leaves == j:
            return extract_tree(RunLog(_build_levels(draws, N, leaves)), 0)
    raise BudgetExceededError(f"no tree with {j} leaves in {budget} attempts")


def bgw_conditional(mechs: Sequence[Mechanism], N: int, nu: int, j: int, rng: np.random.Generator,
                    accepted: int, budget: Optional[int] = None) -> ConditionalLaw:
    """Law of k_nu over ``accepted`` rejection-sampled trees (counts read off the draws)."""
    mechs = list(mechs)
    budget = budget if budget is not None else 1000 * accepted
    ks = []
    attempts = 0
    while len(ks) < accepted:
        if attempts >= budget:
            raise BudgetExceededError(f"only {len(ks)} of {accepted} trees accepted in {budget} attempts")
        attempts += 1
        draws, leaves = _reversed_draws(mechs, N, rng)
        if leaves != j:
            continue
        # depth-nu population = total draw of the level above it
        ks.append(1 if nu == 0 else int(draws[N - nu + 1].sum()))
    return _law_from_samples(np.asarray(ks, dtype=np.int64), N, nu, j, "bgw-rejection")
