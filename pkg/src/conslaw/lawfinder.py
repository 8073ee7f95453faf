"""Polynomial conservation laws of a reparametrization.

A polynomial ``h`` is a conservation law of ``phi`` when
``<grad h, grad phi_i>`` vanishes identically for every component ``i``.
Writing ``h = sum_a c_a theta^a`` over all monomials of degree 1..k, each of
these inner products is a polynomial whose coefficients are linear in the
unknowns ``c``; the laws of degree at most ``k`` are exactly the kernel of
the stacked coefficient system.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import comb
from typing import TYPE_CHECKING, Sequence

from .exactalg import rank_of_rows, sparse_nullspace, sparse_rank
from .poly import Poly, monomial_key, monomials_of_degree

if TYPE_CHECKING:
    from .models import ReparamMap

DEFAULT_MAX_UNKNOWNS = 200_000

__all__ = [
    "LawBasis",
    "UnknownCapError",
    "find_polynomial_laws",
    "verify_law",
    "independence_ranks",
    "independence_count",
    "in_span",
]


class UnknownCapError(MemoryError):
    """The coefficient space is larger than the configured cap."""


@dataclass(frozen=True)
class LawBasis:
    D: int
    degree_bound: int
    laws: tuple[Poly, ...] = ()
    degrees: tuple[int, ...] = ()
    independence_count: int | None = None
    independence_min: int | None = None
    point_ranks: tuple[int, ...] = ()
    canonical: bool = True
    unknowns: int = 0
    constraints: int = 0

    def __len__(self) -> int:
        return len(self.laws)

    def __iter__(self):
        return iter(self.laws)

    def with_independence(self, points: Sequence[Sequence]) -> "LawBasis":
        ranks = independence_ranks(self, points)
        return replace(
            self,
            independence_count=max(ranks, default=0),
            independence_min=min(ranks, default=0),
            point_ranks=tuple(ranks),
        )


def verify_law(h: Poly, phi: "ReparamMap") -> bool:
    """Exact check that grad h is orthogonal to every grad phi_i."""
    if h.ambient_dim != phi.D:
        raise ValueError(f"law has dimension {h.ambient_dim}, phi has {phi.D}")
    grad_h = {k: g for k, g in enumerate(h.gradient()) if g}
    if not grad_h:
        return True
    for p in phi.phi:
        acc = Poly.zero(phi.D)
        for k, g in grad_h.items():
            gp = p.partial(k)
            if gp:
                acc = acc + g.mul(gp, degree_cap=None)
        if acc:
            return False
    return True


def _unknown_count(D: int, lo: int, hi: int) -> int:
    return sum(comb(D + k - 1, k) for k in range(lo, hi + 1))


def find_polynomial_laws(
    phi: "ReparamMap",
    degree_bound: int,
    max_unknowns: int = DEFAULT_MAX_UNKNOWNS,
    exact_degree: bool = False,
) -> LawBasis:
    """Canonical basis of polynomial laws of degree 1..``degree_bound``.

    Constants are left out of the ansatz. The basis is the reduced echelon
    form of the kernel over monomials in grlex-descending order, so each law
    has a distinct leading monomial with coefficient 1. With
    ``exact_degree`` only homogeneous laws of degree ``degree_bound`` are
    searched.
    """
    if degree_bound < 1:
        raise ValueError("degree_bound must be >= 1")
    D = phi.D
    lo = degree_bound if exact_degree else 1
    n_unknowns = _unknown_count(D, lo, degree_bound)
    if n_unknowns > max_unknowns:
        raise UnknownCapError(
            f"{n_unknowns} unknown coefficients exceed the cap of {max_unknowns}"
        )
    monos = []
    for deg in range(degree_bound, lo - 1, -1):
        monos.extend(monomials_of_degree(D, deg))

    # d phi_i / d theta_k, grouped by k
    by_var: list[list[tuple[int, Poly]]] = [[] for _ in range(D)]
    for i, p in enumerate(phi.phi):
        for k in p.variables():
            by_var[k].append((i, p.partial(k)))

    rows: dict[tuple, dict[int, int]] = {}
    for col, alpha in enumerate(monos):
        for k, e in enumerate(alpha):
            if not e or not by_var[k]:
                continue
            base = alpha[:k] + (e - 1,) + alpha[k + 1:]
            for i, g in by_var[k]:
                for m, v in g.terms.items():
                    beta = tuple(a + b for a, b in zip(base, m))
                    row = rows.setdefault((i, beta), {})
                    nv = row.get(col, 0) + e * v
                    if nv:
                        row[col] = nv
                    else:
                        del row[col]
    live = [r for r in rows.values() if r]
    kernel = sparse_nullspace(live, len(monos), normalize="rref")
    laws = []
    for vec in kernel:
        laws.append(Poly._raw(D, {monos[c]: v for c, v in vec.items()}))
    laws.sort(key=lambda h: monomial_key(h.sorted_terms()[0][0]), reverse=True)
    for h in laws:
        if not verify_law(h, phi):
            raise AssertionError(f"solver produced a non-law: {h}")
    return LawBasis(
        D=D,
        degree_bound=degree_bound,
        laws=tuple(laws),
        degrees=tuple(h.degree() for h in laws),
        canonical=True,
        unknowns=len(monos),
        constraints=len(live),
    )


def independence_ranks(basis: LawBasis, points: Sequence[Sequence]) -> list[int]:
    """Rank of the stacked law gradients at each point."""
    grads = [h.gradient() for h in basis.laws]
    out = []
    for pt in points:
        pt = list(pt)
        out.append(rank_of_rows([[g.eval(pt) for g in grad] for grad in grads]))
    return out


def independence_count(basis: LawBasis, points: Sequence[Sequence]) -> int:
    """Largest gradient rank over the sample points."""
    return max(independence_ranks(basis, points), default=0)


def in_span(laws: Sequence[Poly], span: Sequence[Poly]) -> bool:
    """True iff every polynomial of ``laws`` is a linear combination of ``span``."""
    keys: dict = {}
    for p in list(span) + list(laws):
        for m in p.terms:
            keys.setdefault(m, len(keys))
    rows = [{keys[m]: v for m, v in p.terms.items()} for p in span]
    base = sparse_rank(rows)
    full = sparse_rank(rows + [{keys[m]: v for m, v in p.terms.items()} for p in laws])
    return base == full
