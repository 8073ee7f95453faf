"""Polynomial vector fields, Lie brackets and finite-dimensional field spaces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .exactalg import rank_of_rows, sparse_rank, sparse_rref
from .poly import DEFAULT_DEGREE_CAP, DegreeCapError, Poly, monomial_key

__all__ = [
    "PolyVectorField",
    "FieldSpace",
    "jacobian",
    "lie_bracket",
    "linear_field",
    "reduce",
    "trace_dim",
    "trace_matrix",
    "bracket_closure_step",
]


class PolyVectorField:
    """A map R^D -> R^D whose components are polynomials in D variables."""

    __slots__ = ("components", "_hash")

    def __init__(self, components: Sequence[Poly]):
        comps = tuple(components)
        dim = len(comps)
        for c in comps:
            if c.ambient_dim != dim:
                raise ValueError(
                    f"component lives in dimension {c.ambient_dim}, field has {dim} components"
                )
        self.components = comps
        self._hash = None

    @property
    def ambient_dim(self) -> int:
        return len(self.components)

    @classmethod
    def zero(cls, dim: int) -> "PolyVectorField":
        return cls([Poly.zero(dim)] * dim)

    @classmethod
    def gradient_of(cls, p: Poly) -> "PolyVectorField":
        return cls(p.gradient())

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def degree(self) -> int:
        return max((c.degree() for c in self.components), default=-1)

    def __eq__(self, other) -> bool:
        return isinstance(other, PolyVectorField) and self.components == other.components

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.components)
        return self._hash

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_dims(self, other)
        return PolyVectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_dims(self, other)
        return PolyVectorField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField([-a for a in self.components])

    def scale(self, c) -> "PolyVectorField":
        return PolyVectorField([a.scale(c) for a in self.components])

    def __rmul__(self, c) -> "PolyVectorField":
        return self.scale(c)

    def eval(self, point: Sequence) -> list:
        return [c.eval(point) for c in self.components]

    def __repr__(self) -> str:
        return "PolyVectorField(" + ", ".join(str(c) for c in self.components) + ")"

    def flatten(self) -> dict[tuple[int, tuple[int, ...]], object]:
        """Coefficients keyed by (component index, monomial)."""
        out = {}
        for i, c in enumerate(self.components):
            for m, v in c.terms.items():
                out[(i, m)] = v
        return out


def _check_dims(a: PolyVectorField, b: PolyVectorField) -> None:
    if a.ambient_dim != b.ambient_dim:
        raise ValueError(f"ambient dimension mismatch: {a.ambient_dim} vs {b.ambient_dim}")


def jacobian(chi: PolyVectorField) -> list[list[Poly]]:
    """Entry (i, j) is d chi_i / d theta_j."""
    return [[c.partial(j) for j in range(chi.ambient_dim)] for c in chi.components]


def linear_field(a: Sequence[Sequence]) -> PolyVectorField:
    """The field theta -> A theta for a square rational matrix A."""
    dim = len(a)
    comps = []
    for i in range(dim):
        terms = {}
        for j in range(dim):
            if a[i][j] != 0:
                e = [0] * dim
                e[j] = 1
                terms[tuple(e)] = a[i][j]
        comps.append(Poly(dim, terms))
    return PolyVectorField(comps)


def _directional(chi: PolyVectorField, direction: PolyVectorField, cap: int | None) -> list[Poly]:
    """(d chi) . direction, i.e. sum_j d chi_i/d theta_j * direction_j."""
    dim = chi.ambient_dim
    active = [j for j, c in enumerate(direction.components) if c]
    out = []
    for ci in chi.components:
        if not ci:
            out.append(Poly.zero(dim))
            continue
        used = ci.variables()
        acc = Poly.zero(dim)
        for j in active:
            if j in used:
                acc = acc + ci.partial(j).mul(direction.components[j], degree_cap=cap)
        out.append(acc)
    return out


def lie_bracket(
    chi1: PolyVectorField,
    chi2: PolyVectorField,
    degree_cap: int | None = DEFAULT_DEGREE_CAP,
) -> PolyVectorField:
    """[chi1, chi2] = (d chi1) chi2 - (d chi2) chi1."""
    _check_dims(chi1, chi2)
    if chi1.is_zero() or chi2.is_zero():
        return PolyVectorField.zero(chi1.ambient_dim)
    if degree_cap is not None:
        bound = chi1.degree() + chi2.degree() - 1
        if bound > degree_cap:
            raise DegreeCapError(
                f"bracket degree bound {bound} exceeds cap {degree_cap}"
            )
    a = _directional(chi1, chi2, None)
    b = _directional(chi2, chi1, None)
    return PolyVectorField([x - y for x, y in zip(a, b)])


@dataclass(frozen=True)
class FieldSpace:
    """Span of a list of polynomial vector fields.

    ``basis`` is expected to be linearly independent; use :func:`reduce` to
    obtain such a basis from an arbitrary spanning list.
    """

    ambient_dim: int
    basis: tuple[PolyVectorField, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "basis", tuple(self.basis))
        for f in self.basis:
            if f.ambient_dim != self.ambient_dim:
                raise ValueError("basis field dimension mismatch")

    def __len__(self) -> int:
        return len(self.basis)

    def __iter__(self):
        return iter(self.basis)

    @property
    def dim(self) -> int:
        return len(self.basis)

    def is_independent(self) -> bool:
        cols = _column_index(self.basis)
        rows = [{cols[k]: v for k, v in f.flatten().items()} for f in self.basis]
        return sparse_rank(rows) == len(self.basis)


def _column_index(fields: Iterable[PolyVectorField]) -> dict:
    """Deterministic column numbering over the union support.

    Columns are ordered by monomial (grlex descending), then by component.
    """
    keys = set()
    for f in fields:
        keys.update(f.flatten())
    ordered = sorted(keys, key=lambda k: (monomial_key(k[1]), -k[0]), reverse=True)
    return {k: i for i, k in enumerate(ordered)}


def reduce(space: FieldSpace | Sequence[PolyVectorField], ambient_dim: int | None = None) -> FieldSpace:
    """Same span, independent canonical basis (rref of flattened coefficients)."""
    if isinstance(space, FieldSpace):
        fields = list(space.basis)
        ambient_dim = space.ambient_dim
    else:
        fields = list(space)
        if ambient_dim is None:
            if not fields:
                raise ValueError("ambient_dim required for an empty field list")
            ambient_dim = fields[0].ambient_dim
    fields = [f for f in fields if not f.is_zero()]
    if not fields:
        return FieldSpace(ambient_dim, ())
    cols = _column_index(fields)
    keys = [None] * len(cols)
    for k, i in cols.items():
        keys[i] = k
    rows = [{cols[k]: v for k, v in f.flatten().items()} for f in fields]
    basis = []
    for r in sparse_rref(rows, len(cols)):
        comps: list[dict] = [{} for _ in range(ambient_dim)]
        for j, v in r.items():
            comp, mono = keys[j]
            comps[comp][mono] = v
        basis.append(PolyVectorField([Poly._raw(ambient_dim, c) for c in comps]))
    return FieldSpace(ambient_dim, basis)


def trace_matrix(fields: Iterable[PolyVectorField], point: Sequence) -> list[list]:
    """Rows are the fields evaluated at ``point`` (so the matrix is |fields| x D)."""
    return [f.eval(point) for f in fields]


def trace_dim(space: FieldSpace | Sequence[PolyVectorField], point: Sequence) -> int:
    """Dimension of span{chi(point)} over the fields of the space."""
    fields = space.basis if isinstance(space, FieldSpace) else space
    fields = list(fields)
    if fields and len(point) != fields[0].ambient_dim:
        raise ValueError("point length does not match ambient dimension")
    return rank_of_rows(trace_matrix(fields, point))


def bracket_closure_step(
    w0: FieldSpace,
    wk: FieldSpace,
    new: Sequence[PolyVectorField] | None = None,
    degree_cap: int | None = DEFAULT_DEGREE_CAP,
    reduce_result: bool = True,
):
    """One step of W_{k+1} = W_k + [W_0, W_k].

    If ``new`` is given, only brackets with those fields of W_k are formed
    (brackets with older fields already lie in W_k). With
    ``reduce_result=False`` the raw spanning list is returned instead of a
    reduced :class:`FieldSpace`.
    """
    if w0.ambient_dim != wk.ambient_dim:
        raise ValueError("ambient dimension mismatch")
    targets = list(wk.basis) if new is None else list(new)
    brackets = _brackets(w0.basis, targets, degree_cap)
    spanning = list(wk.basis) + brackets
    if not reduce_result:
        return spanning
    return reduce(spanning, wk.ambient_dim)


def _brackets(left: Sequence[PolyVectorField], right: Sequence[PolyVectorField], degree_cap) -> list[PolyVectorField]:
    seen: set[tuple[int, int]] = set()
    out = []
    index = {f: i for i, f in enumerate(left)}
    for a_i, a in enumerate(left):
        for r_i, b in enumerate(right):
            b_i = index.get(b)
            if b_i is not None:
                # [a, a] = 0 and [b, a] = -[a, b]
                if b_i == a_i or (b_i, a_i) in seen:
                    continue
                seen.add((a_i, b_i))
            try:
                br = lie_bracket(a, b, degree_cap)
            except DegreeCapError as exc:
                raise DegreeCapError(
                    f"{exc} (bracket of W_0 basis field {a_i} with field {r_i})"
                ) from None
            if not br.is_zero():
                out.append(br)
    return out
