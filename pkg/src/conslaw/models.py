"""Reparametrizations of linear and ReLU networks, generic points, known laws.

Parameters are flattened layer by layer: ``U1`` (n0 x n1, row-major), then
its bias ``b1`` if present, then ``U2`` and so on. Variable ``t{k+1}`` is
coordinate ``k`` of the flattened vector; :meth:`ReparamMap.variable_names`
maps each one back to a matrix entry.

Convention: ``U_i`` has shape ``n_{i-1} x n_i``, ``n_0`` is the input
dimension and ``n_q`` the output dimension, so a linear network computes
``x^T U1 ... Uq`` and its reparametrization is the product ``U1 ... Uq``.
For two-layer ReLU networks ``v_j = U1[:, j]`` holds the input weights of
hidden neuron ``j`` and ``u_j = U2[j, :]`` its output weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Sequence

import numpy as np

from .exactalg import rank_of_rows
from .lawfinder import LawBasis, verify_law
from .poly import Poly, parse

KINDS = ("linear", "relu2_nobias", "relu2_bias", "relu_deep_nobias", "custom")
RELU_KINDS = ("relu2_nobias", "relu2_bias", "relu_deep_nobias")
MAX_RESAMPLES = 100

__all__ = [
    "KINDS",
    "ModelSpec",
    "Block",
    "ReparamMap",
    "GenericPoint",
    "CertificateError",
    "build_phi",
    "layout",
    "sample_generic_point",
    "sample_points",
    "known_laws",
    "certify",
]


class CertificateError(RuntimeError):
    """No point satisfying the genericity certificates could be drawn."""


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    widths: tuple[int, ...] = ()
    phi: tuple[str, ...] = ()
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "phi", tuple(self.phi))
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "custom":
            if self.dim is None or self.dim < 0:
                raise ValueError("custom models need a nonnegative 'dim'")
            return
        if len(self.widths) < 2:
            raise ValueError("network kinds need at least two widths")
        if any(w < 1 for w in self.widths):
            raise ValueError("all widths must be >= 1")
        if self.kind in ("relu2_nobias", "relu2_bias") and len(self.widths) != 3:
            raise ValueError(f"{self.kind} takes exactly three widths [m, r, n]")
        if self.kind == "relu_deep_nobias" and len(self.widths) < 3:
            raise ValueError("relu_deep_nobias needs at least one hidden layer")

    @property
    def depth(self) -> int:
        return len(self.widths) - 1

    @property
    def has_bias(self) -> bool:
        return self.kind == "relu2_bias"

    def key(self) -> str:
        if self.kind == "custom":
            return f"custom(D={self.dim};" + ";".join(self.phi) + ")"
        return f"{self.kind}[{','.join(map(str, self.widths))}]"

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "widths": list(self.widths)}
        if self.kind == "custom":
            d["phi"] = list(self.phi)
            d["dim"] = self.dim
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            kind=d["kind"],
            widths=tuple(d.get("widths", ())),
            phi=tuple(d.get("phi", ())),
            dim=d.get("dim"),
        )


@dataclass(frozen=True)
class Block:
    """A named parameter block (matrix or bias vector) inside theta."""

    name: str
    shape: tuple[int, ...]
    offset: int

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def index(self, *ij: int) -> int:
        if len(self.shape) == 1:
            return self.offset + ij[0]
        return self.offset + ij[0] * self.shape[1] + ij[1]


def layout(spec: ModelSpec) -> tuple[Block, ...]:
    if spec.kind == "custom":
        return (Block("theta", (spec.dim,), 0),)
    blocks = []
    off = 0
    w = spec.widths
    for i in range(1, len(w)):
        b = Block(f"U{i}", (w[i - 1], w[i]), off)
        blocks.append(b)
        off += b.size
        if spec.has_bias:
            b = Block(f"b{i}", (w[i],), off)
            blocks.append(b)
            off += b.size
    return tuple(blocks)


@dataclass(frozen=True)
class ReparamMap:
    D: int
    phi: tuple[Poly, ...]
    blocks: tuple[Block, ...] = ()
    spec: ModelSpec | None = None

    def __post_init__(self):
        for p in self.phi:
            if p.ambient_dim != self.D:
                raise ValueError("phi component dimension mismatch")

    @property
    def d(self) -> int:
        return len(self.phi)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def gradients(self) -> list[list[Poly]]:
        return [p.gradient() for p in self.phi]

    def jacobian_at(self, point: Sequence) -> list[list]:
        """d x D matrix of partial derivatives at an exact point."""
        return [[g.eval(point) for g in grad] for grad in self.gradients()]

    def variable_names(self) -> list[str]:
        names = [""] * self.D
        for b in self.blocks:
            if len(b.shape) == 1:
                for i in range(b.shape[0]):
                    names[b.index(i)] = f"{b.name}[{i}]"
            else:
                for i in range(b.shape[0]):
                    for j in range(b.shape[1]):
                        names[b.index(i, j)] = f"{b.name}[{i},{j}]"
        return names

    def layout_descriptor(self) -> list[dict]:
        return [
            {"name": b.name, "shape": list(b.shape), "offset": b.offset,
             "variables": f"t{b.offset + 1}..t{b.offset + b.size}"}
            for b in self.blocks
        ]

    def matrix(self, name: str, point: Sequence) -> list[list]:
        b = self.block(name)
        if len(b.shape) == 1:
            return [[point[b.index(i)]] for i in range(b.shape[0])]
        return [[point[b.index(i, j)] for j in range(b.shape[1])] for i in range(b.shape[0])]


def _sym_matrix(block: Block, dim: int) -> list[list[Poly]]:
    return [[Poly.var(dim, block.index(i, j)) for j in range(block.shape[1])]
            for i in range(block.shape[0])]


def _matmul(a: list[list[Poly]], b: list[list[Poly]], dim: int) -> list[list[Poly]]:
    out = []
    for i in range(len(a)):
        row = []
        for j in range(len(b[0])):
            acc = Poly.zero(dim)
            for k in range(len(b)):
                acc = acc + a[i][k].mul(b[k][j], degree_cap=None)
            row.append(acc)
        out.append(row)
    return out


def build_phi(spec: ModelSpec) -> ReparamMap:
    """Polynomial reparametrization of the model described by ``spec``."""
    blocks = layout(spec)
    if spec.kind == "custom":
        D = spec.dim
        return ReparamMap(D, tuple(parse(t, D) for t in spec.phi), blocks, spec)
    D = sum(b.size for b in blocks)
    w = spec.widths
    mats = {b.name: b for b in blocks}
    x = lambda i: Poly.var(D, i)  # noqa: E731

    if spec.kind == "linear":
        prod_m = _sym_matrix(mats["U1"], D)
        for i in range(2, len(w)):
            prod_m = _matmul(prod_m, _sym_matrix(mats[f"U{i}"], D), D)
        phi = [p for row in prod_m for p in row]
    elif spec.kind in ("relu2_nobias", "relu2_bias"):
        m, r, n = w
        U1, U2 = mats["U1"], mats["U2"]
        phi = []
        for j in range(r):
            for k in range(n):
                for i in range(m):
                    phi.append(x(U2.index(j, k)) * x(U1.index(i, j)))
            if spec.has_bias:
                b1 = mats["b1"]
                for k in range(n):
                    phi.append(x(U2.index(j, k)) * x(b1.index(j)))
        if spec.has_bias:
            c = mats["b2"]
            phi.extend(x(c.index(k)) for k in range(n))
    elif spec.kind == "relu_deep_nobias":
        q = len(w) - 1
        phi = []
        # ordered by (output, j_{q-1}, ..., j_1, input)
        hidden = [range(w[i]) for i in range(q - 1, 0, -1)]
        for k in range(w[q]):
            for js_rev in product(*hidden):
                js = js_rev[::-1]
                for i in range(w[0]):
                    path = (i,) + js + (k,)
                    term = Poly.constant(D, 1)
                    for layer in range(q):
                        term = term.mul(
                            x(mats[f"U{layer + 1}"].index(path[layer], path[layer + 1])),
                            degree_cap=None,
                        )
                    phi.append(term)
    else:  # pragma: no cover - guarded by ModelSpec
        raise ValueError(f"unsupported kind {spec.kind}")
    return ReparamMap(D, tuple(phi), blocks, spec)


# -- generic points -------------------------------------------------------


@dataclass(frozen=True)
class GenericPoint:
    """Integer parameter vector with checked genericity certificates.

    A certificate is ``None`` when it does not apply to the model.
    """

    coords: tuple[int, ...]
    full_rank_stack: bool | None = None
    nonzero_neurons: bool | None = None
    distinct_hyperplanes: bool | None = None
    stack_ranks: tuple[int, ...] = field(default=())
    seed: int = 0
    attempt: int = 0

    def __len__(self) -> int:
        return len(self.coords)

    def __iter__(self):
        return iter(self.coords)

    def __getitem__(self, i):
        return self.coords[i]

    def certified(self) -> bool:
        return all(c is not False for c in
                   (self.full_rank_stack, self.nonzero_neurons, self.distinct_hyperplanes))

    def certificates(self) -> dict:
        return {
            "full_rank_stack": self.full_rank_stack,
            "nonzero_neurons": self.nonzero_neurons,
            "distinct_hyperplanes": self.distinct_hyperplanes,
        }


def _proportional(a: Sequence, b: Sequence) -> bool:
    # a, b nonzero; proportional iff every 2x2 minor vanishes
    n = len(a)
    return all(a[i] * b[j] == a[j] * b[i] for i in range(n) for j in range(i + 1, n))


def certify(spec: ModelSpec, coords: Sequence[int], seed: int = 0, attempt: int = 0) -> GenericPoint:
    """Evaluate every applicable certificate at ``coords``."""
    coords = tuple(coords)
    if spec.kind == "custom":
        return GenericPoint(coords, seed=seed, attempt=attempt)
    blocks = {b.name: b for b in layout(spec)}
    w = spec.widths
    q = len(w) - 1

    def mat(name):
        b = blocks[name]
        return [[coords[b.index(i, j)] for j in range(b.shape[1])] for i in range(b.shape[0])]

    # (U_i ; U_{i+1}^T) has n_i columns, one per neuron of interface i
    ranks = []
    full = True
    for i in range(1, q):
        left = mat(f"U{i}")
        right_t = [list(col) for col in zip(*mat(f"U{i + 1}"))]
        stack = left + right_t
        rk = rank_of_rows(stack)
        ranks.append(rk)
        full = full and rk == min(len(stack), w[i])

    nonzero = hyper = None
    if spec.kind in RELU_KINDS:
        nonzero = True
        for i in range(1, q):
            incoming = list(zip(*mat(f"U{i}")))
            outgoing = mat(f"U{i + 1}")
            for j in range(w[i]):
                if not any(incoming[j]) or not any(outgoing[j]):
                    nonzero = False
        first = [list(col) for col in zip(*mat("U1"))]
        if spec.has_bias:
            b = blocks["b1"]
            first = [col + [coords[b.index(j)]] for j, col in enumerate(first)]
        if len(first[0]) >= 2:
            hyper = all(
                any(first[a]) and any(first[b]) and not _proportional(first[a], first[b])
                for a in range(len(first)) for b in range(a + 1, len(first))
            )
    return GenericPoint(
        coords,
        full_rank_stack=full if q >= 2 else None,
        nonzero_neurons=nonzero,
        distinct_hyperplanes=hyper,
        stack_ranks=tuple(ranks),
        seed=seed,
        attempt=attempt,
    )


def _parameter_count(spec: ModelSpec) -> int:
    return sum(b.size for b in layout(spec))


def sample_generic_point(spec: ModelSpec, seed: int = 0, bound: int = 10) -> GenericPoint:
    """Integer point with coordinates in [-bound, bound] minus {0}.

    Deterministic in (seed, bound); resamples with derived seeds until all
    applicable certificates hold.
    """
    if bound < 2:
        raise ValueError("bound must be >= 2")
    D = _parameter_count(spec)
    values = np.concatenate([np.arange(-bound, 0), np.arange(1, bound + 1)])
    for attempt in range(MAX_RESAMPLES):
        rng = np.random.default_rng([seed, attempt])
        coords = tuple(int(v) for v in rng.choice(values, size=D))
        pt = certify(spec, coords, seed=seed, attempt=attempt)
        if pt.certified():
            return pt
    raise CertificateError(
        f"no certified generic point for {spec.key()} after {MAX_RESAMPLES} draws"
    )


def sample_points(spec: ModelSpec, count: int, seed: int = 0, bound: int = 10) -> list[GenericPoint]:
    """``count`` independent generic points with seeds derived from ``seed``."""
    seeds = np.random.SeedSequence(seed).generate_state(count)
    return [sample_generic_point(spec, int(s), bound) for s in seeds]


# -- known balancedness laws ----------------------------------------------


def known_laws(spec: ModelSpec, phi: ReparamMap | None = None) -> LawBasis:
    """Entries of U_i^T U_i - U_{i+1} U_{i+1}^T at every interface.

    Linear networks keep the upper triangle of each symmetric matrix, ReLU
    networks only its diagonal. With biases the hidden bias enters the
    incoming side, giving ``|v_j|^2 + b_j^2 - |u_j|^2``.
    """
    if spec.kind == "custom":
        raise ValueError("known laws are only defined for network kinds")
    if phi is None:
        phi = build_phi(spec)
    D = phi.D
    blocks = {b.name: b for b in phi.blocks}
    w = spec.widths
    x = lambda i: Poly.var(D, i)  # noqa: E731
    laws = []
    for i in range(1, len(w) - 1):
        ui, un = blocks[f"U{i}"], blocks[f"U{i + 1}"]
        ni = w[i]
        for a in range(ni):
            cols = range(a, ni) if spec.kind == "linear" else (a,)
            for b in cols:
                h = Poly.zero(D)
                for k in range(ui.shape[0]):
                    h = h + x(ui.index(k, a)) * x(ui.index(k, b))
                for k in range(un.shape[1]):
                    h = h - x(un.index(a, k)) * x(un.index(b, k))
                if spec.has_bias and a == b:
                    h = h + x(blocks[f"b{i}"].index(a)) ** 2
                laws.append(h)
    for h in laws:
        if not verify_law(h, phi):
            raise AssertionError(f"known law {h} fails the orthogonality check")
    return LawBasis(D=D, degree_bound=2, laws=tuple(laws), degrees=tuple(2 for _ in laws),
                    canonical=False)
