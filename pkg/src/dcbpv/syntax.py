"""Kernel syntax for dependently typed call-by-push-value.

Terms, types, contexts and stacks are immutable trees over de Bruijn
indices.  One index space covers all value variables (including the
thunk variable bound by `mu`), so a single shift/substitution pair
serves the whole kernel.

Conventions used throughout:

* contexts list entries outermost first; ``Var(0)`` is the innermost
  binder,
* n-ary sums and products carry 1-based tags externally (matching the
  ``<i, v>`` surface notation) while arm tuples are 0-indexed,
* ``motive`` and ``bindty`` fields are checker annotations: they are
  ignored by ``alpha_eq`` and never evaluated by the machine.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union


class IndexUnderflow(Exception):
    """A shift would move a free de Bruijn index below zero."""


class SignatureError(Exception):
    """An effect signature violates one of its invariants."""


# ---------------------------------------------------------------------------
# Source spans (attached by the parser, ignored by equality)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    line: int
    col: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError("span start exceeds end")


def _span_field():
    return field(default=None, compare=False, repr=False)


# ---------------------------------------------------------------------------
# Monoids and effect signatures
# ---------------------------------------------------------------------------


class Monoid:
    """Printing monoid interface: elements are opaque hashable tokens."""

    def unit(self):
        raise NotImplementedError

    def op(self, a, b):
        raise NotImplementedError

    def parse_elem(self, name: str):
        """Map a surface token to an element, or raise SignatureError."""
        raise NotImplementedError

    def show(self, a) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class FreeMonoid(Monoid):
    """Free monoid over UTF-8 strings: unit '' and concatenation."""

    def unit(self) -> str:
        return ""

    def op(self, a: str, b: str) -> str:
        return a + b

    def parse_elem(self, name: str) -> str:
        return name

    def show(self, a: str) -> str:
        return "ε" if a == "" else a


@dataclass(frozen=True)
class TableMonoid(Monoid):
    """Finite monoid given by an element list and a multiplication table."""

    elems: tuple[str, ...]
    unit_index: int
    table: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.elems)
        if len(set(self.elems)) != n or n == 0:
            raise SignatureError("monoid elements must be distinct and nonempty")
        if not 0 <= self.unit_index < n:
            raise SignatureError("monoid unit out of range")
        if len(self.table) != n or any(len(row) != n for row in self.table):
            raise SignatureError("multiplication table must be %d x %d" % (n, n))
        if any(not 0 <= x < n for row in self.table for x in row):
            raise SignatureError("multiplication table entry out of range")
        e = self.unit_index
        for i in range(n):
            if self.table[e][i] != i or self.table[i][e] != i:
                raise SignatureError("unit law fails at %s" % self.elems[i])
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if self.table[self.table[i][j]][k] != self.table[i][self.table[j][k]]:
                        raise SignatureError(
                            "associativity fails at (%s, %s, %s)"
                            % (self.elems[i], self.elems[j], self.elems[k])
                        )

    def unit(self) -> int:
        return self.unit_index

    def op(self, a: int, b: int) -> int:
        return self.table[a][b]

    def parse_elem(self, name: str) -> int:
        if name not in self.elems:
            raise SignatureError("unknown monoid element %r" % name)
        return self.elems.index(name)

    def show(self, a: int) -> str:
        return self.elems[a]


EFFECT_FLAGS = ("diverge", "rec", "print", "choose", "error", "state")


@dataclass(frozen=True)
class EffectSignature:
    """The effect hardware: printing monoid, states, errors, enabled flags."""

    monoid: Monoid = FreeMonoid()
    states: tuple[str, ...] = ("s0",)
    initial_state: str = "s0"
    errors: tuple[str, ...] = ()
    enabled: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.states:
            raise SignatureError("state set must be nonempty")
        if len(set(self.states)) != len(self.states):
            raise SignatureError("state names must be distinct")
        if self.initial_state not in self.states:
            raise SignatureError("initial state %r not declared" % self.initial_state)
        if len(set(self.errors)) != len(self.errors):
            raise SignatureError("error names must be distinct")
        bad = set(self.enabled) - set(EFFECT_FLAGS)
        if bad:
            raise SignatureError("unknown effect flags: %s" % ", ".join(sorted(bad)))

    def allows(self, flag: str) -> bool:
        return flag in self.enabled


PURE_SIGNATURE = EffectSignature()


# ---------------------------------------------------------------------------
# AST nodes
# ---------------------------------------------------------------------------


class Node:
    """Common base for all syntax tree nodes."""

    __hash__ = object.__hash__  # overridden per dataclass


class VType(Node):
    pass


class CType(Node):
    pass


class Value(Node):
    pass


class Computation(Node):
    pass


class Stack(Node):
    pass


Term = Union[Value, Computation]
TypeExpr = Union[VType, CType]
TermOrType = Union[Value, Computation, VType, CType]


# -- value types -------------------------------------------------------------


@dataclass(frozen=True)
class UTy(VType):
    body: CType
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class UnitTy(VType):
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class SumTy(VType):
    arms: tuple[VType, ...] = ()
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class SigmaTy(VType):
    fst: VType
    snd: VType  # binds 1
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class IdTy(VType):
    carrier: VType
    lhs: Value
    rhs: Value
    span: Optional[Span] = _span_field()


# -- computation types --------------------------------------------------------


@dataclass(frozen=True)
class FTy(CType):
    ret: VType
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ProdTy(CType):
    arms: tuple[CType, ...] = ()
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PiTy(CType):
    dom: VType
    cod: CType  # binds 1
    span: Optional[Span] = _span_field()


# -- motives ------------------------------------------------------------------


@dataclass(frozen=True)
class Motive(Node):
    """Result-type annotation for a dependent eliminator.

    ``result`` is scoped over the scrutinee binders (1, or 3 for the
    identity eliminator: x, x', p) followed by the extension telescope.
    """

    result: TypeExpr
    ext: tuple[VType, ...] = ()
    scrut_binders: int = 1
    span: Optional[Span] = _span_field()


# -- values -------------------------------------------------------------------


@dataclass(frozen=True)
class Var(Value):
    ix: int
    span: Optional[Span] = _span_field()

    def __post_init__(self) -> None:
        if self.ix < 0:
            raise IndexUnderflow("negative de Bruijn index")


@dataclass(frozen=True)
class Thunk(Value):
    comp: Computation
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class UnitV(Value):
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Inj(Value):
    tag: int  # 1-based
    payload: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PairV(Value):
    fst: Value
    snd: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Refl(Value):
    payload: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class LetV(Value):
    bound: Value
    body: Value  # binds 1
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmUnitV(Value):
    scrut: Value
    body: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmSumV(Value):
    scrut: Value
    arms: tuple[Value, ...]  # each binds 1
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmPairV(Value):
    scrut: Value
    body: Value  # binds 2: fst at index 1, snd at index 0
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmIdV(Value):
    scrut: Value
    body: Value  # binds 1
    span: Optional[Span] = _span_field()


COMPLEX_VALUE_CLASSES = (LetV, PmUnitV, PmSumV, PmPairV, PmIdV)


# -- computations ---------------------------------------------------------------


@dataclass(frozen=True)
class Return(Computation):
    val: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class SeqTo(Computation):
    """Sequencing ``head to x. cont``.

    ``bindty`` annotates the type of x; the checker fills it in during
    elaboration when absent, and the machine copies it onto the stack
    frame so mid-run configurations can be re-checked.
    """

    head: Computation
    cont: Computation  # binds 1
    motive: Optional[Motive] = None
    bindty: Optional[VType] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Force(Computation):
    val: Value
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ProdIntro(Computation):
    arms: tuple[Computation, ...] = ()
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Proj(Computation):
    tag: int  # 1-based
    comp: Computation
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Lam(Computation):
    dom: VType
    body: Computation  # binds 1
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Apply(Computation):
    arg: Value
    fun: Computation
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class LetC(Computation):
    bound: Value
    body: Computation  # binds 1
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmUnitC(Computation):
    scrut: Value
    body: Computation
    motive: Optional[Motive] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmSumC(Computation):
    scrut: Value
    arms: tuple[Computation, ...]  # each binds 1
    motive: Optional[Motive] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmPairC(Computation):
    scrut: Value
    body: Computation  # binds 2
    motive: Optional[Motive] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class PmIdC(Computation):
    scrut: Value
    body: Computation  # binds 1
    motive: Optional[Motive] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Diverge(Computation):
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Mu(Computation):
    body: Computation  # binds 1 (thunk variable of type U B)
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Print(Computation):
    elem: str  # surface token; resolved against the signature's monoid
    body: Computation
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Choose(Computation):
    arms: tuple[Computation, ...]
    span: Optional[Span] = _span_field()

    def __post_init__(self) -> None:
        if len(self.arms) < 1:
            raise ValueError("choose needs at least one branch")


@dataclass(frozen=True)
class ErrorC(Computation):
    name: str
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class Write(Computation):
    state: str
    body: Computation
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ReadC(Computation):
    arms: tuple[tuple[str, Computation], ...]  # keyed by state name
    span: Optional[Span] = _span_field()


# -- contexts and stacks --------------------------------------------------------


@dataclass(frozen=True)
class Context:
    """Value telescope plus the optional computation-type slot of a stack
    judgement."""

    entries: tuple[VType, ...] = ()
    comp_slot: Optional[CType] = None

    def extend(self, ty: VType) -> Context:
        return Context(self.entries + (ty,), self.comp_slot)

    def lookup(self, ix: int) -> VType:
        """Type of ``Var(ix)``, shifted to the full context's depth."""
        if not 0 <= ix < len(self.entries):
            raise IndexError("unbound variable %d" % ix)
        return shift(self.entries[len(self.entries) - 1 - ix], 0, ix + 1)

    def __len__(self) -> int:
        return len(self.entries)


EMPTY_CONTEXT = Context()


@dataclass(frozen=True)
class NilK(Stack):
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class SeqFrame(Stack):
    cont: Computation  # binds 1
    rest: Stack
    motive: Optional[Motive] = None
    bindty: Optional[VType] = None
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ProjFrame(Stack):
    tag: int
    rest: Stack
    span: Optional[Span] = _span_field()


@dataclass(frozen=True)
class ArgFrame(Stack):
    arg: Value
    rest: Stack
    span: Optional[Span] = _span_field()


def stack_frames(k: Stack) -> Iterator[Stack]:
    while not isinstance(k, NilK):
        yield k
        k = k.rest  # type: ignore[attr-defined]


# ---------------------------------------------------------------------------
# Generic traversal
# ---------------------------------------------------------------------------

# For each node class, binder offsets of its term-typed fields (fields not
# listed have offset 0).  A field's offset is the number of extra binders
# its content sits under, relative to the node itself.
_OFFSETS: dict[type, dict[str, int]] = {
    SigmaTy: {"snd": 1},
    PiTy: {"cod": 1},
    LetV: {"body": 1},
    PmSumV: {"arms": 1},
    PmPairV: {"body": 2},
    PmIdV: {"body": 1},
    SeqTo: {"cont": 1},
    Lam: {"body": 1},
    LetC: {"body": 1},
    PmSumC: {"arms": 1},
    PmPairC: {"body": 2},
    PmIdC: {"body": 1},
    Mu: {"body": 1},
    SeqFrame: {"cont": 1},
}

# Fields that are annotations rather than syntax proper: alpha-equality and
# erased comparison skip them entirely.
ANNOTATION_FIELDS = ("motive", "bindty", "span")


def _map_piece(piece, off: int, fn: Callable[[Node, int], Node]):
    if isinstance(piece, Motive):
        return _map_motive(piece, fn)
    if isinstance(piece, Node):
        return fn(piece, off)
    if isinstance(piece, tuple):
        out = []
        touched = False
        for item in piece:
            if isinstance(item, tuple):  # ReadC arms: (state, comp)
                new = fn(item[1], off)
                touched |= new is not item[1]
                out.append((item[0], new))
            elif isinstance(item, Node):
                new = fn(item, off)
                touched |= new is not item
                out.append(new)
            else:
                out.append(item)
        return tuple(out) if touched else piece
    return piece


def _map_motive(m: Motive, fn: Callable[[Node, int], Node]) -> Motive:
    ext = tuple(fn(t, m.scrut_binders + i) for i, t in enumerate(m.ext))
    result = fn(m.result, m.scrut_binders + len(m.ext))
    if ext == m.ext and result is m.result:
        return m
    return Motive(result=result, ext=ext, scrut_binders=m.scrut_binders)


def map_children(node: Node, fn: Callable[[Node, int], Node],
                 skip_annotations: bool = False) -> Node:
    """Rebuild ``node`` applying ``fn(child, binder_offset)`` to each term
    child.  Annotation fields are still mapped (they contain types) unless
    ``skip_annotations``."""
    offsets = _OFFSETS.get(type(node), {})
    changes = {}
    for f in dataclasses.fields(node):
        if f.name == "span":
            continue
        if skip_annotations and f.name in ("motive", "bindty"):
            continue
        old = getattr(node, f.name)
        if old is None or isinstance(old, (int, str)):
            continue
        new = _map_piece(old, offsets.get(f.name, 0), fn)
        if new is not old:
            changes[f.name] = new
    return dataclasses.replace(node, **changes) if changes else node


def iter_children(node: Node) -> Iterator[tuple[Node, int]]:
    """Yield ``(child, binder_offset)`` for each term child, including the
    contents of annotations."""
    offsets = _OFFSETS.get(type(node), {})
    for f in dataclasses.fields(node):
        if f.name == "span":
            continue
        old = getattr(node, f.name)
        off = offsets.get(f.name, 0)
        if isinstance(old, Node):
            yield old, off
        elif isinstance(old, Motive):
            for i, t in enumerate(old.ext):
                yield t, old.scrut_binders + i
            yield old.result, old.scrut_binders + len(old.ext)
        elif isinstance(old, tuple):
            for item in old:
                if isinstance(item, tuple):
                    yield item[1], off
                elif isinstance(item, Node):
                    yield item, off


# ---------------------------------------------------------------------------
# shift / substitution
# ---------------------------------------------------------------------------


def shift(t: Node, cutoff: int, delta: int) -> Node:
    """Move free indices >= cutoff by delta, leaving bound structure alone."""
    if isinstance(t, Var):
        if t.ix >= cutoff:
            nx = t.ix + delta
            if nx < 0:
                raise IndexUnderflow("shift drove index %d below zero" % t.ix)
            return Var(nx)
        return t
    return map_children(t, lambda ch, off: shift(ch, cutoff + off, delta))


def subst_at(t: Node, j: int, v: Value) -> Node:
    """Discharge the variable at index ``j``: occurrences become ``v``
    (scoped outside the j innermost binders), higher indices drop by one."""

    def go(node: Node, b: int) -> Node:
        if isinstance(node, Var):
            if node.ix == b:
                return shift(v, 0, b)
            if node.ix > b:
                return Var(node.ix - 1)
            return node
        return map_children(node, lambda ch, off: go(ch, b + off))

    return go(t, j)


def substitute(t: Node, v: Value) -> Node:
    """Capture-avoiding substitution of the outermost free variable (the
    body of a binder applied to ``v``)."""
    return subst_at(t, 0, v)


def subst_keep(t: Node, j: int, v: Value) -> Node:
    """Replace ``Var(j)`` by ``v`` without removing the binder; ``v`` is
    scoped at the same depth as ``t`` and may mention index j itself."""

    def go(node: Node, b: int) -> Node:
        if isinstance(node, Var):
            if node.ix == b:
                return shift(v, 0, b - j)
            return node
        return map_children(node, lambda ch, off: go(ch, b + off))

    return go(t, j)


def swap_top(t: Node) -> Node:
    """Exchange de Bruijn indices 0 and 1 (used by commuting conversions)."""

    def go(node: Node, b: int) -> Node:
        if isinstance(node, Var):
            if node.ix == b:
                return Var(b + 1)
            if node.ix == b + 1:
                return Var(b)
            return node
        return map_children(node, lambda ch, off: go(ch, b + off))

    return go(t, 0)


def has_free(t: Node, j: int) -> bool:
    """Does index ``j`` (relative to t's root) occur free in ``t``?"""
    if isinstance(t, Var):
        return t.ix == j
    return any(has_free(ch, j + off) for ch, off in iter_children(t))


def max_free_index(t: Node) -> int:
    """Largest free index in ``t``, or -1 if closed."""
    if isinstance(t, Var):
        return t.ix
    best = -1
    for ch, off in iter_children(t):
        m = max_free_index(ch) - off
        if m > best:
            best = m
    return best


def is_closed(t: Node, depth: int = 0) -> bool:
    return max_free_index(t) < depth


# ---------------------------------------------------------------------------
# alpha-equality and erasure
# ---------------------------------------------------------------------------


def _static_eq(a: Node, b: Node) -> bool:
    for f in dataclasses.fields(a):
        if f.name in ANNOTATION_FIELDS:
            continue
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, (int, str)) or va is None:
            if va != vb:
                return False
        elif isinstance(va, tuple):
            if len(va) != len(vb):
                return False
            for x, y in zip(va, vb):
                if isinstance(x, tuple) and x[0] != y[0]:  # ReadC state keys
                    return False
    return True


def _term_children_no_annot(node: Node) -> list[tuple[Node, int]]:
    offsets = _OFFSETS.get(type(node), {})
    out = []
    for f in dataclasses.fields(node):
        if f.name in ANNOTATION_FIELDS:
            continue
        old = getattr(node, f.name)
        off = offsets.get(f.name, 0)
        if isinstance(old, Node):
            out.append((old, off))
        elif isinstance(old, tuple):
            for item in old:
                if isinstance(item, tuple):
                    out.append((item[1], off))
                elif isinstance(item, Node):
                    out.append((item, off))
    return out


def alpha_eq(a: Node, b: Node) -> bool:
    """Structural equality of de Bruijn trees, ignoring annotations.

    On this representation alpha-equivalence is plain syntactic equality;
    motives, binder-type hints and spans do not participate.
    """
    if a is b:
        return True
    if type(a) is not type(b):
        return False
    if not _static_eq(a, b):
        return False
    ca, cb = _term_children_no_annot(a), _term_children_no_annot(b)
    if len(ca) != len(cb):
        return False
    return all(alpha_eq(x, y) for (x, _), (y, _) in zip(ca, cb))


def erase_annotations(t: Node) -> Node:
    """Drop motives and binder-type hints everywhere (spans kept as-is)."""
    t = map_children(t, lambda ch, off: erase_annotations(ch), skip_annotations=True)
    changes = {}
    for f in dataclasses.fields(t):
        if f.name in ("motive", "bindty") and getattr(t, f.name) is not None:
            changes[f.name] = None
    return dataclasses.replace(t, **changes) if changes else t


# ---------------------------------------------------------------------------
# simplicity / complex-value predicates
# ---------------------------------------------------------------------------


def is_simple(v: Value) -> bool:
    """True iff no complex-value constructor occurs anywhere in ``v``,
    including inside thunked computations; type annotations don't count."""
    return not _has_complex(v)


def _has_complex(t: Node) -> bool:
    if isinstance(t, COMPLEX_VALUE_CLASSES):
        return True
    if isinstance(t, (VType, CType)):
        return False  # complex values may occur in types
    for f in dataclasses.fields(t):
        if f.name in ANNOTATION_FIELDS:
            continue
        old = getattr(t, f.name)
        if isinstance(old, Node):
            if not isinstance(old, (VType, CType)) and _has_complex(old):
                return True
        elif isinstance(old, tuple):
            for item in old:
                node = item[1] if isinstance(item, tuple) else item
                if isinstance(node, Node) and not isinstance(node, (VType, CType)):
                    if _has_complex(node):
                        return True
    return False


def complex_value_free(m: Computation) -> bool:
    """True iff no complex value occurs in a term position of ``m``
    (type annotations and motives excepted)."""
    return not _has_complex(m)


def stack_complex_value_free(k: Stack) -> bool:
    for frame in stack_frames(k):
        if isinstance(frame, SeqFrame) and _has_complex(frame.cont):
            return False
        if isinstance(frame, ArgFrame) and _has_complex(frame.arg):
            return False
    return True


# ---------------------------------------------------------------------------
# convenience constructors
# ---------------------------------------------------------------------------


def tr(v: Value) -> Value:
    """thunk(return v) — the `tr` abbreviation of the CBV elaboration."""
    return Thunk(Return(v))


def ufty(a: VType) -> VType:
    return UTy(FTy(a))


BOOL_TY = SumTy((UnitTy(), UnitTy()))
