"""Judgemental-equality engine.

Normalization orients the kernel's equations left to right: beta rules
for every connective, the let rule, sequencing associativity, and the
commuting conversions that pull lambdas out of a sequencing.  Conversion
compares normal forms up to alpha and a structural eta for thunks,
finite products and functions.  This is a sound under-approximation of
the full equational theory: eta for identity values is off by default
and commuting conversions are only applied in their oriented direction.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace, fields as dc_fields
from typing import Callable, Optional

from .syntax import (
    Apply, Choose, Computation, CType, Diverge, ErrorC, Force, Inj, Lam, LetC,
    LetV, Motive, Mu, Node, PairV, PmIdC, PmIdV, PmPairC, PmPairV, PmSumC,
    PmSumV, PmUnitC, PmUnitV, Print, ProdIntro, Proj, ReadC, Refl, Return,
    SeqTo, Thunk, UnitV, Value, Var, VType, Write,
    alpha_eq, erase_annotations, has_free, map_children, shift, subst_at,
    substitute, swap_top,
)


class FuelExhausted(Exception):
    """Normalization or conversion ran past its step budget."""


@dataclass(frozen=True)
class ConvOptions:
    """Conversion-checking knobs.

    ``eta_id`` enables the (restricted) identity-eta rule; it is off by
    default because extensional identity types make checking undecidable.
    """

    eta_id: bool = False
    eta_fun_prod_thunk: bool = True
    shrink_fuel: int = 64
    norm_fuel: int = 10000

    def __post_init__(self) -> None:
        if self.shrink_fuel < 1 or self.norm_fuel < 1:
            raise ValueError("fuels must be at least 1")


DEFAULT_OPTIONS = ConvOptions()

# One log entry per rewrite: (rule name, path of field steps from the root).
StepLog = list


# ---------------------------------------------------------------------------
# Oriented rewriting
# ---------------------------------------------------------------------------


def _root_redex(t: Node) -> Optional[tuple[Node, str]]:
    """Apply one oriented equation at the root, if any matches."""
    match t:
        case LetC(bound=v, body=b) | LetV(bound=v, body=b):
            return substitute(b, v), "let"
        case SeqTo(head=Return(val=v), cont=c):
            return substitute(c, v), "seq-return"
        case SeqTo(head=SeqTo(head=m, cont=n, motive=None, bindty=b1),
                   cont=n2, motive=None, bindty=b2):
            inner = SeqTo(n, shift(n2, 1, 1), None,
                          shift(b2, 0, 1) if b2 is not None else None)
            return SeqTo(m, inner, None, b1), "seq-assoc"
        case SeqTo(head=m, cont=ProdIntro(arms=arms), motive=None, bindty=b):
            return ProdIntro(tuple(SeqTo(m, a, None, b) for a in arms)), "seq-prod"
        case SeqTo(head=m, cont=Lam(dom=a, body=body), motive=None, bindty=b):
            if not has_free(a, 0):
                return Lam(
                    shift(a, 0, -1),
                    SeqTo(shift(m, 0, 1), swap_top(body), None,
                          shift(b, 0, 1) if b is not None else None),
                ), "seq-lam"
            return None
        case Force(val=Thunk(comp=m)):
            return m, "force-thunk"
        case PmSumC(scrut=Inj(tag=j, payload=v), arms=arms) | \
                PmSumV(scrut=Inj(tag=j, payload=v), arms=arms):
            if 1 <= j <= len(arms):
                return substitute(arms[j - 1], v), "pm-sum"
            return None
        case PmUnitC(scrut=UnitV(), body=b) | PmUnitV(scrut=UnitV(), body=b):
            return b, "pm-unit"
        case PmPairC(scrut=PairV(fst=x, snd=y), body=b) | \
                PmPairV(scrut=PairV(fst=x, snd=y), body=b):
            return subst_at(subst_at(b, 1, x), 0, y), "pm-pair"
        case PmIdC(scrut=Refl(payload=v), body=b) | \
                PmIdV(scrut=Refl(payload=v), body=b):
            return substitute(b, v), "pm-id"
        case Proj(tag=j, comp=ProdIntro(arms=arms)):
            if 1 <= j <= len(arms):
                return arms[j - 1], "proj"
            return None
        case Apply(arg=v, fun=Lam(body=b)):
            return substitute(b, v), "app"
    return None


def _reduce_once(t: Node) -> Optional[tuple[Node, str, tuple]]:
    """Leftmost-outermost single rewrite; returns (t', rule, path)."""
    hit = _root_redex(t)
    if hit is not None:
        return hit[0], hit[1], ()
    for f in dc_fields(t):
        if f.name in ("motive", "bindty", "span"):
            continue
        old = getattr(t, f.name)
        if isinstance(old, Node):
            sub = _reduce_once(old)
            if sub is not None:
                return (replace(t, **{f.name: sub[0]}), sub[1],
                        (f.name,) + sub[2])
        elif isinstance(old, tuple):
            for i, item in enumerate(old):
                child = item[1] if isinstance(item, tuple) else item
                if not isinstance(child, Node):
                    continue
                sub = _reduce_once(child)
                if sub is not None:
                    new_item = (item[0], sub[0]) if isinstance(item, tuple) else sub[0]
                    new_tuple = old[:i] + (new_item,) + old[i + 1:]
                    return (replace(t, **{f.name: new_tuple}), sub[1],
                            (f.name, i) + sub[2])
    return None


def normalize(t: Node, opts: ConvOptions = DEFAULT_OPTIONS,
              log: Optional[StepLog] = None) -> Node:
    """Rewrite to normal form for the oriented rule set.

    Recursion bodies are never unfolded, so fuel only runs out on
    pathological inputs; the checker reports that as FuelExhausted.
    """
    fuel = opts.norm_fuel
    while True:
        step = _reduce_once(t)
        if step is None:
            return t
        t, rule, path = step
        if log is not None:
            log.append((rule, path))
        fuel -= 1
        if fuel < 0:
            raise FuelExhausted("normalization exceeded %d steps" % opts.norm_fuel)


# ---------------------------------------------------------------------------
# Conversion (alpha + structural eta on normal forms)
# ---------------------------------------------------------------------------


def _static_fields_eq(a: Node, b: Node) -> bool:
    for f in dc_fields(a):
        if f.name in ("motive", "bindty", "span"):
            continue
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, (int, str)) or va is None:
            if va != vb:
                return False
        elif isinstance(va, tuple):
            if len(va) != len(vb):
                return False
            for x, y in zip(va, vb):
                if isinstance(x, tuple) and x[0] != y[0]:
                    return False
    return True


def _children_no_annot(node: Node) -> list[Node]:
    out = []
    for f in dc_fields(node):
        if f.name in ("motive", "bindty", "span"):
            continue
        old = getattr(node, f.name)
        if isinstance(old, Node):
            out.append(old)
        elif isinstance(old, tuple):
            for item in old:
                child = item[1] if isinstance(item, tuple) else item
                if isinstance(child, Node):
                    out.append(child)
    return out


def _eta_eq(a: Node, b: Node, opts: ConvOptions) -> bool:
    if type(a) is type(b):
        if not _static_fields_eq(a, b):
            return False
        ca, cb = _children_no_annot(a), _children_no_annot(b)
        return len(ca) == len(cb) and all(
            _eta_eq(x, y, opts) for x, y in zip(ca, cb))

    if opts.eta_fun_prod_thunk:
        # V = thunk force V
        if isinstance(a, Thunk) and isinstance(a.comp, Force):
            return _eta_eq(a.comp.val, b, opts)
        if isinstance(b, Thunk) and isinstance(b.comp, Force):
            return _eta_eq(a, b.comp.val, opts)
        # M = lambda x. x ' M
        if isinstance(a, Lam) and isinstance(b, Computation):
            return _eta_eq(a.body, Apply(Var(0), shift(b, 0, 1)), opts)
        if isinstance(b, Lam) and isinstance(a, Computation):
            return _eta_eq(Apply(Var(0), shift(a, 0, 1)), b.body, opts)
        # M = lambda_i (i ' M), nonempty products only
        if isinstance(a, ProdIntro) and isinstance(b, Computation) and a.arms:
            return all(_eta_eq(arm, Proj(i + 1, b), opts)
                       for i, arm in enumerate(a.arms))
        if isinstance(b, ProdIntro) and isinstance(a, Computation) and b.arms:
            return all(_eta_eq(Proj(i + 1, a), arm, opts)
                       for i, arm in enumerate(b.arms))

    if opts.eta_id:
        # Constant-motive instance of identity eta.
        if isinstance(a, (PmIdV, PmIdC)) and not has_free(a.body, 0):
            return _eta_eq(shift(a.body, 0, -1), b, opts)
        if isinstance(b, (PmIdV, PmIdC)) and not has_free(b.body, 0):
            return _eta_eq(a, shift(b.body, 0, -1), opts)

    return False


def convertible(a: Node, b: Node, opts: ConvOptions = DEFAULT_OPTIONS,
                log: Optional[StepLog] = None) -> bool:
    """Judgemental-equality test on terms or types of one syntactic class."""
    na = normalize(a, opts, log)
    nb = normalize(b, opts, log)
    return _eta_eq(na, nb, opts)


# ---------------------------------------------------------------------------
# Complex-value elimination
# ---------------------------------------------------------------------------

_VALUE_FIELD = {
    Return: "val",
    Force: "val",
    Apply: "arg",
    LetC: "bound",
    PmUnitC: "scrut",
    PmSumC: "scrut",
    PmPairC: "scrut",
    PmIdC: "scrut",
}

_Konsumer = Callable[[Value, int], Computation]


def _purify(v: Value, elim: Callable[[Computation], Computation],
            k: _Konsumer) -> Computation:
    """CPS rebuild of ``v`` with every complex construct hoisted to
    computation level; ``k`` receives the simple residue and the number
    of binders introduced above it."""
    match v:
        case Var() | UnitV():
            return k(v, 0)
        case Thunk(comp=m):
            return k(Thunk(elim(m)), 0)
        case Inj(tag=i, payload=w):
            return _purify(w, elim, lambda w2, n: k(Inj(i, w2), n))
        case Refl(payload=w):
            return _purify(w, elim, lambda w2, n: k(Refl(w2), n))
        case PairV(fst=x, snd=y):
            return _purify(
                x, elim,
                lambda x2, nx: _purify(
                    shift(y, 0, nx), elim,
                    lambda y2, ny: k(PairV(shift(x2, 0, ny), y2), nx + ny)))
        case LetV(bound=w, body=body):
            return _purify(
                w, elim,
                lambda w2, nw: SeqTo(
                    Return(w2),
                    _purify(shift(body, 1, nw), elim,
                            lambda bv, nb: k(bv, nw + 1 + nb))))
        case PmUnitV(scrut=w, body=body):
            return _purify(
                w, elim,
                lambda w2, nw: PmUnitC(
                    w2,
                    _purify(shift(body, 0, nw), elim,
                            lambda bv, nb: k(bv, nw + nb))))
        case PmSumV(scrut=w, arms=arms):
            return _purify(
                w, elim,
                lambda w2, nw: PmSumC(
                    w2,
                    tuple(
                        _purify(shift(arm, 1, nw), elim,
                                lambda bv, nb: k(bv, nw + 1 + nb))
                        for arm in arms)))
        case PmPairV(scrut=w, body=body):
            return _purify(
                w, elim,
                lambda w2, nw: PmPairC(
                    w2,
                    _purify(shift(body, 2, nw), elim,
                            lambda bv, nb: k(bv, nw + 2 + nb))))
        case PmIdV(scrut=w, body=body):
            return _purify(
                w, elim,
                lambda w2, nw: PmIdC(
                    w2,
                    _purify(shift(body, 1, nw), elim,
                            lambda bv, nb: k(bv, nw + 1 + nb))))
    raise AssertionError("unhandled value form %r" % type(v).__name__)


def eliminate_complex_values(m: Computation) -> Computation:
    """Hoist let and pattern-match values out of computations.

    The result is judgementally equal to the input, contains no complex
    values outside type annotations and motives, and leaves types and
    motives untouched.
    """

    def elim(node: Computation) -> Computation:
        def on_child(ch: Node, _off: int) -> Node:
            if isinstance(ch, Computation):
                return elim(ch)
            return ch

        node2 = map_children(node, on_child, skip_annotations=True)
        fname = _VALUE_FIELD.get(type(node2))
        if fname is None:
            return node2
        v = getattr(node2, fname)

        def finish(v2: Value, n: int) -> Computation:
            host = shift(node2, 0, n) if n else node2
            return replace(host, **{fname: v2})

        return _purify(v, elim, finish)

    return elim(m)


# ---------------------------------------------------------------------------
# Effect-shrinking coercion
# ---------------------------------------------------------------------------


def _effect_steps(m: Computation) -> list[Computation]:
    """One effect transition at the evaluation position of ``m``."""
    match m:
        case Print(body=b) | Write(body=b):
            return [b]
        case Choose(arms=arms):
            return list(arms)
        case ReadC(arms=arms):
            return [comp for _, comp in arms]
        case Mu(body=b):
            return [substitute(b, Thunk(m))]
        case Diverge():
            return []
        case SeqTo(head=h):
            return [replace(m, head=h2) for h2 in _effect_steps(h)]
        case Proj(comp=c):
            return [replace(m, comp=c2) for c2 in _effect_steps(c)]
        case Apply(fun=f):
            return [replace(m, fun=f2) for f2 in _effect_steps(f)]
    return []


def _thunk_expansions(t: Node) -> list[Node]:
    """All types obtained by stepping one thunked computation in ``t``."""
    out: list[Node] = []
    if isinstance(t, Thunk):
        out.extend(Thunk(c2) for c2 in _effect_steps(t.comp))

    for f in dc_fields(t):
        if f.name in ("motive", "bindty", "span"):
            continue
        old = getattr(t, f.name)
        if isinstance(old, Node):
            out.extend(replace(t, **{f.name: new}) for new in _thunk_expansions(old))
        elif isinstance(old, tuple):
            for i, item in enumerate(old):
                child = item[1] if isinstance(item, tuple) else item
                if not isinstance(child, Node):
                    continue
                for new_child in _thunk_expansions(child):
                    new_item = ((item[0], new_child) if isinstance(item, tuple)
                                else new_child)
                    out.append(replace(t, **{f.name: old[:i] + (new_item,) + old[i + 1:]}))
    return out


def shrink_check(candidate: CType, wanted: CType,
                 opts: ConvOptions = DEFAULT_OPTIONS) -> bool:
    """Effect-coercion subtyping: can ``wanted`` be rewritten to
    ``candidate`` by running effect transitions inside its thunked
    computations, interleaved with conversion?

    The search is breadth-first with depth bound ``opts.shrink_fuel``;
    exhaustion means False.  With no effect forms present this degrades
    to plain convertibility.
    """
    target = normalize(candidate, opts)
    start = normalize(wanted, opts)
    if _eta_eq(start, target, opts):
        return True
    seen = {erase_annotations(start)}
    queue: deque[tuple[Node, int]] = deque([(start, 0)])
    budget = max(1024, opts.shrink_fuel * 16)
    while queue and budget > 0:
        node, depth = queue.popleft()
        if depth >= opts.shrink_fuel:
            continue
        for nxt in _thunk_expansions(node):
            budget -= 1
            nxt = normalize(nxt, opts)
            key = erase_annotations(nxt)
            if key in seen:
                continue
            seen.add(key)
            if _eta_eq(nxt, target, opts):
                return True
            queue.append((nxt, depth + 1))
    return False
