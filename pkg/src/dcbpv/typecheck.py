"""Bidirectional type checker for both calculus variants.

Introduction forms check against an expected type; variables, force,
projection, application and annotated sequencing infer.  The checker
doubles as an elaborator: it fills in the binder-type annotation of
every sequencing node it accepts, which is what lets mid-run machine
configurations be re-checked.

Variant behaviour: a sequencing motive that actually mentions the bound
thunk variable is accepted only in the permissive variant; with
coercion enabled, a failed conversion at the outermost check position
falls back to the effect-shrinking subtype test.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from . import equality
from .equality import ConvOptions, DEFAULT_OPTIONS, convertible, shrink_check
from .syntax import (
    Apply, ArgFrame, Choose, Computation, Context, CType, Diverge, EMPTY_CONTEXT,
    EffectSignature, ErrorC, Force, FTy, IdTy, Inj, Lam, LetC, LetV, Motive, Mu,
    Node, NilK, PairV, PiTy, PmIdC, PmIdV, PmPairC, PmPairV, PmSumC, PmSumV,
    PmUnitC, PmUnitV, Print, ProdIntro, ProdTy, Proj, PURE_SIGNATURE, ReadC,
    Refl, Return, SeqFrame, SeqTo, Stack, SigmaTy, SignatureError, SumTy, Thunk,
    UnitTy, UnitV, UTy, Value, Var, VType, Write,
    has_free, shift, subst_at, substitute, tr,
)

# ---------------------------------------------------------------------------
# Variants and errors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Variant:
    plus: bool = False
    allow_shrink: bool = True

    @property
    def name(self) -> str:
        return "plus" if self.plus else "minus"


MINUS = Variant(plus=False)
PLUS = Variant(plus=True)
PLUS_NO_SHRINK = Variant(plus=True, allow_shrink=False)


class ErrorKind(enum.Enum):
    UNBOUND_VARIABLE = "UnboundVariable"
    MISMATCH = "Mismatch"
    NOT_A_FUNCTION = "NotAFunction"
    NOT_A_SUM = "NotASum"
    MOTIVE_REQUIRED = "MotiveRequired"
    DEPENDENT_SEQ_IN_MINUS = "DependentSeqInMinus"
    EFFECT_DISABLED = "EffectDisabled"
    ARITY_MISMATCH = "ArityMismatch"
    SHRINK_FAILED = "ShrinkFailed"
    FUEL_EXHAUSTED = "FuelExhausted"


class TypeCheckError(Exception):
    """Checker rejection; always carries a path into the offending term."""

    def __init__(self, kind: ErrorKind, path: tuple, message: str,
                 expected: Node | None = None, found: Node | None = None,
                 span=None):
        super().__init__(message)
        self.kind = kind
        self.path = path
        self.message = message
        self.expected = expected
        self.found = found
        self.span = span

    def to_json(self) -> dict:
        from .printer import pretty
        out = {
            "kind": self.kind.value,
            "path": list(self.path),
            "message": self.message,
        }
        if self.expected is not None:
            out["expected"] = pretty(self.expected)
        if self.found is not None:
            out["found"] = pretty(self.found)
        if self.span is not None:
            out["span"] = {"start": self.span.start, "end": self.span.end,
                           "line": self.span.line, "col": self.span.col}
        return out

    def render(self, color: bool = False) -> str:
        from .printer import pretty
        head = "type error"
        if color:
            head = "\x1b[31m%s\x1b[0m" % head
        loc = ""
        if self.span is not None:
            loc = " at line %d, col %d" % (self.span.line, self.span.col)
        lines = ["%s[%s]%s: %s" % (head, self.kind.value, loc, self.message)]
        if self.path:
            lines.append("  in: %s" % "/".join(str(p) for p in self.path))
        if self.expected is not None:
            lines.append("  expected: %s" % pretty(self.expected))
        if self.found is not None:
            lines.append("  found:    %s" % pretty(self.found))
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# Checker
# ---------------------------------------------------------------------------


class Checker:
    def __init__(self, variant: Variant = MINUS,
                 sig: EffectSignature = PURE_SIGNATURE,
                 opts: ConvOptions = DEFAULT_OPTIONS,
                 log: list | None = None):
        self.variant = variant
        self.sig = sig
        self.opts = opts
        self.log = log

    # -- helpers ------------------------------------------------------------

    def _norm(self, t: Node) -> Node:
        try:
            return equality.normalize(t, self.opts, self.log)
        except equality.FuelExhausted as e:
            raise TypeCheckError(ErrorKind.FUEL_EXHAUSTED, (), str(e)) from e

    def _conv(self, a: Node, b: Node) -> bool:
        try:
            return convertible(a, b, self.opts, self.log)
        except equality.FuelExhausted as e:
            raise TypeCheckError(ErrorKind.FUEL_EXHAUSTED, (), str(e)) from e

    def _fail(self, kind: ErrorKind, path: tuple, msg: str, expected=None,
              found=None, span=None):
        raise TypeCheckError(kind, path, msg, expected, found, span)

    def _subsume_comp(self, found: CType, expected: CType, path: tuple,
                      top: bool, span=None) -> None:
        if self._conv(found, expected):
            return
        if top and self.variant.plus and self.variant.allow_shrink:
            try:
                if shrink_check(found, expected, self.opts):
                    return
            except equality.FuelExhausted as e:
                raise TypeCheckError(ErrorKind.FUEL_EXHAUSTED, path, str(e)) from e
            self._fail(ErrorKind.SHRINK_FAILED, path,
                       "type does not shrink into the expected one",
                       expected=expected, found=found, span=span)
        self._fail(ErrorKind.MISMATCH, path, "computation type mismatch",
                   expected=expected, found=found, span=span)

    def _effect(self, flag: str, path: tuple, span=None) -> None:
        if not self.sig.allows(flag):
            self._fail(ErrorKind.EFFECT_DISABLED, path,
                       "effect %r is not enabled in the signature" % flag,
                       span=span)

    # -- well-formedness -----------------------------------------------------

    def wf_context(self, ctx: Context) -> None:
        seen = Context(())
        for i, entry in enumerate(ctx.entries):
            self.wf_vtype(seen, entry, ("ctx", i))
            seen = seen.extend(entry)
        if ctx.comp_slot is not None:
            self.wf_ctype(seen, ctx.comp_slot, ("ctx", "comp_slot"))

    def wf_vtype(self, ctx: Context, a: VType, path: tuple = ()) -> None:
        match a:
            case UTy(body=b):
                self.wf_ctype(ctx, b, path + ("body",))
            case UnitTy():
                pass
            case SumTy(arms=arms):
                for i, arm in enumerate(arms):
                    self.wf_vtype(ctx, arm, path + ("arms", i))
            case SigmaTy(fst=f, snd=s):
                self.wf_vtype(ctx, f, path + ("fst",))
                self.wf_vtype(ctx.extend(f), s, path + ("snd",))
            case IdTy(carrier=c, lhs=l, rhs=r):
                self.wf_vtype(ctx, c, path + ("carrier",))
                self.check_value(ctx, l, c, path + ("lhs",))
                self.check_value(ctx, r, c, path + ("rhs",))
            case Var():
                self._fail(ErrorKind.MISMATCH, path, "value where a type was expected")
            case _:
                self._fail(ErrorKind.MISMATCH, path,
                           "unknown value type %r" % type(a).__name__)

    def wf_ctype(self, ctx: Context, b: CType, path: tuple = ()) -> None:
        match b:
            case FTy(ret=r):
                self.wf_vtype(ctx, r, path + ("ret",))
            case ProdTy(arms=arms):
                for i, arm in enumerate(arms):
                    self.wf_ctype(ctx, arm, path + ("arms", i))
            case PiTy(dom=d, cod=c):
                self.wf_vtype(ctx, d, path + ("dom",))
                self.wf_ctype(ctx.extend(d), c, path + ("cod",))
            case _:
                self._fail(ErrorKind.MISMATCH, path,
                           "unknown computation type %r" % type(b).__name__)

    # -- values ---------------------------------------------------------------

    def infer_value(self, ctx: Context, v: Value, path: tuple = ()) -> tuple[VType, Value]:
        match v:
            case Var(ix=ix):
                try:
                    return ctx.lookup(ix), v
                except IndexError:
                    self._fail(ErrorKind.UNBOUND_VARIABLE, path,
                               "unbound variable index %d" % ix, span=v.span)
            case Thunk(comp=m):
                b, m2 = self.infer_comp(ctx, m, path + ("comp",))
                return UTy(b), replace(v, comp=m2)
            case UnitV():
                return UnitTy(), v
            case Refl(payload=w):
                a, w2 = self.infer_value(ctx, w, path + ("payload",))
                return IdTy(a, w2, w2), replace(v, payload=w2)
            case LetV(bound=w, body=body):
                a, w2 = self.infer_value(ctx, w, path + ("bound",))
                bty, body2 = self.infer_value(ctx.extend(a), body, path + ("body",))
                return substitute(bty, w2), replace(v, bound=w2, body=body2)
            case PmUnitV(scrut=w, body=body):
                w2 = self.check_value(ctx, w, UnitTy(), path + ("scrut",))
                bty, body2 = self.infer_value(ctx, body, path + ("body",))
                return bty, replace(v, scrut=w2, body=body2)
            case PmSumV() | PmPairV() | PmIdV():
                return self._infer_weak_value_pm(ctx, v, path)
            case Inj() | PairV():
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "introduction form needs an expected type",
                           span=v.span)
            case _:
                self._fail(ErrorKind.MISMATCH, path,
                           "unknown value form %r" % type(v).__name__)

    def _infer_weak_value_pm(self, ctx: Context, v: Value, path: tuple) -> tuple[VType, Value]:
        sty, scrut2 = self.infer_value(ctx, v.scrut, path + ("scrut",))
        sty = self._norm(sty)
        if isinstance(v, PmSumV):
            if not isinstance(sty, SumTy):
                self._fail(ErrorKind.NOT_A_SUM, path, "pattern match on a non-sum",
                           found=sty, span=v.span)
            if len(sty.arms) != len(v.arms):
                self._fail(ErrorKind.ARITY_MISMATCH, path,
                           "sum has %d arms, match has %d"
                           % (len(sty.arms), len(v.arms)), span=v.span)
            results, arms2 = [], []
            for i, arm in enumerate(v.arms):
                bty, arm2 = self.infer_value(ctx.extend(sty.arms[i]), arm,
                                             path + ("arms", i))
                if has_free(bty, 0):
                    self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("arms", i),
                               "dependent match needs a motive", span=v.span)
                results.append(shift(bty, 0, -1))
                arms2.append(arm2)
            for i, r in enumerate(results[1:], start=1):
                if not self._conv(results[0], r):
                    self._fail(ErrorKind.MISMATCH, path + ("arms", i),
                               "match arms disagree", expected=results[0], found=r)
            if not results:
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "empty match needs a motive", span=v.span)
            return results[0], replace(v, scrut=scrut2, arms=tuple(arms2))
        if isinstance(v, PmPairV):
            if not isinstance(sty, SigmaTy):
                self._fail(ErrorKind.MISMATCH, path, "pattern match on a non-pair",
                           found=sty, span=v.span)
            inner = ctx.extend(sty.fst).extend(sty.snd)
            bty, body2 = self.infer_value(inner, v.body, path + ("body",))
            if has_free(bty, 0) or has_free(bty, 1):
                self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("body",),
                           "dependent match needs a motive", span=v.span)
            return shift(bty, 0, -2), replace(v, scrut=scrut2, body=body2)
        # PmIdV
        if not isinstance(sty, IdTy):
            self._fail(ErrorKind.MISMATCH, path, "pattern match on a non-identity",
                       found=sty, span=v.span)
        bty, body2 = self.infer_value(ctx.extend(sty.carrier), v.body,
                                      path + ("body",))
        if has_free(bty, 0):
            self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("body",),
                       "dependent match needs a motive", span=v.span)
        return shift(bty, 0, -1), replace(v, scrut=scrut2, body=body2)

    def check_value(self, ctx: Context, v: Value, a: VType, path: tuple = ()) -> Value:
        want = self._norm(a)
        match v, want:
            case Thunk(comp=m), UTy(body=b):
                return replace(v, comp=self.check_comp(ctx, m, b, path + ("comp",)))
            case UnitV(), UnitTy():
                return v
            case Inj(tag=i, payload=w), SumTy(arms=arms):
                if not 1 <= i <= len(arms):
                    self._fail(ErrorKind.ARITY_MISMATCH, path,
                               "tag %d outside sum of %d arms" % (i, len(arms)),
                               span=v.span)
                return replace(v, payload=self.check_value(
                    ctx, w, arms[i - 1], path + ("payload",)))
            case Inj(), _:
                self._fail(ErrorKind.NOT_A_SUM, path,
                           "sum introduction against a non-sum type",
                           expected=want, span=v.span)
            case PairV(fst=x, snd=y), SigmaTy(fst=af, snd=asnd):
                x2 = self.check_value(ctx, x, af, path + ("fst",))
                y2 = self.check_value(ctx, y, substitute(asnd, x2), path + ("snd",))
                return replace(v, fst=x2, snd=y2)
            case PairV(), _:
                self._fail(ErrorKind.MISMATCH, path,
                           "pair introduction against a non-pair type",
                           expected=want, span=v.span)
            case Refl(payload=w), IdTy(carrier=c, lhs=l, rhs=r):
                w2 = self.check_value(ctx, w, c, path + ("payload",))
                if not (self._conv(w2, l) and self._conv(w2, r)):
                    self._fail(ErrorKind.MISMATCH, path,
                               "refl endpoint does not match the identity type",
                               expected=want, found=IdTy(c, w2, w2), span=v.span)
                return replace(v, payload=w2)
            case Refl(), _:
                self._fail(ErrorKind.MISMATCH, path,
                           "refl against a non-identity type", expected=want,
                           span=v.span)
            case LetV(bound=w, body=body), _:
                aty, w2 = self.infer_value(ctx, w, path + ("bound",))
                try:
                    bty, body2 = self.infer_value(ctx.extend(aty), body,
                                                  path + ("body",))
                    found = substitute(bty, w2)
                    if not self._conv(found, want):
                        self._fail(ErrorKind.MISMATCH, path, "value type mismatch",
                                   expected=want, found=found, span=v.span)
                    return replace(v, bound=w2, body=body2)
                except TypeCheckError as e:
                    if e.kind is not ErrorKind.MOTIVE_REQUIRED:
                        raise
                    body2 = self.check_value(ctx.extend(aty), body,
                                             shift(want, 0, 1), path + ("body",))
                    return replace(v, bound=w2, body=body2)
            case PmUnitV(scrut=w, body=body), _:
                w2 = self.check_value(ctx, w, UnitTy(), path + ("scrut",))
                return replace(v, scrut=w2,
                               body=self.check_value(ctx, body, want, path + ("body",)))
            case PmSumV(scrut=w, arms=arms), _:
                sty, w2 = self.infer_value(ctx, w, path + ("scrut",))
                sty = self._norm(sty)
                if not isinstance(sty, SumTy):
                    self._fail(ErrorKind.NOT_A_SUM, path, "pattern match on a non-sum",
                               found=sty, span=v.span)
                if len(sty.arms) != len(arms):
                    self._fail(ErrorKind.ARITY_MISMATCH, path,
                               "sum has %d arms, match has %d"
                               % (len(sty.arms), len(arms)), span=v.span)
                arms2 = tuple(
                    self.check_value(ctx.extend(sty.arms[i]), arm,
                                     shift(want, 0, 1), path + ("arms", i))
                    for i, arm in enumerate(arms))
                return replace(v, scrut=w2, arms=arms2)
            case PmPairV(scrut=w, body=body), _:
                sty, w2 = self.infer_value(ctx, w, path + ("scrut",))
                sty = self._norm(sty)
                if not isinstance(sty, SigmaTy):
                    self._fail(ErrorKind.MISMATCH, path, "pattern match on a non-pair",
                               found=sty, span=v.span)
                inner = ctx.extend(sty.fst).extend(sty.snd)
                body2 = self.check_value(inner, body, shift(want, 0, 2),
                                         path + ("body",))
                return replace(v, scrut=w2, body=body2)
            case PmIdV(scrut=w, body=body), _:
                sty, w2 = self.infer_value(ctx, w, path + ("scrut",))
                sty = self._norm(sty)
                if not isinstance(sty, IdTy):
                    self._fail(ErrorKind.MISMATCH, path,
                               "pattern match on a non-identity", found=sty,
                               span=v.span)
                body2 = self.check_value(ctx.extend(sty.carrier), body,
                                         shift(want, 0, 1), path + ("body",))
                return replace(v, scrut=w2, body=body2)
            case _, _:
                found, v2 = self.infer_value(ctx, v, path)
                if not self._conv(found, want):
                    self._fail(ErrorKind.MISMATCH, path, "value type mismatch",
                               expected=want, found=found, span=v.span)
                return v2

    # -- computations -----------------------------------------------------------

    def infer_comp(self, ctx: Context, m: Computation, path: tuple = ()) -> tuple[CType, Computation]:
        match m:
            case Return(val=v):
                a, v2 = self.infer_value(ctx, v, path + ("val",))
                return FTy(a), replace(m, val=v2)
            case Force(val=v):
                a, v2 = self.infer_value(ctx, v, path + ("val",))
                a = self._norm(a)
                if not isinstance(a, UTy):
                    self._fail(ErrorKind.MISMATCH, path, "forcing a non-thunk",
                               found=a, span=m.span)
                return a.body, replace(m, val=v2)
            case SeqTo():
                return self._seq_infer(ctx, m, path)
            case ProdIntro(arms=arms):
                tys, arms2 = [], []
                for i, arm in enumerate(arms):
                    t, a2 = self.infer_comp(ctx, arm, path + ("arms", i))
                    tys.append(t)
                    arms2.append(a2)
                return ProdTy(tuple(tys)), replace(m, arms=tuple(arms2))
            case Proj(tag=j, comp=c):
                t, c2 = self.infer_comp(ctx, c, path + ("comp",))
                t = self._norm(t)
                if not isinstance(t, ProdTy):
                    self._fail(ErrorKind.MISMATCH, path,
                               "projection from a non-product", found=t, span=m.span)
                if not 1 <= j <= len(t.arms):
                    self._fail(ErrorKind.ARITY_MISMATCH, path,
                               "projection %d outside product of %d" % (j, len(t.arms)),
                               span=m.span)
                return t.arms[j - 1], replace(m, comp=c2)
            case Lam(dom=a, body=b):
                self.wf_vtype(ctx, a, path + ("dom",))
                bty, b2 = self.infer_comp(ctx.extend(a), b, path + ("body",))
                return PiTy(a, bty), replace(m, body=b2)
            case Apply(arg=v, fun=f):
                fty, f2 = self.infer_comp(ctx, f, path + ("fun",))
                fty = self._norm(fty)
                if not isinstance(fty, PiTy):
                    self._fail(ErrorKind.NOT_A_FUNCTION, path,
                               "applying a non-function", found=fty, span=m.span)
                v2 = self.check_value(ctx, v, fty.dom, path + ("arg",))
                return substitute(fty.cod, v2), replace(m, arg=v2, fun=f2)
            case LetC(bound=v, body=b):
                a, v2 = self.infer_value(ctx, v, path + ("bound",))
                bty, b2 = self.infer_comp(ctx.extend(a), b, path + ("body",))
                return substitute(bty, v2), replace(m, bound=v2, body=b2)
            case PmUnitC() | PmSumC() | PmPairC() | PmIdC():
                return self._pm_infer(ctx, m, path)
            case Print(elem=e, body=b):
                self._effect("print", path, m.span)
                self._monoid_elem(e, path, m.span)
                bty, b2 = self.infer_comp(ctx, b, path + ("body",))
                return bty, replace(m, body=b2)
            case Write(state=s, body=b):
                self._effect("state", path, m.span)
                self._state_name(s, path, m.span)
                bty, b2 = self.infer_comp(ctx, b, path + ("body",))
                return bty, replace(m, body=b2)
            case Choose(arms=arms):
                self._effect("choose", path, m.span)
                tys, arms2 = [], []
                for i, arm in enumerate(arms):
                    t, a2 = self.infer_comp(ctx, arm, path + ("arms", i))
                    tys.append(t)
                    arms2.append(a2)
                for i, t in enumerate(tys[1:], start=1):
                    if not self._conv(tys[0], t):
                        self._fail(ErrorKind.MISMATCH, path + ("arms", i),
                                   "choice branches disagree", expected=tys[0],
                                   found=t, span=m.span)
                return tys[0], replace(m, arms=tuple(arms2))
            case ReadC(arms=arms):
                self._effect("state", path, m.span)
                self._read_arms(arms, path, m.span)
                tys, arms2 = [], []
                for i, (s, arm) in enumerate(arms):
                    t, a2 = self.infer_comp(ctx, arm, path + ("arms", i))
                    tys.append(t)
                    arms2.append((s, a2))
                for i, t in enumerate(tys[1:], start=1):
                    if not self._conv(tys[0], t):
                        self._fail(ErrorKind.MISMATCH, path + ("arms", i),
                                   "read branches disagree", expected=tys[0],
                                   found=t, span=m.span)
                return tys[0], replace(m, arms=tuple(arms2))
            case Diverge():
                self._effect("diverge", path, m.span)
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "diverge has every type; check it against one",
                           span=m.span)
            case Mu():
                self._effect("rec", path, m.span)
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "recursion needs an expected type", span=m.span)
            case ErrorC(name=e):
                self._effect("error", path, m.span)
                self._error_name(e, path, m.span)
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "error has every type; check it against one",
                           span=m.span)
            case _:
                self._fail(ErrorKind.MISMATCH, path,
                           "unknown computation form %r" % type(m).__name__)

    def check_comp(self, ctx: Context, m: Computation, b: CType,
                   path: tuple = (), top: bool = True) -> Computation:
        want = self._norm(b)
        match m, want:
            case SeqTo(), _:
                return self._seq_check(ctx, m, want, path, top)
            case ProdIntro(arms=arms), ProdTy(arms=tys):
                if len(arms) != len(tys):
                    self._fail(ErrorKind.ARITY_MISMATCH, path,
                               "product has %d components, type has %d"
                               % (len(arms), len(tys)), span=m.span)
                arms2 = tuple(self.check_comp(ctx, arm, tys[i],
                                              path + ("arms", i), top=False)
                              for i, arm in enumerate(arms))
                return replace(m, arms=arms2)
            case Lam(dom=a, body=body), PiTy(dom=ad, cod=cod):
                self.wf_vtype(ctx, a, path + ("dom",))
                if not self._conv(a, ad):
                    self._fail(ErrorKind.MISMATCH, path + ("dom",),
                               "domain annotation disagrees with the expected type",
                               expected=ad, found=a, span=m.span)
                body2 = self.check_comp(ctx.extend(a), body, cod,
                                        path + ("body",), top=False)
                return replace(m, body=body2)
            case Lam(), _:
                self._fail(ErrorKind.NOT_A_FUNCTION, path,
                           "function against a non-function type",
                           expected=want, span=m.span)
            case Force(val=v), _:
                try:
                    found, m2 = self.infer_comp(ctx, m, path)
                except TypeCheckError as e:
                    if e.kind is not ErrorKind.MOTIVE_REQUIRED:
                        raise
                    v2 = self.check_value(ctx, v, UTy(want), path + ("val",))
                    return replace(m, val=v2)
                self._subsume_comp(found, want, path, top, m.span)
                return m2
            case Return(val=v), FTy(ret=a):
                return replace(m, val=self.check_value(ctx, v, a, path + ("val",)))
            case Return(), _:
                self._fail(ErrorKind.MISMATCH, path,
                           "return against a non-returner type", expected=want,
                           span=m.span)
            case LetC(bound=v, body=body), _:
                a, v2 = self.infer_value(ctx, v, path + ("bound",))
                try:
                    bty, body2 = self.infer_comp(ctx.extend(a), body,
                                                 path + ("body",))
                except TypeCheckError as e:
                    if e.kind is not ErrorKind.MOTIVE_REQUIRED:
                        raise
                    body2 = self.check_comp(ctx.extend(a), body, shift(want, 0, 1),
                                            path + ("body",), top=False)
                    return replace(m, bound=v2, body=body2)
                self._subsume_comp(substitute(bty, v2), want, path, top, m.span)
                return replace(m, bound=v2, body=body2)
            case PmUnitC() | PmSumC() | PmPairC() | PmIdC(), _:
                return self._pm_check(ctx, m, want, path, top)
            case Diverge(), _:
                self._effect("diverge", path, m.span)
                return m
            case Mu(body=body), _:
                self._effect("rec", path, m.span)
                body2 = self.check_comp(ctx.extend(UTy(want)), body,
                                        shift(want, 0, 1), path + ("body",),
                                        top=False)
                return replace(m, body=body2)
            case ErrorC(name=e), _:
                self._effect("error", path, m.span)
                self._error_name(e, path, m.span)
                return m
            case Print(elem=e, body=body), _:
                self._effect("print", path, m.span)
                self._monoid_elem(e, path, m.span)
                return replace(m, body=self.check_comp(ctx, body, want,
                                                       path + ("body",), top=False))
            case Write(state=s, body=body), _:
                self._effect("state", path, m.span)
                self._state_name(s, path, m.span)
                return replace(m, body=self.check_comp(ctx, body, want,
                                                       path + ("body",), top=False))
            case Choose(arms=arms), _:
                self._effect("choose", path, m.span)
                arms2 = tuple(self.check_comp(ctx, arm, want, path + ("arms", i),
                                              top=False)
                              for i, arm in enumerate(arms))
                return replace(m, arms=arms2)
            case ReadC(arms=arms), _:
                self._effect("state", path, m.span)
                self._read_arms(arms, path, m.span)
                arms2 = tuple((s, self.check_comp(ctx, arm, want,
                                                  path + ("arms", i), top=False))
                              for i, (s, arm) in enumerate(arms))
                return replace(m, arms=arms2)
            case _, _:
                found, m2 = self.infer_comp(ctx, m, path)
                self._subsume_comp(found, want, path, top, m.span)
                return m2

    # -- sequencing --------------------------------------------------------------

    def _seq_head(self, ctx: Context, m: SeqTo, path: tuple) -> tuple[VType, Computation]:
        """Determine the binder type, preferring the annotation."""
        if m.bindty is not None:
            self.wf_vtype(ctx, m.bindty, path + ("bindty",))
            head2 = self.check_comp(ctx, m.head, FTy(m.bindty),
                                    path + ("head",), top=False)
            return m.bindty, head2
        fty, head2 = self.infer_comp(ctx, m.head, path + ("head",))
        fty = self._norm(fty)
        if not isinstance(fty, FTy):
            self._fail(ErrorKind.MISMATCH, path + ("head",),
                       "sequencing head must be a returner", found=fty,
                       span=m.span)
        return fty.ret, head2

    def _seq_motive(self, ctx: Context, m: SeqTo, a: VType, path: tuple) -> Motive:
        mot = m.motive
        if mot.ext:
            self._fail(ErrorKind.ARITY_MISMATCH, path + ("motive",),
                       "nonempty motive extensions are not supported",
                       span=m.span)
        if mot.scrut_binders != 1:
            self._fail(ErrorKind.ARITY_MISMATCH, path + ("motive",),
                       "sequencing motive binds exactly one variable",
                       span=m.span)
        if not isinstance(mot.result, CType):
            self._fail(ErrorKind.MISMATCH, path + ("motive",),
                       "sequencing motive must be a computation type",
                       span=m.span)
        if has_free(mot.result, 0) and not self.variant.plus:
            self._fail(ErrorKind.DEPENDENT_SEQ_IN_MINUS, path + ("motive",),
                       "dependent sequencing is only available in the plus variant",
                       span=m.span)
        self.wf_ctype(ctx.extend(UTy(FTy(a))), mot.result, path + ("motive",))
        return mot

    def _seq_infer(self, ctx: Context, m: SeqTo, path: tuple) -> tuple[CType, Computation]:
        a, head2 = self._seq_head(ctx, m, path)
        inner = ctx.extend(a)
        if m.motive is not None:
            mot = self._seq_motive(ctx, m, a, path)
            cont_want = substitute(shift(mot.result, 1, 1), tr(Var(0)))
            cont2 = self.check_comp(inner, m.cont, cont_want, path + ("cont",),
                                    top=False)
            result = substitute(mot.result, Thunk(head2))
            return result, replace(m, head=head2, cont=cont2, bindty=a)
        nh = self._norm(head2)
        if isinstance(nh, Return):
            # Head is judgementally a return: conclude at the substituted type.
            bty, cont2 = self.infer_comp(inner, m.cont, path + ("cont",))
            return substitute(bty, nh.val), replace(m, head=head2, cont=cont2,
                                                    bindty=a)
        bty, cont2 = self.infer_comp(inner, m.cont, path + ("cont",))
        if has_free(bty, 0):
            kind = (ErrorKind.MOTIVE_REQUIRED if self.variant.plus
                    else ErrorKind.DEPENDENT_SEQ_IN_MINUS)
            self._fail(kind, path,
                       "continuation type depends on the bound variable",
                       found=bty, span=m.span)
        return shift(bty, 0, -1), replace(m, head=head2, cont=cont2, bindty=a)

    def _seq_check(self, ctx: Context, m: SeqTo, want: CType, path: tuple,
                   top: bool) -> Computation:
        a, head2 = self._seq_head(ctx, m, path)
        inner = ctx.extend(a)
        if m.motive is not None:
            mot = self._seq_motive(ctx, m, a, path)
            cont_want = substitute(shift(mot.result, 1, 1), tr(Var(0)))
            cont2 = self.check_comp(inner, m.cont, cont_want, path + ("cont",),
                                    top=False)
            result = substitute(mot.result, Thunk(head2))
            self._subsume_comp(result, want, path, top, m.span)
            return replace(m, head=head2, cont=cont2, bindty=a)
        try:
            cont2 = self.check_comp(inner, m.cont, shift(want, 0, 1),
                                    path + ("cont",), top=False)
            return replace(m, head=head2, cont=cont2, bindty=a)
        except TypeCheckError:
            nh = self._norm(head2)
            if not isinstance(nh, Return):
                raise
        # Head is judgementally `return V`: accept when the substituted
        # continuation has the expected type.  The continuation itself is
        # kept unelaborated; its type mentions the bound variable.
        self.check_comp(ctx, substitute(m.cont, nh.val), want,
                        path + ("cont",), top=top)
        return replace(m, head=head2, bindty=a)

    # -- pattern matches -----------------------------------------------------------

    def _pm_motive_wf(self, ctx: Context, m, sty, path: tuple) -> Motive:
        mot = m.motive
        if mot.ext:
            self._fail(ErrorKind.ARITY_MISMATCH, path + ("motive",),
                       "nonempty motive extensions are not supported", span=m.span)
        need = 3 if isinstance(m, PmIdC) else 1
        if mot.scrut_binders != need:
            self._fail(ErrorKind.ARITY_MISMATCH, path + ("motive",),
                       "motive binds %d variables, eliminator needs %d"
                       % (mot.scrut_binders, need), span=m.span)
        if not isinstance(mot.result, CType):
            self._fail(ErrorKind.MISMATCH, path + ("motive",),
                       "computation eliminator needs a computation-type motive",
                       span=m.span)
        if isinstance(m, PmIdC):
            a = sty.carrier
            mctx = (ctx.extend(a).extend(shift(a, 0, 1))
                    .extend(IdTy(shift(a, 0, 2), Var(1), Var(0))))
        else:
            mctx = ctx.extend(sty)
        self.wf_ctype(mctx, mot.result, path + ("motive",))
        return mot

    def _pm_scrut(self, ctx: Context, m, path: tuple, expect_cls, what: str):
        sty, scrut2 = self.infer_value(ctx, m.scrut, path + ("scrut",))
        sty = self._norm(sty)
        if not isinstance(sty, expect_cls):
            kind = ErrorKind.NOT_A_SUM if expect_cls is SumTy else ErrorKind.MISMATCH
            self._fail(kind, path, "pattern match on a non-%s" % what,
                       found=sty, span=m.span)
        return sty, scrut2

    def _pm_infer(self, ctx: Context, m: Computation, path: tuple) -> tuple[CType, Computation]:
        if isinstance(m, PmUnitC):
            scrut2 = self.check_value(ctx, m.scrut, UnitTy(), path + ("scrut",))
            if m.motive is not None:
                mot = self._pm_motive_wf(ctx, m, UnitTy(), path)
                body2 = self.check_comp(ctx, m.body, substitute(mot.result, UnitV()),
                                        path + ("body",), top=False)
                return substitute(mot.result, scrut2), replace(m, scrut=scrut2, body=body2)
            bty, body2 = self.infer_comp(ctx, m.body, path + ("body",))
            return bty, replace(m, scrut=scrut2, body=body2)
        if isinstance(m, PmSumC):
            sty, scrut2 = self._pm_scrut(ctx, m, path, SumTy, "sum")
            if len(sty.arms) != len(m.arms):
                self._fail(ErrorKind.ARITY_MISMATCH, path,
                           "sum has %d arms, match has %d"
                           % (len(sty.arms), len(m.arms)), span=m.span)
            if m.motive is not None:
                mot = self._pm_motive_wf(ctx, m, sty, path)
                arms2 = []
                for i, arm in enumerate(m.arms):
                    arm_want = substitute(shift(mot.result, 1, 1), Inj(i + 1, Var(0)))
                    arms2.append(self.check_comp(ctx.extend(sty.arms[i]), arm,
                                                 arm_want, path + ("arms", i),
                                                 top=False))
                return (substitute(mot.result, scrut2),
                        replace(m, scrut=scrut2, arms=tuple(arms2)))
            tys, arms2 = [], []
            for i, arm in enumerate(m.arms):
                t, a2 = self.infer_comp(ctx.extend(sty.arms[i]), arm,
                                        path + ("arms", i))
                if has_free(t, 0):
                    self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("arms", i),
                               "dependent match needs a motive", span=m.span)
                tys.append(shift(t, 0, -1))
                arms2.append(a2)
            if not tys:
                self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                           "empty match needs a motive", span=m.span)
            for i, t in enumerate(tys[1:], start=1):
                if not self._conv(tys[0], t):
                    self._fail(ErrorKind.MISMATCH, path + ("arms", i),
                               "match arms disagree", expected=tys[0], found=t)
            return tys[0], replace(m, scrut=scrut2, arms=tuple(arms2))
        if isinstance(m, PmPairC):
            sty, scrut2 = self._pm_scrut(ctx, m, path, SigmaTy, "pair")
            inner = ctx.extend(sty.fst).extend(sty.snd)
            if m.motive is not None:
                mot = self._pm_motive_wf(ctx, m, sty, path)
                body_want = substitute(shift(mot.result, 1, 2), PairV(Var(1), Var(0)))
                body2 = self.check_comp(inner, m.body, body_want,
                                        path + ("body",), top=False)
                return (substitute(mot.result, scrut2),
                        replace(m, scrut=scrut2, body=body2))
            bty, body2 = self.infer_comp(inner, m.body, path + ("body",))
            if has_free(bty, 0) or has_free(bty, 1):
                self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("body",),
                           "dependent match needs a motive", span=m.span)
            return shift(bty, 0, -2), replace(m, scrut=scrut2, body=body2)
        # PmIdC
        sty, scrut2 = self._pm_scrut(ctx, m, path, IdTy, "identity")
        inner = ctx.extend(sty.carrier)
        if m.motive is not None:
            mot = self._pm_motive_wf(ctx, m, sty, path)
            body_want = substitute(substitute(mot.result, Refl(Var(1))), Var(0))
            body2 = self.check_comp(inner, m.body, body_want, path + ("body",),
                                    top=False)
            result = subst_at(mot.result, 0, shift(scrut2, 0, 2))
            result = subst_at(result, 0, shift(sty.rhs, 0, 1))
            result = subst_at(result, 0, sty.lhs)
            return result, replace(m, scrut=scrut2, body=body2)
        bty, body2 = self.infer_comp(inner, m.body, path + ("body",))
        if has_free(bty, 0):
            self._fail(ErrorKind.MOTIVE_REQUIRED, path + ("body",),
                       "dependent match needs a motive", span=m.span)
        return shift(bty, 0, -1), replace(m, scrut=scrut2, body=body2)

    def _pm_check(self, ctx: Context, m: Computation, want: CType, path: tuple,
                  top: bool) -> Computation:
        if m.motive is not None:
            found, m2 = self._pm_infer(ctx, m, path)
            self._subsume_comp(found, want, path, top, m.span)
            return m2
        if isinstance(m, PmUnitC):
            scrut2 = self.check_value(ctx, m.scrut, UnitTy(), path + ("scrut",))
            body2 = self.check_comp(ctx, m.body, want, path + ("body",), top=False)
            return replace(m, scrut=scrut2, body=body2)
        if isinstance(m, PmSumC):
            sty, scrut2 = self._pm_scrut(ctx, m, path, SumTy, "sum")
            if len(sty.arms) != len(m.arms):
                self._fail(ErrorKind.ARITY_MISMATCH, path,
                           "sum has %d arms, match has %d"
                           % (len(sty.arms), len(m.arms)), span=m.span)
            arms2 = tuple(
                self.check_comp(ctx.extend(sty.arms[i]), arm, shift(want, 0, 1),
                                path + ("arms", i), top=False)
                for i, arm in enumerate(m.arms))
            return replace(m, scrut=scrut2, arms=arms2)
        if isinstance(m, PmPairC):
            sty, scrut2 = self._pm_scrut(ctx, m, path, SigmaTy, "pair")
            inner = ctx.extend(sty.fst).extend(sty.snd)
            body2 = self.check_comp(inner, m.body, shift(want, 0, 2),
                                    path + ("body",), top=False)
            return replace(m, scrut=scrut2, body=body2)
        sty, scrut2 = self._pm_scrut(ctx, m, path, IdTy, "identity")
        body2 = self.check_comp(ctx.extend(sty.carrier), m.body, shift(want, 0, 1),
                                path + ("body",), top=False)
        return replace(m, scrut=scrut2, body=body2)

    # -- effect bookkeeping ----------------------------------------------------------

    def _monoid_elem(self, e: str, path: tuple, span) -> None:
        try:
            self.sig.monoid.parse_elem(e)
        except SignatureError as exc:
            self._fail(ErrorKind.MISMATCH, path, str(exc), span=span)

    def _state_name(self, s: str, path: tuple, span) -> None:
        if s not in self.sig.states:
            self._fail(ErrorKind.MISMATCH, path, "unknown state %r" % s, span=span)

    def _error_name(self, e: str, path: tuple, span) -> None:
        if e not in self.sig.errors:
            self._fail(ErrorKind.MISMATCH, path, "unknown error %r" % e, span=span)

    def _read_arms(self, arms, path: tuple, span) -> None:
        keys = [s for s, _ in arms]
        if sorted(keys) != sorted(self.sig.states) or len(keys) != len(self.sig.states):
            self._fail(ErrorKind.ARITY_MISMATCH, path,
                       "read needs exactly one arm per state (%s)"
                       % ", ".join(self.sig.states), span=span)

    # -- stacks and configurations ------------------------------------------------------

    def check_stack(self, ctx: Context, hole: CType, k: Stack, out: CType,
                    path: tuple = (), filler: Computation | None = None) -> None:
        match k:
            case NilK():
                hole_n = self._norm(hole)
                out_n = self._norm(out)
                if self._conv(hole_n, out_n):
                    return
                if self.variant.plus and self.variant.allow_shrink:
                    if shrink_check(hole_n, out_n, self.opts):
                        return
                    self._fail(ErrorKind.SHRINK_FAILED, path,
                               "stack output does not shrink into the expected type",
                               expected=out, found=hole)
                self._fail(ErrorKind.MISMATCH, path, "stack output type mismatch",
                           expected=out, found=hole)
            case SeqFrame(cont=cont, rest=rest, motive=mot, bindty=bindty):
                hole_n = self._norm(hole)
                if not isinstance(hole_n, FTy):
                    self._fail(ErrorKind.MISMATCH, path,
                               "sequencing frame against a non-returner hole",
                               found=hole_n)
                a = hole_n.ret
                if bindty is not None and not self._conv(bindty, a):
                    self._fail(ErrorKind.MISMATCH, path + ("bindty",),
                               "frame annotation disagrees with the hole type",
                               expected=a, found=bindty)
                inner = ctx.extend(a)
                if mot is not None:
                    probe = SeqTo(Return(UnitV()), cont, mot, a)
                    mot2 = self._seq_motive(ctx, probe, a, path)
                    cont_want = substitute(shift(mot2.result, 1, 1), tr(Var(0)))
                    self.check_comp(inner, cont, cont_want, path + ("cont",),
                                    top=False)
                    if filler is None:
                        self._fail(ErrorKind.MOTIVE_REQUIRED, path,
                                   "dependent frame needs the hole computation")
                    rest_hole = substitute(mot.result, Thunk(filler))
                    rest_filler = SeqTo(filler, cont, mot, a)
                else:
                    bty, cont2 = self.infer_comp(inner, cont, path + ("cont",))
                    if has_free(bty, 0):
                        kind = (ErrorKind.MOTIVE_REQUIRED if self.variant.plus
                                else ErrorKind.DEPENDENT_SEQ_IN_MINUS)
                        self._fail(kind, path + ("cont",),
                                   "frame continuation type depends on its variable",
                                   found=bty)
                    rest_hole = shift(bty, 0, -1)
                    rest_filler = (SeqTo(filler, cont2, None, a)
                                   if filler is not None else None)
                self.check_stack(ctx, rest_hole, rest, out, path + ("rest",),
                                 rest_filler)
            case ProjFrame(tag=j, rest=rest):
                hole_n = self._norm(hole)
                if not isinstance(hole_n, ProdTy):
                    self._fail(ErrorKind.MISMATCH, path,
                               "projection frame against a non-product hole",
                               found=hole_n)
                if not 1 <= j <= len(hole_n.arms):
                    self._fail(ErrorKind.ARITY_MISMATCH, path,
                               "projection %d outside product of %d"
                               % (j, len(hole_n.arms)))
                rest_filler = Proj(j, filler) if filler is not None else None
                self.check_stack(ctx, hole_n.arms[j - 1], rest, out,
                                 path + ("rest",), rest_filler)
            case ArgFrame(arg=v, rest=rest):
                hole_n = self._norm(hole)
                if not isinstance(hole_n, PiTy):
                    self._fail(ErrorKind.NOT_A_FUNCTION, path,
                               "argument frame against a non-function hole",
                               found=hole_n)
                v2 = self.check_value(ctx, v, hole_n.dom, path + ("arg",))
                rest_filler = Apply(v2, filler) if filler is not None else None
                self.check_stack(ctx, substitute(hole_n.cod, v2), rest, out,
                                 path + ("rest",), rest_filler)
            case _:
                self._fail(ErrorKind.MISMATCH, path,
                           "unknown stack form %r" % type(k).__name__)

    def check_config(self, cfg, c: CType, ctx: Context = EMPTY_CONTEXT) -> None:
        """Re-derive the typing of a machine configuration at type ``c``."""
        comp, stack = cfg.comp, cfg.stack
        try:
            hole, comp2 = self.infer_comp(ctx, comp, ("comp",))
        except TypeCheckError as e:
            if e.kind is not ErrorKind.MOTIVE_REQUIRED:
                raise
            if isinstance(stack, NilK):
                self.check_comp(ctx, comp, c, ("comp",), top=True)
                return
            if isinstance(stack, SeqFrame) and stack.bindty is not None:
                hole = FTy(stack.bindty)
                comp2 = self.check_comp(ctx, comp, hole, ("comp",), top=False)
            else:
                raise
        self.check_stack(ctx, hole, stack, c, ("stack",), filler=comp2)


# ---------------------------------------------------------------------------
# Module-level convenience API
# ---------------------------------------------------------------------------


def wf_context(ctx: Context, variant: Variant = MINUS,
               sig: EffectSignature = PURE_SIGNATURE,
               opts: ConvOptions = DEFAULT_OPTIONS) -> None:
    Checker(variant, sig, opts).wf_context(ctx)


def wf_vtype(ctx: Context, a: VType, variant: Variant = MINUS,
             sig: EffectSignature = PURE_SIGNATURE,
             opts: ConvOptions = DEFAULT_OPTIONS) -> None:
    Checker(variant, sig, opts).wf_vtype(ctx, a)


def wf_ctype(ctx: Context, b: CType, variant: Variant = MINUS,
             sig: EffectSignature = PURE_SIGNATURE,
             opts: ConvOptions = DEFAULT_OPTIONS) -> None:
    Checker(variant, sig, opts).wf_ctype(ctx, b)


def check_value(ctx: Context, v: Value, a: VType, variant: Variant = MINUS,
                sig: EffectSignature = PURE_SIGNATURE,
                opts: ConvOptions = DEFAULT_OPTIONS) -> None:
    Checker(variant, sig, opts).check_value(ctx, v, a)


def infer_value(ctx: Context, v: Value, variant: Variant = MINUS,
                sig: EffectSignature = PURE_SIGNATURE,
                opts: ConvOptions = DEFAULT_OPTIONS) -> VType:
    return Checker(variant, sig, opts).infer_value(ctx, v)[0]


def check_comp(ctx: Context, m: Computation, b: CType, variant: Variant = MINUS,
               sig: EffectSignature = PURE_SIGNATURE,
               opts: ConvOptions = DEFAULT_OPTIONS) -> None:
    Checker(variant, sig, opts).check_comp(ctx, m, b)


def infer_comp(ctx: Context, m: Computation, variant: Variant = MINUS,
               sig: EffectSignature = PURE_SIGNATURE,
               opts: ConvOptions = DEFAULT_OPTIONS) -> CType:
    return Checker(variant, sig, opts).infer_comp(ctx, m)[0]


def elaborate_comp(ctx: Context, m: Computation, b: CType,
                   variant: Variant = MINUS,
                   sig: EffectSignature = PURE_SIGNATURE,
                   opts: ConvOptions = DEFAULT_OPTIONS) -> Computation:
    """Type-check and return the term with binder annotations filled in."""
    return Checker(variant, sig, opts).check_comp(ctx, m, b)


def check_stack(ctx: Context, hole: CType, k: Stack, out: CType,
                variant: Variant = MINUS,
                sig: EffectSignature = PURE_SIGNATURE,
                opts: ConvOptions = DEFAULT_OPTIONS,
                filler: Computation | None = None) -> None:
    Checker(variant, sig, opts).check_stack(ctx, hole, k, out, filler=filler)


def check_config(cfg, c: CType, variant: Variant = MINUS,
                 sig: EffectSignature = PURE_SIGNATURE,
                 opts: ConvOptions = DEFAULT_OPTIONS,
                 ctx: Context = EMPTY_CONTEXT) -> None:
    Checker(variant, sig, opts).check_config(cfg, c, ctx)
