"""CK-machine: small-step evaluation of complex-value-free computations.

A configuration pairs a computation with a stack plus the effect
hardware: the accumulated printing-monoid element and the current
state.  Transition rows live in a table so that the determinism
property (at most one row matches any configuration, except erratic
choice) can be audited row by row rather than trusted to the
dispatcher.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Callable, Iterator, Optional

from .syntax import (
    Apply, ArgFrame, Choose, Computation, Diverge, EffectSignature, ErrorC,
    Force, Inj, Lam, LetC, Mu, NilK, PairV, PmIdC, PmPairC, PmSumC, PmUnitC,
    Print, ProdIntro, Proj, ProjFrame, ReadC, Refl, Return, SeqFrame, SeqTo,
    Stack, Thunk, UnitV, Value, Var, Write,
    complex_value_free, erase_annotations, subst_at, substitute,
)


class MachineError(Exception):
    pass


class ComplexValuePresent(MachineError):
    """The computation still contains complex values; eliminate them first."""


class IllTyped(MachineError):
    """No row matches and the configuration is not terminal: checker bug."""


class ScriptExhausted(MachineError):
    """A fixed choice script ran out of entries."""


@dataclass(frozen=True)
class Configuration:
    comp: Computation
    stack: Stack
    printed: object  # element of the signature's printing monoid
    state: str

    def key(self):
        """Dedup key: annotation-erased syntax plus the effect hardware."""
        return (erase_annotations(self.comp), erase_annotations(self.stack),
                self.printed, self.state)


class TerminalKind(enum.Enum):
    RETURNED = "Returned"
    PROD_LAMBDA = "ProdLambda"
    PI_LAMBDA = "PiLambda"
    STUCK_ON_VAR = "StuckOnVar"
    ERROR_HALT = "ErrorHalt"


@dataclass(frozen=True)
class Terminal:
    kind: TerminalKind
    config: Configuration
    value: Optional[Value] = None  # for RETURNED
    error: Optional[str] = None  # for ERROR_HALT


@dataclass(frozen=True)
class Stepped:
    rule: str
    config: Configuration


@dataclass(frozen=True)
class NeedsChoice:
    branches: tuple[Configuration, ...]


StepResult = object  # Stepped | Terminal | NeedsChoice


# ---------------------------------------------------------------------------
# Transition rows
# ---------------------------------------------------------------------------


def _row_let(cfg, sig):
    if isinstance(cfg.comp, LetC):
        return replace(cfg, comp=substitute(cfg.comp.body, cfg.comp.bound))
    return None


def _row_to_push(cfg, sig):
    if isinstance(cfg.comp, SeqTo):
        m = cfg.comp
        frame = SeqFrame(m.cont, cfg.stack, m.motive, m.bindty)
        return replace(cfg, comp=m.head, stack=frame)
    return None


def _row_return_pop(cfg, sig):
    if isinstance(cfg.comp, Return) and isinstance(cfg.stack, SeqFrame):
        frame = cfg.stack
        return replace(cfg, comp=substitute(frame.cont, cfg.comp.val),
                       stack=frame.rest)
    return None


def _row_force_thunk(cfg, sig):
    if isinstance(cfg.comp, Force) and isinstance(cfg.comp.val, Thunk):
        return replace(cfg, comp=cfg.comp.val.comp)
    return None


def _row_pm_sum(cfg, sig):
    m = cfg.comp
    if isinstance(m, PmSumC) and isinstance(m.scrut, Inj):
        if not 1 <= m.scrut.tag <= len(m.arms):
            raise IllTyped("sum tag %d outside %d arms" % (m.scrut.tag, len(m.arms)))
        return replace(cfg, comp=substitute(m.arms[m.scrut.tag - 1], m.scrut.payload))
    return None


def _row_pm_unit(cfg, sig):
    m = cfg.comp
    if isinstance(m, PmUnitC) and isinstance(m.scrut, UnitV):
        return replace(cfg, comp=m.body)
    return None


def _row_pm_pair(cfg, sig):
    m = cfg.comp
    if isinstance(m, PmPairC) and isinstance(m.scrut, PairV):
        body = subst_at(subst_at(m.body, 1, m.scrut.fst), 0, m.scrut.snd)
        return replace(cfg, comp=body)
    return None


def _row_pm_id(cfg, sig):
    m = cfg.comp
    if isinstance(m, PmIdC) and isinstance(m.scrut, Refl):
        return replace(cfg, comp=substitute(m.body, m.scrut.payload))
    return None


def _row_proj_push(cfg, sig):
    if isinstance(cfg.comp, Proj):
        return replace(cfg, comp=cfg.comp.comp,
                       stack=ProjFrame(cfg.comp.tag, cfg.stack))
    return None


def _row_proj_pop(cfg, sig):
    if isinstance(cfg.comp, ProdIntro) and isinstance(cfg.stack, ProjFrame):
        j = cfg.stack.tag
        if not 1 <= j <= len(cfg.comp.arms):
            raise IllTyped("projection %d outside %d arms" % (j, len(cfg.comp.arms)))
        return replace(cfg, comp=cfg.comp.arms[j - 1], stack=cfg.stack.rest)
    return None


def _row_arg_push(cfg, sig):
    if isinstance(cfg.comp, Apply):
        return replace(cfg, comp=cfg.comp.fun,
                       stack=ArgFrame(cfg.comp.arg, cfg.stack))
    return None


def _row_app_pop(cfg, sig):
    if isinstance(cfg.comp, Lam) and isinstance(cfg.stack, ArgFrame):
        return replace(cfg, comp=substitute(cfg.comp.body, cfg.stack.arg),
                       stack=cfg.stack.rest)
    return None


def _row_diverge(cfg, sig):
    if isinstance(cfg.comp, Diverge):
        return cfg
    return None


def _row_mu(cfg, sig):
    if isinstance(cfg.comp, Mu):
        m = cfg.comp
        return replace(cfg, comp=substitute(m.body, Thunk(m)))
    return None


def _row_print(cfg, sig):
    if isinstance(cfg.comp, Print):
        elem = sig.monoid.parse_elem(cfg.comp.elem)
        return replace(cfg, comp=cfg.comp.body,
                       printed=sig.monoid.op(cfg.printed, elem))
    return None


def _row_write(cfg, sig):
    if isinstance(cfg.comp, Write):
        return replace(cfg, comp=cfg.comp.body, state=cfg.comp.state)
    return None


def _row_read(cfg, sig):
    if isinstance(cfg.comp, ReadC):
        for s, arm in cfg.comp.arms:
            if s == cfg.state:
                return replace(cfg, comp=arm)
        raise IllTyped("read has no arm for state %r" % cfg.state)
    return None


# (name, applies-to-choice?, row function); order mirrors the transition
# tables: the twelve pure rows then the effect rows.
ROWS: tuple[tuple[str, Callable], ...] = (
    ("let", _row_let),
    ("to-push", _row_to_push),
    ("return-pop", _row_return_pop),
    ("force-thunk", _row_force_thunk),
    ("pm-sum", _row_pm_sum),
    ("pm-unit", _row_pm_unit),
    ("pm-pair", _row_pm_pair),
    ("pm-id", _row_pm_id),
    ("proj-push", _row_proj_push),
    ("proj-pop", _row_proj_pop),
    ("arg-push", _row_arg_push),
    ("app-pop", _row_app_pop),
    ("diverge", _row_diverge),
    ("mu", _row_mu),
    ("print", _row_print),
    ("write", _row_write),
    ("read", _row_read),
)


def terminal_kind(cfg: Configuration) -> Optional[Terminal]:
    """Classify terminal configurations; None if some row should fire."""
    m, k = cfg.comp, cfg.stack
    match m:
        case Return(val=v) if isinstance(k, NilK):
            return Terminal(TerminalKind.RETURNED, cfg, value=v)
        case ProdIntro() if isinstance(k, NilK):
            return Terminal(TerminalKind.PROD_LAMBDA, cfg)
        case Lam() if isinstance(k, NilK):
            return Terminal(TerminalKind.PI_LAMBDA, cfg)
        case Force(val=Var()):
            return Terminal(TerminalKind.STUCK_ON_VAR, cfg)
        case PmSumC(scrut=Var()) | PmUnitC(scrut=Var()) | \
                PmPairC(scrut=Var()) | PmIdC(scrut=Var()):
            return Terminal(TerminalKind.STUCK_ON_VAR, cfg)
        case ErrorC(name=e):
            return Terminal(TerminalKind.ERROR_HALT, cfg, error=e)
    return None


def matching_rows(cfg: Configuration, sig: EffectSignature) -> list[str]:
    """Names of all transition rows that apply (choice counts as one)."""
    out = []
    for name, row in ROWS:
        try:
            if row(cfg, sig) is not None:
                out.append(name)
        except IllTyped:
            out.append(name)
    if isinstance(cfg.comp, Choose):
        out.append("choose")
    return out


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


def inject(m: Computation, sig: EffectSignature) -> Configuration:
    """Initial configuration: empty stack, monoid unit, initial state."""
    if not complex_value_free(m):
        raise ComplexValuePresent(
            "computation contains complex values; run eliminate_complex_values")
    return Configuration(m, NilK(), sig.monoid.unit(), sig.initial_state)


def step(cfg: Configuration, sig: EffectSignature) -> StepResult:
    if isinstance(cfg.comp, Choose):
        return NeedsChoice(tuple(replace(cfg, comp=arm) for arm in cfg.comp.arms))
    for name, row in ROWS:
        nxt = row(cfg, sig)
        if nxt is not None:
            return Stepped(name, nxt)
    term = terminal_kind(cfg)
    if term is not None:
        return term
    raise IllTyped("no transition applies and the configuration is not terminal")


# ---------------------------------------------------------------------------
# Schedulers
# ---------------------------------------------------------------------------


@dataclass
class First:
    """Always take the first branch."""

    def pick(self, branches: tuple[Configuration, ...]) -> int:
        return 0


@dataclass
class Fixed:
    """Follow a script of 1-based branch indices."""

    script: tuple[int, ...]
    _pos: int = 0

    def pick(self, branches: tuple[Configuration, ...]) -> int:
        if self._pos >= len(self.script):
            raise ScriptExhausted("choice script exhausted after %d picks" % self._pos)
        choice = self.script[self._pos]
        self._pos += 1
        if not 1 <= choice <= len(branches):
            raise ScriptExhausted(
                "scripted choice %d outside 1..%d" % (choice, len(branches)))
        return choice - 1


@dataclass
class Seeded:
    """Pseudorandom branch selection from a 64-bit seed."""

    seed: int

    def __post_init__(self):
        self._rng = random.Random(self.seed & (2 ** 64 - 1))

    def pick(self, branches: tuple[Configuration, ...]) -> int:
        return self._rng.randrange(len(branches))


@dataclass
class Interactive:
    """Defer each choice to a callback (the CLI wires this to stdin)."""

    ask: Callable[[int], int]  # receives branch count, returns 1-based pick

    def pick(self, branches: tuple[Configuration, ...]) -> int:
        choice = self.ask(len(branches))
        if not 1 <= choice <= len(branches):
            raise ScriptExhausted("interactive choice %d outside 1..%d"
                                  % (choice, len(branches)))
        return choice - 1


Scheduler = object  # First | Fixed | Seeded | Interactive


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Outcome:
    kind: TerminalKind
    printed: object
    state: str
    steps: int
    value: Optional[Value] = None
    error: Optional[str] = None

    def key(self):
        v = erase_annotations(self.value) if self.value is not None else None
        return (self.kind, v, self.error, self.printed, self.state)


@dataclass(frozen=True)
class FuelExhaustedOutcome:
    last: Configuration
    steps: int


def run(m: Computation, sig: EffectSignature, sched: Scheduler = None,
        fuel: int = 10000):
    """Drive a computation to a terminal configuration or run out of fuel."""
    sched = sched if sched is not None else First()
    cfg = inject(m, sig)
    steps = 0
    while steps < fuel:
        res = step(cfg, sig)
        if isinstance(res, Terminal):
            return Outcome(res.kind, cfg.printed, cfg.state, steps,
                           value=res.value, error=res.error)
        if isinstance(res, NeedsChoice):
            cfg = res.branches[sched.pick(res.branches)]
        else:
            cfg = res.config
        steps += 1
    return FuelExhaustedOutcome(cfg, steps)


def trace(m: Computation, sig: EffectSignature, sched: Scheduler = None,
          fuel: int = 10000) -> tuple[list[tuple[str, Configuration]], object]:
    """Full step log plus the final run result."""
    sched = sched if sched is not None else First()
    cfg = inject(m, sig)
    log: list[tuple[str, Configuration]] = [("init", cfg)]
    steps = 0
    while steps < fuel:
        res = step(cfg, sig)
        if isinstance(res, Terminal):
            return log, Outcome(res.kind, cfg.printed, cfg.state, steps,
                                value=res.value, error=res.error)
        if isinstance(res, NeedsChoice):
            j = sched.pick(res.branches)
            cfg = res.branches[j]
            log.append(("choose(%d)" % (j + 1), cfg))
        else:
            cfg = res.config
            log.append((res.rule, cfg))
        steps += 1
    return log, FuelExhaustedOutcome(cfg, steps)


def run_all(m: Computation, sig: EffectSignature, fuel: int = 10000) -> set:
    """Breadth-first exploration of every choice; deduplicated outcomes.

    Choice branches that lead to configurations already on some path are
    still explored (loops surface as fuel exhaustion per branch), but
    identical branches of one choice point are collapsed.
    """
    start = inject(m, sig)
    frontier = [(start, 0)]
    outcomes: dict[object, object] = {}
    while frontier:
        cfg, steps = frontier.pop(0)
        if steps >= fuel:
            outcomes.setdefault(("fuel", cfg.key()), FuelExhaustedOutcome(cfg, steps))
            continue
        res = step(cfg, sig)
        if isinstance(res, Terminal):
            out = Outcome(res.kind, cfg.printed, cfg.state, steps,
                          value=res.value, error=res.error)
            outcomes.setdefault(out.key(), out)
            continue
        if isinstance(res, NeedsChoice):
            branch_keys = set()
            for nxt in res.branches:
                key = nxt.key()
                if key in branch_keys:
                    continue
                branch_keys.add(key)
                frontier.append((nxt, steps + 1))
        else:
            frontier.append((res.config, steps + 1))
    return set(outcomes.values())


def reachable_configs(m: Computation, sig: EffectSignature, fuel: int = 10000,
                      cap: int = 100000) -> Iterator[Configuration]:
    """Every configuration reachable from the initial one (all branches)."""
    start = inject(m, sig)
    frontier = [(start, 0)]
    seen = {start.key()}
    emitted = 0
    while frontier and emitted < cap:
        cfg, steps = frontier.pop(0)
        yield cfg
        emitted += 1
        if steps >= fuel:
            continue
        res = step(cfg, sig)
        if isinstance(res, Terminal):
            continue
        branches = res.branches if isinstance(res, NeedsChoice) else (res.config,)
        for nxt in branches:
            key = nxt.key()
            if key not in seen:
                seen.add(key)
                frontier.append((nxt, steps + 1))
