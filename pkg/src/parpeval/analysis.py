"""Call-pattern analysis: success patterns per predicate and call pattern.

For every (predicate, call groundness, call sharing) reached from the
entry points, the analyzer computes which argument positions are ground
on success and which may share.  Success tables start from the most
optimistic assumption (everything ground, nothing shared) and iterate
downward until stable; the result is the greatest fixpoint, which is
the sound one here because every actual answer is reached by a finite
derivation whose sub-answers the previous iterate already bounds.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

from .engine import PropState, body_call_patterns, propagate_success
from .patterns import (
    GroundnessPattern,
    PatternKey,
    PatternTable,
    SharingPattern,
    SuccessPattern,
    claimed_ground_vars,
    independent_sharing,
    parse_groundness,
    parse_sharing,
    shared_pairs,
    sharing_from_pairs,
    sharing_pairs,
)
from .terms import BUILTIN_KEYS, Program, term_vars


class AnalysisError(Exception):
    pass


# ---------------------------------------------------------------------------
# builtin success model

BuiltinModel = dict[
    tuple[str, int],
    Callable[[GroundnessPattern, SharingPattern], SuccessPattern],
]


def _is_success(gr: GroundnessPattern, sh: SharingPattern) -> SuccessPattern:
    # evaluating a ground expression grounds the left side; the left
    # side never stays aliased to anything after binding to an integer
    ground = frozenset(gr.ground | {1}) if 2 in gr else gr.ground
    pairs = {(i, j) for (i, j) in sharing_pairs(sh) if 1 not in (i, j)}
    return SuccessPattern(
        GroundnessPattern(2, ground), sharing_from_pairs(2, pairs)
    )


def _comparison_success(gr: GroundnessPattern, sh: SharingPattern) -> SuccessPattern:
    return SuccessPattern(gr, sh)


def _unify_success(gr: GroundnessPattern, sh: SharingPattern) -> SuccessPattern:
    if 1 in gr or 2 in gr:
        return SuccessPattern(
            GroundnessPattern(2, frozenset({1, 2})), independent_sharing(2)
        )
    pairs = set(sharing_pairs(sh)) | {(1, 2)}
    return SuccessPattern(gr, sharing_from_pairs(2, pairs))


def standard_builtin_model() -> BuiltinModel:
    model: BuiltinModel = {("is", 2): _is_success, ("=", 2): _unify_success}
    for pred in (">", "<", ">=", "=<", "=:="):
        model[(pred, 2)] = _comparison_success
    return model


# ---------------------------------------------------------------------------
# entry points


@dataclass(frozen=True)
class EntryPoint:
    pred: str
    arity: int
    gr: GroundnessPattern
    sh: SharingPattern

    @property
    def key(self) -> PatternKey:
        return (self.pred, self.arity, self.gr, self.sh)


# ---------------------------------------------------------------------------
# the analyzer


_OPTIMISTIC = "optimistic"


class Analyzer:
    """Success-pattern oracle backed by a demand-driven fixpoint.

    Lookup order: explicit overrides, the builtin model, rows already
    computed, then a fresh fixpoint run seeded at the requested key.
    Predicates without clauses get the identity success pattern: they
    can only fail, and a pattern must cover every answer, of which
    there are none.
    """

    def __init__(
        self,
        program: Program,
        overrides: Optional[PatternTable] = None,
        builtins: Optional[BuiltinModel] = None,
    ) -> None:
        self.program = program
        self.overrides = overrides
        self.builtins = standard_builtin_model() if builtins is None else builtins
        self.rows = PatternTable()

    def success(
        self, pred: str, arity: int, gr: GroundnessPattern, sh: SharingPattern
    ) -> SuccessPattern:
        key: PatternKey = (pred, arity, gr, sh)
        if self.overrides is not None:
            row = self.overrides.get(key)
            if row is not None:
                return row
        model = self.builtins.get((pred, arity))
        if model is not None:
            return model(gr, sh)
        row = self.rows.get(key)
        if row is not None:
            return row
        if not self.program.defines(pred, arity):
            row = SuccessPattern(gr, sh)
            self.rows.put(key, row)
            return row
        self._solve(key)
        return self.rows.get(key)

    def table(self) -> PatternTable:
        """Computed rows with overrides winning on key collisions."""
        merged = PatternTable()
        for key, row in self.rows:
            merged.put(key, row)
        if self.overrides is not None:
            for key, row in self.overrides:
                merged.put(key, row)
        return merged

    # -- fixpoint machinery

    def _solve(self, seed: PatternKey) -> None:
        assume: dict[PatternKey, SuccessPattern] = {}
        deps: dict[PatternKey, set[PatternKey]] = {}
        work: list[PatternKey] = []

        def ensure(key: PatternKey) -> SuccessPattern:
            if key not in assume:
                _, arity, _, _ = key
                assume[key] = SuccessPattern(
                    GroundnessPattern(arity, frozenset(range(1, arity + 1))),
                    independent_sharing(arity),
                )
                work.append(key)
            return assume[key]

        ensure(seed)
        guard = 0
        while work:
            guard += 1
            if guard > 100_000:
                raise AnalysisError("success-pattern fixpoint failed to converge")
            key = work.pop()
            new = self._transfer(key, assume, deps, ensure)
            if new != assume[key]:
                assume[key] = new
                for waiter in deps.get(key, ()):
                    if waiter not in work:
                        work.append(waiter)
        for key, row in assume.items():
            self.rows.put(key, row)

    def _transfer(
        self,
        key: PatternKey,
        assume: dict[PatternKey, SuccessPattern],
        deps: dict[PatternKey, set[PatternKey]],
        ensure: Callable[[PatternKey], SuccessPattern],
    ) -> SuccessPattern:
        pred, arity, gr, sh = key
        analyzer = self

        class _LocalOracle:
            def success(self, p, a, g, s):
                inner: PatternKey = (p, a, g, s)
                if analyzer.overrides is not None:
                    row = analyzer.overrides.get(inner)
                    if row is not None:
                        return row
                model = analyzer.builtins.get((p, a))
                if model is not None:
                    return model(g, s)
                row = analyzer.rows.get(inner)
                if row is not None:
                    return row
                if not analyzer.program.defines(p, a):
                    return SuccessPattern(g, s)
                deps.setdefault(inner, set()).add(key)
                return ensure(inner)

        oracle = _LocalOracle()
        exit_ground: Optional[frozenset[int]] = None
        exit_pairs: set[tuple[int, int]] = set()
        for clause in self.program.clauses_for(pred, arity):
            equery = body_call_patterns(gr, sh, clause)
            state = PropState(
                claimed_ground_vars(gr, clause.head),
                set(shared_pairs(sh, clause.head)),
            )
            _, _, end = propagate_success(equery, (), oracle, state)
            head = clause.head
            cground = frozenset(
                i
                for i in range(1, arity + 1)
                if term_vars(head.args[i - 1]) <= end.ground
            )
            cpairs = set()
            for i in range(1, arity + 1):
                for j in range(i + 1, arity + 1):
                    if _head_positions_share(head, i, j, end):
                        cpairs.add((i, j))
            exit_ground = cground if exit_ground is None else exit_ground & cground
            exit_pairs |= cpairs
        if exit_ground is None:
            # defines() said there were clauses; keep a safe fallback anyway
            return SuccessPattern(gr, sh)
        return SuccessPattern(
            GroundnessPattern(arity, frozenset(gr.ground | exit_ground)),
            sharing_from_pairs(arity, exit_pairs),
        )


def _head_positions_share(head, i: int, j: int, state: PropState) -> bool:
    v1 = term_vars(head.args[i - 1]) - state.ground
    v2 = term_vars(head.args[j - 1]) - state.ground
    if v1 & v2:
        return True
    for x in v1:
        for y in v2:
            if x != y and (min(x, y), max(x, y)) in state.aliases:
                return True
    return False


def infer_patterns(
    program: Program,
    entries: Iterable[EntryPoint],
    overrides: Optional[PatternTable] = None,
    builtins: Optional[BuiltinModel] = None,
) -> PatternTable:
    """Success table for all call patterns reachable from `entries`."""
    analyzer = Analyzer(program, overrides=overrides, builtins=builtins)
    for e in entries:
        if (e.pred, e.arity) in BUILTIN_KEYS:
            raise AnalysisError(f"entry {e.pred}/{e.arity} is a builtin")
        analyzer.success(e.pred, e.arity, e.gr, e.sh)
    return analyzer.table()


# ---------------------------------------------------------------------------
# pattern files: success rows plus entry declarations

_ENTRY_RE = re.compile(
    r"^entry\s+([a-z][A-Za-z0-9_]*)\s*/\s*(\d+)\s+gr\s*(\{[^}]*\})(?:\s+sh\s*(<.*>))?\s*$"
)


def _entry_from_match(m: "re.Match[str]") -> EntryPoint:
    pred, arity = m.group(1), int(m.group(2))
    gr = parse_groundness(m.group(3), arity)
    sh = parse_sharing(m.group(4), arity) if m.group(4) else independent_sharing(arity)
    return EntryPoint(pred, arity, gr, sh)


def parse_entry_spec(text: str) -> EntryPoint:
    """Parse an entry flag value like `qs/2 gr {1} sh <{1},{2}>`."""
    spec = text.strip()
    if not spec.startswith("entry"):
        spec = "entry " + spec
    m = _ENTRY_RE.match(spec)
    if not m:
        raise AnalysisError(f"bad entry spec {text!r}")
    try:
        return _entry_from_match(m)
    except ValueError as exc:
        raise AnalysisError(f"bad entry spec {text!r}: {exc}") from None


def parse_pattern_file(text: str) -> tuple[PatternTable, list[EntryPoint]]:
    """Parse a pattern file: success rows and `entry` lines, in any order.

    Success rows look like
        qs/2 : gr {1} -> {1,2} ; sh <{1},{2}> -> <{1},{2}>
    and entry lines like
        entry qs/2 gr {1} sh <{1},{2}>
    with the sharing part optional (all positions independent).
    """
    from .patterns import parse_pattern_table

    rows = []
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        m = _ENTRY_RE.match(line)
        if m:
            try:
                entries.append(_entry_from_match(m))
            except ValueError as exc:
                raise AnalysisError(f"line {lineno}: {exc}") from None
        else:
            rows.append(raw)
    try:
        table = parse_pattern_table("\n".join(rows))
    except ValueError as exc:
        raise AnalysisError(str(exc)) from None
    return table, entries


def load_pattern_overrides(text: str, program: Program) -> PatternTable:
    """Parse success rows and sanity-check arities against `program`."""
    table, entries = parse_pattern_file(text)
    if entries:
        raise AnalysisError("entry lines are not allowed in an override table")
    for (pred, arity, _, _), _row in table:
        if (pred, arity) in BUILTIN_KEYS:
            continue
        if program.defines(pred, arity):
            continue
        # overriding an unknown predicate is how externals get modelled;
        # only a clashing arity for a known name is suspicious
        if any(p == pred for (p, a) in program.predicates()):
            raise AnalysisError(
                f"override for {pred}/{arity} but program defines {pred} at a different arity"
            )
    return table
