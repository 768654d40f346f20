"""Sequential resolution engine used to validate residual programs.

Goals are solved depth-first, left to right, trying clauses in textual
order with the occurs check on.  Parallel groups run as plain
conjunctions — the annotations claim independence, they do not change
sequential meaning — but entering one fires a hook so callers can
inspect the instantiation of both sides at fork time.  A second hook
reports every (call, answer) pair of user predicates, which is what the
safeness check consumes.
"""

from __future__ import annotations

import os
import sys
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Sequence, TYPE_CHECKING

from .patterns import (
    GroundnessPattern,
    PatternTable,
    SharingPattern,
    format_groundness,
    format_sharing,
)
from .terms import (
    BUILTIN_KEYS,
    Atom,
    Clause,
    Int,
    ParGroup,
    Program,
    SeqAtom,
    Struct,
    Subst,
    Term,
    Var,
    apply_subst,
    canonical,
    format_atom,
    format_term,
    mgu,
    rename_all,
    resolve,
    term_vars,
    unify,
)

if TYPE_CHECKING:
    from .codegen import ResidualProgram

DEFAULT_STEP_LIMIT = 1_000_000


class SolverError(Exception):
    pass


class InstantiationError(SolverError):
    """Arithmetic over an unbound variable."""


class StepLimitExceeded(SolverError):
    """The step budget ran out; distinct from finite failure."""


Site = Optional[tuple[int, int]]
OnAnswer = Callable[[Atom, Atom], None]
OnPar = Callable[[Site, tuple[Atom, ...], tuple[Atom, ...]], None]

_COMPARE = {
    ">": lambda a, b: a > b,
    "<": lambda a, b: a < b,
    ">=": lambda a, b: a >= b,
    "=<": lambda a, b: a <= b,
    "=:=": lambda a, b: a == b,
}


class Solver:
    def __init__(
        self,
        program: Program,
        max_steps: int = DEFAULT_STEP_LIMIT,
        max_solutions: Optional[int] = None,
        on_answer: Optional[OnAnswer] = None,
        on_par: Optional[OnPar] = None,
    ) -> None:
        self.program = program
        self.max_steps = max_steps
        self.max_solutions = max_solutions
        self.on_answer = on_answer
        self.on_par = on_par
        self._index: dict[tuple[str, int], list[tuple[int, Clause]]] = {}
        for ci, clause in enumerate(program.clauses):
            self._index.setdefault(clause.head.key, []).append((ci, clause))
        self._steps = 0

    def solve(self, query: Sequence[Atom]) -> list[Subst]:
        """All answers, restricted to the query's variables, fully resolved."""
        qvars = sorted(term_vars(tuple(query)))
        self._steps = 0
        answers: list[Subst] = []
        items = tuple((a, None) for a in query)
        old_limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(old_limit, 200_000))
        try:
            for binds in self._goals(items, {}):
                answers.append({v: resolve(Var(v), binds) for v in qvars})
                if self.max_solutions is not None and len(answers) >= self.max_solutions:
                    break
        finally:
            sys.setrecursionlimit(old_limit)
        return answers

    # -- resolution

    def _tick(self) -> None:
        self._steps += 1
        if self._steps > self.max_steps:
            raise StepLimitExceeded(f"exceeded {self.max_steps} resolution steps")

    def _goals(
        self, goals: tuple[tuple[Atom | ParGroup, Site], ...], binds: Subst
    ) -> Iterator[Subst]:
        if not goals:
            yield binds
            return
        (goal, site), rest = goals[0], goals[1:]
        if isinstance(goal, ParGroup):
            if self.on_par is not None:
                self.on_par(
                    site,
                    tuple(resolve(a, binds) for a in goal.left),
                    tuple(resolve(a, binds) for a in goal.right),
                )
            inner = tuple((a, site) for a in goal.left + goal.right)
            yield from self._goals(inner + rest, binds)
            return
        atom = goal
        if atom.key in BUILTIN_KEYS:
            self._tick()
            out = self._builtin(atom, binds)
            if out is not None:
                yield from self._goals(rest, out)
            return
        call_shot = resolve(atom, binds) if self.on_answer is not None else None
        for ci, clause in self._index.get(atom.key, ()):
            self._tick()
            rclause = rename_all(clause, ())
            b2 = unify(atom, rclause.head, binds)
            if b2 is None:
                continue
            body = tuple(
                (g.atom if isinstance(g, SeqAtom) else g, (ci, pos))
                for pos, g in enumerate(rclause.body)
            )
            for b3 in self._goals(body, b2):
                if self.on_answer is not None:
                    self.on_answer(call_shot, resolve(atom, b3))
                yield from self._goals(rest, b3)

    # -- builtins

    def _builtin(self, atom: Atom, binds: Subst) -> Optional[Subst]:
        pred = atom.pred
        if pred == "is":
            value = self._eval(atom.args[1], binds)
            if value is None:
                return None
            return unify(atom.args[0], Int(value), binds)
        if pred == "=":
            return unify(atom.args[0], atom.args[1], binds)
        lhs = self._eval(atom.args[0], binds)
        rhs = self._eval(atom.args[1], binds)
        if lhs is None or rhs is None:
            return None
        return binds if _COMPARE[pred](lhs, rhs) else None

    def _eval(self, t: Term, binds: Subst) -> Optional[int]:
        t = resolve(t, binds)

        def ev(t: Term) -> Optional[int]:
            if isinstance(t, Int):
                return t.value
            if isinstance(t, Var):
                raise InstantiationError(
                    f"arithmetic over unbound variable {t.name}"
                )
            if isinstance(t, Struct) and len(t.args) == 2:
                op = t.functor
                if op in ("+", "-", "*", "//"):
                    a = ev(t.args[0])
                    b = ev(t.args[1])
                    if a is None or b is None:
                        return None
                    if op == "+":
                        return a + b
                    if op == "-":
                        return a - b
                    if op == "*":
                        return a * b
                    if b == 0:
                        raise SolverError("integer division by zero")
                    return a // b
            return None  # ground but not arithmetic: the goal just fails

        return ev(t)


def plain_sld_step(atom: Atom, clause: Clause) -> Optional[tuple[Subst, tuple[Atom, ...]]]:
    """One resolution step against an already renamed-apart clause."""
    sigma = mgu(atom, clause.head)
    if sigma is None:
        return None
    return sigma, tuple(apply_subst(b, sigma) for b in clause.body_atoms())


# ---------------------------------------------------------------------------
# answer comparison


def answer_key(qvars: Sequence[str], answer: Subst) -> str:
    shape = canonical(tuple(answer[v] for v in qvars))
    return ",".join(format_term(t) for t in shape)


def answer_multiset(
    program: Program,
    query: Sequence[Atom],
    max_steps: int = DEFAULT_STEP_LIMIT,
    max_solutions: Optional[int] = None,
) -> Counter:
    qvars = sorted(term_vars(tuple(query)))
    solver = Solver(program, max_steps=max_steps, max_solutions=max_solutions)
    return Counter(answer_key(qvars, a) for a in solver.solve(query))


# ---------------------------------------------------------------------------
# query validation


def conformance_issue(
    atom: Atom, gr: GroundnessPattern, sh: SharingPattern
) -> Optional[str]:
    """Why `atom` is not a legitimate instance of the call patterns.

    Claimed positions must be ground, unclaimed ones must not be (the
    pattern says exactly what is known at call time), and any variable
    shared between two positions must be licensed by the sharing
    pattern.  Returns None when the query conforms.
    """
    if (gr.arity, sh.arity) != (atom.arity, atom.arity):
        return "arity mismatch"
    for i in range(1, atom.arity + 1):
        ground = not term_vars(atom.args[i - 1])
        if i in gr and not ground:
            return f"position {i} must be ground"
        if i not in gr and ground:
            return f"position {i} must be non-ground"
    for i in range(1, atom.arity + 1):
        for j in range(i + 1, atom.arity + 1):
            common = term_vars(atom.args[i - 1]) & term_vars(atom.args[j - 1])
            if common and not sh.shares(i, j):
                return f"positions {i} and {j} share {sorted(common)[0]}"
    return None


# ---------------------------------------------------------------------------
# equivalence


@dataclass
class QueryOutcome:
    query: Atom
    ok: bool
    detail: str


@dataclass
class EquivalenceReport:
    outcomes: list[QueryOutcome] = field(default_factory=list)
    rejected: list[tuple[Atom, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return bool(self.outcomes) and all(o.ok for o in self.outcomes)

    def lines(self) -> list[str]:
        out = [
            "query %s %s%s"
            % (format_atom(o.query), "ok" if o.ok else "DIFFER", o.detail)
            for o in self.outcomes
        ]
        out += ["rejected %s (%s)" % (format_atom(a), why) for a, why in self.rejected]
        return out


def check_equivalence(
    source: Program,
    residual: "ResidualProgram",
    gr: GroundnessPattern,
    sh: SharingPattern,
    queries: Sequence[Atom],
    max_steps: int = DEFAULT_STEP_LIMIT,
) -> EquivalenceReport:
    """Compare answer multisets of source vs. residual on each query.

    Queries must instantiate the entry patterns; ill-patterned ones are
    rejected rather than run, since nothing is claimed about them.
    """
    if residual.guarded:
        raise SolverError("guarded output is not interpretable here; verify the plain form")
    report = EquivalenceReport()
    for query in queries:
        issue = conformance_issue(query, gr, sh)
        if issue is not None:
            report.rejected.append((query, issue))
            continue
        want = answer_multiset(source, [query], max_steps=max_steps)
        renamed = residual.rename_query(query, gr, sh)
        got = answer_multiset(residual.program(), [renamed], max_steps=max_steps)
        if want == got:
            detail = " (%d answers)" % sum(want.values())
            report.outcomes.append(QueryOutcome(query, True, detail))
        else:
            missing = list((want - got).keys())[:3]
            extra = list((got - want).keys())[:3]
            report.outcomes.append(
                QueryOutcome(query, False, f" missing={missing} extra={extra}")
            )
    return report


# ---------------------------------------------------------------------------
# independence


@dataclass
class SiteStats:
    checked: int = 0
    violations: int = 0
    examples: list[str] = field(default_factory=list)


@dataclass
class IndependenceReport:
    sites: dict[tuple[int, int], SiteStats] = field(default_factory=dict)
    queries: int = 0

    @property
    def ok(self) -> bool:
        return all(s.violations == 0 for s in self.sites.values())

    def lines(self) -> list[str]:
        return [
            "site <%d,%d> checked %d violations %d" % (ci, gi, s.checked, s.violations)
            for (ci, gi), s in sorted(self.sites.items())
        ]


def check_independence(
    residual: "ResidualProgram",
    gr: GroundnessPattern,
    sh: SharingPattern,
    queries: Sequence[Atom],
    max_steps: int = DEFAULT_STEP_LIMIT,
) -> IndependenceReport:
    """Run queries and test strict independence at every fork entered.

    At fork time the two sides must not share a single free variable:
    any aliasing or shared unbound position shows up as a common
    variable once both sides are resolved against current bindings.
    """
    report = IndependenceReport()
    for ci_gi in residual.par_sites():
        report.sites[ci_gi] = SiteStats()

    def on_par(site: Site, left: tuple[Atom, ...], right: tuple[Atom, ...]) -> None:
        stats = report.sites.setdefault(site if site else (-1, -1), SiteStats())
        stats.checked += 1
        shared = term_vars(left) & term_vars(right)
        if shared:
            stats.violations += 1
            if len(stats.examples) < 3:
                stats.examples.append(
                    "%s & %s share %s"
                    % (
                        ",".join(map(format_atom, left)),
                        ",".join(map(format_atom, right)),
                        sorted(shared)[0],
                    )
                )

    program = residual.program()
    for query in queries:
        renamed = residual.rename_query(query, gr, sh)
        solver = Solver(program, max_steps=max_steps, on_par=on_par)
        solver.solve([renamed])
        report.queries += 1
    return report


# ---------------------------------------------------------------------------
# safeness


@dataclass
class RowStats:
    checked: int = 0
    violations: int = 0
    examples: list[str] = field(default_factory=list)


@dataclass
class SafenessReport:
    rows: dict[tuple, RowStats] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(s.violations == 0 for s in self.rows.values())

    def lines(self) -> list[str]:
        out = []
        for (pred, arity, gr, sh), stats in sorted(
            self.rows.items(), key=lambda kv: (kv[0][0], kv[0][1], str(kv[0][2]))
        ):
            out.append(
                "row %s/%d %s %s checked %d violations %d"
                % (
                    pred,
                    arity,
                    format_groundness(gr),
                    format_sharing(sh),
                    stats.checked,
                    stats.violations,
                )
            )
        return out


def _call_conforms(call: Atom, gr: GroundnessPattern, sh: SharingPattern) -> bool:
    # a table row applies when the call honours its claims; extra
    # instantiation is fine, a pattern over-approximates
    for i in gr:
        if term_vars(call.args[i - 1]):
            return False
    for i in range(1, call.arity + 1):
        for j in range(i + 1, call.arity + 1):
            if (
                term_vars(call.args[i - 1]) & term_vars(call.args[j - 1])
                and not sh.shares(i, j)
            ):
                return False
    return True


def _answer_violation(answer: Atom, gr: GroundnessPattern, sh: SharingPattern) -> Optional[str]:
    for i in gr:
        if term_vars(answer.args[i - 1]):
            return f"answer position {i} not ground in {format_atom(answer)}"
    for i in range(1, answer.arity + 1):
        for j in range(i + 1, answer.arity + 1):
            if (
                term_vars(answer.args[i - 1]) & term_vars(answer.args[j - 1])
                and not sh.shares(i, j)
            ):
                return f"answer positions {i},{j} share in {format_atom(answer)}"
    return None


def check_safeness(
    table: PatternTable,
    program: Program,
    queries: Sequence[Atom],
    max_steps: int = DEFAULT_STEP_LIMIT,
) -> SafenessReport:
    """Check that every observed (call, answer) pair honours the table.

    For each matching row — same predicate, and the call satisfies the
    row's call patterns — the answer must satisfy the row's success
    patterns.
    """
    report = SafenessReport()
    rows = list(table)
    for key, _ in rows:
        report.rows[key] = RowStats()

    def on_answer(call: Atom, answer: Atom) -> None:
        for (pred, arity, gr, sh), success in rows:
            if (pred, arity) != call.key:
                continue
            if not _call_conforms(call, gr, sh):
                continue
            stats = report.rows[(pred, arity, gr, sh)]
            stats.checked += 1
            issue = _answer_violation(answer, success.ground, success.share)
            if issue is not None:
                stats.violations += 1
                if len(stats.examples) < 3:
                    stats.examples.append(issue)

    for query in queries:
        solver = Solver(program, max_steps=max_steps, on_answer=on_answer)
        solver.solve([query])
    return report


def parse_step_limit_env() -> int:
    raw = os.environ.get("PARPEVAL_DEPTH_CAP")
    if raw is None:
        return DEFAULT_STEP_LIMIT
    try:
        value = int(raw)
        if value <= 0:
            raise ValueError
    except ValueError:
        raise SolverError(f"PARPEVAL_DEPTH_CAP must be a positive integer, got {raw!r}")
    return value
