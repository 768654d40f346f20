"""Residual program extraction and renaming.

Every unfolded extended atom becomes a fresh residual predicate whose
name encodes the call patterns.  Resultants come from the unfold and
split transitions of a trace; body atoms are renamed after whichever
transition later closed them (variant hit, own unfolding, embedding
bridge, builtin, or failure).  Embedding-closed atoms fall back to the
original program through a bridge clause, so the original definitions
they reach are carried along unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .engine import ExtendedAtom, MemoEntry, Trace
from .patterns import GroundnessPattern, SharingPattern
from .terms import (
    BUILTIN_KEYS,
    Atom,
    BodyGoal,
    Clause,
    ParGroup,
    Program,
    SeqAtom,
    Struct,
    canonical,
    format_clause,
)


class CodegenError(Exception):
    pass


EntityKey = tuple  # (canonical atom, groundness, sharing)


def _entity(ea: ExtendedAtom) -> EntityKey:
    return (canonical(ea.atom), ea.gr, ea.sh)


def _mangle(pred: str, gr: GroundnessPattern, sh: SharingPattern) -> str:
    gr_part = "_".join(str(i) for i in gr)
    sh_part = "_".join("".join(str(j) for j in sorted(g)) for g in sh.groups)
    return f"{pred}_{gr_part}_{sh_part}"


class RenamingScheme:
    """Injective map from specialized atoms to residual predicate names.

    Keys are whole entities (atom shape plus both patterns), so two
    specializations that happen to mangle alike still get distinct
    names via a numeric suffix.  Builtins keep their names.
    """

    def __init__(self, program: Optional[Program] = None) -> None:
        self._names: dict[EntityKey, str] = {}
        self._originals: dict[str, tuple[str, int]] = {}
        self._used: set[str] = set()
        if program is not None:
            self._used |= {pred for pred, _ in program.predicates()}

    def name(self, ea: ExtendedAtom) -> str:
        if ea.key in BUILTIN_KEYS:
            return ea.atom.pred
        key = _entity(ea)
        hit = self._names.get(key)
        if hit is not None:
            return hit
        base = _mangle(ea.atom.pred, ea.gr, ea.sh)
        name = self._claim(base)
        self._names[key] = name
        self._originals[name] = ea.key
        return name

    def _claim(self, base: str) -> str:
        name = base
        n = 1
        while name in self._used:
            n += 1
            name = f"{base}_{n}"
        self._used.add(name)
        return name

    def original_of(self, name: str) -> Optional[tuple[str, int]]:
        return self._originals.get(name)

    def items(self) -> list[tuple[EntityKey, str]]:
        return list(self._names.items())


@dataclass
class ResidualProgram:
    residual_clauses: tuple[Clause, ...]
    original_clauses: tuple[Clause, ...]
    source: Program
    scheme: RenamingScheme
    entries: dict[tuple[str, int, GroundnessPattern, SharingPattern], str]
    failing: frozenset[tuple[str, int]]
    support_text: str = ""
    guarded: bool = False

    def program(self) -> Program:
        return Program(self.residual_clauses + self.original_clauses)

    def rename_query(self, atom: Atom, gr: GroundnessPattern, sh: SharingPattern) -> Atom:
        name = self.entries.get((atom.pred, atom.arity, gr, sh))
        if name is None:
            raise CodegenError(
                f"no residual entry for {atom.pred}/{atom.arity} at the given patterns"
            )
        return Atom(name, atom.args)

    def par_sites(self) -> list[tuple[int, int]]:
        """(clause index, body position) of every parallel group."""
        sites = []
        for ci, clause in enumerate(self.residual_clauses):
            for gi, goal in enumerate(clause.body):
                if isinstance(goal, ParGroup):
                    sites.append((ci, gi))
        return sites


# ---------------------------------------------------------------------------
# extraction


def extract_residual(
    traces: Union[Trace, Sequence[Trace]], scheme: Optional[RenamingScheme] = None
) -> ResidualProgram:
    if isinstance(traces, Trace):
        traces = [traces]
    if not traces:
        raise CodegenError("nothing to extract")
    program = traces[0].program
    scheme = scheme or RenamingScheme(program)

    closer: dict[int, tuple[str, object]] = {}
    bridges: dict[EntityKey, ExtendedAtom] = {}
    failing: set[tuple[str, int]] = set()
    original_seeds: set[tuple[str, int]] = set()

    for trace in traces:
        if trace.program is not program:
            raise CodegenError("traces come from different programs")
        for t in trace.transitions():
            s = t.subject.serial
            if t.label == "v":
                closer[s] = ("memo", t.matched)
            elif t.label in ("u", "p"):
                closer[s] = ("memo", t.memo_entry)
            elif t.label == "n":
                closer[s] = ("builtin", None)
            elif t.label == "f":
                closer[s] = ("fail", None)
                failing.add(t.subject.ea.key)
            elif t.label == "e":
                key = _entity(t.subject.ea)
                bridges.setdefault(key, t.subject.ea)
                closer[s] = ("bridge", key)
                original_seeds.add(t.subject.ea.key)

    def bridge_name(key: EntityKey) -> str:
        return scheme.name(bridges[key])

    def rename_occurrence(serial: int, atom: Atom) -> Atom:
        kind, payload = closer[serial]
        if kind == "memo":
            entry: MemoEntry = payload  # type: ignore[assignment]
            return Atom(scheme.name(entry.ea), atom.args)
        if kind == "bridge":
            return Atom(bridge_name(payload), atom.args)  # type: ignore[arg-type]
        return atom

    clauses: list[Clause] = []
    seen: set[Clause] = set()

    def emit(clause: Clause) -> None:
        if clause not in seen:
            seen.add(clause)
            clauses.append(clause)

    for trace in traces:
        for t in trace.transitions():
            if t.label not in ("u", "p"):
                continue
            head = Atom(scheme.name(t.memo_entry.ea), t.head_instance.args)
            body: list[BodyGoal] = []
            if t.label == "u":
                for o in t.body:
                    body.append(SeqAtom(rename_occurrence(o.serial, o.ea.atom)))
            else:
                q1, q2, q3, q4 = t.quad
                for o in q1:
                    body.append(SeqAtom(rename_occurrence(o.serial, o.ea.atom)))
                body.append(
                    ParGroup(
                        tuple(rename_occurrence(o.serial, o.ea.atom) for o in q2),
                        tuple(rename_occurrence(o.serial, o.ea.atom) for o in q3),
                    )
                )
                for o in q4:
                    body.append(SeqAtom(rename_occurrence(o.serial, o.ea.atom)))
            emit(Clause(head, tuple(body)))

    for key, ea in bridges.items():
        emit(Clause(Atom(bridge_name(key), ea.atom.args), (SeqAtom(ea.atom),)))

    original_clauses = _original_closure(program, original_seeds, failing)

    entries: dict[tuple[str, int, GroundnessPattern, SharingPattern], str] = {}
    for trace in traces:
        init = trace.init
        key = _entity(init)
        for ekey, name in scheme.items():
            if ekey == key:
                entries[(init.atom.pred, init.atom.arity, init.gr, init.sh)] = name
                break

    residual = ResidualProgram(
        residual_clauses=tuple(clauses),
        original_clauses=original_clauses,
        source=program,
        scheme=scheme,
        entries=entries,
        failing=frozenset(failing),
    )
    _check_closedness(residual)
    return residual


def _original_closure(
    program: Program,
    seeds: Iterable[tuple[str, int]],
    failing: set[tuple[str, int]],
) -> tuple[Clause, ...]:
    include: set[tuple[str, int]] = set()
    work = list(seeds)
    while work:
        key = work.pop()
        if key in include:
            continue
        include.add(key)
        for clause in program.clauses_for(*key):
            for atom in clause.body_atoms():
                if atom.key in BUILTIN_KEYS or atom.key in include:
                    continue
                if program.defines(*atom.key):
                    work.append(atom.key)
                else:
                    failing.add(atom.key)
    return tuple(c for c in program.clauses if c.head.key in include)


def _check_closedness(rp: ResidualProgram) -> None:
    defined = {c.head.key for c in rp.residual_clauses}
    defined |= {c.head.key for c in rp.original_clauses}
    for clause in rp.residual_clauses + rp.original_clauses:
        for atom in clause.body_atoms():
            key = atom.key
            if key in BUILTIN_KEYS or key in defined or key in rp.failing:
                continue
            raise CodegenError(
                f"dangling call {key[0]}/{key[1]} in residual clause {format_clause(clause)}"
            )


# ---------------------------------------------------------------------------
# output with thread guards

_GUARD_TEXT = """\
:- dynamic current_threads/1.

current_threads(0).
max_threads({K}).

concurrent_k(A,B,C) :-
  current_threads(N), max_threads(K),!,
  (N < K -> M is N+1,
            retractall(current_threads(_)),assert(current_threads(M)),
            concurrent(2,[B,C],[]),
            current_threads(T), S is T-1,
            retractall(current_threads(_)),assert(current_threads(S))
         ;  call(A) ).
"""


def _conjunction(atoms: Sequence[Atom]) -> Struct:
    terms = [a.to_term() for a in atoms]
    out = terms[-1]
    for t in reversed(terms[:-1]):
        out = Struct(",", (t, out))
    return out


def add_thread_guards(rp: ResidualProgram, max_threads: int = 4) -> ResidualProgram:
    """Replace parallel groups by guarded concurrent_k/3 calls.

    Predicates whose residual definition forks get a `_par` variant of
    their original name; every other residual definition is dropped and
    its calls fall back to the untouched original program, which is
    included in full.  Programs with no parallel group pass through
    unchanged.
    """
    if max_threads < 1:
        raise ValueError("max_threads must be at least 1")
    par_keys = {
        c.head.key
        for c in rp.residual_clauses
        if any(isinstance(g, ParGroup) for g in c.body)
    }
    if not par_keys:
        return rp

    # guarded output keeps only the original program plus the _par
    # variants, so names need only avoid those (and the guard's own)
    used = {c.head.pred for c in rp.source.clauses}
    used.update(("concurrent_k", "max_threads", "current_threads"))
    par_names: dict[tuple[str, int], str] = {}
    for key in sorted(par_keys):
        orig = rp.scheme.original_of(key[0])
        if orig is None:
            raise CodegenError(f"no original predicate behind {key[0]}/{key[1]}")
        name, n = orig[0] + "_par", 1
        while name in used:
            n += 1
            name = f"{orig[0]}_par_{n}"
        used.add(name)
        par_names[key] = name

    def sequential_atom(atom: Atom) -> Atom:
        orig = rp.scheme.original_of(atom.pred)
        if orig is None:
            return atom
        return Atom(orig[0], atom.args)

    def parallel_atom(atom: Atom) -> Atom:
        key = atom.key
        if key in par_names:
            return Atom(par_names[key], atom.args)
        return sequential_atom(atom)

    guarded: list[Clause] = []
    for clause in rp.residual_clauses:
        if clause.head.key not in par_keys:
            continue
        head = Atom(par_names[clause.head.key], clause.head.args)
        body: list[BodyGoal] = []
        for goal in clause.body:
            if isinstance(goal, ParGroup):
                seq = _conjunction(
                    [sequential_atom(a) for a in goal.left + goal.right]
                )
                left = _conjunction([parallel_atom(a) for a in goal.left])
                right = _conjunction([parallel_atom(a) for a in goal.right])
                body.append(SeqAtom(Atom("concurrent_k", (seq, left, right))))
            else:
                body.append(SeqAtom(sequential_atom(goal.atom)))
        guarded.append(Clause(head, tuple(body)))

    entries = {}
    for ekey, name in rp.entries.items():
        pred, arity = ekey[0], ekey[1]
        entries[ekey] = par_names.get((name, arity), pred)

    return ResidualProgram(
        residual_clauses=tuple(guarded),
        original_clauses=rp.source.clauses,
        source=rp.source,
        scheme=rp.scheme,
        entries=entries,
        failing=rp.failing,
        support_text=_GUARD_TEXT.format(K=max_threads),
        guarded=True,
    )


def format_residual(rp: ResidualProgram) -> str:
    parts = []
    if rp.residual_clauses:
        parts.append("\n".join(format_clause(c) for c in rp.residual_clauses))
    if rp.original_clauses:
        parts.append("\n".join(format_clause(c) for c in rp.original_clauses))
    if rp.support_text:
        parts.append(rp.support_text.rstrip("\n"))
    return "\n\n".join(parts) + "\n"
