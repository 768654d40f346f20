"""Pattern-extended unfolding engine.

The unit of work is an atom annotated with a groundness pattern and a
sharing pattern describing the instantiation state of its arguments at
call time.  Queries are sequences of such extended atoms.  The driver
builds a tree of derivations: each step either closes the selected atom
(variant of a memoised atom, embedding whistle, builtin, no matching
clause) or resolves it against every unifying clause, producing one
branch per clause.  A resolution step first propagates argument
patterns through the instantiated clause body and then attempts to
split the body into two independent segments that a residual clause may
run in parallel.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Protocol, Sequence

from .patterns import (
    GroundnessPattern,
    SharingPattern,
    SuccessPattern,
    claimed_ground_vars,
    format_groundness,
    format_sharing,
    shared_pairs,
    sharing_from_pairs,
    sharing_pairs,
)
from .terms import (
    BUILTIN_KEYS,
    COMPARISON_PREDS,
    Atom,
    Clause,
    Program,
    Subst,
    apply_subst,
    canonical,
    format_atom,
    format_term,
    mgu,
    rename_apart,
    term_vars,
    warn_if_nonlinear,
)


class PELimitExceeded(Exception):
    """The driver hit its transition budget before closing the tree."""


@dataclass(frozen=True)
class ExtendedAtom:
    atom: Atom
    gr: GroundnessPattern
    sh: SharingPattern

    def __post_init__(self) -> None:
        if self.gr.arity != self.atom.arity or self.sh.arity != self.atom.arity:
            raise ValueError("pattern arity does not match atom arity")

    @property
    def key(self) -> tuple[str, int]:
        return self.atom.key

    def describe(self) -> str:
        return "(%s, %s, %s)" % (
            format_atom(self.atom),
            format_groundness(self.gr),
            format_sharing(self.sh),
        )


ExtendedQuery = tuple[ExtendedAtom, ...]


class SuccessOracle(Protocol):
    def success(
        self, pred: str, arity: int, gr: GroundnessPattern, sh: SharingPattern
    ) -> SuccessPattern: ...


# ---------------------------------------------------------------------------
# variable-level instantiation state


class PropState:
    """Ground variables and may-alias pairs accumulated along a walk.

    `aliases` holds name-sorted pairs of distinct variables; a variable
    in `ground` can never alias anything, but stale pairs mentioning it
    are kept and filtered at query time.
    """

    __slots__ = ("ground", "aliases")

    def __init__(self, ground: set[str] | None = None, aliases: set[tuple[str, str]] | None = None):
        self.ground: set[str] = set() if ground is None else set(ground)
        self.aliases: set[tuple[str, str]] = set() if aliases is None else set(aliases)

    def copy(self) -> "PropState":
        return PropState(self.ground, self.aliases)

    def may_alias(self, x: str, y: str) -> bool:
        if x == y:
            return x not in self.ground
        if x in self.ground or y in self.ground:
            return False
        return (min(x, y), max(x, y)) in self.aliases

    @staticmethod
    def join(a: "PropState", b: "PropState") -> "PropState":
        return PropState(a.ground | b.ground, a.aliases | b.aliases)


def head_state(head: ExtendedAtom) -> PropState:
    """Initial state justified by the claims of a selected atom."""
    return PropState(
        claimed_ground_vars(head.gr, head.atom),
        set(shared_pairs(head.sh, head.atom)),
    )


def _claim_vars(ea: ExtendedAtom) -> set[str]:
    out: set[str] = set()
    for i in ea.gr:
        out |= term_vars(ea.atom.args[i - 1])
    return out


def _args_may_share(t1, t2, ground: set[str], aliases: set[tuple[str, str]]) -> bool:
    v1 = term_vars(t1) - ground
    v2 = term_vars(t2) - ground
    if v1 & v2:
        return True
    for x in v1:
        for y in v2:
            if x != y and (min(x, y), max(x, y)) in aliases:
                return True
    return False


# ---------------------------------------------------------------------------
# entry patterns of a clause body


def body_call_patterns(
    call_gr: GroundnessPattern, call_sh: SharingPattern, clause: Clause
) -> ExtendedQuery:
    """Call patterns each body atom inherits from the clause head.

    A position is claimed ground when all its variables occur in
    head positions claimed ground by the call; two positions may share
    when they have a variable in common or hold variables the head
    sharing pattern links.  Groundness is not used to prune sharing
    here: over-claiming a may-share is always sound.
    """
    head = clause.head
    ground = claimed_ground_vars(call_gr, head)
    alias = shared_pairs(call_sh, head)
    out = []
    for batom in clause.body_atoms():
        n = batom.arity
        positions = frozenset(
            j for j in range(1, n + 1) if term_vars(batom.args[j - 1]) <= ground
        )
        pairs = set()
        for j in range(1, n + 1):
            for k in range(j + 1, n + 1):
                if _args_may_share(batom.args[j - 1], batom.args[k - 1], set(), alias):
                    pairs.add((j, k))
        out.append(
            ExtendedAtom(batom, GroundnessPattern(n, positions), sharing_from_pairs(n, pairs))
        )
    return tuple(out)


def unfold_step(
    ea: ExtendedAtom, clause: Clause
) -> Optional[tuple[Subst, Clause, ExtendedQuery]]:
    """Resolve `ea` against `clause`: (mgu, renamed clause, body query).

    The body query carries entry patterns computed on the renamed but
    uninstantiated clause; the mgu is then applied to the atoms alone,
    leaving the patterns untouched.
    """
    rclause = rename_apart(clause, term_vars(ea.atom))
    sigma = mgu(ea.atom, rclause.head)
    if sigma is None:
        return None
    equery = body_call_patterns(ea.gr, ea.sh, rclause)
    instantiated = tuple(
        ExtendedAtom(apply_subst(b.atom, sigma), b.gr, b.sh) for b in equery
    )
    return sigma, rclause, instantiated


# ---------------------------------------------------------------------------
# success propagation


def _refresh(ea: ExtendedAtom, state: PropState, extra_ground: set[str]) -> ExtendedAtom:
    """Strengthen `ea`'s patterns with what `state` already knows.

    The atom's own groundness claims count as established: they were
    justified when the pattern was computed and instantiation only
    refines them.
    """
    known = state.ground | extra_ground | _claim_vars(ea)
    atom = ea.atom
    n = atom.arity
    positions = set(ea.gr.ground)
    for j in range(1, n + 1):
        if j not in positions and term_vars(atom.args[j - 1]) <= known:
            positions.add(j)
    pairs = set(sharing_pairs(ea.sh))
    for j in range(1, n + 1):
        for k in range(j + 1, n + 1):
            if (j, k) not in pairs and _args_may_share(
                atom.args[j - 1], atom.args[k - 1], known, state.aliases
            ):
                pairs.add((j, k))
    return ExtendedAtom(
        atom, GroundnessPattern(n, frozenset(positions)), sharing_from_pairs(n, pairs)
    )


def _absorb(ea: ExtendedAtom, success: SuccessPattern, state: PropState) -> None:
    """Fold an answer matching `success` into the state, in place."""
    atom = ea.atom
    state.ground |= _claim_vars(ea)
    for i in success.ground:
        state.ground |= term_vars(atom.args[i - 1])
    for (i, j) in sharing_pairs(success.share):
        v1 = term_vars(atom.args[i - 1]) - state.ground
        v2 = term_vars(atom.args[j - 1]) - state.ground
        for x in v1:
            for y in v2:
                if x != y:
                    state.aliases.add((min(x, y), max(x, y)))


def propagate_success(
    q1: Sequence[ExtendedAtom],
    q2: Sequence[ExtendedAtom],
    oracle: SuccessOracle,
    state: PropState,
) -> tuple[ExtendedQuery, ExtendedQuery, PropState]:
    """Push success information of `q1` into both queries, left to right.

    Atoms of `q1` are refreshed against the accumulated state, their
    success pattern is looked up under the refreshed call pattern, and
    the answer is absorbed before moving right.  Atoms of `q2` only see
    the state after `q1` plus the groundness claims of `q2` atoms to
    their left; no successes of `q2` are assumed.
    """
    st = state.copy()
    out1 = []
    for ea in q1:
        refreshed = _refresh(ea, st, set())
        succ = oracle.success(
            refreshed.atom.pred, refreshed.atom.arity, refreshed.gr, refreshed.sh
        )
        out1.append(refreshed)
        _absorb(refreshed, succ, st)
    out2 = []
    later_claims: set[str] = set()
    for ea in q2:
        refreshed = _refresh(ea, st, later_claims)
        later_claims |= _claim_vars(refreshed)
        out2.append(refreshed)
    return tuple(out1), tuple(out2), st


# ---------------------------------------------------------------------------
# independent partitioning


Quad = tuple[ExtendedQuery, ExtendedQuery, ExtendedQuery, ExtendedQuery]


def _segment_admissible(segment: ExtendedQuery) -> bool:
    # A parallel segment must do real work: at least one user-defined
    # atom.  Comparisons never go inside (they are cheap guards and
    # their failure must be observed before forking); is/2 only rides
    # along once its expression side is known ground; =/2 is free.
    has_user = False
    for ea in segment:
        key = ea.key
        if key not in BUILTIN_KEYS:
            has_user = True
        elif key[0] in COMPARISON_PREDS:
            return False
        elif key[0] == "is" and 2 not in ea.gr:
            return False
    return has_user


def _segments_independent(
    left: ExtendedQuery,
    right: ExtendedQuery,
    fork: PropState,
    head_pairs: frozenset[tuple[str, str]],
) -> bool:
    vleft = term_vars([ea.atom for ea in left])
    vright = term_vars([ea.atom for ea in right])
    grounded = set(fork.ground)
    for ea in itertools.chain(left, right):
        grounded |= _claim_vars(ea)
    if (vleft & vright) - grounded:
        return False
    forbidden = head_pairs | fork.aliases
    for x in vleft - grounded:
        for y in vright - grounded:
            if x != y and (min(x, y), max(x, y)) in forbidden:
                return False
    return True


def split_independent(
    head: ExtendedAtom, query: ExtendedQuery, oracle: SuccessOracle
) -> Optional[Quad]:
    """Split `query` into prefix, two independent segments, and a tail.

    Candidates are tried with the shortest prefix first, then the
    shortest tail (widening the parallel window), then the leftmost
    boundary between the segments; the first admissible split wins.
    Returned segments carry their propagated patterns: the prefix as
    run before the fork, each parallel segment propagated from the fork
    state alone, and the tail under the join of both segment states.
    """
    n = len(query)
    if n < 2:
        return None
    head_pairs = shared_pairs(head.sh, head.atom)
    for n1 in range(0, n - 1):
        for n4 in range(0, n - n1 - 1):
            mid = n - n1 - n4
            for n2 in range(1, mid):
                q1 = query[:n1]
                q2 = query[n1 : n1 + n2]
                q3 = query[n1 + n2 : n1 + mid]
                q4 = query[n1 + mid :]
                p1, rest, fork = propagate_success(q1, q2 + q3 + q4, oracle, head_state(head))
                p2 = rest[:n2]
                p3 = rest[n2 : mid]
                p4 = rest[mid:]
                if not (_segment_admissible(p2) and _segment_admissible(p3)):
                    continue
                if not _segments_independent(p2, p3, fork, head_pairs):
                    continue
                f2, p4, s2 = propagate_success(p2, p4, oracle, fork)
                f3, p4, s3 = propagate_success(p3, p4, oracle, fork)
                f4, _, _ = propagate_success(p4, (), oracle, PropState.join(s2, s3))
                return p1, f2, f3, f4
    return None


# ---------------------------------------------------------------------------
# variant and embedding checks


def _memo_key(ea: ExtendedAtom) -> tuple:
    return canonical(ea.atom), ea.gr, ea.sh


def is_variant(a: ExtendedAtom, b: ExtendedAtom) -> bool:
    return _memo_key(a) == _memo_key(b)


def _term_embeds(big, small) -> bool:
    from .terms import Int, Struct, Var  # local names for match clarity

    if isinstance(small, Var):
        if isinstance(big, Var):
            return True
    if isinstance(big, Struct):
        # diving: the small term hides inside an argument
        if any(_term_embeds(arg, small) for arg in big.args):
            return True
    if isinstance(small, Int) and isinstance(big, Int):
        # integers act as one mutually embeddable constant family
        return True
    if (
        isinstance(small, Struct)
        and isinstance(big, Struct)
        and small.functor == big.functor
        and len(small.args) == len(big.args)
    ):
        return all(_term_embeds(x, y) for x, y in zip(big.args, small.args))
    return False


def atom_embeds(big: Atom, small: Atom) -> bool:
    if big.key != small.key:
        return False
    return all(_term_embeds(x, y) for x, y in zip(big.args, small.args))


def embeds(big: ExtendedAtom, small: ExtendedAtom) -> bool:
    return big.gr == small.gr and big.sh == small.sh and atom_embeds(big.atom, small.atom)


# ---------------------------------------------------------------------------
# the driver


@dataclass(frozen=True)
class Occurrence:
    """One queue slot; the serial ties resultant bodies to transitions."""

    serial: int
    ea: ExtendedAtom


class MemoEntry:
    __slots__ = ("serial", "ea")

    def __init__(self, serial: int, ea: ExtendedAtom) -> None:
        self.serial = serial
        self.ea = ea


@dataclass(frozen=True, eq=False)
class Transition:
    label: str  # u unfold | p parallel split | v variant | e embedding | n builtin | f no clause
    subject: Occurrence
    sigma: Optional[Subst] = None
    clause_index: Optional[int] = None
    renamed_clause: Optional[Clause] = None
    head_instance: Optional[Atom] = None
    body: tuple[Occurrence, ...] = ()
    quad: Optional[tuple[tuple[Occurrence, ...], ...]] = None
    matched: Optional[MemoEntry] = None
    memo_entry: Optional[MemoEntry] = None


@dataclass
class Derivation:
    transitions: list[Transition] = field(default_factory=list)

    def labels(self) -> list[str]:
        return [t.label for t in self.transitions]


@dataclass
class Trace:
    program: Program
    init: ExtendedAtom
    derivations: list[Derivation]
    memo: list[MemoEntry]

    def transitions(self) -> Iterator[Transition]:
        for d in self.derivations:
            yield from d.transitions

    def label_sequences(self) -> list[list[str]]:
        return [d.labels() for d in self.derivations]


def partially_evaluate(
    program: Program,
    init: ExtendedAtom,
    oracle: SuccessOracle,
    max_transitions: int = 1_000_000,
) -> Trace:
    """Explore the unfolding tree of `init` and record every step.

    Branch points push one continuation per unifying clause, visited in
    textual clause order.  New body atoms go to the front of the queue,
    so selection is leftmost, mirroring plain resolution.  The memo of
    already-unfolded atoms is global across branches.
    """
    memo_order: list[MemoEntry] = []
    memo_index: dict[tuple, MemoEntry] = {}
    serials = itertools.count(1)

    def occ(ea: ExtendedAtom) -> Occurrence:
        return Occurrence(next(serials), ea)

    stack: list[tuple[tuple[Occurrence, ...], tuple[Transition, ...]]] = [
        ((occ(init),), ())
    ]
    derivations: list[Derivation] = []
    count = 0

    while stack:
        queue, prefix = stack.pop()
        trans = list(prefix)
        branched = False
        while queue:
            subject, rest = queue[0], queue[1:]
            ea = subject.ea
            count += 1
            if count > max_transitions:
                raise PELimitExceeded(
                    f"gave up after {max_transitions} transitions; "
                    f"selected atom was {ea.atom.pred}/{ea.atom.arity}"
                )
            key = _memo_key(ea)
            hit = memo_index.get(key)
            if hit is not None:
                trans.append(Transition("v", subject, matched=hit))
                queue = rest
                continue
            older = next((m for m in memo_order if embeds(ea, m.ea)), None)
            if older is not None:
                trans.append(Transition("e", subject, matched=older))
                queue = rest
                continue
            if ea.key in BUILTIN_KEYS:
                trans.append(Transition("n", subject))
                queue = rest
                continue
            warn_if_nonlinear(ea.atom, "selected atom")
            steps = []
            for idx, clause in enumerate(program.clauses):
                if clause.head.key != ea.key:
                    continue
                res = unfold_step(ea, clause)
                if res is not None:
                    steps.append((idx,) + res)
            if not steps:
                trans.append(Transition("f", subject))
                queue = rest
                continue
            entry = MemoEntry(len(memo_order) + 1, ea)
            memo_order.append(entry)
            memo_index[key] = entry
            branches = []
            for idx, sigma, rclause, equery in steps:
                head_inst = apply_subst(ea.atom, sigma)
                head_ea = ExtendedAtom(head_inst, ea.gr, ea.sh)
                quad = split_independent(head_ea, equery, oracle)
                if quad is not None:
                    segs = tuple(tuple(occ(x) for x in seg) for seg in quad)
                    branches.append(
                        Transition(
                            "p",
                            subject,
                            sigma=sigma,
                            clause_index=idx,
                            renamed_clause=rclause,
                            head_instance=head_inst,
                            body=segs[0] + segs[1] + segs[2] + segs[3],
                            quad=segs,
                            memo_entry=entry,
                        )
                    )
                else:
                    propped, _, _ = propagate_success(equery, (), oracle, head_state(head_ea))
                    branches.append(
                        Transition(
                            "u",
                            subject,
                            sigma=sigma,
                            clause_index=idx,
                            renamed_clause=rclause,
                            head_instance=head_inst,
                            body=tuple(occ(x) for x in propped),
                            memo_entry=entry,
                        )
                    )
            for b in reversed(branches):
                stack.append((b.body + rest, tuple(trans) + (b,)))
            branched = True
            break
        if not branched:
            derivations.append(Derivation(trans))

    return Trace(program, init, derivations, memo_order)


# ---------------------------------------------------------------------------
# trace rendering


def format_subst(sigma: Subst) -> str:
    inner = ",".join(f"{v}->{format_term(t)}" for v, t in sorted(sigma.items()))
    return "{%s}" % inner


def format_transition(t: Transition) -> str:
    ea = t.subject.ea
    line = "%s %s/%d %s %s" % (
        t.label,
        ea.atom.pred,
        ea.atom.arity,
        format_groundness(ea.gr),
        format_sharing(ea.sh),
    )
    if t.label in ("u", "p") and t.sigma is not None:
        line += " " + format_subst(t.sigma)
    return line


def format_trace(trace: Trace) -> str:
    blocks = []
    for d in trace.derivations:
        blocks.append("\n".join(format_transition(t) for t in d.transitions))
    return "\n\n".join(blocks) + "\n"
