"""Groundness and sharing descriptions of predicate arguments.

A groundness pattern is the set of argument positions (1-based) known to be
bound to ground terms.  A sharing pattern gives, per argument position, the
set of positions it may share a variable with; it is kept symmetric and
reflexive but deliberately not transitive, since "1 shares with 2" and
"2 shares with 3" do not imply a variable common to 1 and 3.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator

from .terms import Atom, term_vars


@dataclass(frozen=True)
class GroundnessPattern:
    arity: int
    ground: frozenset[int]

    def __post_init__(self) -> None:
        bad = [i for i in self.ground if not 1 <= i <= self.arity]
        if bad:
            raise ValueError(f"positions {bad} out of range for arity {self.arity}")

    def __contains__(self, i: int) -> bool:
        return i in self.ground

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.ground))

    def __le__(self, other: "GroundnessPattern") -> bool:
        # weaker-or-equal: claims no position the other does not
        return self.ground <= other.ground

    def __repr__(self) -> str:
        return format_groundness(self)


def groundness(arity: int, positions: Iterable[int] = ()) -> GroundnessPattern:
    return GroundnessPattern(arity, frozenset(positions))


def strengthen(p1: GroundnessPattern, p2: GroundnessPattern) -> GroundnessPattern:
    """Meet in the precision order: both claims hold, so positions union."""
    if p1.arity != p2.arity:
        raise ValueError("arity mismatch")
    return GroundnessPattern(p1.arity, p1.ground | p2.ground)


def weaken(p1: GroundnessPattern, p2: GroundnessPattern) -> GroundnessPattern:
    """Join: only positions both patterns claim survive."""
    if p1.arity != p2.arity:
        raise ValueError("arity mismatch")
    return GroundnessPattern(p1.arity, p1.ground & p2.ground)


@dataclass(frozen=True)
class SharingPattern:
    groups: tuple[frozenset[int], ...]

    @property
    def arity(self) -> int:
        return len(self.groups)

    def shares(self, i: int, j: int) -> bool:
        return j in self.groups[i - 1]

    def group(self, i: int) -> frozenset[int]:
        return self.groups[i - 1]

    def __repr__(self) -> str:
        return format_sharing(self)


def sharing(arity: int, groups: Iterable[Iterable[int]] = ()) -> SharingPattern:
    """Build a normalised sharing pattern from may-share position groups."""
    sets = [set() for _ in range(arity)]
    for g in groups:
        g = set(g)
        bad = [i for i in g if not 1 <= i <= arity]
        if bad:
            raise ValueError(f"positions {bad} out of range for arity {arity}")
        for i in g:
            sets[i - 1] |= g
    for i in range(arity):
        sets[i].add(i + 1)
    return SharingPattern(tuple(frozenset(s) for s in sets))


def independent_sharing(arity: int) -> SharingPattern:
    return sharing(arity)


def worst_sharing(arity: int) -> SharingPattern:
    return sharing(arity, [range(1, arity + 1)])


def merge_sharing(s1: SharingPattern, s2: SharingPattern) -> SharingPattern:
    """Join: pointwise union of may-share sets, then renormalise."""
    if s1.arity != s2.arity:
        raise ValueError("arity mismatch")
    pairs = sharing_pairs(s1) | sharing_pairs(s2)
    return sharing_from_pairs(s1.arity, pairs)


def sharing_pairs(s: SharingPattern) -> frozenset[tuple[int, int]]:
    """The unordered position pairs (i<j) the pattern allows to share."""
    out = set()
    for i in range(1, s.arity + 1):
        for j in s.group(i):
            if i < j:
                out.add((i, j))
    return frozenset(out)


def sharing_from_pairs(arity: int, pairs: Iterable[tuple[int, int]]) -> SharingPattern:
    return sharing(arity, [{i, j} for i, j in pairs])


def refines(s1: SharingPattern, s2: SharingPattern) -> bool:
    """True when s1 allows at most the sharing s2 allows."""
    return sharing_pairs(s1) <= sharing_pairs(s2)


# ---------------------------------------------------------------------------
# relating patterns to concrete atoms


def claimed_ground_vars(p: GroundnessPattern, atom: Atom) -> set[str]:
    """Variables occurring in the atom's claimed-ground argument positions."""
    if p.arity != atom.arity:
        raise ValueError("pattern arity does not match atom")
    out: set[str] = set()
    for i in p:
        out |= term_vars(atom.args[i - 1])
    return out


def shared_pairs(s: SharingPattern, atom: Atom) -> frozenset[tuple[str, str]]:
    """Variable pairs the pattern allows to be aliased in this atom.

    Distinct variables x,y may share only if they occur in argument
    positions i,j the pattern links.  Pairs are returned name-sorted.
    """
    if s.arity != atom.arity:
        raise ValueError("pattern arity does not match atom")
    out: set[tuple[str, str]] = set()
    for i in range(1, atom.arity + 1):
        vi = term_vars(atom.args[i - 1])
        for j in s.group(i):
            if j == i:
                continue
            vj = term_vars(atom.args[j - 1])
            for x in vi:
                for y in vj:
                    if x != y:
                        out.add((min(x, y), max(x, y)))
    return frozenset(out)


# ---------------------------------------------------------------------------
# textual form
#
#   gr {1,3}        groundness positions
#   sh <{1},{2,3},{2,3}>   per-position share groups

_SET_RE = re.compile(r"\{([\d,\s]*)\}")


def format_groundness(p: GroundnessPattern) -> str:
    return "{" + ",".join(str(i) for i in sorted(p.ground)) + "}"


def format_sharing(s: SharingPattern) -> str:
    inner = ",".join(
        "{" + ",".join(str(j) for j in sorted(g)) + "}" for g in s.groups
    )
    return f"<{inner}>"


def _parse_set(text: str) -> frozenset[int]:
    text = text.strip()
    if not (text.startswith("{") and text.endswith("}")):
        raise ValueError(f"expected a {{..}} set, got {text!r}")
    inner = text[1:-1].strip()
    if not inner:
        return frozenset()
    return frozenset(int(p) for p in inner.split(","))


def parse_groundness(text: str, arity: int) -> GroundnessPattern:
    return GroundnessPattern(arity, _parse_set(text))


def parse_sharing(text: str, arity: int) -> SharingPattern:
    text = text.strip()
    if not (text.startswith("<") and text.endswith(">")):
        raise ValueError(f"expected a <..> sharing pattern, got {text!r}")
    sets = [_parse_set(m.group(0)) for m in _SET_RE.finditer(text[1:-1])]
    if len(sets) != arity:
        raise ValueError(f"expected {arity} share groups, got {len(sets)}")
    # renormalise: input groups are per-position may-share sets
    pairs = set()
    for i, g in enumerate(sets, start=1):
        for j in g:
            if i != j:
                pairs.add((min(i, j), max(i, j)))
    return sharing_from_pairs(arity, pairs)


# ---------------------------------------------------------------------------
# pattern tables

PatternKey = tuple[str, int, GroundnessPattern, SharingPattern]


@dataclass(frozen=True)
class SuccessPattern:
    ground: GroundnessPattern
    share: SharingPattern


class PatternTable:
    """Success patterns per (pred, arity, call groundness, call sharing)."""

    def __init__(self) -> None:
        self.rows: dict[PatternKey, SuccessPattern] = {}

    def put(self, key: PatternKey, success: SuccessPattern) -> None:
        self.rows[key] = success

    def get(self, key: PatternKey) -> SuccessPattern | None:
        return self.rows.get(key)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[tuple[PatternKey, SuccessPattern]]:
        return iter(sorted(self.rows.items(), key=lambda kv: _row_sort_key(kv[0])))

    def format(self) -> str:
        lines = []
        for key, success in self:
            pred, arity, gr, sh = key
            lines.append(
                f"{pred}/{arity} : gr {format_groundness(gr)} -> "
                f"{format_groundness(success.ground)} ; sh {format_sharing(sh)} -> "
                f"{format_sharing(success.share)}"
            )
        return "\n".join(lines) + ("\n" if lines else "")


def _row_sort_key(key: PatternKey):
    pred, arity, gr, sh = key
    return (pred, arity, sorted(gr.ground), sorted(sorted(g) for g in sh.groups))


_ROW_RE = re.compile(
    r"^\s*(?P<pred>[a-z]\w*)\s*/\s*(?P<arity>\d+)\s*:\s*"
    r"gr\s*(?P<gr1>\{[^}]*\})\s*->\s*(?P<gr2>\{[^}]*\})\s*;\s*"
    r"sh\s*(?P<sh1><[^>]*>)\s*->\s*(?P<sh2><[^>]*>)\s*$"
)


def parse_pattern_table(text: str) -> PatternTable:
    table = PatternTable()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        m = _ROW_RE.match(line)
        if m is None:
            raise ValueError(f"bad pattern table row at line {lineno}: {raw!r}")
        arity = int(m.group("arity"))
        key = (
            m.group("pred"),
            arity,
            parse_groundness(m.group("gr1"), arity),
            parse_sharing(m.group("sh1"), arity),
        )
        table.put(
            key,
            SuccessPattern(
                parse_groundness(m.group("gr2"), arity),
                parse_sharing(m.group("sh2"), arity),
            ),
        )
    return table
