"""Solidity version triples and pragma constraint algebra.

A constraint is a conjunction of ``(comparator, version)`` clauses.  Because
versions are integer triples every clause maps onto a half-open interval
``[lo, hi)``; conjunction and intersection are interval intersection.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

from .errors import ParseError

COMPARATORS = ("=", ">", ">=", "<", "<=", "^")


class Version(NamedTuple):
    major: int
    minor: int
    patch: int

    @classmethod
    def parse(cls, text: str) -> "Version":
        m = re.fullmatch(r"\s*v?(\d+)\.(\d+)\.(\d+)\s*", text)
        if not m:
            raise ValueError(f"not a version triple: {text!r}")
        return cls(*(int(g) for g in m.groups()))

    def next_patch(self) -> "Version":
        return Version(self.major, self.minor, self.patch + 1)

    def caret_upper(self) -> "Version":
        if self.major > 0:
            return Version(self.major + 1, 0, 0)
        if self.minor > 0:
            return Version(0, self.minor + 1, 0)
        return Version(0, 0, self.patch + 1)

    def __str__(self) -> str:
        return f"{self.major}.{self.minor}.{self.patch}"


ZERO = Version(0, 0, 0)


class Clause(NamedTuple):
    op: str
    version: Version

    def interval(self) -> tuple[Version, Optional[Version]]:
        v = self.version
        if self.op == "=":
            return v, v.next_patch()
        if self.op == ">":
            return v.next_patch(), None
        if self.op == ">=":
            return v, None
        if self.op == "<":
            return ZERO, v
        if self.op == "<=":
            return ZERO, v.next_patch()
        if self.op == "^":
            return v, v.caret_upper()
        raise ValueError(f"unknown comparator {self.op!r}")

    def __str__(self) -> str:
        return f"{self.op}{self.version}"


def _intersect(a, b):
    lo = max(a[0], b[0])
    if a[1] is None:
        hi = b[1]
    elif b[1] is None:
        hi = a[1]
    else:
        hi = min(a[1], b[1])
    return lo, hi


@dataclass(frozen=True)
class VersionConstraint:
    clauses: tuple[Clause, ...]
    text: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.clauses:
            raise ValueError("a constraint needs at least one clause")

    @classmethod
    def parse(cls, text: str) -> "VersionConstraint":
        return parse_constraint(text)

    @classmethod
    def from_interval(cls, lo: Version, hi: Optional[Version]) -> "VersionConstraint":
        clauses = [Clause(">=", lo)]
        if hi is not None:
            clauses.append(Clause("<", hi))
        return cls(tuple(clauses))

    def interval(self) -> tuple[Version, Optional[Version]]:
        iv = (ZERO, None)
        for c in self.clauses:
            iv = _intersect(iv, c.interval())
        return iv

    def is_empty(self) -> bool:
        lo, hi = self.interval()
        return hi is not None and lo >= hi

    def allows(self, version: Version) -> bool:
        lo, hi = self.interval()
        return lo <= version and (hi is None or version < hi)

    def intersects(self, other: "VersionConstraint") -> bool:
        return not self.intersect(other).is_empty()

    def intersect(self, other: "VersionConstraint") -> "VersionConstraint":
        return intersect_all([self, other])

    @property
    def lower_bound(self) -> Version:
        return self.interval()[0]

    def __str__(self) -> str:
        return self.text or " ".join(str(c) for c in self.clauses)


UNCONSTRAINED = VersionConstraint((Clause(">=", ZERO),), "*")


def intersect_all(constraints: Iterable[VersionConstraint]) -> VersionConstraint:
    """Conjunction of ``constraints``.

    When one of the inputs already spells the resulting interval it is
    returned unchanged, so ``^0.8.0`` intersected with itself stays ``^0.8.0``.
    An empty result is still returned (check ``is_empty``).
    """
    constraints = list(constraints)
    if not constraints:
        return UNCONSTRAINED
    iv = (ZERO, None)
    for c in constraints:
        iv = _intersect(iv, c.interval())
    for c in constraints:
        if c.interval() == iv:
            return c
    return VersionConstraint.from_interval(*iv)


# -- pragma expression parsing -------------------------------------------------

_PART = r"(\d+|[xX*])"
_TOKEN = re.compile(
    r"\s*(?P<op>\^|~|>=|<=|>|<|=)?\s*v?"
    rf"(?P<a>{_PART})(?:\.(?P<b>{_PART}))?(?:\.(?P<c>{_PART}))?"
)
_HYPHEN = re.compile(r"\s+-\s+")


def _parts(m) -> list[int]:
    out = []
    for g in ("a", "b", "c"):
        val = m.group(g)
        if val is None or not val.isdigit():
            break
        out.append(int(val))
    return out


def _expand(op: str, parts: list[int]) -> list[Clause]:
    if len(parts) == 3:
        v = Version(*parts)
        if op == "~":
            return [Clause(">=", v), Clause("<", Version(v.major, v.minor + 1, 0))]
        return [Clause(op or "=", v)]
    if not parts:
        if op in ("<", ">"):
            return [Clause("<", ZERO)]  # matches nothing
        return [Clause(">=", ZERO)]
    major = parts[0]
    lo = Version(major, parts[1] if len(parts) > 1 else 0, 0)
    nxt = Version(major, parts[1] + 1, 0) if len(parts) > 1 else Version(major + 1, 0, 0)
    if op == "^":
        upper = lo.caret_upper() if len(parts) > 1 and major > 0 else nxt
        return [Clause(">=", lo), Clause("<", upper)]
    if op in ("", "=", "~"):
        return [Clause(">=", lo), Clause("<", nxt)]
    if op == ">=":
        return [Clause(">=", lo)]
    if op == ">":
        return [Clause(">=", nxt)]
    if op == "<":
        return [Clause("<", lo)]
    if op == "<=":
        return [Clause("<", nxt)]
    raise ValueError(op)


def parse_constraint(text: str, offset: int = 0) -> VersionConstraint:
    """Parse a ``pragma solidity`` expression such as ``>=0.6.0 <0.8.0``.

    ``offset`` is only used to position error messages.
    """
    expr = text.strip()
    if not expr:
        raise ParseError("empty version constraint", offset)
    if "||" in expr:
        raise ParseError(f"disjunctive constraints are not supported: {expr!r}", offset)
    clauses: list[Clause] = []
    ranges = _HYPHEN.split(expr)
    if len(ranges) == 2:
        lo_m = _TOKEN.fullmatch(ranges[0])
        hi_m = _TOKEN.fullmatch(ranges[1])
        if not lo_m or not hi_m or lo_m.group("op") or hi_m.group("op"):
            raise ParseError(f"malformed range {expr!r}", offset)
        clauses += _expand(">=", _parts(lo_m))
        clauses += _expand("<=", _parts(hi_m))
        return VersionConstraint(tuple(clauses), expr)
    if len(ranges) > 2:
        raise ParseError(f"malformed range {expr!r}", offset)
    pos = 0
    while pos < len(expr):
        m = _TOKEN.match(expr, pos)
        if not m or m.end() == pos:
            raise ParseError(f"malformed version constraint {expr!r}", offset + pos)
        end = m.end()
        if end < len(expr) and not (expr[end].isspace() or expr[end] in "<>=^~"):
            raise ParseError(f"malformed version constraint {expr!r}", offset + end)
        clauses += _expand(m.group("op") or "", _parts(m))
        pos = end
        while pos < len(expr) and expr[pos].isspace():
            pos += 1
    return VersionConstraint(tuple(clauses), expr)
