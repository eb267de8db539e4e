"""Semantic versions and version-range constraints.

Versions follow the major.minor.patch[-prerelease] scheme. Constraints come
in four kinds:

  exact      1.13.0          matches that version only
  caret      ^1.x, ^1.2.0    same major, at least the stated floor
  wildcard   1.12.x, 1.x, *  fixed positions equal, wildcard positions free
  range      >=1.10.x <=1.13.0   inclusive or strict bounds, joined by
                                 whitespace, "and", or ","

A prerelease version never satisfies a caret/range/wildcard constraint
unless the constraint itself names a prerelease.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Optional

_SEMVER_RE = re.compile(
    r"^\s*[vV]?(\d+)(?:\.(\d+))?(?:\.(\d+))?(?:-([0-9A-Za-z.\-]+))?\s*$"
)


@total_ordering
@dataclass(frozen=True)
class SemVer:
    major: int
    minor: int = 0
    patch: int = 0
    prerelease: Optional[str] = None

    @classmethod
    def parse(cls, text: str | float | int) -> "SemVer":
        """Parse "1.13.0", "1.0", "1", or "2.0.0-rc1". Missing parts are 0."""
        if isinstance(text, (int, float)):
            text = repr(text)
        m = _SEMVER_RE.match(str(text))
        if not m:
            raise ValueError(f"invalid semantic version: {text!r}")
        major, minor, patch, pre = m.groups()
        return cls(int(major), int(minor or 0), int(patch or 0), pre)

    def __str__(self) -> str:
        base = f"{self.major}.{self.minor}.{self.patch}"
        return f"{base}-{self.prerelease}" if self.prerelease else base

    def _key(self):
        # a prerelease sorts below the same release triple
        return (self.major, self.minor, self.patch,
                0 if self.prerelease else 1, self.prerelease or "")

    def __lt__(self, other: "SemVer") -> bool:
        return self._key() < other._key()

    @property
    def triple(self) -> tuple[int, int, int]:
        return (self.major, self.minor, self.patch)


_WILD = frozenset({"x", "X", "*"})
_BOUND_RE = re.compile(r"(>=|<=|>|<|==?)\s*([^\s,]+)")


def _parse_part(token: str) -> tuple[Optional[int], ...]:
    """Split a dotted version token into numbers, None for wildcards."""
    body, _, pre = token.partition("-")
    parts = body.split(".")
    out: list[Optional[int]] = []
    for p in parts:
        if p in _WILD:
            out.append(None)
        elif p.isdigit():
            out.append(int(p))
        else:
            raise ValueError(f"invalid version component {p!r} in {token!r}")
    if len(out) > 3:
        raise ValueError(f"too many version components in {token!r}")
    return tuple(out)


def _floor_of(parts: tuple[Optional[int], ...], pre: Optional[str] = None) -> SemVer:
    nums = [p if p is not None else 0 for p in parts]
    while len(nums) < 3:
        nums.append(0)
    return SemVer(nums[0], nums[1], nums[2], pre)


@dataclass(frozen=True)
class VersionConstraint:
    """One of exact / caret / wildcard / range, kept with its source text."""

    kind: str
    raw: str
    lower: Optional[SemVer] = None        # inclusive unless lower_strict
    upper: Optional[SemVer] = None        # exclusive for caret, else per flag
    lower_strict: bool = False
    upper_strict: bool = False
    # wildcard pattern: fixed numbers with None in free positions
    pattern: tuple = field(default=())
    names_prerelease: bool = False

    @classmethod
    def parse(cls, text: str | float | int) -> "VersionConstraint":
        if isinstance(text, (int, float)):
            text = repr(text)
        raw = str(text).strip()
        if not raw:
            raise ValueError("empty version constraint")

        normalized = raw.replace("≥", ">=").replace("≤", "<=")
        if any(op in normalized for op in (">", "<")):
            return cls._parse_range(raw, normalized)

        if normalized.startswith("^"):
            token = normalized[1:].strip()
            parts = _parse_part(token)
            if parts[0] is None:
                raise ValueError(f"caret constraint needs a major version: {raw!r}")
            pre = token.partition("-")[2] or None
            lower = _floor_of(parts, pre)
            upper = SemVer(parts[0] + 1, 0, 0)
            return cls(kind="caret", raw=raw, lower=lower, upper=upper,
                       upper_strict=True, names_prerelease=pre is not None)

        parts = _parse_part(normalized)
        if any(p is None for p in parts) or len(parts) < 3:
            # "1.12.x", "1.x", "*" and also bare "1.12" / "1" act positionally
            pattern = parts + (None,) * (3 - len(parts))
            return cls(kind="wildcard", raw=raw, pattern=pattern)

        version = SemVer.parse(normalized)
        return cls(kind="exact", raw=raw, lower=version, upper=version,
                   names_prerelease=version.prerelease is not None)

    @classmethod
    def _parse_range(cls, raw: str, normalized: str) -> "VersionConstraint":
        cleaned = re.sub(r"\band\b|,", " ", normalized)
        bounds = _BOUND_RE.findall(cleaned)
        if not bounds:
            raise ValueError(f"unparsable range constraint: {raw!r}")
        lower = upper = None
        lower_strict = upper_strict = False
        names_pre = False
        for op, token in bounds:
            parts = _parse_part(token)
            pre = token.partition("-")[2] or None
            names_pre = names_pre or pre is not None
            v = _floor_of(parts, pre)
            if op in (">", ">="):
                lower, lower_strict = v, op == ">"
            elif op in ("<", "<="):
                # a wildcard upper bound ("<=1.13.x") caps at the last patch
                if op == "<=" and any(p is None for p in parts):
                    nums = list(parts)
                    idx = nums.index(None)
                    if idx == 0:
                        continue  # "<=x" constrains nothing
                    fixed = [p if p is not None else 0 for p in nums[:idx]]
                    fixed[idx - 1] += 1
                    while len(fixed) < 3:
                        fixed.append(0)
                    v, op = SemVer(*fixed[:3]), "<"
                upper, upper_strict = v, op == "<"
            else:  # "=", "=="
                lower = upper = v
        return cls(kind="range", raw=raw, lower=lower, upper=upper,
                   lower_strict=lower_strict, upper_strict=upper_strict,
                   names_prerelease=names_pre)

    def matches(self, version: SemVer) -> bool:
        """True iff version satisfies this constraint. Pure function."""
        if version.prerelease and not self.names_prerelease:
            if self.kind == "exact":
                pass  # exact never matches across prerelease anyway
            else:
                return False

        if self.kind == "exact":
            return version == self.lower

        if self.kind == "wildcard":
            for got, want in zip(version.triple, self.pattern):
                if want is not None and got != want:
                    return False
            return True

        if self.lower is not None:
            if version < self.lower or (self.lower_strict and version == self.lower):
                return False
        if self.upper is not None:
            if version > self.upper or (self.upper_strict and version == self.upper):
                return False
        return True

    def __str__(self) -> str:
        return self.raw


def constraint_matches(constraint: VersionConstraint, version: SemVer) -> bool:
    """Deterministic, side-effect-free constraint check."""
    return constraint.matches(version)
