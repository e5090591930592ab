"""Phone-number pools: parsing, sequential ranges and vanity patterns."""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import Malformed, RangeExhausted

DEFAULT_COUNTRY_CODE = 91
NATIONAL_DIGITS = 10
NATIONAL_MAX = 10**NATIONAL_DIGITS - 1
# Indian mobile plan: first national digit must be one of these.
MOBILE_LEADING_DIGITS = frozenset("6789")

_SEPARATORS = re.compile(r"[\s\-]+")


@dataclass(frozen=True, order=True)
class PhoneNumber:
    country_code: int
    national_number: str

    def __post_init__(self) -> None:
        if not (1 <= self.country_code <= 999):
            raise Malformed(f"country code out of range: {self.country_code}")
        if len(self.national_number) != NATIONAL_DIGITS or not self.national_number.isdigit():
            raise Malformed(f"national number must be {NATIONAL_DIGITS} digits: {self.national_number!r}")

    def __str__(self) -> str:
        return f"+{self.country_code}{self.national_number}"

    @property
    def canonical(self) -> str:
        return str(self)

    @property
    def as_int(self) -> int:
        return int(self.national_number)

    @property
    def is_mobile(self) -> bool:
        return self.national_number[0] in MOBILE_LEADING_DIGITS

    @classmethod
    def from_int(cls, value: int, country_code: int = DEFAULT_COUNTRY_CODE) -> PhoneNumber:
        if not 0 <= value <= NATIONAL_MAX:
            raise RangeExhausted(f"{value} is outside the {NATIONAL_DIGITS}-digit national space")
        return cls(country_code, f"{value:0{NATIONAL_DIGITS}d}")


def parse_number(text: str, country_code: int = DEFAULT_COUNTRY_CODE) -> PhoneNumber:
    """Normalize user-entered text into a :class:`PhoneNumber`.

    Accepted forms (spaces and hyphens are ignored): ``+<cc><10 digits>``,
    a bare 10-digit national number, or the national number behind a single
    ``0`` trunk prefix.
    """
    raw = _SEPARATORS.sub("", text.strip())
    prefix = f"+{country_code}"
    if raw.startswith("+"):
        if not raw.startswith(prefix):
            raise Malformed(f"expected country prefix {prefix}: {text!r}")
        national = raw[len(prefix):]
    elif len(raw) == NATIONAL_DIGITS + 1 and raw.startswith("0"):
        national = raw[1:]
    else:
        national = raw
    if len(national) != NATIONAL_DIGITS or not national.isdigit():
        raise Malformed(f"not a {NATIONAL_DIGITS}-digit number: {text!r}")
    return PhoneNumber(country_code, national)


@dataclass(frozen=True)
class NumberRange:
    seed: PhoneNumber
    count: int

    def __post_init__(self) -> None:
        if self.count < 0:
            raise ValueError(f"count must be non-negative, got {self.count}")

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[PhoneNumber]:
        start = self.seed.as_int
        if self.count and start + self.count - 1 > NATIONAL_MAX:
            raise RangeExhausted(
                f"{self.count} numbers from {self.seed} overflow the {NATIONAL_DIGITS}-digit space"
            )
        cc = self.seed.country_code
        for value in range(start, start + self.count):
            yield PhoneNumber(cc, f"{value:0{NATIONAL_DIGITS}d}")


def enumerate_from_seed(number_range: NumberRange) -> list[PhoneNumber]:
    """Return ``count`` consecutive numbers starting at the range seed."""
    return list(number_range)


@dataclass(frozen=True)
class VanityPattern:
    """Ten positions over ``0-9`` and the wildcard ``x``."""

    template: str

    def __post_init__(self) -> None:
        if len(self.template) != NATIONAL_DIGITS or any(c not in "0123456789x" for c in self.template):
            raise Malformed(f"vanity pattern must be {NATIONAL_DIGITS} chars over 0-9/x: {self.template!r}")

    @classmethod
    def parse(cls, text: str) -> VanityPattern:
        return cls(_SEPARATORS.sub("", text.strip()).lower())

    @property
    def wildcards(self) -> int:
        return self.template.count("x")

    def matches(self, number: PhoneNumber) -> bool:
        return all(p == "x" or p == d for p, d in zip(self.template, number.national_number))

    def __str__(self) -> str:
        return self.template


def expand_vanity_pattern(
    pattern: VanityPattern | str,
    mobile_only: bool = False,
    limit: int | None = None,
    country_code: int = DEFAULT_COUNTRY_CODE,
) -> list[PhoneNumber]:
    """All numbers matching ``pattern`` in lexicographic order.

    With ``mobile_only`` the candidates whose first digit is outside 6-9 are
    dropped; ``limit`` truncates the (filtered) result.
    """
    if isinstance(pattern, str):
        pattern = VanityPattern.parse(pattern)
    if limit is not None and limit < 0:
        raise ValueError("limit must be non-negative")
    template = pattern.template
    slots = [i for i, c in enumerate(template) if c == "x"]
    # product() yields assignments in lexicographic order since slots are ascending.
    fmt = template.replace("x", "{}")
    out: list[PhoneNumber] = []
    for digits in itertools.product("0123456789", repeat=len(slots)):
        national = fmt.format(*digits)
        if mobile_only and national[0] not in MOBILE_LEADING_DIGITS:
            continue
        if limit is not None and len(out) >= limit:
            break
        out.append(PhoneNumber(country_code, national))
    return out


def matches_any(number: PhoneNumber, patterns: Iterable[VanityPattern]) -> bool:
    return any(p.matches(number) for p in patterns)


def _content_lines(path: Path) -> Iterator[tuple[int, str]]:
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def load_patterns(path: str | Path) -> list[VanityPattern]:
    """Read a pattern file: one pattern per line, ``#`` starts a comment."""
    patterns = []
    for lineno, line in _content_lines(Path(path)):
        try:
            patterns.append(VanityPattern.parse(line))
        except Malformed as exc:
            raise Malformed(f"{path}:{lineno}: {exc}") from None
    return patterns


def read_numbers(path: str | Path, country_code: int = DEFAULT_COUNTRY_CODE) -> list[PhoneNumber]:
    numbers = []
    for lineno, line in _content_lines(Path(path)):
        try:
            numbers.append(parse_number(line, country_code))
        except Malformed as exc:
            raise Malformed(f"{path}:{lineno}: {exc}") from None
    return numbers


def write_numbers(path: str | Path, numbers: Iterable[PhoneNumber]) -> int:
    lines = [str(n) for n in numbers]
    Path(path).write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return len(lines)


def default_patterns() -> list[VanityPattern]:
    return load_patterns(Path(__file__).parent / "data" / "vanity_patterns.txt")
