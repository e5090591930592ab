"""Deterministic synthetic population standing in for the real ecosystem.

Every person is a pure function of ``(config.seed, number)``: the caller-ID
directory contents, the social-graph slice and OTT presence are all derived
from SplitMix64 draws keyed on the mixed seed xor the number. Nothing is
stored, so any subset of a billion-number space can be materialized lazily.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from . import mixing
from .errors import ConfigInvalid, CorruptFixture, Malformed
from .numberspace import DEFAULT_COUNTRY_CODE, PhoneNumber, VanityPattern, default_patterns, parse_number

ATTRIBUTES = ("gender", "relationship", "work", "school", "employer", "birthday", "hometown")

# Coverage among the 122,696 users whose social profile was reachable.
PUBLISHED_ATTRIBUTE_RATES = {
    "gender": 112_880 / 122_696,
    "relationship": 57_755 / 122_696,
    "work": 92_352 / 122_696,
    "school": 110_426 / 122_696,
    "employer": 106_746 / 122_696,
    "birthday": 9_728 / 122_696,
    "hometown": 80_979 / 122_696,
}

# (match fraction, share of persons) planted for public-sources vs friendlist.
DEFAULT_MATCH_MIX = ((0.97, 0.68), (0.93, 0.094), (0.88, 0.06), (0.70, 0.166))

# Top byte of a decoded social id says what kind of identity it is.
_PERSON, _FRIEND, _NOISE = 1, 2, 3

_DATA = Path(__file__).parent / "data"


@functools.lru_cache(maxsize=1)
def _population() -> dict:
    return json.loads((_DATA / "population.json").read_text(encoding="utf-8"))


@functools.lru_cache(maxsize=1)
def _default_pattern_texts() -> tuple[str, ...]:
    return tuple(p.template for p in default_patterns())


@dataclass(frozen=True)
class WorldConfig:
    """Population parameters; defaults are the published full-scale ratios."""

    seed: int = 0
    lookup_hit_rate: float = 0.62
    social_link_rate: float = 122_696 / 722_696
    friendlist_public_rate: float = 80_979 / 122_696
    # Conditional on the friendlist being private; chosen so that friendlist or
    # public sources resolves for 114,161 / 122,696 social-linked persons.
    public_sources_rate: float = 33_182 / (122_696 - 80_979)
    ott_presence_rate_social: float = 51_409 / 122_696
    ott_presence_rate_named: float = 180_000 / 600_000
    email_rate: float = 81_389 / 722_696
    attribute_rates: Mapping[str, float] = field(default_factory=lambda: dict(PUBLISHED_ATTRIBUTE_RATES))
    friends_per_person: tuple[int, int] = (40, 250)
    public_sources_size: tuple[int, int] = (40, 120)
    match_mix: tuple[tuple[float, float], ...] = DEFAULT_MATCH_MIX
    friend_pool_size: int = 10_000_000
    country: str = "India"
    country_code: int = DEFAULT_COUNTRY_CODE
    vanity_patterns: tuple[str, ...] = field(default_factory=_default_pattern_texts)

    RATE_FIELDS = (
        "lookup_hit_rate",
        "social_link_rate",
        "friendlist_public_rate",
        "public_sources_rate",
        "ott_presence_rate_social",
        "ott_presence_rate_named",
        "email_rate",
    )

    def __post_init__(self) -> None:
        for name in self.RATE_FIELDS:
            _check_rate(name, getattr(self, name))
        for attr, rate in self.attribute_rates.items():
            if attr not in ATTRIBUTES:
                raise ConfigInvalid(f"unknown attribute {attr!r}")
            _check_rate(f"attribute_rates.{attr}", rate)
        for name in ("friends_per_person", "public_sources_size"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise ConfigInvalid(f"{name} must satisfy 1 <= lo <= hi, got {lo}-{hi}")
        if not self.match_mix:
            raise ConfigInvalid("match_mix must not be empty")
        for fraction, share in self.match_mix:
            _check_rate("match fraction", fraction)
            _check_rate("match share", share)
        if not math.isclose(sum(s for _, s in self.match_mix), 1.0, abs_tol=1e-9):
            raise ConfigInvalid("match_mix shares must sum to 1")
        if self.friend_pool_size < self.friends_per_person[1] or self.friend_pool_size >= 1 << 56:
            raise ConfigInvalid("friend_pool_size must cover friends_per_person and stay below 2**56")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")
        try:
            object.__setattr__(self, "_patterns", tuple(VanityPattern.parse(p) for p in self.vanity_patterns))
        except Malformed as exc:
            raise ConfigInvalid(str(exc)) from None

    @property
    def patterns(self) -> tuple[VanityPattern, ...]:
        return self._patterns  # type: ignore[attr-defined]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["attribute_rates"] = dict(sorted(self.attribute_rates.items()))
        d["friends_per_person"] = list(self.friends_per_person)
        d["public_sources_size"] = list(self.public_sources_size)
        d["match_mix"] = [list(pair) for pair in self.match_mix]
        d["vanity_patterns"] = list(self.vanity_patterns)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _check_rate(name: str, value: float) -> None:
    if not (isinstance(value, (int, float)) and 0.0 <= value <= 1.0):
        raise ConfigInvalid(f"{name} must be a probability in [0, 1], got {value!r}")


def _parse_pair(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition("-")
    return int(lo), int(hi or lo)


def parse_world_config(text: str, overrides: Mapping[str, str] | None = None) -> WorldConfig:
    """Build a config from flat ``key=value`` lines.

    ``attribute_rates.<name>`` sets one attribute rate, ranges are written
    ``lo-hi``, ``match_mix`` is ``fraction:share,...`` and
    ``vanity_patterns_file`` points at a pattern file.
    """
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigInvalid(f"line {lineno}: expected key=value, got {line!r}")
        pairs[key.strip()] = value.strip()
    pairs.update(overrides or {})

    kwargs: dict = {}
    attribute_rates = dict(PUBLISHED_ATTRIBUTE_RATES)
    known = {f.name for f in dataclasses.fields(WorldConfig)}
    try:
        for key, value in pairs.items():
            if key.startswith("attribute_rates."):
                attribute_rates[key.split(".", 1)[1]] = float(value)
            elif key in ("seed", "friend_pool_size", "country_code"):
                kwargs[key] = int(value, 0)
            elif key in WorldConfig.RATE_FIELDS:
                kwargs[key] = float(value)
            elif key in ("friends_per_person", "public_sources_size"):
                kwargs[key] = _parse_pair(value)
            elif key == "match_mix":
                kwargs[key] = tuple(
                    (float(f), float(s)) for f, s in (item.split(":") for item in value.split(","))
                )
            elif key == "country":
                kwargs[key] = value
            elif key == "vanity_patterns_file":
                kwargs["vanity_patterns"] = tuple(
                    p.template for p in _load_patterns_or_fail(value)
                )
            elif key not in known:
                raise ConfigInvalid(f"unknown world config key {key!r}")
            else:
                raise ConfigInvalid(f"key {key!r} cannot be set from a flat config")
    except ValueError as exc:
        raise ConfigInvalid(f"bad value in world config: {exc}") from None
    kwargs["attribute_rates"] = attribute_rates
    return WorldConfig(**kwargs)


def _load_patterns_or_fail(path: str) -> list[VanityPattern]:
    from .numberspace import load_patterns

    try:
        return load_patterns(path)
    except OSError as exc:
        raise ConfigInvalid(f"cannot read pattern file: {exc}") from None
    except Malformed as exc:
        raise ConfigInvalid(str(exc)) from None


def load_world_config(path: str | Path, overrides: Mapping[str, str] | None = None) -> WorldConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read world config: {exc}") from None
    return parse_world_config(text, overrides)


@dataclass(frozen=True)
class PersonRecord:
    number: PhoneNumber
    name: str
    country: str
    email: str | None = None
    social_id: str | None = None
    friendlist_public: frozenset[str] | None = None
    public_sources_friends: frozenset[str] = frozenset()
    ott_present: bool = False
    is_vanity: bool = False
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.social_id is None and (self.friendlist_public or self.public_sources_friends):
            raise ValueError("friend sets require a social_id")
        if not self.name:
            raise ValueError("name must be non-empty")

    def to_json(self) -> str:
        doc = {
            "number": str(self.number),
            "name": self.name,
            "country": self.country,
            "email": self.email,
            "social_id": self.social_id,
            "friendlist_public": None if self.friendlist_public is None else sorted(self.friendlist_public),
            "public_sources_friends": sorted(self.public_sources_friends),
            "ott_present": self.ott_present,
            "is_vanity": self.is_vanity,
            "attributes": dict(sorted(self.attributes.items())),
        }
        return json.dumps(doc, ensure_ascii=False, separators=(",", ":"))


# -- identity encoding -------------------------------------------------------


def _seed_salt(seed: int, tag: str) -> int:
    return mixing.mix64(seed ^ mixing.tag_hash(tag))


def _number_key(number: PhoneNumber) -> int:
    return number.country_code * 10**10 + number.as_int


def person_key(seed: int, number: PhoneNumber) -> int:
    return mixing.mix64(mixing.mix64(seed) ^ _number_key(number))


def _encode_social(seed: int, kind: int, value: int) -> str:
    return str(mixing.mix64(((kind << 56) | value) ^ _seed_salt(seed, "social-id")))


def decode_social_id(seed: int, social_id: str) -> tuple[int, int] | None:
    """Return ``(kind, value)`` for an id minted under ``seed``, else None."""
    if not social_id.isdigit():
        return None
    raw = int(social_id)
    if raw >> 64:
        return None
    payload = mixing.unmix64(raw) ^ _seed_salt(seed, "social-id")
    kind, value = payload >> 56, payload & ((1 << 56) - 1)
    if kind not in (_PERSON, _FRIEND, _NOISE):
        return None
    return kind, value


def synthetic_name(social_id: str) -> str:
    """Stable display name for a social id that has no phone-number owner."""
    pop = _population()
    stream = mixing.SplitMix64(mixing.tag_hash("name:" + social_id))
    return f"{stream.choice(pop['first_names'])} {stream.choice(pop['last_names'])}"


# -- materialization ---------------------------------------------------------


def _bernoulli(key: int, tag: str, rate: float) -> bool:
    return mixing.to_unit(mixing.mix64(key ^ mixing.tag_hash(tag))) < rate


def _distinct(stream: mixing.SplitMix64, count: int, space: int) -> list[int]:
    picked: dict[int, None] = {}
    while len(picked) < count:
        picked[stream.below(space)] = None
    return list(picked)


def _attribute_value(stream: mixing.SplitMix64, attr: str) -> str:
    if attr == "birthday":
        return f"{stream.between(1950, 2004):04d}-{stream.between(1, 12):02d}-{stream.between(1, 28):02d}"
    return stream.choice(_population()["attribute_values"][attr])


def _pick_match_fraction(config: WorldConfig, key: int) -> float:
    u = mixing.to_unit(mixing.mix64(key ^ mixing.tag_hash("match-class")))
    acc = 0.0
    for fraction, share in config.match_mix:
        acc += share
        if u < acc:
            return fraction
    return config.match_mix[-1][0]


def materialize_person(
    config: WorldConfig,
    number: PhoneNumber,
    *,
    match_fraction: float | None = None,
) -> PersonRecord | None:
    """The ground-truth record behind ``number``, or None if unallocated.

    ``match_fraction`` overrides the planted public-sources match class.
    """
    key = person_key(config.seed, number)
    if not _bernoulli(key, "hit", config.lookup_hit_rate):
        return None
    pop = _population()

    names = mixing.substream(key, "name")
    first, last = names.choice(pop["first_names"]), names.choice(pop["last_names"])
    email = None
    if _bernoulli(key, "email", config.email_rate):
        email = f"{first}.{last}{names.between(1, 999)}@{names.choice(pop['email_domains'])}".lower()

    social = _bernoulli(key, "social", config.social_link_rate)
    ott_rate = config.ott_presence_rate_social if social else config.ott_presence_rate_named
    ott_present = _bernoulli(key, "ott", ott_rate)

    social_id = None
    friendlist_public = None
    public_sources: frozenset[str] = frozenset()
    attributes: dict[str, str] = {}
    if social:
        seed = config.seed
        social_id = _encode_social(seed, _PERSON, _number_key(number))
        stream = mixing.substream(key, "friends")
        n_friends = stream.between(*config.friends_per_person)
        friends = sorted(
            _encode_social(seed, _FRIEND, i) for i in _distinct(stream, n_friends, config.friend_pool_size)
        )
        if _bernoulli(key, "friendlist", config.friendlist_public_rate):
            friendlist_public = frozenset(friends)
        if _bernoulli(key, "public-sources", config.public_sources_rate) or match_fraction is not None:
            fraction = match_fraction if match_fraction is not None else _pick_match_fraction(config, key)
            size = min(stream.between(*config.public_sources_size), n_friends)
            inside = math.floor(fraction * size + 0.5)
            # partial Fisher-Yates over the sorted ground-truth list
            pool = list(friends)
            for i in range(inside):
                j = i + stream.below(len(pool) - i)
                pool[i], pool[j] = pool[j], pool[i]
            outsiders = (
                _encode_social(seed, _NOISE, i)
                for i in _distinct(stream, size - inside, config.friend_pool_size)
            )
            public_sources = frozenset(pool[:inside]) | frozenset(outsiders)
        for attr in ATTRIBUTES:
            if _bernoulli(key, "attr:" + attr, config.attribute_rates.get(attr, 0.0)):
                attributes[attr] = _attribute_value(mixing.substream(key, "attr:" + attr), attr)

    return PersonRecord(
        number=number,
        name=f"{first} {last}",
        country=config.country,
        email=email,
        social_id=social_id,
        friendlist_public=friendlist_public,
        public_sources_friends=public_sources,
        ott_present=ott_present,
        is_vanity=any(p.matches(number) for p in config.patterns),
        attributes=attributes,
    )


def largest_remainder(total: int, shares: Iterable[float]) -> list[int]:
    """Split ``total`` into integer quotas proportional to ``shares``."""
    shares = list(shares)
    raw = [total * s for s in shares]
    quotas = [math.floor(r) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (quotas[i] - raw[i], i))
    for i in order[: total - sum(quotas)]:
        quotas[i] += 1
    return quotas


def plant_overlap_world(
    config: WorldConfig, numbers: Iterable[PhoneNumber]
) -> tuple[list[PersonRecord], dict[float, int]]:
    """Persons that all have a public friendlist and public-sources friends.

    Match classes from ``config.match_mix`` are assigned by exact quota rather
    than by sampling, so the planted class counts are known in advance.
    Returns the records and the planted count per match fraction.
    """
    numbers = list(numbers)
    forced = dataclasses.replace(
        config,
        lookup_hit_rate=1.0,
        social_link_rate=1.0,
        friendlist_public_rate=1.0,
        public_sources_rate=1.0,
    )
    quotas = largest_remainder(len(numbers), (s for _, s in config.match_mix))
    classes = [f for (f, _), q in zip(config.match_mix, quotas) for _ in range(q)]
    stream = mixing.substream(mixing.mix64(config.seed), "plant-order")
    for i in range(len(classes) - 1, 0, -1):
        j = stream.below(i + 1)
        classes[i], classes[j] = classes[j], classes[i]
    records = [materialize_person(forced, n, match_fraction=f) for n, f in zip(numbers, classes)]
    planted: dict[float, int] = {}
    for f, q in zip((f for f, _ in config.match_mix), quotas):
        planted[f] = planted.get(f, 0) + q
    return records, planted  # type: ignore[return-value]


# -- worlds ------------------------------------------------------------------


class ProceduralWorld:
    """Lazily materialized world; nothing is kept except a bounded cache."""

    def __init__(self, config: WorldConfig, cache_size: int = 8192) -> None:
        self.config = config
        self._person = functools.lru_cache(maxsize=cache_size)(
            functools.partial(materialize_person, config)
        )

    def person(self, number: PhoneNumber) -> PersonRecord | None:
        return self._person(number)

    def person_by_social_id(self, social_id: str) -> PersonRecord | None:
        decoded = decode_social_id(self.config.seed, social_id)
        if decoded is None or decoded[0] != _PERSON:
            return None
        cc, national = divmod(decoded[1], 10**10)
        try:
            number = PhoneNumber(cc, f"{national:010d}")
        except Malformed:
            return None
        person = self.person(number)
        if person is None or person.social_id != social_id:
            return None
        return person

    def social_name(self, social_id: str) -> str | None:
        person = self.person_by_social_id(social_id)
        if person is not None:
            return person.name
        decoded = decode_social_id(self.config.seed, social_id)
        if decoded is None or decoded[0] == _PERSON:
            return None
        return synthetic_name(social_id)


class FixtureWorld:
    """World backed by an explicit set of records (fixtures, hand-built tests)."""

    def __init__(self, records: Iterable[PersonRecord]) -> None:
        self._by_number: dict[PhoneNumber, PersonRecord] = {}
        self._by_social: dict[str, PersonRecord] = {}
        self._known_ids: set[str] = set()
        for record in records:
            self._by_number[record.number] = record
            if record.social_id is not None:
                self._by_social[record.social_id] = record
                self._known_ids.update(record.friendlist_public or ())
                self._known_ids.update(record.public_sources_friends)

    def __len__(self) -> int:
        return len(self._by_number)

    def records(self) -> list[PersonRecord]:
        return [self._by_number[n] for n in sorted(self._by_number)]

    def person(self, number: PhoneNumber) -> PersonRecord | None:
        return self._by_number.get(number)

    def person_by_social_id(self, social_id: str) -> PersonRecord | None:
        return self._by_social.get(social_id)

    def social_name(self, social_id: str) -> str | None:
        person = self._by_social.get(social_id)
        if person is not None:
            return person.name
        return synthetic_name(social_id) if social_id in self._known_ids else None


# -- fixtures ----------------------------------------------------------------

_FIELDS = [f.name for f in dataclasses.fields(PersonRecord)]


def materialize_all(config: WorldConfig, numbers: Iterable[PhoneNumber]) -> list[PersonRecord]:
    return [p for p in (materialize_person(config, n) for n in numbers) if p is not None]


def write_fixture(path: str | Path, records: Iterable[PersonRecord]) -> int:
    lines = [r.to_json() for r in records]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return len(lines)


def snapshot_world(config: WorldConfig, numbers: Iterable[PhoneNumber], path: str | Path) -> int:
    """Materialize ``numbers`` and write the present records as JSON lines."""
    return write_fixture(path, materialize_all(config, numbers))


def _id_set(value, name: str, lineno: int) -> frozenset[str]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise CorruptFixture(f"{name} must be a list of ids", lineno)
    return frozenset(value)


def _record_from_doc(doc, lineno: int) -> PersonRecord:
    if not isinstance(doc, dict):
        raise CorruptFixture("record is not a JSON object", lineno)
    if sorted(doc) != sorted(_FIELDS):
        raise CorruptFixture(f"fields must be exactly {_FIELDS}", lineno)
    try:
        number = parse_number(doc["number"]) if isinstance(doc["number"], str) else None
    except Malformed as exc:
        raise CorruptFixture(str(exc), lineno) from None
    if number is None or str(number) != doc["number"]:
        raise CorruptFixture("number must be canonical text", lineno)
    for name in ("name", "country"):
        if not isinstance(doc[name], str) or not doc[name]:
            raise CorruptFixture(f"{name} must be a non-empty string", lineno)
    for name in ("email", "social_id"):
        if doc[name] is not None and not isinstance(doc[name], str):
            raise CorruptFixture(f"{name} must be a string or null", lineno)
    for name in ("ott_present", "is_vanity"):
        if not isinstance(doc[name], bool):
            raise CorruptFixture(f"{name} must be a boolean", lineno)
    attrs = doc["attributes"]
    if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
        raise CorruptFixture("attributes must map names to strings", lineno)
    friendlist = None if doc["friendlist_public"] is None else _id_set(doc["friendlist_public"], "friendlist_public", lineno)
    public_sources = _id_set(doc["public_sources_friends"], "public_sources_friends", lineno)
    if doc["social_id"] is None and (friendlist or public_sources):
        raise CorruptFixture("friend sets present without a social_id", lineno)
    return PersonRecord(
        number=number,
        name=doc["name"],
        country=doc["country"],
        email=doc["email"],
        social_id=doc["social_id"],
        friendlist_public=friendlist,
        public_sources_friends=public_sources,
        ott_present=doc["ott_present"],
        is_vanity=doc["is_vanity"],
        attributes=attrs,
    )


def load_world(path: str | Path) -> list[PersonRecord]:
    """Read a fixture written by :func:`snapshot_world`, validating every line."""
    records = []
    seen: set[PhoneNumber] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorruptFixture(f"invalid JSON: {exc.msg}", lineno) from None
        record = _record_from_doc(doc, lineno)
        if record.number in seen:
            raise CorruptFixture(f"duplicate record for {record.number}", lineno)
        seen.add(record.number)
        records.append(record)
    return records
