"""In-process facades over the synthetic world.

These reproduce the interfaces and constraints of the abused services: a
caller-ID directory gated by per-credential rate limits, OTT address-book
sync, social-graph friend endpoints and a caller-ID registration store that
accepts whatever name the registrant supplies.
"""

from __future__ import annotations

import itertools
import json
import math
import threading
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Protocol

from .errors import CorruptFixture, Malformed, NotFound, PoolExhausted, PrivacyHidden, RateLimited
from .numberspace import PhoneNumber, parse_number
from .synthworld import PersonRecord

PHOTO_URL_TEMPLATE = "http://graph.facebook.com/{}/picture?width=320&height=320"


class World(Protocol):
    def person(self, number: PhoneNumber) -> PersonRecord | None: ...

    def person_by_social_id(self, social_id: str) -> PersonRecord | None: ...

    def social_name(self, social_id: str) -> str | None: ...


class VirtualClock:
    """Simulated time in seconds. Only moves when told to."""

    def __init__(self, start: float = 0.0) -> None:
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._now

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("cannot move a clock backwards")
        with self._lock:
            self._now += seconds
            return self._now

    def advance_to(self, t: float) -> float:
        """Move to ``t`` if it is in the future; never rewinds."""
        with self._lock:
            self._now = max(self._now, float(t))
            return self._now


# -- credentials and rate limiting -------------------------------------------


@dataclass(frozen=True)
class RateLimitPolicy:
    max_requests: int = 3000
    window: float = 60.0

    def __post_init__(self) -> None:
        if self.max_requests <= 0 or self.window <= 0:
            raise ValueError("rate limit needs max_requests > 0 and window > 0")

    def window_index(self, t: float) -> int:
        return math.floor(t / self.window)

    def window_start(self, index: int) -> float:
        return index * self.window


@dataclass(frozen=True)
class Credential:
    id: str
    created_at: float


class CredentialPool:
    """Issues registration IDs and keeps the fixed-window budget of each.

    The budget of every credential refills at window boundaries
    ``[k*window, (k+1)*window)``. ``granted`` keeps the per-window grant
    counts so the limit can be audited after a run.
    """

    def __init__(self, limit: int = 1, policy: RateLimitPolicy | None = None) -> None:
        if limit < 1:
            raise ValueError("pool limit must be at least 1")
        self.limit = limit
        self.policy = policy or RateLimitPolicy()
        self.credentials: list[Credential] = []
        self.granted: Counter[tuple[str, int]] = Counter()
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.credentials)

    @property
    def can_acquire(self) -> bool:
        return len(self.credentials) < self.limit

    def acquire_credential(self, now: float = 0.0) -> Credential:
        with self._lock:
            if len(self.credentials) >= self.limit:
                raise PoolExhausted(f"credential pool limit {self.limit} reached")
            cred = Credential(id=f"reg-{len(self.credentials) + 1:04d}", created_at=now)
            self.credentials.append(cred)
            return cred

    def try_consume(self, credential: Credential, now: float) -> bool:
        key = (credential.id, self.policy.window_index(now))
        with self._lock:
            if self.granted[key] >= self.policy.max_requests:
                return False
            self.granted[key] += 1
            return True

    def consume(self, credential: Credential, now: float) -> None:
        if not self.try_consume(credential, now):
            nxt = self.policy.window_start(self.policy.window_index(now) + 1)
            raise RateLimited(credential.id, nxt)

    def remaining(self, credential: Credential, now: float) -> int:
        with self._lock:
            return self.policy.max_requests - self.granted[(credential.id, self.policy.window_index(now))]


# -- caller-ID directory -----------------------------------------------------


@dataclass(frozen=True)
class LookupRecord:
    NAME: str
    NUMBER: str
    COUNTRY: str
    PHOTO_URL: str = ""
    EMAIL: str = ""

    def to_dict(self) -> dict[str, str]:
        # Wire keys as the directory emits them; the e-mail key is lower-case
        # and hyphenated.
        return {
            "NAME": self.NAME,
            "NUMBER": self.NUMBER,
            "COUNTRY": self.COUNTRY,
            "PHOTO_URL": self.PHOTO_URL,
            "e-mail": self.EMAIL,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict) -> LookupRecord:
        return cls(doc["NAME"], doc["NUMBER"], doc["COUNTRY"], doc.get("PHOTO_URL", ""), doc.get("e-mail", ""))


def photo_url(social_id: str) -> str:
    return PHOTO_URL_TEMPLATE.format(social_id)


class CallerIdDirectory:
    """Reverse-lookup service: number in, name card out, one token per request."""

    def __init__(self, world: World, pool: CredentialPool) -> None:
        self.world = world
        self.pool = pool

    def lookup(self, credential: Credential, number: PhoneNumber, now: float) -> LookupRecord:
        self.pool.consume(credential, now)
        return self.answer(number)

    def answer(self, number: PhoneNumber) -> LookupRecord:
        """Project the world's record for an already-admitted request."""
        person = self.world.person(number)
        if person is None:
            raise NotFound(str(number))
        return LookupRecord(
            NAME=person.name,
            NUMBER=str(number),
            COUNTRY=person.country,
            PHOTO_URL=photo_url(person.social_id) if person.social_id else "",
            EMAIL=person.email or "",
        )


class LookupSession:
    """Drives lookups through a credential pool the way a scaled attacker would.

    On a rate-limited credential the session rotates to the next one,
    acquiring fresh credentials while the pool allows. When every credential
    is spent for the current window it either advances the virtual clock to
    the next window (``wait=True``) or raises :class:`RateLimited`.
    """

    def __init__(self, directory: CallerIdDirectory, clock: VirtualClock, wait: bool = True) -> None:
        self.directory = directory
        self.clock = clock
        self.wait = wait
        self._lock = threading.Lock()
        self._current = 0
        self.lookups = 0

    @property
    def pool(self) -> CredentialPool:
        return self.directory.pool

    def _grant(self) -> tuple[Credential, float]:
        pool = self.pool
        with self._lock:
            if not pool.credentials:
                pool.acquire_credential(self.clock.now())
            while True:
                now = self.clock.now()
                n = len(pool.credentials)
                for step in range(n):
                    idx = (self._current + step) % n
                    if pool.try_consume(pool.credentials[idx], now):
                        self._current = idx
                        self.lookups += 1
                        return pool.credentials[idx], now
                if pool.can_acquire:
                    pool.acquire_credential(now)
                    self._current = len(pool.credentials) - 1
                    continue
                nxt = pool.policy.window_start(pool.policy.window_index(now) + 1)
                if not self.wait:
                    raise RateLimited(pool.credentials[self._current].id, nxt)
                self.clock.advance_to(nxt)

    def lookup(self, number: PhoneNumber) -> LookupRecord:
        self._grant()
        return self.directory.answer(number)


# -- OTT address-book sync ---------------------------------------------------


class OttService:
    """Contact discovery: upload an address book, learn who is registered."""

    def __init__(self, world: World) -> None:
        self.world = world

    def sync_address_book(self, numbers: Iterable[PhoneNumber]) -> set[PhoneNumber]:
        present = set()
        for number in set(numbers):
            person = self.world.person(number)
            if person is not None and person.ott_present:
                present.add(number)
        return present


# -- social graph ------------------------------------------------------------


class FriendSource(str, Enum):
    FRIENDLIST = "friendlist"
    PUBLIC_SOURCES = "public_sources"
    NONE = "none"


@dataclass(frozen=True)
class SocialProfile:
    social_id: str
    name: str
    attributes: dict[str, str]


class SocialGraph:
    def __init__(self, world: World) -> None:
        self.world = world

    def _person(self, social_id: str) -> PersonRecord:
        person = self.world.person_by_social_id(social_id)
        if person is None:
            raise NotFound(social_id)
        return person

    def fetch_friends(self, social_id: str, source: FriendSource | str) -> frozenset[str]:
        """Friend ids from the friendlist or from likers/commenters on public posts."""
        source = FriendSource(source)
        person = self._person(social_id)
        if source is FriendSource.FRIENDLIST:
            if person.friendlist_public is None:
                raise PrivacyHidden(social_id)
            return person.friendlist_public
        if source is FriendSource.PUBLIC_SOURCES:
            return person.public_sources_friends
        raise ValueError(f"cannot fetch friends from {source.value!r}")

    def fetch_profile(self, social_id: str) -> SocialProfile:
        person = self._person(social_id)
        return SocialProfile(social_id, person.name, dict(person.attributes))

    def display_name(self, social_id: str) -> str:
        name = self.world.social_name(social_id)
        if name is None:
            raise NotFound(social_id)
        return name


# -- caller-ID registration and call presentation -----------------------------


@dataclass(frozen=True)
class RegistrationEntry:
    number: PhoneNumber
    display_name: str
    linked_social: str | None = None
    registered_at: float = 0.0

    def to_json(self) -> str:
        return json.dumps(
            {
                "number": str(self.number),
                "display_name": self.display_name,
                "linked_social": self.linked_social,
                "registered_at": self.registered_at,
            }
        )


@dataclass(frozen=True)
class CallPresentation:
    displayed_number: str
    displayed_name: str | None
    spoofed: bool

    def render(self) -> str:
        text = f"Incoming call {self.displayed_number}"
        if self.displayed_name:
            text += f" [{self.displayed_name}]"
        if self.spoofed:
            text += " SPOOFED"
        return text


class CallerIdRegistry:
    """Self-declared caller profiles: only the number format is checked.

    Re-registering a number replaces the previous entry.
    """

    def __init__(self, world: World | None = None, clock: VirtualClock | None = None) -> None:
        self.world = world
        self.clock = clock if clock is not None else VirtualClock()
        self._entries: dict[PhoneNumber, RegistrationEntry] = {}
        self._order = itertools.count()
        self._seq: dict[PhoneNumber, int] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, number: PhoneNumber) -> bool:
        return number in self._entries

    def entries(self) -> list[RegistrationEntry]:
        """Live entries, oldest registration first."""
        with self._lock:
            return [self._entries[n] for n in sorted(self._entries, key=self._seq.__getitem__)]

    def get(self, number: PhoneNumber) -> RegistrationEntry | None:
        return self._entries.get(number)

    def register_caller_profile(
        self,
        number: PhoneNumber | str,
        display_name: str,
        linked_social: str | None = None,
    ) -> RegistrationEntry:
        if isinstance(number, str):
            number = parse_number(number)
        entry = RegistrationEntry(number, display_name, linked_social, self.clock.now())
        with self._lock:
            self._entries[number] = entry
            self._seq[number] = next(self._order)
        return entry

    def present_call(
        self, true_source: PhoneNumber, claimed_source: PhoneNumber | None = None
    ) -> CallPresentation:
        shown = claimed_source if claimed_source is not None else true_source
        name = None
        entry = self._entries.get(shown)
        if entry is not None:
            name = entry.display_name
        elif self.world is not None:
            person = self.world.person(shown)
            if person is not None:
                name = person.name
        return CallPresentation(
            displayed_number=str(shown),
            displayed_name=name,
            spoofed=claimed_source is not None and claimed_source != true_source,
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(e.to_json() + "\n" for e in self.entries()), encoding="utf-8")

    def load(self, path: str | Path) -> None:
        """Replay entries from a registry file in order."""
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                number = parse_number(doc["number"])
                entry = RegistrationEntry(
                    number, str(doc["display_name"]), doc.get("linked_social"), float(doc.get("registered_at", 0.0))
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError, Malformed) as exc:
                raise CorruptFixture(f"bad registry entry: {exc}", lineno) from None
            with self._lock:
                self._entries[number] = entry
                self._seq[number] = next(self._order)


@dataclass
class ServiceClients:
    """Bundle of the services a pipeline run talks to."""

    directory: CallerIdDirectory
    session: LookupSession
    ott: OttService
    social: SocialGraph
    clock: VirtualClock

    @classmethod
    def over(
        cls,
        world: World,
        pool: CredentialPool | None = None,
        clock: VirtualClock | None = None,
        wait: bool = True,
    ) -> ServiceClients:
        clock = clock if clock is not None else VirtualClock()
        directory = CallerIdDirectory(world, pool if pool is not None else CredentialPool())
        return cls(directory, LookupSession(directory, clock, wait), OttService(world), SocialGraph(world), clock)
