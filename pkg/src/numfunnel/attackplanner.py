"""Channel selection, attack classification and vector rendering."""

from __future__ import annotations

import configparser
import hashlib
import string
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping

from .correlator import VictimDossier
from .errors import MissingField, TemplateError, UnknownTemplate
from .serviceclients import CallerIdRegistry, FriendSource


class Channel(str, Enum):
    OTT = "ott"
    VOICE = "voice"
    SMS = "sms"
    EMAIL = "email"


# Preferred phishing channel when several are reachable.
CHANNEL_PRIORITY = (Channel.OTT, Channel.EMAIL, Channel.SMS, Channel.VOICE)


class BaseClass(str, Enum):
    SOCIAL = "social"
    SPEAR = "spear"
    NONTARGETED = "nontargeted"


@dataclass(frozen=True)
class AttackClass:
    base: BaseClass
    whaling: bool = False

    @property
    def label(self) -> str:
        return f"whaling.{self.base.value}" if self.whaling else self.base.value


def reachable_channels(dossier: VictimDossier, ott_present: bool) -> frozenset[Channel]:
    channels = set()
    if dossier.found:
        # voice and SMS need no presence check
        channels.update((Channel.VOICE, Channel.SMS))
    if ott_present:
        channels.add(Channel.OTT)
    if dossier.email:
        channels.add(Channel.EMAIL)
    return frozenset(channels)


def primary_channel(channels: Iterable[Channel]) -> Channel | None:
    channels = set(channels)
    return next((c for c in CHANNEL_PRIORITY if c in channels), None)


def classify_attack(dossier: VictimDossier) -> AttackClass:
    if dossier.friends.source is not FriendSource.NONE:
        base = BaseClass.SOCIAL
    elif dossier.name:
        base = BaseClass.SPEAR
    else:
        base = BaseClass.NONTARGETED
    return AttackClass(base, whaling=dossier.is_vanity)


# -- templates ---------------------------------------------------------------

PLACEHOLDERS = frozenset({"victim_name", "friend_name", "link"})
_REQUIRED = {
    BaseClass.SOCIAL: frozenset({"victim_name", "friend_name"}),
    BaseClass.SPEAR: frozenset({"victim_name"}),
    BaseClass.NONTARGETED: frozenset(),
}
_FORBIDDEN = {
    BaseClass.SOCIAL: frozenset(),
    BaseClass.SPEAR: frozenset({"friend_name"}),
    BaseClass.NONTARGETED: frozenset({"victim_name", "friend_name"}),
}
DEFAULT_LINK_BASE = "https://sim.example.invalid/r"
_DEFAULT_TEMPLATES = Path(__file__).parent / "data" / "templates.ini"


def placeholders_in(text: str) -> frozenset[str]:
    return frozenset(name for _, name, _, _ in string.Formatter().parse(text) if name is not None)


@dataclass(frozen=True)
class TemplateSet:
    bodies: Mapping[str, str]
    link_base: str = DEFAULT_LINK_BASE

    @classmethod
    def from_mapping(cls, bodies: Mapping[str, str], link_base: str = DEFAULT_LINK_BASE) -> TemplateSet:
        for key, body in bodies.items():
            _validate(key, body)
        return cls(dict(bodies), link_base)

    @classmethod
    def load(cls, path: str | Path | None = None) -> TemplateSet:
        path = Path(path) if path is not None else _DEFAULT_TEMPLATES
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise TemplateError(f"{path}: {exc}") from None
        bodies = {}
        for section in parser.sections():
            if section == "meta":
                continue
            if "body" not in parser[section]:
                raise TemplateError(f"{path}: section [{section}] has no body")
            bodies[section] = parser[section]["body"]
        link_base = parser.get("meta", "link_base", fallback=DEFAULT_LINK_BASE)
        try:
            return cls.from_mapping(bodies, link_base)
        except TemplateError as exc:
            raise TemplateError(f"{path}: {exc}") from None

    def body_for(self, attack_class: AttackClass, channel: Channel) -> str:
        key = f"{attack_class.base.value}.{channel.value}"
        if attack_class.whaling and f"whaling.{key}" in self.bodies:
            return self.bodies[f"whaling.{key}"]
        try:
            return self.bodies[key]
        except KeyError:
            raise UnknownTemplate(key) from None


def _validate(key: str, body: str) -> None:
    parts = key.split(".")
    if parts[0] == "whaling":
        parts = parts[1:]
    try:
        base = BaseClass(parts[0])
        Channel(parts[1])
    except (ValueError, IndexError):
        raise TemplateError(f"section [{key}] is not <class>.<channel>") from None
    if len(parts) != 2:
        raise TemplateError(f"section [{key}] is not <class>.<channel>")
    try:
        used = placeholders_in(body)
    except ValueError as exc:
        raise TemplateError(f"[{key}] {exc}") from None
    unknown = used - PLACEHOLDERS
    if unknown:
        raise TemplateError(f"[{key}] unknown placeholder(s) {sorted(unknown)}")
    if used & _FORBIDDEN[base]:
        raise TemplateError(f"[{key}] {base.value} body may not use {sorted(used & _FORBIDDEN[base])}")
    if not _REQUIRED[base] <= used:
        raise TemplateError(f"[{key}] {base.value} body must use {sorted(_REQUIRED[base])}")


@dataclass(frozen=True)
class AttackVector:
    channel: Channel
    attack_class: AttackClass
    payload: str
    placeholders_used: frozenset[str]
    friend_id: str | None = None


def _link(link_base: str, dossier: VictimDossier) -> str:
    token = hashlib.sha256(str(dossier.number).encode()).hexdigest()[:12]
    return f"{link_base.rstrip('/')}/{token}"


def craft_vector(
    dossier: VictimDossier,
    attack_class: AttackClass,
    channel: Channel,
    templates: TemplateSet,
) -> AttackVector:
    """Fill the (class, channel) template from the dossier.

    The friend used for social vectors is the lexicographically smallest
    resolved friend id.
    """
    base = attack_class.base
    if attack_class.whaling and not dossier.is_vanity:
        raise MissingField("whaling requires a vanity number")
    if base in (BaseClass.SOCIAL, BaseClass.SPEAR) and not dossier.name:
        raise MissingField(f"{base.value} vector requires the victim name")
    friend_id = friend_name = None
    if base is BaseClass.SOCIAL:
        if dossier.friends.source is FriendSource.NONE or not dossier.friends.friends:
            raise MissingField("social vector requires resolved friends")
        friend_id = min(dossier.friends.friends)
        friend_name = dossier.friends.names.get(friend_id)
        if not friend_name:
            raise MissingField(f"no display name for friend {friend_id}")

    body = templates.body_for(attack_class, channel)
    used = placeholders_in(body)
    values = {"link": _link(templates.link_base, dossier)}
    if base is not BaseClass.NONTARGETED:
        values["victim_name"] = dossier.name
    if base is BaseClass.SOCIAL:
        values["friend_name"] = friend_name
    try:
        payload = body.format(**values)
    except KeyError as exc:
        raise MissingField(f"template needs {exc.args[0]!r}, forbidden for {base.value}") from None
    return AttackVector(channel, attack_class, payload, used, friend_id)


# -- vishing -----------------------------------------------------------------


class VishingStrategy(str, Enum):
    FAKE_REGISTRATION = "fake_registration"
    SPOOF_REGISTERED = "spoof_registered"
    NONTARGETED = "nontargeted"


@dataclass(frozen=True)
class CallerProfile:
    display_name: str
    linked_social: str | None = None
    number: str | None = None


@dataclass(frozen=True)
class VishingPlan:
    strategy: VishingStrategy
    caller_profile: CallerProfile
    script: str
    attributes_used: tuple[str, ...] = field(default=())


_ATTRIBUTE_LINES = {
    "employer": "we are updating salary-account records for staff at {}",
    "work": "your profile lists you as {}",
    "hometown": "the request came through our {} branch",
    "school": "your alumni record from {} is linked to this account",
    "relationship": "the joint-account note says {}",
    "birthday": "for security, please confirm your date of birth ({} on file)",
    "gender": "",
}


def craft_vishing_plan(
    dossier: VictimDossier,
    registry: CallerIdRegistry,
    entity_name: str = "Sample Bank",
) -> VishingPlan:
    """Pick a caller identity and write a call script from what is known.

    A number already registered in the caller-ID registry is spoofed when
    one exists (oldest entry first); otherwise the plan calls for a fresh
    fake registration as ``entity_name``. Victims about whom nothing is
    known get a generic script.
    """
    entries = registry.entries()
    if entries:
        spoof = entries[0]
        profile = CallerProfile(spoof.display_name, spoof.linked_social, str(spoof.number))
        strategy = VishingStrategy.SPOOF_REGISTERED
    else:
        profile = CallerProfile(entity_name)
        strategy = VishingStrategy.FAKE_REGISTRATION

    if not dossier.name and not dossier.attributes:
        script = f"Hello, this is {profile.display_name}. We noticed unusual activity on your account."
        return VishingPlan(VishingStrategy.NONTARGETED, profile, script)

    greeting = f"Hello {dossier.name}" if dossier.name else "Hello"
    lines = [f"{greeting}, this is {profile.display_name}."]
    used = []
    for attr in sorted(dossier.attributes):
        line = _ATTRIBUTE_LINES.get(attr, "")
        if line:
            text = line.format(dossier.attributes[attr])
            lines.append(text[0].upper() + text[1:] + ".")
            used.append(attr)
    lines.append("We need to verify a recent transaction on your account.")
    return VishingPlan(strategy, profile, " ".join(lines), tuple(used))
