"""Cross-service aggregation of everything learnable about one number."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import EmptySourceSet, NotFound, PrivacyHidden
from .numberspace import PhoneNumber, VanityPattern
from .serviceclients import FriendSource, ServiceClients, SocialGraph

_PHOTO_URL = re.compile(r"^https?://graph\.facebook\.com/([^/?#]+)/picture(?:[?#].*)?$")


def extract_social_id(photo_url: str) -> str | None:
    """Social id embedded in a profile-picture URL, if the URL has that shape."""
    m = _PHOTO_URL.match(photo_url.strip())
    return m.group(1) if m else None


@dataclass(frozen=True)
class FriendResolution:
    source: FriendSource = FriendSource.NONE
    friends: frozenset[str] = frozenset()
    names: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.source is FriendSource.NONE and self.friends:
            raise ValueError("an unresolved friend set must be empty")


def resolve_friends(social: SocialGraph, social_id: str, with_names: bool = True) -> FriendResolution:
    """Prefer the public friendlist, fall back to likers/commenters."""
    try:
        try:
            friends = social.fetch_friends(social_id, FriendSource.FRIENDLIST)
            source = FriendSource.FRIENDLIST
        except PrivacyHidden:
            friends = frozenset()
        if not friends:
            friends = social.fetch_friends(social_id, FriendSource.PUBLIC_SOURCES)
            source = FriendSource.PUBLIC_SOURCES
    except NotFound:
        return FriendResolution()
    if not friends:
        return FriendResolution()
    names = {fid: social.display_name(fid) for fid in sorted(friends)} if with_names else {}
    return FriendResolution(source, frozenset(friends), names)


class Bucket(str, Enum):
    GT95 = "gt95"
    B90_95 = "90to95"
    B85_90 = "85to90"
    LT85 = "lt85"


@dataclass(frozen=True)
class OverlapResult:
    match_rate: float
    bucket: Bucket
    intersection_size: int
    public_sources_size: int
    friendlist_size: int


def bucket_for(intersection: int, total: int) -> Bucket:
    """Bucket for the ratio ``intersection/total``; upper edges are inclusive.

    Integer arithmetic keeps exact boundaries such as 19/20 = 95% in the
    lower bucket.
    """
    scaled = 100 * intersection
    if scaled > 95 * total:
        return Bucket.GT95
    if scaled > 90 * total:
        return Bucket.B90_95
    if scaled > 85 * total:
        return Bucket.B85_90
    return Bucket.LT85


def overlap_analysis(public_sources: Iterable[str], friendlist: Iterable[str]) -> OverlapResult:
    """How much of the public-sources set falls inside the friendlist."""
    a, b = frozenset(public_sources), frozenset(friendlist)
    if not a:
        raise EmptySourceSet("match rate is undefined for an empty public-sources set")
    inter = len(a & b)
    return OverlapResult(
        match_rate=100.0 * inter / len(a),
        bucket=bucket_for(inter, len(a)),
        intersection_size=inter,
        public_sources_size=len(a),
        friendlist_size=len(b),
    )


@dataclass(frozen=True)
class VictimDossier:
    number: PhoneNumber
    name: str | None = None
    country: str | None = None
    email: str | None = None
    social_id: str | None = None
    friends: FriendResolution = FriendResolution()
    attributes: Mapping[str, str] = field(default_factory=dict)
    is_vanity: bool = False
    channels_checked: Mapping[str, bool] = field(default_factory=dict)

    @property
    def found(self) -> bool:
        return self.name is not None

    def to_dict(self, hash_ids: bool = False) -> dict:
        number, social_id = str(self.number), self.social_id
        if hash_ids:
            number = _sha256(number)
            social_id = _sha256(social_id) if social_id else None
        return {
            "number": number,
            "name": self.name,
            "country": self.country,
            "email": self.email,
            "social_id": social_id,
            "friends": {"source": self.friends.source.value, "count": len(self.friends.friends)},
            "attributes": dict(sorted(self.attributes.items())),
            "is_vanity": self.is_vanity,
            "channels_checked": dict(sorted(self.channels_checked.items())),
        }

    def to_json(self, hash_ids: bool = False) -> str:
        return json.dumps(self.to_dict(hash_ids), ensure_ascii=False, separators=(",", ":"))


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def build_dossier(
    number: PhoneNumber,
    clients: ServiceClients,
    vanity_patterns: Sequence[VanityPattern] = (),
    *,
    check_ott: bool = True,
    with_friend_names: bool = True,
) -> VictimDossier:
    """One lookup, then social graph and OTT presence for whatever it reveals.

    Raises :class:`RateLimited` only when the session is not allowed to wait
    and no credential has budget left.
    """
    is_vanity = any(p.matches(number) for p in vanity_patterns)
    channels: dict[str, bool] = {}
    if check_ott:
        channels["ott"] = number in clients.ott.sync_address_book([number])
    try:
        record = clients.session.lookup(number)
    except NotFound:
        return VictimDossier(number, is_vanity=is_vanity, channels_checked=channels)

    social_id = extract_social_id(record.PHOTO_URL)
    friends = FriendResolution()
    attributes: dict[str, str] = {}
    if social_id is not None:
        friends = resolve_friends(clients.social, social_id, with_friend_names)
        try:
            attributes = clients.social.fetch_profile(social_id).attributes
        except NotFound:
            pass
    return VictimDossier(
        number=number,
        name=record.NAME or None,
        country=record.COUNTRY or None,
        email=record.EMAIL.strip() or None,
        social_id=social_id,
        friends=friends,
        attributes=attributes,
        is_vanity=is_vanity,
        channels_checked=channels,
    )
