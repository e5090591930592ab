from __future__ import annotations

import pytest

from numfunnel.numberspace import parse_number
from numfunnel.serviceclients import CredentialPool, ServiceClients
from numfunnel.synthworld import FixtureWorld, PersonRecord


def person(number: str, name: str = "Asha Rao", **kw) -> PersonRecord:
    kw.setdefault("country", "India")
    return PersonRecord(number=parse_number(number), name=name, **kw)


@pytest.fixture
def small_world() -> FixtureWorld:
    """Hand-built world: one person per interesting shape."""
    return FixtureWorld(
        [
            person(
                "+919810000001",
                "Asha Rao",
                email="asha.rao@mail.example",
                social_id="1001",
                friendlist_public=frozenset({"2001", "2002", "2003"}),
                public_sources_friends=frozenset({"2001", "2002", "9009"}),
                ott_present=True,
                attributes={"employer": "Acme Infotech", "hometown": "Pune"},
            ),
            person(
                "+919810000002",
                "Bala Iyer",
                social_id="1002",
                friendlist_public=None,
                public_sources_friends=frozenset({"2004", "2005"}),
            ),
            person("+919810000003", "Chitra Das", ott_present=True),
            person(
                "+919810000004",
                "Dev Nair",
                social_id="1004",
                friendlist_public=None,
                public_sources_friends=frozenset(),
            ),
            person("+919999955555", "Esha Kapoor", is_vanity=True, email=" "),
        ]
    )


@pytest.fixture
def clients(small_world) -> ServiceClients:
    return ServiceClients.over(small_world, CredentialPool(limit=2))
