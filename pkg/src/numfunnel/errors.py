"""Exception hierarchy shared by every numfunnel module."""

from __future__ import annotations


class NumfunnelError(Exception):
    """Base class for all errors raised by this package."""


class ConfigInvalid(NumfunnelError):
    pass


# numberspace
class Malformed(NumfunnelError, ValueError):
    """Text could not be normalized into a valid phone number or pattern."""


class RangeExhausted(NumfunnelError):
    """A requested range runs past the end of the 10-digit national space."""


# synthworld
class CorruptFixture(NumfunnelError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


# serviceclients
class NotFound(NumfunnelError, LookupError):
    pass


class RateLimited(NumfunnelError):
    def __init__(self, credential_id: str, retry_at: float) -> None:
        self.credential_id = credential_id
        self.retry_at = retry_at
        super().__init__(f"credential {credential_id} rate limited until t={retry_at:g}")


class PoolExhausted(NumfunnelError):
    pass


class PrivacyHidden(NumfunnelError):
    """The requested friendlist is not public."""


# correlator
class EmptySourceSet(NumfunnelError, ValueError):
    pass


# attackplanner
class MissingField(NumfunnelError):
    pass


class UnknownTemplate(NumfunnelError, KeyError):
    pass


class TemplateError(NumfunnelError):
    """A template file failed load-time validation."""


# studykit
class BriefingFailed(NumfunnelError):
    pass


class EmptyCohort(NumfunnelError):
    pass


class MalformedResponse(NumfunnelError):
    def __init__(self, message: str, line: int) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}")
