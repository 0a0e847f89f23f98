"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MedrouteError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MedrouteError):
    """A precondition on caller-supplied data was violated."""


class ConfigurationError(MedrouteError):
    """Deployment configuration is malformed or incomplete."""


class ProtocolError(MedrouteError):
    """A remote peer answered with a payload that violates the wire contract."""


class BackendError(MedrouteError):
    """A model backend failed after the client exhausted its retries."""


class CompletionTimeout(BackendError):
    """A model backend did not answer within the configured timeout."""


class RoutingUnavailableError(MedrouteError):
    """The remote scorer endpoint could not be reached."""


class UpstreamUnavailableError(MedrouteError):
    """Every dispatched specialist failed; the request cannot be answered."""


class SynthesisFailedError(MedrouteError):
    """The orchestrator backend failed; raw specialist contributions survive.

    `contributions` carries the dispatched responses so callers can degrade
    to showing the individual specialist answers.
    """

    def __init__(self, message: str, contributions=()):
        super().__init__(message)
        self.contributions = tuple(contributions)


class MetricUnavailableError(MedrouteError):
    """An embedding provider failed; the metric column must be reported absent."""
