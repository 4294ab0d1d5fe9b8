"""Exception types shared across the package."""

from __future__ import annotations

from typing import Iterable


class ExplainLabError(Exception):
    """Base class for every error raised by this package."""


class SchemaError(ExplainLabError):
    """A document or value failed schema validation.

    ``problems`` holds one ``"field.path: message"`` string per violation.
    """

    def __init__(self, problems: Iterable[str]):
        self.problems = tuple(problems)
        super().__init__("; ".join(self.problems) or "schema validation failed")


class StructuralError(ExplainLabError):
    """A course structure is not a valid tree."""


class PreconditionError(ExplainLabError):
    """An operation was called with inputs that violate its preconditions."""


class DimensionError(PreconditionError):
    """Overlap diagrams support only two or three sets."""


class ComponentBuildError(ExplainLabError):
    """Building one explanation component failed; names the failing kind."""

    def __init__(self, kind: str, cause: Exception):
        self.kind = kind
        super().__init__(f"building component '{kind}' failed: {cause}")
        self.__cause__ = cause


class ConfigurationError(ExplainLabError):
    """Invalid experiment or chatbot configuration."""


class ComponentNotVisibleError(ConfigurationError):
    """The requested component is hidden under the active condition."""


class UnassignedError(ExplainLabError):
    """The participant has no active condition assignment."""


class MembershipError(ExplainLabError):
    """The actor is not a participant of the targeted session."""


class NotFoundError(ExplainLabError):
    """A required document does not exist."""


class ReferentialError(ExplainLabError):
    """An identifier does not resolve against the store."""


class UsageError(ExplainLabError):
    """The caller used an interface incorrectly (e.g. unknown collection)."""


class FormatError(ExplainLabError):
    """A file could not be parsed as the canonical bundle format."""


class AppendOnlyError(ExplainLabError):
    """The event log only supports appends; updates and deletes are refused."""


class ProviderError(ExplainLabError):
    """An LLM provider call failed."""

    def __init__(
        self,
        message: str,
        *,
        status: int | None = None,
        retriable: bool = False,
        body_excerpt: str = "",
    ):
        super().__init__(message)
        self.status = status
        self.retriable = retriable
        self.body_excerpt = body_excerpt


class MalformedResponseError(ProviderError):
    """The provider answered 2xx but not in the expected completion shape."""

    def __init__(self, message: str, *, body_excerpt: str = ""):
        super().__init__(message, status=None, retriable=False, body_excerpt=body_excerpt)


class StartupError(ExplainLabError):
    """The service could not start (bad config, occupied port, ...)."""
