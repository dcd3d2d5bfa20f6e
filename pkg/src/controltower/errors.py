"""Service errors with stable machine-readable codes.

Every error a service operation can raise carries a ``code`` string that
travels verbatim over the API as ``ApiError.code``. The HTTP status for each
code lives in the server's code table, not here; services stay transport
agnostic.
"""

from __future__ import annotations


class ServiceError(Exception):
    code = "Internal"

    def __init__(self, message: str, *, details: object | None = None):
        super().__init__(message)
        self.message = message
        self.details = details


# -- validation / parse class (HTTP 400) --------------------------------------

class ValidationFailed(ServiceError):
    code = "ValidationFailed"


class EmptySpec(ServiceError):
    code = "EmptySpec"


class UnknownKey(ServiceError):
    code = "UnknownKey"


class MalformedPair(ServiceError):
    code = "MalformedPair"


class UnknownUnit(ServiceError):
    code = "UnknownUnit"


class NegativeValue(ServiceError):
    code = "NegativeValue"


class DuplicateKey(ServiceError):
    code = "DuplicateKey"


class ArithmeticOverflow(ServiceError):
    code = "ArithmeticOverflow"


class YamlSyntax(ServiceError):
    code = "YamlSyntax"


class MissingField(ServiceError):
    code = "MissingField"


class UnknownField(ServiceError):
    code = "UnknownField"


class MissingRequiredParameter(ServiceError):
    code = "MissingRequiredParameter"


class UnknownParameter(ServiceError):
    code = "UnknownParameter"


class ResultInvalid(ServiceError):
    code = "ResultInvalid"


class NonFiniteMetric(ServiceError):
    code = "NonFiniteMetric"


class ResourceSpecUnsupported(ServiceError):
    code = "ResourceSpecUnsupported"


class BadRequest(ServiceError):
    code = "BadRequest"


# -- auth (HTTP 401) -----------------------------------------------------------

class Unauthenticated(ServiceError):
    code = "Unauthenticated"


# -- missing entities (HTTP 404) -----------------------------------------------

class NotFound(ServiceError):
    code = "NotFound"


class EnvironmentNotFound(ServiceError):
    code = "EnvironmentNotFound"


class UnknownHandle(ServiceError):
    code = "UnknownHandle"


# -- state conflicts (HTTP 409) --------------------------------------------------

class Conflict(ServiceError):
    code = "Conflict"


class IllegalTransition(ServiceError):
    code = "IllegalTransition"


class AlreadyTerminal(ServiceError):
    code = "AlreadyTerminal"


class InUse(ServiceError):
    code = "InUse"


class Refused(ServiceError):
    code = "Refused"


class DuplicateNodeId(ServiceError):
    code = "DuplicateNodeId"


# -- infrastructure (HTTP 500) ---------------------------------------------------

class BackendUnavailable(ServiceError):
    code = "BackendUnavailable"


class SpawnFailure(ServiceError):
    code = "SpawnFailure"


class StoreCorrupt(ServiceError):
    code = "StoreCorrupt"
