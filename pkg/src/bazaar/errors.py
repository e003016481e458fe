"""Domain error hierarchy with stable machine-readable codes.

Every error carries a ``code`` string that is kept stable across releases:
the CLI prints it, HTTP layers embed it in JSON bodies, and tests assert
on it.
"""


class BazaarError(Exception):
    """Base class for all domain errors."""

    code = "ERROR"
    http_status = 400

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code

    def to_json(self) -> dict:
        return {"error": self.code, "message": self.message}


# --- control plane ---------------------------------------------------------

class NotFound(BazaarError):
    code = "NOT_FOUND"
    http_status = 404


class ContextConflict(BazaarError):
    code = "CONTEXT_CONFLICT"
    http_status = 409


class InvalidDescriptor(BazaarError):
    code = "INVALID_DESCRIPTOR"


class IllegalTransition(BazaarError):
    code = "ILLEGAL_TRANSITION"
    http_status = 409


class InvalidPlan(BazaarError):
    code = "INVALID_PLAN"


class InvalidName(BazaarError):
    code = "INVALID_NAME"


class NotPublished(BazaarError):
    code = "NOT_PUBLISHED"
    http_status = 409


class AlreadySubscribed(BazaarError):
    code = "ALREADY_SUBSCRIBED"
    http_status = 409


class AlreadyRevoked(BazaarError):
    code = "ALREADY_REVOKED"
    http_status = 409


# --- token service ---------------------------------------------------------

class BadCredentials(BazaarError):
    code = "BAD_CREDENTIALS"
    http_status = 401


class ScopeNotGranted(BazaarError):
    code = "SCOPE_NOT_GRANTED"
    http_status = 403


class TtlTooLong(BazaarError):
    code = "TTL_TOO_LONG"


class Malformed(BazaarError):
    code = "MALFORMED"
    http_status = 401


class BadSignature(BazaarError):
    code = "BAD_SIGNATURE"
    http_status = 401


class Expired(BazaarError):
    code = "EXPIRED"
    http_status = 401


class AudienceMismatch(BazaarError):
    code = "AUDIENCE_MISMATCH"
    http_status = 401


class UnknownKey(BazaarError):
    code = "UNKNOWN_KEY"
    http_status = 401


# --- gateway ---------------------------------------------------------------

class StorageFull(BazaarError):
    code = "STORAGE_FULL"
    http_status = 503


# --- ric-sim ---------------------------------------------------------------

class UnknownType(BazaarError):
    code = "UNKNOWN_TYPE"
    http_status = 404


class SchemaViolation(BazaarError):
    code = "SCHEMA_VIOLATION"


class InvalidDefinition(BazaarError):
    code = "INVALID_DEFINITION"


# --- deploy agent ----------------------------------------------------------

class SourceNotFound(BazaarError):
    code = "SOURCE_NOT_FOUND"
    http_status = 404


class UnknownEnvironment(BazaarError):
    code = "UNKNOWN_ENVIRONMENT"
    http_status = 404


class LaunchFailed(BazaarError):
    code = "LAUNCH_FAILED"
    http_status = 500


# --- dt example ------------------------------------------------------------

class InvalidConfig(BazaarError):
    code = "INVALID_CONFIG"


class EmptyInput(BazaarError):
    code = "EMPTY_INPUT"


class ShapeMismatch(BazaarError):
    code = "SHAPE_MISMATCH"


class AuthFailed(BazaarError):
    code = "AUTH_FAILED"
    http_status = 401


class GatewayDenied(BazaarError):
    code = "GATEWAY_DENIED"
    http_status = 403


class DeliveryTimeout(BazaarError):
    code = "DELIVERY_TIMEOUT"
    http_status = 504


# --- reconciliation --------------------------------------------------------

class EmptyBatch(BazaarError):
    code = "EMPTY_BATCH"


class PlanMismatch(BazaarError):
    code = "PLAN_MISMATCH"


def from_code(code: str, message: str = "", http_status: int | None = None) -> BazaarError:
    """Rebuild the typed error for a code received over the wire.

    Unknown codes come back as plain BazaarError so callers can still
    branch on ``.code`` without surprises.
    """
    for klass in _registry():
        if klass.code == code:
            err = klass(message)
            break
    else:
        err = BazaarError(message)
        err.code = code
    if http_status is not None:
        err.http_status = http_status
    return err


def _registry() -> list[type[BazaarError]]:
    seen, queue, out = set(), [BazaarError], []
    while queue:
        klass = queue.pop()
        for sub in klass.__subclasses__():
            if sub not in seen:
                seen.add(sub)
                queue.append(sub)
                out.append(sub)
    return out
