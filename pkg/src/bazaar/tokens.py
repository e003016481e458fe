"""Token service: issues and validates the signed access tokens the gateway trusts.

Tokens use the standard compact three-segment base64url form
(header.claims.signature) signed with HMAC-SHA256, so off-the-shelf JWT
tooling can inspect them. Validation is local: the gateway holds the same
key material and never phones home per request.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import json
import time
import uuid

from .errors import (
    AudienceMismatch,
    BadSignature,
    BazaarError,
    Expired,
    Malformed,
    ScopeNotGranted,
    TtlTooLong,
    UnknownKey,
)
from .httpd import Request, Response, Router

DEFAULT_MAX_TTL = 3600
DEFAULT_SKEW = 30


def _b64url_encode(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _b64url_decode(segment: str) -> bytes:
    pad = "=" * (-len(segment) % 4)
    try:
        return base64.urlsafe_b64decode(segment + pad)
    except (binascii.Error, ValueError) as exc:
        raise Malformed(f"bad base64url segment: {exc}") from exc


def _sign(secret: bytes, signing_input: bytes) -> bytes:
    return hmac.new(secret, signing_input, hashlib.sha256).digest()


def encode_token(header: dict, claims: dict, secret: bytes) -> str:
    h = _b64url_encode(json.dumps(header, separators=(",", ":")).encode())
    c = _b64url_encode(json.dumps(claims, separators=(",", ":")).encode())
    signing_input = f"{h}.{c}".encode("ascii")
    return f"{h}.{c}." + _b64url_encode(_sign(secret, signing_input))


def decode_unverified(token: str) -> tuple[dict, dict]:
    """Parse without trust; for diagnostics and the CLI only."""
    parts = token.split(".")
    if len(parts) != 3:
        raise Malformed(f"expected 3 segments, got {len(parts)}")
    try:
        header = json.loads(_b64url_decode(parts[0]))
        claims = json.loads(_b64url_decode(parts[1]))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise Malformed(f"segment is not JSON: {exc}") from exc
    if not isinstance(header, dict) or not isinstance(claims, dict):
        raise Malformed("header/claims must be JSON objects")
    return header, claims


def validate_token(token: str, keys: dict[str, bytes], expected_audience: str,
                   now: float | None = None, skew: float = DEFAULT_SKEW) -> dict:
    """Return the claims iff the token is authentic, fresh and for us.

    The HMAC is checked over the raw received segments, so any byte change
    anywhere in header or claims fails here even if it still decodes.
    """
    if now is None:
        now = time.time()
    if not token.isascii():
        raise Malformed("token contains non-ASCII bytes")
    parts = token.split(".")
    if len(parts) != 3 or not all(parts):
        raise Malformed("token must have three non-empty segments")
    header_seg, claims_seg, sig_seg = parts
    try:
        header = json.loads(_b64url_decode(header_seg))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise Malformed(f"header is not JSON: {exc}") from exc
    if not isinstance(header, dict):
        raise Malformed("header must be a JSON object")
    if header.get("alg") != "HS256":
        raise Malformed(f"unsupported alg {header.get('alg')!r}")
    kid = header.get("kid")
    if kid not in keys:
        raise UnknownKey(f"no verification key {kid!r}")
    expected_sig = _sign(keys[kid], f"{header_seg}.{claims_seg}".encode("ascii"))
    if not hmac.compare_digest(expected_sig, _b64url_decode(sig_seg)):
        raise BadSignature("signature mismatch")
    try:
        claims = json.loads(_b64url_decode(claims_seg))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise Malformed(f"claims are not JSON: {exc}") from exc
    if not isinstance(claims, dict):
        raise Malformed("claims must be a JSON object")
    if not isinstance(claims.get("exp"), (int, float)):
        raise Malformed("exp claim missing")
    if claims["exp"] <= now:
        raise Expired(f"token expired at {claims['exp']}")
    if claims.get("iat", 0) > now + skew:
        raise Malformed("iat is in the future beyond the allowed skew")
    if claims.get("aud") != expected_audience:
        raise AudienceMismatch(f"aud {claims.get('aud')!r} != {expected_audience!r}")
    return claims


class TokenService:
    """Issues tokens against a credential directory (the control plane)."""

    def __init__(self, directory, keys: dict[str, bytes], active_key: str,
                 issuer: str = "bazaar-token", max_ttl: int = DEFAULT_MAX_TTL,
                 skew: float = DEFAULT_SKEW):
        if active_key not in keys:
            raise ValueError(f"active key {active_key!r} not in key set")
        self.directory = directory
        self.keys = keys
        self.active_key = active_key
        self.issuer = issuer
        self.max_ttl = max_ttl
        self.skew = skew

    def issue_token(self, consumer_key: str, consumer_secret: str,
                    requested_scopes, audience: str, ttl_seconds: int = 600,
                    now: float | None = None) -> str:
        app_id, grantable = self.directory.verify(consumer_key, consumer_secret)
        if isinstance(requested_scopes, str):
            scopes = requested_scopes.split()
        else:
            scopes = list(requested_scopes)
        seen = set()
        scopes = [s for s in scopes if not (s in seen or seen.add(s))]
        missing = set(scopes) - set(grantable)
        if missing:
            raise ScopeNotGranted(f"scopes not granted to {consumer_key}: {sorted(missing)}")
        ttl = int(ttl_seconds)
        if ttl < 1:
            raise BazaarError("ttl_seconds must be >= 1")
        if ttl > self.max_ttl:
            raise TtlTooLong(f"ttl {ttl} exceeds maximum {self.max_ttl}")
        iat = int(now if now is not None else time.time())
        claims = {
            "sub": app_id,
            "iss": self.issuer,
            "aud": audience,
            "azp": consumer_key,
            "scope": " ".join(scopes),
            "iat": iat,
            "exp": iat + ttl,
            "jti": uuid.uuid4().hex,
        }
        header = {"alg": "HS256", "typ": "JWT", "kid": self.active_key}
        return encode_token(header, claims, self.keys[self.active_key])

    def validate(self, token: str, expected_audience: str, now: float | None = None) -> dict:
        return validate_token(token, self.keys, expected_audience, now=now, skew=self.skew)

    def key_metadata(self) -> dict:
        return {
            "issuer": self.issuer,
            "keys": [{"key_id": kid, "algorithm": "HS256"} for kid in sorted(self.keys)],
            "active_key": self.active_key,
        }


class LocalDirectory:
    """Adapter over an in-process ControlPlane store."""

    def __init__(self, store):
        self.store = store

    def verify(self, consumer_key: str, consumer_secret: str):
        app = self.store.authenticate(consumer_key, consumer_secret)
        return app.app_id, self.store.grantable_scopes(app.app_id)


class RemoteDirectory:
    """Adapter over a ControlPlaneClient for split-process deployments."""

    def __init__(self, client):
        self.client = client

    def verify(self, consumer_key: str, consumer_secret: str):
        info = self.client.verify_credentials(consumer_key, consumer_secret)
        return info["app_id"], set(info["grantable_scopes"])


class TokenServiceApp:
    """REST surface: POST /token (form encoded) and GET /keys."""

    def __init__(self, service: TokenService):
        self.service = service
        r = self.router = Router()
        r.add("POST", "/token", self._token)
        r.add("GET", "/keys", self._keys)
        r.add("GET", "/health", lambda req: Response.json({"status": "ok"}))

    def handle(self, request: Request) -> Response:
        return self.router.handle(request)

    def _token(self, req: Request) -> Response:
        ctype = req.header("content-type", "")
        fields = req.json() if "json" in ctype else req.form()
        token = self.service.issue_token(
            consumer_key=fields.get("key", ""),
            consumer_secret=fields.get("secret", ""),
            requested_scopes=fields.get("scope", ""),
            audience=fields.get("audience", ""),
            ttl_seconds=int(fields.get("ttl", 600)),
        )
        return Response.json({
            "access_token": token,
            "token_type": "Bearer",
            "expires_in": int(fields.get("ttl", 600)),
        })

    def _keys(self, req: Request) -> Response:
        return Response.json(self.service.key_metadata())
