import time

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bazaar import tokens
from bazaar.control_plane import ControlPlane
from bazaar.errors import (AudienceMismatch, BadCredentials, BadSignature,
                           BazaarError, Expired, Malformed, ScopeNotGranted,
                           TtlTooLong, UnknownKey)

KEYS = {"k1": b"first-secret", "k2": b"second-secret"}


def make_service(max_ttl=3600):
    store = ControlPlane()
    product = store.publish_api({
        "name": "svc", "context": "/svc", "backend_url": "http://127.0.0.1:9",
        "operations": [["GET", "/a", "svc:read"], ["POST", "/a", "svc:write"]],
    })
    store.set_lifecycle(product.api_id, "PUBLISHED")
    plan = store.create_plan(product.api_id, {"kind": "FLAT_FEE", "flat_fee": "1"})
    app, secret = store.register_application("app")
    store.subscribe(app.app_id, product.api_id, plan.plan_id)
    service = tokens.TokenService(tokens.LocalDirectory(store), KEYS, "k1",
                                  max_ttl=max_ttl)
    return service, app, secret


def test_round_trip():
    service, app, secret = make_service()
    token = service.issue_token(app.consumer_key, secret, "svc:read svc:write",
                                audience="gw-main")
    claims = service.validate(token, expected_audience="gw-main")
    assert claims["azp"] == app.consumer_key
    assert claims["sub"] == app.app_id
    assert claims["scope"] == "svc:read svc:write"
    assert claims["exp"] - claims["iat"] == 600
    header, _ = tokens.decode_unverified(token)
    assert header == {"alg": "HS256", "typ": "JWT", "kid": "k1"}


def test_issue_rejects_bad_credentials_and_scopes():
    service, app, secret = make_service()
    with pytest.raises(BadCredentials):
        service.issue_token(app.consumer_key, "nope", "svc:read", audience="gw")
    with pytest.raises(ScopeNotGranted):
        service.issue_token(app.consumer_key, secret, "svc:admin", audience="gw")
    with pytest.raises(TtlTooLong):
        service.issue_token(app.consumer_key, secret, "svc:read", audience="gw",
                            ttl_seconds=3601)
    with pytest.raises(BazaarError):
        service.issue_token(app.consumer_key, secret, "svc:read", audience="gw",
                            ttl_seconds=0)


def test_validate_negative_cases():
    service, app, secret = make_service()
    token = service.issue_token(app.consumer_key, secret, "svc:read",
                                audience="gw-main", ttl_seconds=60)
    now = time.time()
    with pytest.raises(AudienceMismatch):
        tokens.validate_token(token, KEYS, expected_audience="other-gw")
    with pytest.raises(Expired):
        tokens.validate_token(token, KEYS, "gw-main", now=now + 61)
    with pytest.raises(UnknownKey):
        tokens.validate_token(token, {"other": b"zzz"}, "gw-main")
    with pytest.raises(BadSignature):
        tokens.validate_token(token, {"k1": b"wrong-key"}, "gw-main")
    with pytest.raises(Malformed):
        tokens.validate_token("just.two", KEYS, "gw-main")
    with pytest.raises(Malformed):
        tokens.validate_token("", KEYS, "gw-main")


def test_clock_skew_window():
    service, app, secret = make_service()
    now = time.time()
    token = service.issue_token(app.consumer_key, secret, "svc:read",
                                audience="gw", ttl_seconds=60, now=now)
    # iat slightly in the future is tolerated up to the skew
    assert tokens.validate_token(token, KEYS, "gw", now=now - 29)
    with pytest.raises(Malformed):
        tokens.validate_token(token, KEYS, "gw", now=now - 31)
    # expiry is strict
    assert tokens.validate_token(token, KEYS, "gw", now=now + 59)
    with pytest.raises(Expired):
        tokens.validate_token(token, KEYS, "gw", now=now + 60)


def test_unsupported_algorithm_rejected():
    # alg is pinned; nothing else (especially "none") may pass
    header = {"alg": "none", "typ": "JWT", "kid": "k1"}
    claims = {"aud": "gw", "exp": time.time() + 60}
    token = tokens.encode_token(header, claims, KEYS["k1"])
    with pytest.raises(Malformed):
        tokens.validate_token(token, KEYS, "gw")


def test_flip_any_payload_byte_is_rejected():
    service, app, secret = make_service()
    token = service.issue_token(app.consumer_key, secret, "svc:read",
                                audience="gw-main", ttl_seconds=600)
    assert tokens.validate_token(token, KEYS, "gw-main")
    raw = token.encode("ascii")
    payload_end = token.rindex(".")  # header and claims segments
    rejected = 0
    for pos in range(payload_end):
        for bit in (0x01, 0x80):
            mutated = bytes([*raw[:pos], raw[pos] ^ bit, *raw[pos + 1:]])
            try:
                tokens.validate_token(mutated.decode("latin-1"), KEYS, "gw-main")
            except BazaarError:
                rejected += 1
    assert rejected == payload_end * 2  # 100% detection


def test_signature_tamper_rejected():
    service, app, secret = make_service()
    token = service.issue_token(app.consumer_key, secret, "svc:read", audience="gw")
    head, claims, sig = token.split(".")
    flipped = sig[:-1] + ("A" if sig[-1] != "A" else "B")
    with pytest.raises(BazaarError):
        tokens.validate_token(f"{head}.{claims}.{flipped}", KEYS, "gw")


def test_key_rotation_via_kid():
    service, app, secret = make_service()
    old = service.issue_token(app.consumer_key, secret, "svc:read", audience="gw")
    service.active_key = "k2"
    new = service.issue_token(app.consumer_key, secret, "svc:read", audience="gw")
    # both validate while both keys are in the set
    assert tokens.validate_token(old, KEYS, "gw")
    assert tokens.validate_token(new, KEYS, "gw")
    with pytest.raises(UnknownKey):
        tokens.validate_token(old, {"k2": KEYS["k2"]}, "gw")


@given(st.integers(min_value=1, max_value=3600), st.integers(min_value=-30, max_value=10**5))
def test_acceptance_is_monotone_after_issue(ttl, offset):
    """For any clock at or after iat - skew, a token is accepted until exp."""
    now = 1_700_000_000.0
    claims = {"sub": "a", "iss": "i", "aud": "gw", "azp": "ck", "scope": "",
              "iat": int(now), "exp": int(now) + ttl, "jti": "x"}
    token = tokens.encode_token({"alg": "HS256", "typ": "JWT", "kid": "k1"},
                                claims, KEYS["k1"])
    probe = now + offset
    if probe >= claims["exp"]:
        with pytest.raises(Expired):
            tokens.validate_token(token, KEYS, "gw", now=probe)
    else:
        assert tokens.validate_token(token, KEYS, "gw", now=probe)


def test_issue_deduplicates_scopes_preserving_order():
    service, app, secret = make_service()
    token = service.issue_token(app.consumer_key, secret,
                                "svc:write svc:read svc:write", audience="gw")
    _, claims = tokens.decode_unverified(token)
    assert claims["scope"] == "svc:write svc:read"
