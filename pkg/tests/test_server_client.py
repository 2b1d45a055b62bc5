import pytest
from hypothesis import given
from hypothesis import strategies as st

from support import ACME, BETA, PAYLOAD, join, publish, world
from trade.activity import AccessPermissionToken, Privilege
from trade.encoding import decode, encode
from trade.errors import (
    AuthenticationFailed,
    ConsumptionPolicyRejected,
    DataAuthenticationFailed,
    ExpiredToken,
    InsertionFailed,
    PrivilegeMismatch,
    StaleTimestamp,
    UnknownAPT,
    UnknownRecord,
)
from trade.identity import OrganizationProfile
from trade.ledger import TxType
from trade.server import (
    M_ACCESS,
    M_INSERTION,
    M_NO,
    M_OK,
    RetrievalRequest,
    check_token,
    is_fresh,
    payload_acceptable,
)


def _pair(**overrides):
    net = world(karma__initial_grant=100, **overrides)
    return net, join(net, ACME), join(net, BETA)


@pytest.mark.parametrize("size, ok", [(0, False), (1, True), (1 << 20, True), ((1 << 20) + 1, False)])
def test_payload_bounds(size, ok):
    assert payload_acceptable(size) is ok


@given(st.integers(-50, 50), st.integers(0, 50), st.integers(0, 10))
def test_freshness_is_a_symmetric_window(tick, now, window):
    assert is_fresh(tick, now, window) == (now - window <= tick <= now + window)


def _token(pk=b"k", privilege=Privilege.READ, uid="rec-1", expiration=10):
    return AccessPermissionToken("apt-1", "0xr", pk, privilege, uid, 0, expiration)


def test_check_token_order():
    yes = lambda pk, msg, sig: True
    no = lambda pk, msg, sig: False
    req = RetrievalRequest(Privilege.READ, "rec-1", "apt-1", 3)
    assert check_token(_token(), req, 10, yes) is None
    assert check_token(_token(), req, 10, no) is AuthenticationFailed
    assert check_token(_token(expiration=2), req, 10, no) is AuthenticationFailed
    assert check_token(_token(privilege=Privilege.SUBSCRIBE, expiration=2), req, 10, yes) \
        is PrivilegeMismatch
    assert check_token(_token(uid="rec-2"), req, 10, yes) is PrivilegeMismatch
    assert check_token(_token(expiration=9), req, 10, yes) is ExpiredToken


def test_retrieval_request_round_trips():
    req = RetrievalRequest(Privilege.SUBSCRIBE, "rec-1", "apt-1", 4, b"sig")
    assert RetrievalRequest.from_fields(req.to_fields()) == req


def test_insertion_rejects_bad_payloads():
    net, acme, _ = _pair(server__max_payload=8)
    with pytest.raises(InsertionFailed):
        publish(acme, payload=b"")
    with pytest.raises(InsertionFailed):
        publish(acme, payload=b"123456789")
    assert publish(acme, payload=b"12345678")
    with pytest.raises(InsertionFailed):
        acme.insert_cti(b"x", ["a"], {Privilege.READ: ()}, "S9")


def test_server_message_protocol():
    net, acme, _ = _pair()
    server = net.server("S1")
    reply = decode(server.handle(encode({"type": M_INSERTION, "owner": "0xa", "payload": b"x"})))
    assert reply["type"] == M_OK and reply["record_uid"].startswith("rec-")
    assert decode(server.handle(encode({"type": "M_Nope"})))["type"] == M_NO
    assert decode(server.handle(b"garbage"))["code"] == "MalformedRecord"
    bad = decode(server.handle(encode({"type": M_ACCESS, "request": {
        "operation": "Read", "record_uid": "rec-x", "apt_ref": "apt-x", "tick": 0,
        "signature": b""}})))
    assert bad == {"type": M_NO, "code": "UnknownAPT", "message": bad["message"]}


def test_acquire_end_to_end():
    net, acme, beta = _pair()
    pid = acme.create_policy("(employees >= 100)")
    uid = publish(acme, [pid])
    assert beta.acquire(uid) == PAYLOAD
    result = beta.last_result
    assert result.header.requester == beta.primary.address and result.new_badges == 1
    token = net.activity.get_apt(result.header.apt_ref)
    assert token.record_uid == uid
    assert net.activity_ledger.count(TxType.ATX_ACCESS_DATA) == 1
    beta.acquire(uid)
    assert beta.last_result.new_badges == 0


def _issued(ttl=1):
    net, acme, beta = _pair()
    uid = publish(acme)
    beta.acquire(uid, ttl=ttl)
    return net, beta, uid, beta.last_result.header.apt_ref


def test_forged_signature_fails_authentication():
    net, beta, uid, ref = _issued(5)
    other = join(net, OrganizationProfile("Other Ltd", 1, 1, "EU"))
    with pytest.raises(AuthenticationFailed):
        other.retrieve(other.primary, uid, Privilege.READ, ref)


def test_wrong_privilege_or_record():
    net, beta, uid, ref = _issued(5)
    with pytest.raises(PrivilegeMismatch):
        beta.retrieve(beta.primary, uid, Privilege.SUBSCRIBE, ref)
    with pytest.raises(UnknownAPT):
        beta.retrieve(beta.primary, uid, Privilege.READ, "apt-nothing")


def test_token_expires_after_ttl():
    net, beta, uid, ref = _issued(1)
    net.tick()
    assert beta.retrieve(beta.primary, uid, Privilege.READ, ref) == PAYLOAD
    net.tick()
    with pytest.raises(ExpiredToken):
        beta.retrieve(beta.primary, uid, Privilege.READ, ref)


@pytest.mark.parametrize("skew, ok", [(-6, False), (-5, True), (0, True), (5, True), (6, False)])
def test_stale_requests(skew, ok):
    net, beta, uid, ref = _issued(50)
    net.tick(10)
    now = net.clock.now
    if ok:
        assert beta.retrieve(beta.primary, uid, Privilege.READ, ref, tick=now + skew) == PAYLOAD
    else:
        with pytest.raises(StaleTimestamp):
            beta.retrieve(beta.primary, uid, Privilege.READ, ref, tick=now + skew)


def test_tampered_payload_is_detected_by_the_client():
    net, beta, uid, ref = _issued(5)
    asset = net.server("S1").assets[uid]
    asset.payload = bytes([asset.payload[0] ^ 1]) + asset.payload[1:]
    with pytest.raises(DataAuthenticationFailed):
        beta.retrieve(beta.primary, uid, Privilege.READ, ref)
    assert not net.server("S1").authenticate_data(asset.payload, uid)


def test_unknown_record_on_acquire():
    net, _, beta = _pair()
    with pytest.raises(UnknownRecord):
        beta.acquire("rec-none")


def test_consumption_policy_filters_producers():
    net, acme, beta = _pair()
    uid = publish(acme, keywords=["malware"])
    beta.set_consumption_policy('(keywords contains "phishing")')
    with pytest.raises(ConsumptionPolicyRejected):
        beta.acquire(uid)
    beta.set_consumption_policy("(reputation >= 2)")
    assert beta.acquire(uid) == PAYLOAD
    beta.set_consumption_policy("(size >= 2)")
    with pytest.raises(ConsumptionPolicyRejected):
        beta.acquire(uid)


def test_pseudonyms_rotate_across_acquisitions():
    net, acme, beta = _pair()
    extra = beta.issue_temporary("R1")
    uid = publish(acme)
    beta.acquire(uid)
    first = beta.last_result.header.requester
    beta.acquire(uid)
    second = beta.last_result.header.requester
    assert {first, second} == {beta.credentials[0].address, extra}
    beta.acquire(uid, via=extra)
    assert beta.last_result.header.requester == extra
