"""CTI store that delegates every authorization decision to the Activity ledger."""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Callable

from .activity import AccessPermissionToken, ActivityNetwork, Privilege
from .crypto import Signer
from .encoding import decode, digest, digest_bytes, encode
from .errors import (
    AuthenticationFailed,
    ExpiredToken,
    InsertionFailed,
    PrivilegeMismatch,
    StaleTimestamp,
    TradeError,
    UnknownRecord,
)
from .ledger import Role, TxType
from .runtime import Runtime

M_OK = "M_OK"
M_NO = "M_NO"
M_INSERTION = "M_Insertion"
M_ACCESS = "M_Access"


@dataclass
class CtiAsset:
    record_uid: str
    payload: bytes
    stored_digest: bytes
    owner: str


@dataclass(frozen=True)
class RetrievalRequest:
    operation: Privilege
    record_uid: str
    apt_ref: str
    tick: int
    requester_signature: bytes = b""

    def signing_bytes(self) -> bytes:
        return encode([self.operation.value, self.record_uid, self.apt_ref, self.tick])

    def signed(self, signer: Signer) -> "RetrievalRequest":
        return RetrievalRequest(self.operation, self.record_uid, self.apt_ref, self.tick,
                                signer.sign(self.signing_bytes()))

    def to_fields(self) -> dict:
        return {"operation": self.operation.value, "record_uid": self.record_uid,
                "apt_ref": self.apt_ref, "tick": self.tick,
                "signature": self.requester_signature}

    @classmethod
    def from_fields(cls, f: dict) -> "RetrievalRequest":
        return cls(Privilege(f["operation"]), f["record_uid"], f["apt_ref"], f["tick"],
                   f["signature"])


def payload_acceptable(size: int, min_size: int = 1, max_size: int = 1 << 20) -> bool:
    return min_size <= size <= max_size


def is_fresh(request_tick: int, now: int, window: int = 5) -> bool:
    return abs(request_tick - now) <= window


def check_token(token: AccessPermissionToken, req: RetrievalRequest, now: int,
                verify: Callable[[bytes, bytes, bytes], bool]) -> type[TradeError] | None:
    """Checks (b) and (c) against an already fetched token; None means pass."""
    if not verify(token.requester_public_key, req.signing_bytes(), req.requester_signature):
        return AuthenticationFailed
    if req.operation is not token.privilege or req.record_uid != token.record_uid:
        return PrivilegeMismatch
    if now > token.expiration:
        return ExpiredToken
    return None


def authenticate_data(activity: ActivityNetwork, payload: bytes, record_uid: str) -> bool:
    """True iff the payload hashes to the digest recorded on the Activity ledger."""
    return digest_bytes(payload) == activity.record(record_uid).content_digest


class CtiServer:
    def __init__(self, address: str, activity: ActivityNetwork, runtime: Runtime):
        self.address = address
        self.activity = activity
        self.runtime = runtime
        submitter = f"server:{address}"
        self.signer = Signer(submitter, runtime.keys.new_key(submitter))
        activity.ledger.add_member(submitter, self.signer.public_key, Role.SERVER)
        self.assets: dict[str, CtiAsset] = {}
        self._counter = 0
        self._lock = threading.Lock()

    def insert_cti(self, owner: str, payload: bytes) -> tuple[str, bytes]:
        cfg = self.runtime.config
        if not isinstance(payload, (bytes, bytearray)):
            raise InsertionFailed("payload must be bytes")
        if not payload_acceptable(len(payload), cfg.min_payload, cfg.max_payload):
            raise InsertionFailed(f"payload size {len(payload)} outside "
                                  f"[{cfg.min_payload}, {cfg.max_payload}]")
        with self._lock:
            self._counter += 1
            uid = "rec-" + digest(self.address, self._counter)[:8].hex()
            content = digest_bytes(bytes(payload))
            self.runtime.commit(self.activity.ledger, TxType.ATX_PUBLISH_DATA, self.signer,
                                {"record_uid": uid, "digest": content, "owner": owner,
                                 "server_address": self.address})
            self.assets[uid] = CtiAsset(uid, bytes(payload), content, owner)
        return uid, content

    def authorize_and_retrieve(self, req: RetrievalRequest) -> bytes:
        now = self.runtime.clock.now
        if not is_fresh(req.tick, now, self.runtime.config.stale_window):
            raise StaleTimestamp(f"request tick {req.tick}, server tick {now}")
        token = self.activity.get_apt(req.apt_ref)
        failure = check_token(token, req, now, self.activity.ledger.scheme.verify)
        if failure is not None:
            raise failure(f"{req.apt_ref}: {failure.__name__}")
        asset = self.assets.get(req.record_uid)
        if asset is None:
            raise UnknownRecord(req.record_uid)
        self.runtime.commit(self.activity.ledger, TxType.ATX_ACCESS_DATA, self.signer,
                            {"record_uid": req.record_uid, "apt_ref": req.apt_ref,
                             "requester": token.requester, "tick": now})
        return asset.payload

    def authenticate_data(self, payload: bytes, record_uid: str) -> bool:
        return authenticate_data(self.activity, payload, record_uid)

    def handle(self, message: bytes) -> bytes:
        """Byte-level request/response entry point used by the transport."""
        try:
            msg = decode(message)
            kind = msg["type"]
            if kind == M_INSERTION:
                uid, content = self.insert_cti(msg["owner"], msg["payload"])
                return encode({"type": M_OK, "record_uid": uid, "digest": content})
            if kind == M_ACCESS:
                payload = self.authorize_and_retrieve(RetrievalRequest.from_fields(msg["request"]))
                return encode({"type": M_OK, "payload": payload})
            return encode({"type": M_NO, "code": "MalformedRecord",
                           "message": f"unknown message type {kind!r}"})
        except TradeError as exc:
            return encode({"type": M_NO, "code": exc.code, "message": str(exc)})
        except (ValueError, KeyError, TypeError) as exc:
            return encode({"type": M_NO, "code": "MalformedRecord", "message": str(exc)})
