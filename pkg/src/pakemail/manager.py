"""Keystore persistence and the exchange driver.

The :class:`SessionManager` runs complete four-flow authentications over
any transport backend, enforces the failed-attempt lockout, keeps a
persistent exchange history (so a silent guess-and-abort shows up as a
timeout, not nothing), and re-authenticates renewed key material by
chaining the stored high-entropy key into the next run as its password.
"""

from __future__ import annotations

import enum
import json
import os
import secrets
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import confirm, pake, sealed
from .confirm import Fingerprint
from .groups import Group
from .pake import Role
from .transport import (
    FLOW_DATA,
    FLOW_INITIATOR_PAKE,
    FLOW_INITIATOR_TAG,
    FLOW_RESPONDER_PAKE,
    FLOW_RESPONDER_TAG,
    TransportBackend,
    TransportEnvelope,
    fresh_exchange_id,
)

KEYSTORE_HEADER = "pakemail-keystore v1"


class ManagerError(Exception):
    pass


class LockedOutError(ManagerError):
    """Failed-attempt limit reached for this peer; operator override required."""


class NoChainError(ManagerError):
    """No stored chained key for this peer."""


class Outcome(enum.Enum):
    SUCCESS = "success"
    PASSWORD_MISMATCH = "password-mismatch"
    ABORTED_BY_TIMEOUT = "aborted-by-timeout"
    PROTOCOL_ERROR = "protocol-error"


@dataclass
class AttemptPolicy:
    max_failed_attempts: int = 3
    timeout: float = 30.0


@dataclass
class PeerRecord:
    identity: bytes
    fingerprint: Fingerprint | None = None
    authenticated: bool = False
    chained_key: bytes | None = None
    failed_attempts: int = 0


@dataclass
class ExchangeRecord:
    exchange_id: bytes
    peer: bytes
    role: Role
    outcome: Outcome
    started_at: float
    ended_at: float


@dataclass
class AuthResult:
    outcome: Outcome
    exchange_id: bytes | None = None
    key: bytes | None = None
    fallback_to_manual: bool = False


# ---------------------------------------------------------------------------
# Keystore
# ---------------------------------------------------------------------------

def _hex(value: bytes | None) -> str | None:
    return value.hex() if value is not None else None


def _unhex(value: str | None) -> bytes | None:
    return bytes.fromhex(value) if value is not None else None


class Keystore:
    """Single-file persistent store: one line per tagged record, hex binaries.

    Atomic replace on every save, so attempt counters and chained keys
    survive process restarts.
    """

    def __init__(self, path, self_identity: bytes | None = None):
        self.path = Path(path)
        self.self_identity: bytes | None = None
        self.self_fingerprint: Fingerprint | None = None
        self.peers: dict[bytes, PeerRecord] = {}
        self.exchanges: list[ExchangeRecord] = []
        if self.path.exists():
            self._load()
        if self.self_identity is None:
            if self_identity is None:
                raise ManagerError("new keystore needs a self identity")
            # stands in for the fingerprint of the user's existing keypair
            self.self_identity = bytes(self_identity)
            self.self_fingerprint = Fingerprint(secrets.token_bytes(20))
            self.save()
        elif self_identity is not None and bytes(self_identity) != self.self_identity:
            raise ManagerError("keystore belongs to a different identity")

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != KEYSTORE_HEADER:
            raise ManagerError(f"{self.path} is not a {KEYSTORE_HEADER} file")
        for line in lines[1:]:
            if not line.strip():
                continue
            tag, _, body = line.partition(" ")
            obj = json.loads(body)
            if tag == "self":
                self.self_identity = _unhex(obj["identity"])
                self.self_fingerprint = Fingerprint(_unhex(obj["fingerprint"]))
            elif tag == "peer":
                fpr = _unhex(obj.get("fingerprint"))
                record = PeerRecord(
                    identity=_unhex(obj["identity"]),
                    fingerprint=Fingerprint(fpr) if fpr else None,
                    authenticated=obj["authenticated"],
                    chained_key=_unhex(obj.get("chained_key")),
                    failed_attempts=obj["failed_attempts"],
                )
                self.peers[record.identity] = record
            elif tag == "exchange":
                self.exchanges.append(ExchangeRecord(
                    exchange_id=_unhex(obj["exchange_id"]),
                    peer=_unhex(obj["peer"]),
                    role=Role(obj["role"]),
                    outcome=Outcome(obj["outcome"]),
                    started_at=obj["started_at"],
                    ended_at=obj["ended_at"],
                ))

    def save(self) -> None:
        lines = [KEYSTORE_HEADER]
        lines.append("self " + json.dumps({
            "identity": _hex(self.self_identity),
            "fingerprint": self.self_fingerprint.hex,
        }))
        for record in self.peers.values():
            lines.append("peer " + json.dumps({
                "identity": _hex(record.identity),
                "fingerprint": record.fingerprint.hex if record.fingerprint else None,
                "authenticated": record.authenticated,
                "chained_key": _hex(record.chained_key),
                "failed_attempts": record.failed_attempts,
            }))
        for rec in self.exchanges:
            lines.append("exchange " + json.dumps({
                "exchange_id": _hex(rec.exchange_id),
                "peer": _hex(rec.peer),
                "role": rec.role.value,
                "outcome": rec.outcome.value,
                "started_at": rec.started_at,
                "ended_at": rec.ended_at,
            }))
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.path.parent, prefix=".keystore-")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write("\n".join(lines) + "\n")
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def peer(self, identity: bytes) -> PeerRecord:
        identity = bytes(identity)
        if identity not in self.peers:
            self.peers[identity] = PeerRecord(identity=identity)
        return self.peers[identity]

    def record_exchange(self, record: ExchangeRecord) -> None:
        self.exchanges.append(record)
        self.save()

    def reset_attempts(self, identity: bytes) -> None:
        """Operator override after a lockout."""
        self.peer(identity).failed_attempts = 0
        self.save()


# ---------------------------------------------------------------------------
# Session manager
# ---------------------------------------------------------------------------

def assign_role(self_id: bytes, peer_id: bytes) -> Role:
    """Tie-break when both sides start concurrently: smaller identity initiates."""
    return Role.INITIATOR if bytes(self_id) < bytes(peer_id) else Role.RESPONDER


def _sid(session: pake.PakeSession, exchange_id: bytes) -> bytes:
    return session.transcript() + pake._lp(exchange_id)


class SessionManager:
    """Drives exchanges for one client identity over one backend."""

    def __init__(self, keystore: Keystore, backend: TransportBackend, group: Group,
                 policy: AttemptPolicy | None = None, poll_interval: float = 0.005):
        self.keystore = keystore
        self.backend = backend
        self.group = group
        self.policy = policy if policy is not None else AttemptPolicy()
        self.poll_interval = poll_interval
        self._inbox: dict[tuple[bytes, int], TransportEnvelope] = {}
        self._processed: set[tuple[bytes, int]] = set()

    @property
    def identity(self) -> bytes:
        return self.keystore.self_identity

    # -- envelope plumbing -------------------------------------------------

    def _collect(self) -> None:
        for env in self.backend.poll(self.identity):
            key = (env.exchange_id, env.flow)
            if key in self._processed or key in self._inbox:
                continue  # at-least-once delivery: drop duplicates
            self._inbox[key] = env

    def _wait_for(self, flow: int, deadline: float, exchange_id: bytes | None = None,
                  sender: bytes | None = None) -> TransportEnvelope | None:
        """Block until a matching flow arrives or the deadline passes.

        With ``exchange_id=None`` (responder waiting for a first flow) any
        exchange from ``sender`` matches. Early-arriving later flows stay
        buffered in the inbox.
        """
        while True:
            self._collect()
            match = None
            for key, env in self._inbox.items():
                if key[1] != flow:
                    continue
                if exchange_id is not None and key[0] != exchange_id:
                    continue
                if sender is not None and env.sender != sender:
                    continue
                match = key
                break
            if match is not None:
                self._processed.add(match)
                return self._inbox.pop(match)
            if time.monotonic() >= deadline:
                return None
            time.sleep(self.poll_interval)

    def _send(self, peer: bytes, exchange_id: bytes, flow: int, payload: bytes,
              with_fingerprint: bool = False) -> None:
        self.backend.send(TransportEnvelope(
            exchange_id=exchange_id,
            flow=flow,
            sender=self.identity,
            recipient=bytes(peer),
            payload=payload,
            fingerprint=self.keystore.self_fingerprint if with_fingerprint else None,
        ))

    # -- authentication ----------------------------------------------------

    def authenticate(self, peer: bytes, password: bytes, role: Role | None = None, *,
                     binding: str = "kc", timeout: float | None = None,
                     _record: bool = True) -> AuthResult:
        """Run a full exchange with key confirmation against ``peer``.

        ``binding`` selects where fingerprints bind: ``"kc"`` puts them in
        the confirmation MACs (default), ``"pi"`` additionally folds them
        into the password-derived scalar (requires the peer fingerprint to
        be known in advance).
        """
        peer = bytes(peer)
        record = self.keystore.peer(peer)
        if record.failed_attempts >= self.policy.max_failed_attempts:
            raise LockedOutError(
                f"{self.policy.max_failed_attempts} failed attempts with this peer; "
                "operator override required")
        if role is None:
            role = assign_role(self.identity, peer)
        if binding not in ("kc", "pi"):
            raise ValueError(f"unknown binding {binding!r}")
        deadline = time.monotonic() + (timeout if timeout is not None else self.policy.timeout)
        started = time.time()
        outcome, exchange_id, key = self._run_exchange(peer, password, role, binding, deadline)
        if _record:
            self._finalize(peer, exchange_id, role, outcome, started, key)
        return AuthResult(outcome, exchange_id, key)

    def _run_exchange(self, peer: bytes, password: bytes, role: Role,
                      binding: str, deadline: float):
        record = self.keystore.peer(peer)
        exchange_id = fresh_exchange_id() if role is Role.INITIATOR else None

        if binding == "pi":
            if record.fingerprint is None:
                raise ManagerError("in-pi binding needs the peer fingerprint in the keystore")
            fprs = self._ordered_fingerprints(role, record.fingerprint)
            password = confirm.embed_fingerprints_in_secret(password, *fprs)

        if role is Role.INITIATOR:
            session, first = pake.start(role, self.identity, peer, password, self.group)
            self._send(peer, exchange_id, FLOW_INITIATOR_PAKE, first, with_fingerprint=True)
            reply = self._wait_for(FLOW_RESPONDER_PAKE, deadline, exchange_id)
            if reply is None:
                return Outcome.ABORTED_BY_TIMEOUT, exchange_id, None
            peer_fpr = reply.fingerprint or record.fingerprint
        else:
            opening = self._wait_for(FLOW_INITIATOR_PAKE, deadline, sender=peer)
            if opening is None:
                return Outcome.ABORTED_BY_TIMEOUT, None, None
            exchange_id = opening.exchange_id
            session, first = pake.start(role, self.identity, peer, password, self.group)
            self._send(peer, exchange_id, FLOW_RESPONDER_PAKE, first, with_fingerprint=True)
            reply = opening
            peer_fpr = opening.fingerprint or record.fingerprint

        if peer_fpr is None:
            return Outcome.PROTOCOL_ERROR, exchange_id, None

        try:
            sk = session.finish(reply.payload)
        except Exception:
            return Outcome.PROTOCOL_ERROR, exchange_id, None

        fpr_a, fpr_b = self._ordered_fingerprints(session.role, peer_fpr)
        sid = _sid(session, exchange_id)
        bundle = confirm.derive_bundle(sk, sid, fpr_a, fpr_b, session.role)
        own_tag_flow = FLOW_INITIATOR_TAG if role is Role.INITIATOR else FLOW_RESPONDER_TAG
        peer_tag_flow = FLOW_RESPONDER_TAG if role is Role.INITIATOR else FLOW_INITIATOR_TAG
        self._send(peer, exchange_id, own_tag_flow, bundle.tau_self)
        tag_env = self._wait_for(peer_tag_flow, deadline, exchange_id)
        if tag_env is None:
            session.mark_failed()
            return Outcome.ABORTED_BY_TIMEOUT, exchange_id, None
        ok, key = bundle.verify_peer_tag(tag_env.payload, fpr_a, fpr_b, sid)
        if not ok:
            session.mark_failed()
            return Outcome.PASSWORD_MISMATCH, exchange_id, None
        session.mark_confirmed()
        self._observed_fingerprint = peer_fpr
        return Outcome.SUCCESS, exchange_id, key

    def _ordered_fingerprints(self, role: Role, peer_fpr: Fingerprint):
        """(fpr_A, fpr_B) with the initiator's fingerprint in the A slot."""
        own = self.keystore.self_fingerprint
        return (own, peer_fpr) if role is Role.INITIATOR else (peer_fpr, own)

    def _finalize(self, peer: bytes, exchange_id: bytes | None, role: Role,
                  outcome: Outcome, started: float, key: bytes | None) -> None:
        record = self.keystore.peer(peer)
        if outcome is Outcome.SUCCESS:
            record.authenticated = True
            record.chained_key = key
            record.failed_attempts = 0
            fpr = getattr(self, "_observed_fingerprint", None)
            if fpr is not None:
                record.fingerprint = fpr
        elif outcome is Outcome.PASSWORD_MISMATCH:
            record.failed_attempts += 1
        self.keystore.record_exchange(ExchangeRecord(
            exchange_id=exchange_id or b"\x00" * 16,
            peer=peer,
            role=role,
            outcome=outcome,
            started_at=started,
            ended_at=time.time(),
        ))

    # -- chaining ----------------------------------------------------------

    def reauthenticate_chained(self, peer: bytes, role: Role | None = None, *,
                               timeout: float | None = None) -> AuthResult:
        """Re-authenticate with the stored key as the password; no prompt.

        A success rotates the stored key; a mismatch means the chains
        diverged and manual authentication is required.
        """
        peer = bytes(peer)
        record = self.keystore.peer(peer)
        if record.chained_key is None:
            raise NoChainError(f"no stored chained key for {peer!r}")
        password = record.chained_key.hex().encode()
        result = self.authenticate(peer, password, role, timeout=timeout)
        if result.outcome is Outcome.PASSWORD_MISMATCH:
            result.fallback_to_manual = True
        return result

    # -- data messages -----------------------------------------------------

    def send_sealed(self, peer: bytes, plaintext: bytes) -> None:
        record = self.keystore.peer(bytes(peer))
        if not record.authenticated or record.chained_key is None:
            raise ManagerError("peer is not authenticated; refuse to send")
        blob = sealed.seal(record.chained_key, plaintext).to_bytes()
        self._send(peer, fresh_exchange_id(), FLOW_DATA, blob)

    def recv_sealed(self, timeout: float = 5.0) -> list[tuple[bytes, bytes]]:
        """Collect data messages; returns (sender, plaintext) pairs."""
        deadline = time.monotonic() + timeout
        out = []
        while True:
            self._collect()
            keys = [k for k, env in self._inbox.items() if env.flow == FLOW_DATA]
            for key in keys:
                env = self._inbox.pop(key)
                self._processed.add(key)
                record = self.keystore.peer(env.sender)
                if record.chained_key is None:
                    continue
                out.append((env.sender,
                            sealed.open_sealed(record.chained_key,
                                               sealed.SealedMessage.from_bytes(env.payload))))
            if out or time.monotonic() >= deadline:
                return out
            time.sleep(self.poll_interval)
