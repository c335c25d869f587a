"""SPAKE2 key-exchange state machine.

One :class:`PakeSession` per party per exchange. The initiator blinds its
Diffie-Hellman term with the public constant M, the responder with N; both
end up with the same pre-confirmation key ``sk`` iff they hashed the same
password. Explicit key confirmation lives in :mod:`pakemail.confirm`.
"""

from __future__ import annotations

import enum
import hashlib

from .groups import DecodeError, Group, GroupElement

PROTOCOL_VERSION = b"pakemail-v1"


class PakeError(Exception):
    pass


class StateError(PakeError):
    """Operation called in the wrong session phase."""


class Role(enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"

    @property
    def peer(self) -> "Role":
        return Role.RESPONDER if self is Role.INITIATOR else Role.INITIATOR


class Phase(enum.Enum):
    CREATED = "created"
    STARTED = "started"
    KEYED = "keyed"
    CONFIRMED = "confirmed"
    FAILED = "failed"


def _lp(data: bytes) -> bytes:
    """Length-prefix a field so concatenations are unambiguous."""
    return len(data).to_bytes(4, "big") + data


def password_context(group: Group) -> bytes:
    return PROTOCOL_VERSION + b"/" + group.name.encode()


class PakeSession:
    """One party's half of a key exchange.

    Single-owner state machine: created -> started -> keyed, then the
    confirmation layer moves it to confirmed or failed. The ephemeral
    exponent and the password scalar never leave the object.
    """

    def __init__(self, role: Role, self_id: bytes, peer_id: bytes,
                 password: bytes, group: Group, *, rng=None):
        if not self_id or not peer_id:
            raise ValueError("identities must be non-empty")
        if not password:
            raise ValueError("password must be non-empty")
        self.role = role
        self.self_id = bytes(self_id)
        self.peer_id = bytes(peer_id)
        self.group = group
        self.phase = Phase.CREATED
        self.sk: bytes | None = None
        self._pi = group.scalar_from_password(bytes(password), password_context(group))
        self._x = group.random_scalar(rng)
        self._outbound_star: GroupElement | None = None
        self._inbound_star: GroupElement | None = None

    def __repr__(self) -> str:
        # deliberately omits x, pi and sk
        return (f"PakeSession(role={self.role.value}, self_id={self.self_id!r}, "
                f"peer_id={self.peer_id!r}, phase={self.phase.value})")

    @property
    def _blind(self) -> GroupElement:
        return self.group.M if self.role is Role.INITIATOR else self.group.N

    @property
    def _peer_blind(self) -> GroupElement:
        return self.group.N if self.role is Role.INITIATOR else self.group.M

    def start(self) -> bytes:
        """Produce the outbound blinded term X* (initiator) or Y* (responder)."""
        if self.phase is not Phase.CREATED:
            raise StateError(f"start() in phase {self.phase.value}")
        g = self.group
        star = g.mul(g.exp(g.generator, self._x), g.exp(self._blind, self._pi))
        self._outbound_star = star
        self.phase = Phase.STARTED
        return g.encode(star)

    def finish(self, inbound_message: bytes) -> bytes:
        """Consume the peer's blinded term and derive the session key sk."""
        if self.phase is not Phase.STARTED:
            raise StateError(f"finish() in phase {self.phase.value}")
        g = self.group
        try:
            inbound = g.decode(inbound_message)
        except DecodeError:
            self.phase = Phase.FAILED
            raise
        self._inbound_star = inbound
        K = g.exp(g.div(inbound, g.exp(self._peer_blind, self._pi)), self._x)
        h = hashlib.sha256()
        h.update(self.transcript())
        h.update(_lp(g.scalar_bytes(self._pi)))
        h.update(_lp(g.encode(K)))
        self.sk = h.digest()
        self.phase = Phase.KEYED
        return self.sk

    def transcript(self) -> bytes:
        """Canonical (id_A, id_B, X*, Y*) bytes, initiator values in the A slots."""
        if self._outbound_star is None or self._inbound_star is None:
            raise StateError("transcript available only after both terms are known")
        g = self.group
        if self.role is Role.INITIATOR:
            id_a, id_b = self.self_id, self.peer_id
            x_star, y_star = self._outbound_star, self._inbound_star
        else:
            id_a, id_b = self.peer_id, self.self_id
            x_star, y_star = self._inbound_star, self._outbound_star
        return b"".join([_lp(id_a), _lp(id_b), _lp(g.encode(x_star)), _lp(g.encode(y_star))])

    def mark_confirmed(self) -> None:
        if self.phase is not Phase.KEYED:
            raise StateError(f"confirm in phase {self.phase.value}")
        self.phase = Phase.CONFIRMED

    def mark_failed(self) -> None:
        self.phase = Phase.FAILED
        self.sk = None


def start(role: Role, self_id: bytes, peer_id: bytes, password: bytes,
          group: Group, *, rng=None) -> tuple[PakeSession, bytes]:
    """Convenience wrapper: build a session and emit its first message."""
    session = PakeSession(role, self_id, peer_id, password, group, rng=rng)
    return session, session.start()
