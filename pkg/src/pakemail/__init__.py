"""Decentralized public-key authentication and key management via PAKE.

SPAKE2 with explicit refresh-then-MAC key confirmation, run over
asynchronous transports (loopback, maildir email, untrusted relay),
binding public-key fingerprints to identities and producing a confirmed
high-entropy key; plus trustwords rendering and a brute-force cost
estimator for partially checked fingerprints.
"""

from .confirm import Fingerprint, derive_bundle, embed_fingerprints_in_secret
from .groups import get_group
from .manager import AttemptPolicy, Keystore, Outcome, SessionManager
from .pake import PakeSession, Role
from .transport import (
    LoopbackTransport,
    MaildirTransport,
    RelayTransport,
    TransportEnvelope,
)

__all__ = [
    "AttemptPolicy",
    "Fingerprint",
    "Keystore",
    "LoopbackTransport",
    "MaildirTransport",
    "Outcome",
    "PakeSession",
    "RelayTransport",
    "Role",
    "SessionManager",
    "TransportEnvelope",
    "derive_bundle",
    "embed_fingerprints_in_secret",
    "get_group",
]

__version__ = "0.1.0"
