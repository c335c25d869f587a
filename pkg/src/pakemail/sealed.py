"""Authenticated encryption under a confirmed exchange key.

Demonstration use of the final key K: AES-256-GCM with a random 24-byte
nonce. Any bit flip in nonce or ciphertext fails authentication.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

NONCE_LEN = 24


class SealError(Exception):
    """Decryption failed: wrong key or tampered message."""


@dataclass(frozen=True)
class SealedMessage:
    nonce: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return self.nonce + self.ciphertext

    @classmethod
    def from_bytes(cls, data: bytes) -> "SealedMessage":
        if len(data) < NONCE_LEN + 16:
            raise SealError("sealed blob too short")
        return cls(data[:NONCE_LEN], data[NONCE_LEN:])


def seal(key: bytes, plaintext: bytes) -> SealedMessage:
    if len(key) != 32:
        raise ValueError("key must be 32 bytes")
    nonce = secrets.token_bytes(NONCE_LEN)
    return SealedMessage(nonce, AESGCM(key).encrypt(nonce, plaintext, None))


def open_sealed(key: bytes, message: SealedMessage) -> bytes:
    if len(key) != 32:
        raise ValueError("key must be 32 bytes")
    try:
        return AESGCM(key).decrypt(message.nonce, message.ciphertext, None)
    except InvalidTag as exc:
        raise SealError("authentication failed") from exc
