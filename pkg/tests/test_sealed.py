import secrets

import pytest

from pakemail.sealed import SealedMessage, SealError, open_sealed, seal

KEY = secrets.token_bytes(32)


def test_roundtrip():
    for plaintext in (b"", b"hello", secrets.token_bytes(5000)):
        assert open_sealed(KEY, seal(KEY, plaintext)) == plaintext


def test_wire_roundtrip():
    msg = seal(KEY, b"payload")
    assert SealedMessage.from_bytes(msg.to_bytes()) == msg


def test_nonce_freshness():
    nonces = {seal(KEY, b"same").nonce for _ in range(50)}
    assert len(nonces) == 50
    assert all(len(n) == 24 for n in nonces)


def test_ciphertext_bit_flip_rejected():
    msg = seal(KEY, b"integrity matters")
    bad = SealedMessage(msg.nonce,
                        bytes([msg.ciphertext[0] ^ 1]) + msg.ciphertext[1:])
    with pytest.raises(SealError):
        open_sealed(KEY, bad)


def test_wrong_key_rejected():
    msg = seal(KEY, b"secret")
    with pytest.raises(SealError):
        open_sealed(secrets.token_bytes(32), msg)


def test_key_length_enforced():
    with pytest.raises(ValueError):
        seal(b"short", b"x")
    with pytest.raises(ValueError):
        open_sealed(b"short", seal(KEY, b"x"))


def test_from_bytes_rejects_truncation():
    raw = seal(KEY, b"x").to_bytes()
    with pytest.raises(SealError):
        SealedMessage.from_bytes(raw[:10])
