import secrets

import pytest
from hypothesis import given, strategies as st

from pakemail.groups import DecodeError, get_group

import oracles


def test_toy_constants_match_independent_derivation(toy):
    assert toy.M.data[0] == oracles.TOY_M
    assert toy.N.data[0] == oracles.TOY_N


@pytest.mark.parametrize("group_name", ["toy", "production"])
def test_blind_constants_distinct(group_name):
    g = get_group(group_name)
    assert g.M != g.N
    assert g.M != g.identity
    assert g.N != g.identity


def test_exp_zero_is_identity(toy, production):
    for g in (toy, production):
        assert g.exp(g.generator, 0) == g.identity


def test_toy_exp_pencil_arithmetic(toy):
    # 2^3 mod 23 = 8
    assert toy.exp(toy.generator, 3).data[0] == 8


def test_toy_mul_pencil_arithmetic(toy):
    a = toy.decode(bytes([8]))
    b = toy.decode(bytes([2]))
    assert toy.mul(a, b).data[0] == 16


def test_mul_identity(toy, production):
    for g in (toy, production):
        x = g.exp(g.generator, 7)
        assert g.mul(g.identity, x) == x
        assert g.div(x, x) == g.identity
        assert g.div(g.mul(x, g.M), g.M) == x


def test_dh_consistency_exhaustive_toy(toy):
    g = toy.generator
    for a in range(toy.order):
        for b in range(toy.order):
            assert toy.exp(toy.exp(g, a), b) == toy.exp(toy.exp(g, b), a)


def test_dh_consistency_randomized_production(production):
    g = production.generator
    for _ in range(30):
        a = production.random_scalar()
        b = production.random_scalar()
        assert production.exp(production.exp(g, a), b) == production.exp(production.exp(g, b), a)


def test_encode_decode_roundtrip(toy, production):
    for g in (toy, production):
        for _ in range(20):
            x = g.exp(g.generator, g.random_scalar())
            assert g.decode(g.encode(x)) == x
        assert g.decode(g.encode(g.identity)) == g.identity


def test_decode_rejects_truncated(toy, production):
    for g in (toy, production):
        good = g.encode(g.exp(g.generator, 5))
        with pytest.raises(DecodeError):
            g.decode(good[:-1])
        with pytest.raises(DecodeError):
            g.decode(good + b"\x00")


def test_decode_rejects_off_subgroup_toy(toy):
    non_members = [v for v in range(256) if v not in oracles.TOY_MEMBERS]
    assert non_members  # 11 members out of 256 byte values
    for v in non_members:
        with pytest.raises(DecodeError):
            toy.decode(bytes([v]))


def test_decode_rejects_bad_curve_point(production):
    with pytest.raises(DecodeError):
        production.decode(b"\x05" + b"\x00" * 32)  # bad prefix
    # an x with no square y^2: flip bytes until decode fails
    for filler in range(256):
        data = bytes([2]) + bytes([filler]) * 32
        try:
            production.decode(data)
        except DecodeError:
            break
    else:
        pytest.fail("expected some x off the curve")


@given(st.integers(min_value=0, max_value=10), st.integers(min_value=0, max_value=10))
def test_toy_group_law_associative(a, b):
    g = get_group("toy")
    x = g.exp(g.generator, a)
    y = g.exp(g.generator, b)
    assert g.mul(x, y) == g.exp(g.generator, (a + b) % g.order)


def test_scalar_from_password_deterministic(toy):
    ctx = b"ctx"
    assert toy.scalar_from_password(b"hello", ctx) == toy.scalar_from_password(b"hello", ctx)
    assert toy.scalar_from_password(b"hello", ctx) != toy.scalar_from_password(b"hellp", ctx)


def test_scalar_from_password_range_toy(toy):
    s = toy.scalar_from_password(b"a", b"ctx")
    assert s in set(range(toy.order))  # exhaustive residue check


def test_scalar_from_password_rejects_empty(toy):
    with pytest.raises(ValueError):
        toy.scalar_from_password(b"", b"ctx")


def test_scalar_from_password_matches_oracle(toy):
    from pakemail.pake import password_context
    for pi, pw in oracles.TOY_PASSWORD_BY_PI.items():
        assert toy.scalar_from_password(pw, password_context(toy)) == pi


def test_forced_randomness_gated_to_toy(toy, production):
    assert toy.random_scalar(lambda order: 3) == 3
    with pytest.raises(ValueError):
        production.random_scalar(lambda order: 3)


def test_production_constants_have_unknown_dlog_construction(production):
    # membership sanity: M and N decode as valid curve points
    assert production.decode(production.encode(production.M)) == production.M
    assert production.decode(production.encode(production.N)) == production.N


def test_scalar_bytes_width(toy, production):
    assert len(toy.scalar_bytes(5)) == 1
    assert len(production.scalar_bytes(5)) == 32
