"""Prime-order cyclic groups used by the key exchange.

Two instantiations: a production elliptic-curve group (secp256k1, 128-bit
security) and a tiny brute-forceable subgroup of Z_23* for exhaustive
testing. All protocol algebra goes through the abstract :class:`Group`
interface, so the rest of the package never cares which one it runs on.

Scalars are plain Python ints reduced modulo the group order. Elements are
immutable and hashable; encodings are canonical fixed-length big-endian
byte strings.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from typing import Optional


class DecodeError(ValueError):
    """Raised when a byte string is not a canonical group-element encoding."""


@dataclass(frozen=True)
class GroupElement:
    """An element of a specific group, identified by the group's name.

    ``data`` is the canonical encoding; all arithmetic is delegated to the
    owning :class:`Group` so elements stay opaque and immutable.
    """

    group_name: str
    data: bytes

    def __repr__(self) -> str:
        return f"GroupElement({self.group_name}, {self.data.hex()})"


class Group:
    """Abstract prime-order cyclic group.

    Subclasses provide the raw arithmetic; this base class carries the
    public parameters (generator g and the two blinding constants M, N)
    and the scalar/password plumbing shared by every instantiation.
    """

    name: str
    order: int
    security_bits: int
    element_size: int

    # -- raw representation hooks (subclass responsibility) ----------------

    def _raw_mul(self, a: bytes, b: bytes) -> bytes:
        raise NotImplementedError

    def _raw_inv(self, a: bytes) -> bytes:
        raise NotImplementedError

    def _raw_exp(self, base: bytes, e: int) -> bytes:
        raise NotImplementedError

    def _raw_validate(self, data: bytes) -> bytes:
        """Return canonical bytes or raise DecodeError."""
        raise NotImplementedError

    def _identity_bytes(self) -> bytes:
        raise NotImplementedError

    def _generator_bytes(self) -> bytes:
        raise NotImplementedError

    # -- public interface --------------------------------------------------

    @property
    def identity(self) -> GroupElement:
        return GroupElement(self.name, self._identity_bytes())

    @property
    def generator(self) -> GroupElement:
        return GroupElement(self.name, self._generator_bytes())

    @property
    def M(self) -> GroupElement:
        return self._derived_constant(b"pakemail-M")

    @property
    def N(self) -> GroupElement:
        return self._derived_constant(b"pakemail-N")

    def _derived_constant(self, label: bytes) -> GroupElement:
        raise NotImplementedError

    def _check(self, el: GroupElement) -> bytes:
        if el.group_name != self.name:
            raise ValueError(f"element belongs to group {el.group_name!r}, not {self.name!r}")
        return el.data

    def mul(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return GroupElement(self.name, self._raw_mul(self._check(a), self._check(b)))

    def div(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return GroupElement(self.name, self._raw_mul(self._check(a), self._raw_inv(self._check(b))))

    def exp(self, base: GroupElement, e: int) -> GroupElement:
        return GroupElement(self.name, self._raw_exp(self._check(base), e % self.order))

    def encode(self, el: GroupElement) -> bytes:
        return self._check(el)

    def decode(self, data: bytes) -> GroupElement:
        if not isinstance(data, (bytes, bytearray)):
            raise DecodeError("encoding must be bytes")
        if len(data) != self.element_size:
            raise DecodeError(
                f"bad encoding length {len(data)}, expected {self.element_size}"
            )
        return GroupElement(self.name, self._raw_validate(bytes(data)))

    def is_member(self, data: bytes) -> bool:
        try:
            self.decode(data)
        except DecodeError:
            return False
        return True

    def scalar(self, value: int) -> int:
        return value % self.order

    def scalar_bytes(self, value: int) -> bytes:
        """Fixed-width big-endian rendering, used in transcripts."""
        width = (self.order.bit_length() + 7) // 8
        return (value % self.order).to_bytes(width, "big")

    def random_scalar(self, rng=None) -> int:
        """Fresh scalar in [0, order) from a cryptographic source.

        ``rng`` (a callable ``rng(order) -> int``) is accepted only for the
        brute-forceable test group, so production sessions can never be
        constructed with forced randomness.
        """
        if rng is not None:
            if self.security_bits >= 128:
                raise ValueError("forced randomness is not available in production groups")
            return rng(self.order) % self.order
        return secrets.randbelow(self.order)

    def scalar_from_password(self, password: bytes, context: bytes) -> int:
        """Hash a low-entropy secret to a scalar, domain-separated by context."""
        if not password:
            raise ValueError("password must be non-empty")
        h = hashlib.sha512()
        h.update(len(context).to_bytes(4, "big"))
        h.update(context)
        h.update(len(password).to_bytes(4, "big"))
        h.update(password)
        return int.from_bytes(h.digest(), "big") % self.order


# ---------------------------------------------------------------------------
# Toy group: order-11 subgroup of Z_23*, generator 2. Discrete logs are
# trivially brute-forceable, which is exactly what the exhaustive protocol
# oracles need.
# ---------------------------------------------------------------------------

class ToyGroup(Group):

    name = "toy-z23"
    modulus = 23
    order = 11
    security_bits = 3
    element_size = 1
    _gen = 2

    def __init__(self) -> None:
        self._members = frozenset(pow(self._gen, k, self.modulus) for k in range(self.order))

    def _raw_mul(self, a: bytes, b: bytes) -> bytes:
        return bytes([(a[0] * b[0]) % self.modulus])

    def _raw_inv(self, a: bytes) -> bytes:
        return bytes([pow(a[0], -1, self.modulus)])

    def _raw_exp(self, base: bytes, e: int) -> bytes:
        return bytes([pow(base[0], e, self.modulus)])

    def _raw_validate(self, data: bytes) -> bytes:
        if data[0] not in self._members:
            raise DecodeError(f"{data[0]} is not in the order-{self.order} subgroup")
        return data

    def _identity_bytes(self) -> bytes:
        return b"\x01"

    def _generator_bytes(self) -> bytes:
        return bytes([self._gen])

    def _derived_constant(self, label: bytes) -> GroupElement:
        # Try-and-increment over subgroup members; dlogs are brute-forceable
        # here anyway, this group exists only for testing.
        counter = 0
        while True:
            h = hashlib.sha256(label + counter.to_bytes(4, "big")).digest()
            candidate = h[0] % self.modulus
            if candidate in self._members and candidate != 1:
                return GroupElement(self.name, bytes([candidate]))
            counter += 1

    def elements(self):
        """All subgroup members, for exhaustive checks."""
        g = self.generator
        return [self.exp(g, k) for k in range(self.order)]


# ---------------------------------------------------------------------------
# Production group: secp256k1 (prime order, cofactor 1). Jacobian-coordinate
# arithmetic keeps scalar multiplication around 2 ms in pure Python, which is
# fast enough for the randomized acceptance sweeps.
# ---------------------------------------------------------------------------

_P = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEFFFFFC2F
_N = 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFEBAAEDCE6AF48A03BBFD25E8CD0364141
_GX = 0x79BE667EF9DCBBAC55A06295CE870B07029BFCDB2DCE28D959F2815B16F81798
_GY = 0x483ADA7726A3C4655DA4FBFC0E1108A8FD17B448A68554199C47D08FFB10D4B8

_Affine = Optional[tuple]  # None is the point at infinity


def _ec_jadd(P, Q):
    if P is None:
        return Q
    if Q is None:
        return P
    X1, Y1, Z1 = P
    X2, Y2, Z2 = Q
    Z1Z1 = Z1 * Z1 % _P
    Z2Z2 = Z2 * Z2 % _P
    U1 = X1 * Z2Z2 % _P
    U2 = X2 * Z1Z1 % _P
    S1 = Y1 * Z2 * Z2Z2 % _P
    S2 = Y2 * Z1 * Z1Z1 % _P
    if U1 == U2:
        if S1 != S2:
            return None
        return _ec_jdbl(P)
    H = U2 - U1
    I = 4 * H * H % _P
    J = H * I % _P
    r = 2 * (S2 - S1)
    V = U1 * I % _P
    X3 = (r * r - J - 2 * V) % _P
    Y3 = (r * (V - X3) - 2 * S1 * J) % _P
    Z3 = 2 * H * Z1 * Z2 % _P
    return (X3, Y3, Z3)


def _ec_jdbl(P):
    if P is None:
        return None
    X1, Y1, Z1 = P
    A = X1 * X1 % _P
    B = Y1 * Y1 % _P
    C = B * B % _P
    D = 2 * ((X1 + B) * (X1 + B) - A - C) % _P
    E = 3 * A
    F = E * E % _P
    X3 = (F - 2 * D) % _P
    Y3 = (E * (D - X3) - 8 * C) % _P
    Z3 = 2 * Y1 * Z1 % _P
    return (X3, Y3, Z3)


def _ec_mul(k: int, P: _Affine) -> _Affine:
    if k == 0 or P is None:
        return None
    R = None
    Q = (P[0], P[1], 1)
    while k:
        if k & 1:
            R = _ec_jadd(R, Q)
        Q = _ec_jdbl(Q)
        k >>= 1
    return _ec_to_affine(R)


def _ec_add(P: _Affine, Q: _Affine) -> _Affine:
    if P is None:
        return Q
    if Q is None:
        return P
    return _ec_to_affine(_ec_jadd((P[0], P[1], 1), (Q[0], Q[1], 1)))


def _ec_to_affine(P) -> _Affine:
    if P is None:
        return None
    X, Y, Z = P
    zinv = pow(Z, -1, _P)
    zinv2 = zinv * zinv % _P
    return (X * zinv2 % _P, Y * zinv2 * zinv % _P)


def _ec_on_curve(x: int, y: int) -> bool:
    return (y * y - (x * x * x + 7)) % _P == 0


class Secp256k1Group(Group):
    """secp256k1 with 33-byte compressed SEC1 encodings.

    The point at infinity (the group identity) is encoded as 33 zero
    bytes, keeping the encoding fixed-length and canonical.
    """

    name = "secp256k1"
    order = _N
    security_bits = 128
    element_size = 33

    _INFINITY = b"\x00" * 33

    def __init__(self) -> None:
        self._constants: dict = {}

    @staticmethod
    def _point_to_bytes(P: _Affine) -> bytes:
        if P is None:
            return Secp256k1Group._INFINITY
        x, y = P
        return bytes([2 + (y & 1)]) + x.to_bytes(32, "big")

    @staticmethod
    def _bytes_to_point(data: bytes) -> _Affine:
        if data == Secp256k1Group._INFINITY:
            return None
        prefix = data[0]
        if prefix not in (2, 3):
            raise DecodeError(f"bad point prefix {prefix:#x}")
        x = int.from_bytes(data[1:], "big")
        if x >= _P:
            raise DecodeError("x coordinate out of range")
        y2 = (pow(x, 3, _P) + 7) % _P
        y = pow(y2, (_P + 1) // 4, _P)
        if y * y % _P != y2:
            raise DecodeError("x is not on the curve")
        if (y & 1) != (prefix & 1):
            y = _P - y
        return (x, y)

    def _raw_mul(self, a: bytes, b: bytes) -> bytes:
        return self._point_to_bytes(_ec_add(self._bytes_to_point(a), self._bytes_to_point(b)))

    def _raw_inv(self, a: bytes) -> bytes:
        P = self._bytes_to_point(a)
        if P is None:
            return self._INFINITY
        return self._point_to_bytes((P[0], _P - P[1]))

    def _raw_exp(self, base: bytes, e: int) -> bytes:
        return self._point_to_bytes(_ec_mul(e, self._bytes_to_point(base)))

    def _raw_validate(self, data: bytes) -> bytes:
        self._bytes_to_point(data)
        return data

    def _identity_bytes(self) -> bytes:
        return self._INFINITY

    def _generator_bytes(self) -> bytes:
        return self._point_to_bytes((_GX, _GY))

    def _derived_constant(self, label: bytes) -> GroupElement:
        # Hash-to-group by try-and-increment on the x coordinate; nobody
        # knows the discrete log of the resulting point.
        cached = self._constants.get(label)
        if cached is not None:
            return cached
        counter = 0
        while True:
            h = hashlib.sha256(label + counter.to_bytes(4, "big")).digest()
            x = int.from_bytes(h, "big")
            if x < _P:
                y2 = (pow(x, 3, _P) + 7) % _P
                y = pow(y2, (_P + 1) // 4, _P)
                if y * y % _P == y2:
                    el = GroupElement(self.name, self._point_to_bytes((x, min(y, _P - y))))
                    self._constants[label] = el
                    return el
            counter += 1


_REGISTRY = {}


def get_group(name: str) -> Group:
    """Shared group instances by name ('production'/'secp256k1' or 'toy')."""
    key = {"production": "secp256k1", "toy": "toy-z23"}.get(name, name)
    if key not in _REGISTRY:
        if key == "secp256k1":
            _REGISTRY[key] = Secp256k1Group()
        elif key == "toy-z23":
            _REGISTRY[key] = ToyGroup()
        else:
            raise ValueError(f"unknown group {name!r}")
    return _REGISTRY[key]
