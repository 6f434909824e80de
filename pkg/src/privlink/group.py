"""Prime-order group primitives for commutative blinding.

The default group is NIST P-256, driven through OpenSSL via the
``cryptography`` package.  Elements are represented x-only: a group element
is the 33-byte string ``0x02 || x`` where ``x`` is the big-endian affine
x-coordinate.  Scalar multiplication on x-coordinates is well defined
because x(k*P) = x(k*(-P)), so the sign of y never matters for blinding,
and it lets us use OpenSSL's ECDH primitive (which returns the shared
x-coordinate) for arbitrary-point exponentiation.

Blinding is commutative by construction: raising to a then b equals raising
to b then a, which is what the two-party protocol relies on.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass
from functools import lru_cache

from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

__all__ = [
    "GroupError",
    "Scalar",
    "GroupElement",
    "NodeScalar",
    "GROUP_ORDER",
    "ELEMENT_LEN",
    "SCALAR_LEN",
    "random_scalar",
    "encode_node",
    "blind",
    "reblind",
    "scalar_inverse",
    "generator",
]

_CURVE = ec.SECP256R1()

# NIST P-256 parameters (SEC 2).
GROUP_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_FIELD_PRIME = 0xFFFFFFFF00000001000000000000000000000000FFFFFFFFFFFFFFFFFFFFFFFF
_CURVE_B = 0x5AC635D8AA3A93E7B3EBBD55769886BC651D06B0CC53B0F63BCE3C3E27D2604B

ELEMENT_LEN = 33
SCALAR_LEN = 32

_ELEMENT_PREFIX = 0x02
_HASH_DOMAIN = b"privlink.node-scalar.v1:"


class GroupError(ValueError):
    """Raised on invalid scalars, malformed or non-canonical elements."""


@dataclass(frozen=True, slots=True)
class Scalar:
    """An exponent in [1, q-1] where q is the group order."""

    value: int

    def __post_init__(self):
        if not 1 <= self.value < GROUP_ORDER:
            raise GroupError(f"scalar out of range [1, q-1]: {self.value}")

    def encode(self) -> bytes:
        return self.value.to_bytes(SCALAR_LEN, "big")

    @classmethod
    def decode(cls, data: bytes) -> "Scalar":
        if len(data) != SCALAR_LEN:
            raise GroupError(f"scalar encoding must be {SCALAR_LEN} bytes, got {len(data)}")
        return cls(int.from_bytes(data, "big"))


@dataclass(frozen=True, slots=True)
class GroupElement:
    """A non-identity element of the prime-order group, canonically encoded.

    The encoding is always ``0x02 || x`` (33 bytes).  A ``0x03`` prefix is a
    valid SEC 1 compressed point but not canonical here and is rejected, as
    is any x that does not lie on the curve.  The identity has no encoding.
    """

    encoding: bytes

    @classmethod
    def decode(cls, data: bytes) -> "GroupElement":
        if len(data) != ELEMENT_LEN:
            raise GroupError(f"element encoding must be {ELEMENT_LEN} bytes, got {len(data)}")
        if data[0] != _ELEMENT_PREFIX:
            raise GroupError(f"non-canonical element prefix 0x{data[0]:02x}")
        x = int.from_bytes(data[1:], "big")
        if x >= _FIELD_PRIME:
            raise GroupError("element x-coordinate out of field range")
        # On-curve check: x^3 - 3x + b must be a quadratic residue mod p.
        rhs = (pow(x, 3, _FIELD_PRIME) - 3 * x + _CURVE_B) % _FIELD_PRIME
        if pow(rhs, (_FIELD_PRIME - 1) // 2, _FIELD_PRIME) != 1:
            raise GroupError("element x-coordinate not on curve")
        return cls(bytes(data))


@dataclass(frozen=True, slots=True)
class NodeScalar:
    """A node id together with its deterministically derived exponent."""

    node: int
    scalar: Scalar


@lru_cache(maxsize=512)
def _private_key(value: int) -> ec.EllipticCurvePrivateKey:
    return ec.derive_private_key(value, _CURVE)


def _fixed_base(value: int) -> bytes:
    """Canonical encoding of value * G."""
    compressed = (
        _private_key(value)
        .public_key()
        .public_bytes(Encoding.X962, PublicFormat.CompressedPoint)
    )
    return bytes([_ELEMENT_PREFIX]) + compressed[1:]


def random_scalar(rng=None) -> Scalar:
    """Draw a uniform scalar in [1, q-1].

    ``rng`` must expose ``randrange``; it defaults to a system CSPRNG.  A
    seeded ``random.Random`` may be supplied for reproducible test vectors,
    but production keys must come from a cryptographically secure source.
    """
    if rng is None:
        rng = secrets.SystemRandom()
    return Scalar(rng.randrange(1, GROUP_ORDER))


def encode_node(node_id: int) -> NodeScalar:
    """Map a node id to a nonzero scalar via a domain-separated hash.

    Hashing prevents algebraic relations between consecutive node ids from
    surviving into the exponents.  The (probability ~2^-256) zero residue is
    handled by re-hashing with an incremented counter.
    """
    if node_id < 0:
        raise GroupError(f"node id must be non-negative, got {node_id}")
    counter = 0
    while True:
        digest = hashlib.sha256(
            _HASH_DOMAIN + node_id.to_bytes(8, "big") + counter.to_bytes(4, "big")
        ).digest()
        value = int.from_bytes(digest, "big") % GROUP_ORDER
        if value:
            return NodeScalar(node_id, Scalar(value))
        counter += 1


def blind(ns: NodeScalar, k: Scalar) -> GroupElement:
    """Compute g^(x * k) for node exponent x and blinding key k."""
    exponent = ns.scalar.value * k.value % GROUP_ORDER
    return GroupElement(_fixed_base(exponent))


def reblind(e: GroupElement, k: Scalar) -> GroupElement:
    """Raise an existing element to the key k (e.g. g^(ax) -> g^(abx))."""
    try:
        point = ec.EllipticCurvePublicKey.from_encoded_point(_CURVE, e.encoding)
    except ValueError as exc:
        raise GroupError(f"malformed group element: {exc}") from exc
    shared_x = _private_key(k.value).exchange(ec.ECDH(), point)
    return GroupElement(bytes([_ELEMENT_PREFIX]) + shared_x)


def scalar_inverse(k: Scalar) -> Scalar:
    """Multiplicative inverse mod the group order."""
    return Scalar(pow(k.value, -1, GROUP_ORDER))


def generator() -> GroupElement:
    """The canonical encoding of the group generator (up to y-sign)."""
    return GroupElement(_fixed_base(1))
