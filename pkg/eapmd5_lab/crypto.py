"""Byte-level building blocks shared by both handshake variants.

Everything here is a pure function over values. Widening rules for the operands of the
XORs (one byte ID, variable length password, 64 bit timestamp against 128 bit blocks):

* ID: least significant byte of an otherwise zero block
* password: first 16 bytes, or zero padded to 16 bytes
* timestamp: big endian in the low 8 bytes
"""

import hashlib
import logging
import random
import secrets
from dataclasses import dataclass, field
from typing import NewType, Optional, Union

from eapmd5_lab.common import TIMESTAMP_MAX, Timestamp

logger = logging.getLogger(__name__)

BLOCK_LEN = 16
CHALLENGE_BITS = 128
PASSWORD_MAX_LEN = 64
PASSWORD_RECOMMENDED_LEN = 16

Digest128 = NewType("Digest128", bytes)
IdByte = NewType("IdByte", int)
Password = NewType("Password", bytes)

# Either a seeded `random.Random` or `secrets.SystemRandom`
ChallengeRng = Union[random.Random, secrets.SystemRandom]


@dataclass(frozen=True)
class Challenge:
    """The server's nonce. `effective_bits` restricts the entropy for desk-scale attack
    experiments; it is not transmitted and doesn't take part in equality"""

    value: bytes
    effective_bits: int = field(default=CHALLENGE_BITS, compare=False)

    def __post_init__(self):
        if len(self.value) != BLOCK_LEN:
            raise ValueError(
                f"A challenge is {BLOCK_LEN} bytes, got {len(self.value)} bytes"
            )
        if not 1 <= self.effective_bits <= CHALLENGE_BITS:
            raise ValueError(
                f"effective_bits must be in 1..={CHALLENGE_BITS}, "
                f"got {self.effective_bits}"
            )
        if int.from_bytes(self.value, "big") >> self.effective_bits:
            raise ValueError(
                f"Challenge has bits set above bit {self.effective_bits}: "
                f"{self.value.hex()}"
            )

    def __int__(self) -> int:
        return int.from_bytes(self.value, "big")


def md5_digest(data: bytes) -> Digest128:
    return Digest128(hashlib.md5(data, usedforsecurity=False).digest())


def xor128(a: bytes, b: bytes) -> bytes:
    if len(a) != BLOCK_LEN or len(b) != BLOCK_LEN:
        raise ValueError(
            f"xor128 needs two {BLOCK_LEN} byte operands, got {len(a)} and {len(b)}"
        )
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(
        BLOCK_LEN, "big"
    )


def widen_id(id_byte: IdByte) -> bytes:
    return bytes(BLOCK_LEN - 1) + bytes([id_byte])


def pad_password(password: Password) -> bytes:
    return password[:BLOCK_LEN].ljust(BLOCK_LEN, b"\x00")


def widen_timestamp(timestamp: Timestamp) -> bytes:
    if not 0 <= timestamp <= TIMESTAMP_MAX:
        raise ValueError(f"Timestamp {timestamp} doesn't fit into 64 bits")
    return bytes(8) + timestamp.to_bytes(8, "big")


def increment_id(id_byte: IdByte) -> IdByte:
    return IdByte((id_byte + 1) % 256)


def check_password(password: bytes) -> Password:
    """Validates the length and warns about passwords below the recommended length"""
    if not 1 <= len(password) <= PASSWORD_MAX_LEN:
        raise ValueError(
            f"Passwords must be 1 to {PASSWORD_MAX_LEN} bytes long, "
            f"got {len(password)} bytes"
        )
    if len(password) < PASSWORD_RECOMMENDED_LEN:
        logger.warning(
            f"Password is only {len(password)} bytes long, "
            f"at least {PASSWORD_RECOMMENDED_LEN} bytes are recommended"
        )
    return Password(password)


def challenge_rng(seed: Optional[int] = None) -> ChallengeRng:
    if seed is None:
        return secrets.SystemRandom()
    return random.Random(seed)


def challenge_from_int(value: int, effective_bits: int = CHALLENGE_BITS) -> Challenge:
    return Challenge(value.to_bytes(BLOCK_LEN, "big"), effective_bits)


def generate_challenge(
    entropy_bits: int = CHALLENGE_BITS, rng: Optional[ChallengeRng] = None
) -> Challenge:
    """Uniform over 2^entropy_bits values; the high bits stay zero"""
    if not 1 <= entropy_bits <= CHALLENGE_BITS:
        raise ValueError(
            f"entropy_bits must be in 1..={CHALLENGE_BITS}, got {entropy_bits}"
        )
    if rng is None:
        rng = secrets.SystemRandom()
    return challenge_from_int(rng.getrandbits(entropy_bits), entropy_bits)
