import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from eapmd5_lab.crypto import (
    CHALLENGE_BITS,
    Challenge,
    IdByte,
    Password,
    challenge_from_int,
    challenge_rng,
    check_password,
    generate_challenge,
    increment_id,
    md5_digest,
    pad_password,
    widen_id,
    widen_timestamp,
    xor128,
)

blocks = st.binary(min_size=16, max_size=16)

rfc1321_vectors = [
    (b"", "d41d8cd98f00b204e9800998ecf8427e"),
    (b"a", "0cc175b9c0f1b6a831c399e269772661"),
    (b"abc", "900150983cd24fb0d6963f7d28e17f72"),
    (b"message digest", "f96b697d7cb7938d525a2f31aaf161d0"),
    (b"abcdefghijklmnopqrstuvwxyz", "c3fcd3d76192e4007dfb496cca67e13b"),
    (
        b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789",
        "d174ab98d277d9f5a5611c2c9f419d9f",
    ),
    (b"1234567890" * 8, "57edf4a22be3c955ac49da2e2107b67a"),
]


@pytest.mark.parametrize("data,expected", rfc1321_vectors)
def test_md5_rfc1321(data: bytes, expected: str):
    assert md5_digest(data).hex() == expected


@given(blocks, blocks, blocks)
def test_xor128_laws(a: bytes, b: bytes, c: bytes):
    assert xor128(a, bytes(16)) == a
    assert xor128(a, a) == bytes(16)
    assert xor128(xor128(a, b), b) == a
    assert xor128(a, b) == xor128(b, a)
    assert xor128(xor128(a, b), c) == xor128(a, xor128(b, c))


def test_xor128_rejects_wrong_length():
    with pytest.raises(ValueError, match="16 byte operands"):
        xor128(bytes(16), bytes(15))


def test_widen_id():
    assert widen_id(IdByte(0x07)) == bytes(15) + b"\x07"
    assert widen_id(IdByte(0x00)) == bytes(16)
    assert widen_id(IdByte(0xFF)) == bytes(15) + b"\xff"


def test_pad_password():
    assert pad_password(Password(b"A" * 16)) == b"A" * 16
    assert pad_password(Password(b"abcd")) == b"abcd" + bytes(12)
    assert pad_password(Password(bytes(range(20)))) == bytes(range(16))


def test_widen_timestamp():
    assert widen_timestamp(0) == bytes(16)
    assert widen_timestamp(1) == bytes(15) + b"\x01"
    assert widen_timestamp(256)[-2:] == b"\x01\x00"
    assert widen_timestamp(2**64 - 1) == bytes(8) + b"\xff" * 8
    with pytest.raises(ValueError):
        widen_timestamp(2**64)


def test_increment_id():
    assert increment_id(IdByte(0x00)) == 0x01
    assert increment_id(IdByte(0xFE)) == 0xFF
    assert increment_id(IdByte(0xFF)) == 0x00


def test_check_password(caplog):
    assert check_password(b"x" * 16) == b"x" * 16
    assert caplog.messages == []
    assert check_password(b"short") == b"short"
    assert caplog.messages == [
        "Password is only 5 bytes long, at least 16 bytes are recommended"
    ]
    with pytest.raises(ValueError):
        check_password(b"")
    with pytest.raises(ValueError):
        check_password(b"x" * 65)


def test_generate_challenge_seeded():
    rng_a = challenge_rng(42)
    rng_b = challenge_rng(42)
    sequence_a = [generate_challenge(rng=rng_a) for _ in range(5)]
    sequence_b = [generate_challenge(rng=rng_b) for _ in range(5)]
    assert sequence_a == sequence_b
    assert len(set(sequence_a)) == 5


def test_generate_challenge_masks_high_bits():
    rng = random.Random(0)
    for bits in range(1, CHALLENGE_BITS + 1):
        for _ in range(8):
            challenge = generate_challenge(bits, rng)
            assert int(challenge) >> bits == 0
            assert challenge.effective_bits == bits
    assert generate_challenge(8, rng).value[:15] == bytes(15)


def test_generate_challenge_range():
    with pytest.raises(ValueError):
        generate_challenge(0)
    with pytest.raises(ValueError):
        generate_challenge(129)


def test_challenge_validation():
    with pytest.raises(ValueError, match="16 bytes"):
        Challenge(bytes(8))
    with pytest.raises(ValueError, match="above bit 4"):
        challenge_from_int(0x10, 4)
    # effective_bits is not part of the identity
    assert challenge_from_int(3, 2) == challenge_from_int(3)
