"""Message vocabulary, wire codec and the cryptographic computations of both variants.

Wire format of one frame: 1 byte type tag, 2 byte big endian payload length, payload.

| tag  | message          | payload                                  |
|------|------------------|------------------------------------------|
| 0x01 | Start            | (empty)                                  |
| 0x02 | IdentityRequest  | id                                       |
| 0x03 | IdentityResponse | id, username (1..=64 bytes)              |
| 0x04 | ChallengePlain   | id+1, 16 byte challenge                  |
| 0x05 | ChallengeMasked  | id, 16 byte request                      |
| 0x06 | BaselineResponse | 16 byte digest                           |
| 0x07 | HardenedResponse | 16 byte digest, 8 byte big endian millis |
| 0x08 | Verdict          | 0x00 reject, 0x01 accept                 |
"""

import asyncio
import logging
import struct
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Dict, Optional, Type, Union

from eapmd5_lab.common import TIMESTAMP_MAX, DecodeError, Timestamp
from eapmd5_lab.crypto import (
    BLOCK_LEN,
    Challenge,
    Digest128,
    IdByte,
    Password,
    md5_digest,
    pad_password,
    widen_id,
    widen_timestamp,
    xor128,
)

logger = logging.getLogger(__name__)

USERNAME_MAX_LEN = 64
HEADER = struct.Struct(">BH")

# MD5 invocations of one honest session, applicant and server together
BASELINE_SESSION_MD5_CALLS = 2
HARDENED_SESSION_MD5_CALLS = 4


class ProtocolVariant(str, Enum):
    BASELINE = "baseline"
    HARDENED = "hardened"


def _check_id(value: int):
    if not 0 <= value <= 255:
        raise ValueError(f"An ID is a single byte, got {value}")


def _check_block(name: str, value: bytes):
    if len(value) != BLOCK_LEN:
        raise ValueError(f"{name} must be {BLOCK_LEN} bytes, got {len(value)}")


@dataclass(frozen=True)
class Start:
    tag: ClassVar[int] = 0x01


@dataclass(frozen=True)
class IdentityRequest:
    tag: ClassVar[int] = 0x02
    id: IdByte

    def __post_init__(self):
        _check_id(self.id)


@dataclass(frozen=True)
class IdentityResponse:
    tag: ClassVar[int] = 0x03
    id: IdByte
    username: bytes

    def __post_init__(self):
        _check_id(self.id)
        if not 1 <= len(self.username) <= USERNAME_MAX_LEN:
            raise ValueError(
                f"Usernames must be 1 to {USERNAME_MAX_LEN} bytes, "
                f"got {len(self.username)}"
            )


@dataclass(frozen=True)
class ChallengePlain:
    tag: ClassVar[int] = 0x04
    id_plus1: IdByte
    challenge: Challenge

    def __post_init__(self):
        _check_id(self.id_plus1)


@dataclass(frozen=True)
class ChallengeMasked:
    tag: ClassVar[int] = 0x05
    id: IdByte
    request: bytes

    def __post_init__(self):
        _check_id(self.id)
        _check_block("request", self.request)


@dataclass(frozen=True)
class BaselineResponse:
    tag: ClassVar[int] = 0x06
    digest: Digest128

    def __post_init__(self):
        _check_block("digest", self.digest)


@dataclass(frozen=True)
class HardenedResponse:
    tag: ClassVar[int] = 0x07
    digest: Digest128
    timestamp: Timestamp

    def __post_init__(self):
        _check_block("digest", self.digest)
        if not 0 <= self.timestamp <= TIMESTAMP_MAX:
            raise ValueError(f"Timestamp {self.timestamp} doesn't fit into 64 bits")


@dataclass(frozen=True)
class Verdict:
    tag: ClassVar[int] = 0x08
    accept: bool


Message = Union[
    Start,
    IdentityRequest,
    IdentityResponse,
    ChallengePlain,
    ChallengeMasked,
    BaselineResponse,
    HardenedResponse,
    Verdict,
]

message_types: Dict[int, Type[Message]] = {
    message_type.tag: message_type
    for message_type in [
        Start,
        IdentityRequest,
        IdentityResponse,
        ChallengePlain,
        ChallengeMasked,
        BaselineResponse,
        HardenedResponse,
        Verdict,
    ]
}


def baseline_response(
    id_plus1: IdByte, password: Password, challenge: Challenge
) -> Digest128:
    """CHAP layout: ID+1 ‖ password (unpadded) ‖ challenge"""
    return md5_digest(bytes([id_plus1]) + password + challenge.value)


def masked_challenge_digest(id_byte: IdByte, challenge: Challenge) -> Digest128:
    """C = hash(ID ⊕ Challenge)"""
    return md5_digest(xor128(widen_id(id_byte), challenge.value))


def make_request(id_byte: IdByte, challenge: Challenge, password: Password) -> bytes:
    return xor128(masked_challenge_digest(id_byte, challenge), pad_password(password))


def recover_c(request: bytes, password: Password) -> Digest128:
    return Digest128(xor128(request, pad_password(password)))


def make_response(c: Digest128, timestamp: Timestamp) -> Digest128:
    return md5_digest(xor128(c, widen_timestamp(timestamp)))


def server_expected_response(
    id_byte: IdByte, challenge: Challenge, timestamp: Timestamp
) -> Digest128:
    return make_response(masked_challenge_digest(id_byte, challenge), timestamp)


def _payload(message: Message) -> bytes:
    if isinstance(message, Start):
        return b""
    elif isinstance(message, IdentityRequest):
        return bytes([message.id])
    elif isinstance(message, IdentityResponse):
        return bytes([message.id]) + message.username
    elif isinstance(message, ChallengePlain):
        return bytes([message.id_plus1]) + message.challenge.value
    elif isinstance(message, ChallengeMasked):
        return bytes([message.id]) + message.request
    elif isinstance(message, BaselineResponse):
        return message.digest
    elif isinstance(message, HardenedResponse):
        return message.digest + message.timestamp.to_bytes(8, "big")
    elif isinstance(message, Verdict):
        return b"\x01" if message.accept else b"\x00"
    else:
        raise TypeError(f"Not a protocol message: {message!r}")


def encode_message(message: Message) -> bytes:
    payload = _payload(message)
    return HEADER.pack(message.tag, len(payload)) + payload


# Payload sizes of the fixed size messages
fixed_payload_len = {
    Start.tag: 0,
    IdentityRequest.tag: 1,
    ChallengePlain.tag: 1 + BLOCK_LEN,
    ChallengeMasked.tag: 1 + BLOCK_LEN,
    BaselineResponse.tag: BLOCK_LEN,
    HardenedResponse.tag: BLOCK_LEN + 8,
    Verdict.tag: 1,
}


def _decode_payload(tag: int, payload: bytes) -> Message:
    if tag == Start.tag:
        return Start()
    elif tag == IdentityRequest.tag:
        return IdentityRequest(IdByte(payload[0]))
    elif tag == IdentityResponse.tag:
        return IdentityResponse(IdByte(payload[0]), payload[1:])
    elif tag == ChallengePlain.tag:
        return ChallengePlain(IdByte(payload[0]), Challenge(payload[1:]))
    elif tag == ChallengeMasked.tag:
        return ChallengeMasked(IdByte(payload[0]), payload[1:])
    elif tag == BaselineResponse.tag:
        return BaselineResponse(Digest128(payload))
    elif tag == HardenedResponse.tag:
        return HardenedResponse(
            Digest128(payload[:BLOCK_LEN]),
            Timestamp(int.from_bytes(payload[BLOCK_LEN:], "big")),
        )
    else:
        if payload not in (b"\x00", b"\x01"):
            raise DecodeError(f"Invalid verdict byte {payload.hex()}")
        return Verdict(payload == b"\x01")


def decode_message(data: bytes) -> Message:
    """Decodes exactly one frame"""
    if len(data) < HEADER.size:
        raise DecodeError(f"Truncated header: {data.hex()}")
    tag, length = HEADER.unpack_from(data)
    if tag not in message_types:
        raise DecodeError(f"Unknown type tag 0x{tag:02x}")
    payload = data[HEADER.size :]
    if len(payload) < length:
        raise DecodeError(
            f"Truncated {message_types[tag].__name__} payload: "
            f"expected {length} bytes, got {len(payload)}"
        )
    if len(payload) > length:
        raise DecodeError(
            f"{len(payload) - length} trailing bytes after "
            f"{message_types[tag].__name__} frame"
        )
    expected_len = fixed_payload_len.get(tag)
    if expected_len is not None and length != expected_len:
        raise DecodeError(
            f"{message_types[tag].__name__} payload must be {expected_len} bytes, "
            f"got {length}"
        )
    if tag == IdentityResponse.tag and not 2 <= length <= 1 + USERNAME_MAX_LEN:
        raise DecodeError(
            f"IdentityResponse payload must be 2 to {1 + USERNAME_MAX_LEN} bytes, "
            f"got {length}"
        )
    try:
        return _decode_payload(tag, payload)
    except ValueError as err:
        raise DecodeError(
            f"Invalid {message_types[tag].__name__} payload {payload.hex()}: {err}"
        ) from err


async def read_frame(reader: asyncio.StreamReader) -> Optional[bytes]:
    """Reads one complete frame, None on a clean EOF before the header"""
    try:
        header = await reader.readexactly(HEADER.size)
    except asyncio.IncompleteReadError as err:
        if not err.partial:
            return None
        raise DecodeError(f"Truncated header: {err.partial.hex()}") from None
    tag, length = HEADER.unpack(header)
    if tag not in message_types:
        raise DecodeError(f"Unknown type tag 0x{tag:02x}")
    try:
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError as err:
        raise DecodeError(
            f"Truncated {message_types[tag].__name__} payload: "
            f"expected {length} bytes, got {len(err.partial)}"
        ) from None
    return header + payload


def describe(message: Message) -> str:
    """Short form for logs"""
    if isinstance(message, (Start, Verdict)):
        return repr(message)
    if isinstance(message, IdentityResponse):
        return f"IdentityResponse(id={message.id}, username={message.username!r})"
    return f"{type(message).__name__}({_payload(message).hex()})"
