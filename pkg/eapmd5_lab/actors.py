"""State machines of the applicant, the authenticator (relay) and the server.

The step functions are pure apart from the clock reading, the challenge generator and
the freshness policy of the server: they take a SessionState and an incoming message
and return the next SessionState together with the message to send, if any.

Phases, applicant:     Idle -> AwaitIdentity -> AwaitChallenge -> AwaitResponse -> Done
Phases, server:        Idle -> AwaitIdentity -> AwaitResponse -> Done
Phases, authenticator: AwaitIdentity -> AwaitChallenge -> AwaitResponse -> Done

An unknown username takes the server (and then the applicant) from the identity
exchange directly to Done with a reject verdict.
"""

import logging
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Dict, Mapping, Optional, Tuple

from eapmd5_lab.common import Clock, ProtocolViolation, Timestamp
from eapmd5_lab.crypto import (
    CHALLENGE_BITS,
    Challenge,
    ChallengeRng,
    IdByte,
    Password,
    generate_challenge,
    increment_id,
)
from eapmd5_lab.protocol import (
    BaselineResponse,
    ChallengeMasked,
    ChallengePlain,
    HardenedResponse,
    IdentityRequest,
    IdentityResponse,
    Message,
    ProtocolVariant,
    Start,
    Verdict,
    baseline_response,
    decode_message,
    describe,
    encode_message,
    make_request,
    make_response,
    recover_c,
    server_expected_response,
)

logger = logging.getLogger(__name__)

DEFAULT_WINDOW_MILLIS = 30_000


class Role(str, Enum):
    APPLICANT = "applicant"
    AUTHENTICATOR = "authenticator"
    SERVER = "server"


class Phase(str, Enum):
    IDLE = "idle"
    AWAIT_IDENTITY = "await-identity"
    AWAIT_CHALLENGE = "await-challenge"
    AWAIT_RESPONSE = "await-response"
    DONE = "done"


class Direction(str, Enum):
    # applicant -> authenticator -> server
    UPSTREAM = "upstream"
    # server -> authenticator -> applicant
    DOWNSTREAM = "downstream"


@dataclass(frozen=True)
class SessionState:
    role: Role
    variant: ProtocolVariant
    phase: Phase = Phase.IDLE
    id: Optional[IdByte] = None
    # Only the server and the baseline applicant ever learn the challenge
    challenge: Optional[Challenge] = None
    username: bytes = b""
    verdict: Optional[bool] = None


@dataclass(frozen=True)
class UserRecord:
    username: bytes
    password: Password


@dataclass(frozen=True)
class ApplicantSecrets:
    username: bytes
    password: Password


@dataclass
class FreshnessPolicy:
    """Timestamp check of the hardened server.

    A response timestamp is fresh if it is within `window_millis` of the server's clock
    and strictly newer than the last accepted timestamp of the same user. The second
    rule closes replays inside the window.
    """

    window_millis: int = DEFAULT_WINDOW_MILLIS
    last_accepted: Dict[bytes, Timestamp] = field(default_factory=dict)
    _lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )

    def __post_init__(self):
        if self.window_millis <= 0:
            raise ValueError(
                f"The freshness window must be positive, got {self.window_millis}"
            )

    def rejection_reason(
        self, username: bytes, timestamp: Timestamp, now: Timestamp
    ) -> Optional[str]:
        if abs(now - timestamp) > self.window_millis:
            return (
                f"timestamp {timestamp} is {now - timestamp}ms off the server clock "
                f"({self.window_millis}ms window)"
            )
        last = self.last_accepted.get(username)
        if last is not None and timestamp <= last:
            return f"timestamp {timestamp} is not newer than last accepted {last}"
        return None

    def accept_if_fresh(
        self,
        username: bytes,
        timestamp: Timestamp,
        now: Timestamp,
        verify: Callable[[], bool],
    ) -> bool:
        """Atomically checks freshness, runs `verify` and records the timestamp on
        success"""
        with self._lock:
            if reason := self.rejection_reason(username, timestamp, now):
                logger.warning(f"Rejecting response for {username!r}: {reason}")
                return False
            if not verify():
                return False
            self.last_accepted[username] = timestamp
            return True


def _violation(state: SessionState, incoming: Optional[Message]) -> ProtocolViolation:
    received = describe(incoming) if incoming is not None else "nothing"
    return ProtocolViolation(
        f"{state.role.value} ({state.variant.value}) in phase {state.phase.value} "
        f"received {received}"
    )


def applicant_step(
    state: SessionState,
    incoming: Optional[Message],
    secrets: ApplicantSecrets,
    clock: Clock,
) -> Tuple[SessionState, Optional[Message]]:
    if state.phase == Phase.IDLE and incoming is None:
        return replace(state, phase=Phase.AWAIT_IDENTITY), Start()

    if state.phase == Phase.AWAIT_IDENTITY and isinstance(incoming, IdentityRequest):
        return (
            replace(
                state,
                phase=Phase.AWAIT_CHALLENGE,
                id=incoming.id,
                username=secrets.username,
            ),
            IdentityResponse(incoming.id, secrets.username),
        )

    if state.phase == Phase.AWAIT_CHALLENGE:
        if state.variant == ProtocolVariant.BASELINE and isinstance(
            incoming, ChallengePlain
        ):
            if incoming.id_plus1 != increment_id(state.id):
                raise ProtocolViolation(
                    f"Challenge carries ID+1={incoming.id_plus1}, "
                    f"but the session ID is {state.id}"
                )
            digest = baseline_response(
                incoming.id_plus1, secrets.password, incoming.challenge
            )
            return (
                replace(state, phase=Phase.AWAIT_RESPONSE, challenge=incoming.challenge),
                BaselineResponse(digest),
            )
        if state.variant == ProtocolVariant.HARDENED and isinstance(
            incoming, ChallengeMasked
        ):
            if incoming.id != state.id:
                raise ProtocolViolation(
                    f"Masked challenge carries ID={incoming.id}, "
                    f"but the session ID is {state.id}"
                )
            c = recover_c(incoming.request, secrets.password)
            timestamp = clock()
            return (
                replace(state, phase=Phase.AWAIT_RESPONSE),
                HardenedResponse(make_response(c, timestamp), timestamp),
            )

    if state.phase in (Phase.AWAIT_CHALLENGE, Phase.AWAIT_RESPONSE) and isinstance(
        incoming, Verdict
    ):
        return replace(state, phase=Phase.DONE, verdict=incoming.accept), None

    raise _violation(state, incoming)


def authenticator_forward(incoming: Message, direction: Direction) -> Message:
    """Relays a message with identical content. Like a real access point the relay
    re-frames everything it forwards, here by a full re-encode"""
    forwarded = decode_message(encode_message(incoming))
    logger.debug(f"Relaying {direction.value}: {describe(forwarded)}")
    return forwarded


class Authenticator:
    """The relay between applicant and server. It picks the one byte session ID from a
    counter and otherwise only forwards"""

    next_id: IdByte

    def __init__(self, id_seed: int = 0):
        if not 0 <= id_seed <= 255:
            raise ValueError(f"The ID seed is a single byte, got {id_seed}")
        self.next_id = IdByte(id_seed)
        self._lock = threading.Lock()

    def open_session(
        self, variant: ProtocolVariant
    ) -> Tuple[SessionState, IdentityRequest]:
        """Called on Start, answers with the identity request"""
        with self._lock:
            id_byte = self.next_id
            self.next_id = increment_id(id_byte)
        state = SessionState(
            Role.AUTHENTICATOR, variant, phase=Phase.AWAIT_IDENTITY, id=id_byte
        )
        return state, IdentityRequest(id_byte)

    @staticmethod
    def relay(
        state: SessionState, incoming: Message, direction: Direction
    ) -> Tuple[SessionState, Message]:
        if isinstance(incoming, IdentityResponse):
            state = replace(
                state, phase=Phase.AWAIT_CHALLENGE, username=incoming.username
            )
        elif isinstance(incoming, (ChallengePlain, ChallengeMasked)):
            state = replace(state, phase=Phase.AWAIT_RESPONSE)
        elif isinstance(incoming, Verdict):
            state = replace(state, phase=Phase.DONE, verdict=incoming.accept)
        return state, authenticator_forward(incoming, direction)


def server_step(
    state: SessionState,
    incoming: Message,
    db: Mapping[bytes, Password],
    policy: FreshnessPolicy,
    clock: Clock,
    rng: Optional[ChallengeRng] = None,
    entropy_bits: int = CHALLENGE_BITS,
) -> Tuple[SessionState, Optional[Message]]:
    if state.phase == Phase.IDLE and isinstance(incoming, Start):
        return replace(state, phase=Phase.AWAIT_IDENTITY), None

    if state.phase == Phase.AWAIT_IDENTITY and isinstance(incoming, IdentityResponse):
        password = db.get(incoming.username)
        if password is None:
            logger.info(f"Unknown username {incoming.username!r}, rejecting")
            done = replace(
                state,
                phase=Phase.DONE,
                id=incoming.id,
                username=incoming.username,
                verdict=False,
            )
            return done, Verdict(False)
        challenge = generate_challenge(entropy_bits, rng)
        state = replace(
            state,
            phase=Phase.AWAIT_RESPONSE,
            id=incoming.id,
            username=incoming.username,
            challenge=challenge,
        )
        if state.variant == ProtocolVariant.BASELINE:
            return state, ChallengePlain(increment_id(incoming.id), challenge)
        else:
            request = make_request(incoming.id, challenge, password)
            return state, ChallengeMasked(incoming.id, request)

    if state.phase == Phase.AWAIT_RESPONSE:
        if state.variant == ProtocolVariant.BASELINE and isinstance(
            incoming, BaselineResponse
        ):
            password = db.get(state.username)
            accept = password is not None and incoming.digest == baseline_response(
                increment_id(state.id), password, state.challenge
            )
            logger.debug(f"Baseline response for {state.username!r}: {accept}")
            return replace(state, phase=Phase.DONE, verdict=accept), Verdict(accept)
        if state.variant == ProtocolVariant.HARDENED and isinstance(
            incoming, HardenedResponse
        ):
            accept = policy.accept_if_fresh(
                state.username,
                incoming.timestamp,
                clock(),
                lambda: incoming.digest
                == server_expected_response(
                    state.id, state.challenge, incoming.timestamp
                ),
            )
            logger.debug(f"Hardened response for {state.username!r}: {accept}")
            return replace(state, phase=Phase.DONE, verdict=accept), Verdict(accept)

    raise _violation(state, incoming)
