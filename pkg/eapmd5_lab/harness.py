"""In-memory transport for the three actors with a passive wiretap on both links"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Mapping, Optional, Tuple, Type, TypeVar

from eapmd5_lab.actors import (
    ApplicantSecrets,
    Authenticator,
    Direction,
    FreshnessPolicy,
    Phase,
    Role,
    SessionState,
    applicant_step,
    authenticator_forward,
    server_step,
)
from eapmd5_lab.common import (
    AttackError,
    Clock,
    DecodeError,
    ProtocolViolation,
    SystemClock,
    Timestamp,
)
from eapmd5_lab.crypto import CHALLENGE_BITS, Password, challenge_rng
from eapmd5_lab.protocol import (
    BaselineResponse,
    HardenedResponse,
    IdentityResponse,
    Message,
    ProtocolVariant,
    Start,
    Verdict,
    decode_message,
    describe,
    encode_message,
)

logger = logging.getLogger(__name__)

M = TypeVar("M")


class Hop(str, Enum):
    APPLICANT_TO_AUTH = "app>auth"
    AUTH_TO_SERVER = "auth>srv"
    SERVER_TO_AUTH = "srv>auth"
    AUTH_TO_APPLICANT = "auth>app"


@dataclass(frozen=True)
class TranscriptEntry:
    hop: Hop
    message: Message
    capture_time: Timestamp


@dataclass
class Transcript:
    """Everything the passive eavesdropper saw of one session, in causal order"""

    variant: ProtocolVariant
    entries: List[TranscriptEntry] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def first(self, message_type: Type[M]) -> Optional[M]:
        for entry in self.entries:
            if isinstance(entry.message, message_type):
                return entry.message
        return None

    def applicant_messages(self) -> List[Message]:
        return [
            entry.message
            for entry in self.entries
            if entry.hop == Hop.APPLICANT_TO_AUTH
        ]

    def encoded(self) -> List[bytes]:
        return [encode_message(entry.message) for entry in self.entries]


class SessionAborted(ProtocolViolation):
    """A session ended with a protocol violation; carries what was captured so far"""

    transcript: Transcript

    def __init__(self, message: str, transcript: Transcript):
        super().__init__(message)
        self.transcript = transcript


class InMemoryChannel:
    """Both links of one session. Every message is encoded to its wire bytes, recorded
    in `delivered` and decoded again on the receiving side. With the tap enabled the
    message is also appended to the transcript before it is delivered.

    The tap reads its own clock so that tapping never consumes readings of the
    protocol clock.
    """

    delivered: List[Tuple[Hop, bytes]]
    transcript: Transcript
    tap: bool

    def __init__(
        self,
        variant: ProtocolVariant,
        tap: bool = True,
        capture_clock: Optional[Clock] = None,
    ):
        self.delivered = []
        self.transcript = Transcript(variant)
        self.tap = tap
        self.capture_clock = capture_clock or SystemClock()

    def deliver(self, hop: Hop, message: Message) -> Message:
        encoded = encode_message(message)
        self.delivered.append((hop, encoded))
        if self.tap:
            self.transcript.entries.append(
                TranscriptEntry(hop, message, self.capture_clock())
            )
        logger.debug(f"{hop.value} {describe(message)}")
        return decode_message(encoded)


def run_session(
    variant: ProtocolVariant,
    secrets: ApplicantSecrets,
    db: Mapping[bytes, Password],
    policy: FreshnessPolicy,
    rng_seed: Optional[int] = None,
    clock: Optional[Clock] = None,
    *,
    id_seed: int = 0,
    entropy_bits: int = CHALLENGE_BITS,
    channel: Optional[InMemoryChannel] = None,
) -> Tuple[bool, Transcript]:
    """Runs one handshake to completion and returns the applicant's verdict together
    with the wiretap transcript"""
    clock = clock or SystemClock()
    channel = channel or InMemoryChannel(variant)
    rng = challenge_rng(rng_seed)
    authenticator = Authenticator(id_seed)

    applicant = SessionState(Role.APPLICANT, variant)
    server = SessionState(Role.SERVER, variant)

    try:
        applicant, start = applicant_step(applicant, None, secrets, clock)
        start = channel.deliver(Hop.APPLICANT_TO_AUTH, start)
        relay, identity_request = authenticator.open_session(variant)
        start = channel.deliver(
            Hop.AUTH_TO_SERVER, authenticator_forward(start, Direction.UPSTREAM)
        )
        server, _ = server_step(server, start, db, policy, clock, rng, entropy_bits)
        identity_request = channel.deliver(Hop.AUTH_TO_APPLICANT, identity_request)
        applicant, pending = applicant_step(
            applicant, identity_request, secrets, clock
        )

        while applicant.phase != Phase.DONE:
            message = channel.deliver(Hop.APPLICANT_TO_AUTH, pending)
            relay, message = Authenticator.relay(relay, message, Direction.UPSTREAM)
            message = channel.deliver(Hop.AUTH_TO_SERVER, message)
            server, reply = server_step(
                server, message, db, policy, clock, rng, entropy_bits
            )
            if reply is None:
                raise ProtocolViolation(f"Server did not answer {describe(message)}")
            reply = channel.deliver(Hop.SERVER_TO_AUTH, reply)
            relay, reply = Authenticator.relay(relay, reply, Direction.DOWNSTREAM)
            reply = channel.deliver(Hop.AUTH_TO_APPLICANT, reply)
            applicant, pending = applicant_step(applicant, reply, secrets, clock)
    except (ProtocolViolation, DecodeError) as err:
        raise SessionAborted(
            f"{variant.value} session aborted: {err}", channel.transcript
        ) from err

    logger.debug(
        f"{variant.value} session for {secrets.username!r} ended with "
        f"{'accept' if applicant.verdict else 'reject'}"
    )
    return bool(applicant.verdict), channel.transcript


def replay_session(
    original: Transcript,
    db: Mapping[bytes, Password],
    policy: FreshnessPolicy,
    clock: Optional[Clock] = None,
    rng_seed: Optional[int] = None,
    entropy_bits: int = CHALLENGE_BITS,
) -> bool:
    """Re-delivers the captured applicant messages verbatim to a fresh server session
    and returns the server's verdict.

    Pass the seed of the original session to make the server repeat its challenge, the
    most favourable case for the replaying adversary.
    """
    clock = clock or SystemClock()
    messages = original.applicant_messages()
    response_type = (
        BaselineResponse
        if original.variant == ProtocolVariant.BASELINE
        else HardenedResponse
    )
    kinds = [type(message) for message in messages]
    if kinds != [Start, IdentityResponse, response_type]:
        raise AttackError(
            f"Can't replay an incomplete {original.variant.value} transcript, the "
            f"applicant sent {', '.join(kind.__name__ for kind in kinds) or 'nothing'}"
        )

    rng = challenge_rng(rng_seed)
    server = SessionState(Role.SERVER, original.variant)
    reply = None
    for message in messages:
        server, reply = server_step(
            server, message, db, policy, clock, rng, entropy_bits
        )
        if isinstance(reply, Verdict):
            break
    accept = isinstance(reply, Verdict) and reply.accept
    logger.info(
        f"Replayed {original.variant.value} transcript: "
        f"{'accept' if accept else 'reject'}"
    )
    return accept
