"""The three actors over TCP, speaking the same frames as the in-memory harness.

One session per connection. The authenticator opens a fresh upstream connection to the
server for every applicant connection and can mirror what it relays to a transcript
file.
"""

import asyncio
import logging
import os
from pathlib import Path
from typing import Optional

import aiofiles
import aiofiles.os

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
    Clock,
    ConfigError,
    DecodeError,
    EapLabError,
    ProtocolViolation,
    SystemClock,
)
from eapmd5_lab.config import Endpoint, ServeConfig
from eapmd5_lab.crypto import (
    CHALLENGE_BITS,
    ChallengeRng,
    challenge_rng,
    check_password,
)
from eapmd5_lab.harness import Hop, Transcript, TranscriptEntry
from eapmd5_lab.protocol import (
    Message,
    ProtocolVariant,
    Start,
    decode_message,
    describe,
    encode_message,
    read_frame,
)
from eapmd5_lab.storage import UserDatabase, format_transcript, load_user_db

logger = logging.getLogger(__name__)


async def send_message(writer: asyncio.StreamWriter, message: Message):
    writer.write(encode_message(message))
    await writer.drain()


async def receive_message(reader: asyncio.StreamReader) -> Optional[Message]:
    """None when the peer closed the connection between frames"""
    frame = await read_frame(reader)
    if frame is None:
        return None
    return decode_message(frame)


async def _close(writer: asyncio.StreamWriter):
    writer.close()
    try:
        await writer.wait_closed()
    except (ConnectionError, OSError):
        pass


class ServerService:
    """Handles authenticator connections; the freshness policy and the challenge
    generator are shared by all connections"""

    def __init__(
        self,
        db: UserDatabase,
        variant: ProtocolVariant,
        policy: Optional[FreshnessPolicy] = None,
        clock: Optional[Clock] = None,
        rng: Optional[ChallengeRng] = None,
        entropy_bits: int = CHALLENGE_BITS,
    ):
        self.db = db
        self.variant = variant
        self.policy = policy or FreshnessPolicy()
        self.clock = clock or SystemClock()
        self.rng = rng or challenge_rng()
        self.entropy_bits = entropy_bits

    async def handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        peer = writer.get_extra_info("peername")
        state = SessionState(Role.SERVER, self.variant)
        try:
            while state.phase != Phase.DONE:
                message = await receive_message(reader)
                if message is None:
                    logger.warning(
                        f"{peer} closed the connection in phase {state.phase.value}"
                    )
                    return
                state, reply = server_step(
                    state,
                    message,
                    self.db,
                    self.policy,
                    self.clock,
                    self.rng,
                    self.entropy_bits,
                )
                if reply is not None:
                    await send_message(writer, reply)
            logger.info(
                f"Session with {peer} for {state.username!r}: "
                f"{'accept' if state.verdict else 'reject'}"
            )
        except (DecodeError, ProtocolViolation) as err:
            logger.error(f"Closing connection from {peer}: {err}")
        finally:
            await _close(writer)


class AuthenticatorService:
    """Relays between one applicant connection and one upstream server connection"""

    def __init__(
        self,
        upstream: Endpoint,
        variant: ProtocolVariant,
        id_seed: int = 0,
        mirror: Optional[Path] = None,
        capture_clock: Optional[Clock] = None,
    ):
        self.upstream = upstream
        self.variant = variant
        self.authenticator = Authenticator(id_seed)
        self.mirror = mirror
        self.capture_clock = capture_clock or SystemClock()

    async def handle(
        self, app_reader: asyncio.StreamReader, app_writer: asyncio.StreamWriter
    ):
        peer = app_writer.get_extra_info("peername")
        transcript = Transcript(self.variant)

        def tap(hop: Hop, message: Message):
            transcript.entries.append(
                TranscriptEntry(hop, message, self.capture_clock())
            )

        server_writer = None
        try:
            start = await receive_message(app_reader)
            if not isinstance(start, Start):
                raise ProtocolViolation(
                    f"Expected Start, got {describe(start) if start else 'EOF'}"
                )
            tap(Hop.APPLICANT_TO_AUTH, start)
            server_reader, server_writer = await asyncio.open_connection(
                self.upstream.host, self.upstream.port
            )
            state, identity_request = self.authenticator.open_session(self.variant)
            start = authenticator_forward(start, Direction.UPSTREAM)
            tap(Hop.AUTH_TO_SERVER, start)
            await send_message(server_writer, start)
            tap(Hop.AUTH_TO_APPLICANT, identity_request)
            await send_message(app_writer, identity_request)

            while state.phase != Phase.DONE:
                message = await receive_message(app_reader)
                if message is None:
                    logger.warning(f"{peer} left in phase {state.phase.value}")
                    return
                tap(Hop.APPLICANT_TO_AUTH, message)
                state, message = Authenticator.relay(
                    state, message, Direction.UPSTREAM
                )
                tap(Hop.AUTH_TO_SERVER, message)
                await send_message(server_writer, message)

                reply = await receive_message(server_reader)
                if reply is None:
                    logger.warning(f"Server left in phase {state.phase.value}")
                    return
                tap(Hop.SERVER_TO_AUTH, reply)
                state, reply = Authenticator.relay(state, reply, Direction.DOWNSTREAM)
                tap(Hop.AUTH_TO_APPLICANT, reply)
                await send_message(app_writer, reply)
            logger.info(
                f"Relayed session of {peer}: {'accept' if state.verdict else 'reject'}"
            )
        except (DecodeError, ProtocolViolation) as err:
            logger.error(f"Closing connection from {peer}: {err}")
        except OSError as err:
            logger.error(f"Connection error while relaying for {peer}: {err}")
        finally:
            if server_writer is not None:
                await _close(server_writer)
            await _close(app_writer)
            if self.mirror is not None and transcript.entries:
                await self.write_mirror(transcript)

    async def write_mirror(self, transcript: Transcript):
        """Overwrites the mirror file with the latest session"""
        temp_file = self.mirror.with_name(
            f".{self.mirror.name}.{os.getpid()}.{id(transcript)}"
        )
        async with aiofiles.open(temp_file, mode="w", encoding="utf-8") as f:
            await f.write(format_transcript(transcript))
        await aiofiles.os.replace(temp_file, self.mirror)
        logger.info(f"Mirrored {len(transcript)} entries to {self.mirror}")


async def run_applicant(
    upstream: Endpoint,
    variant: ProtocolVariant,
    secrets: ApplicantSecrets,
    clock: Optional[Clock] = None,
) -> bool:
    """One session against an authenticator; returns the verdict"""
    clock = clock or SystemClock()
    reader, writer = await asyncio.open_connection(upstream.host, upstream.port)
    state = SessionState(Role.APPLICANT, variant)
    try:
        state, outgoing = applicant_step(state, None, secrets, clock)
        while True:
            if outgoing is not None:
                await send_message(writer, outgoing)
            if state.phase == Phase.DONE:
                break
            incoming = await receive_message(reader)
            if incoming is None:
                raise ProtocolViolation(
                    f"Connection closed in phase {state.phase.value} before a verdict"
                )
            state, outgoing = applicant_step(state, incoming, secrets, clock)
    finally:
        await _close(writer)
    return bool(state.verdict)


async def start_server(
    service: ServerService, host: str, port: int
) -> asyncio.AbstractServer:
    server = await asyncio.start_server(service.handle, host, port)
    logger.info(f"Server ({service.variant.value}) listening on {_bound(server)}")
    return server


async def start_authenticator(
    service: AuthenticatorService, host: str, port: int
) -> asyncio.AbstractServer:
    server = await asyncio.start_server(service.handle, host, port)
    logger.info(
        f"Authenticator listening on {_bound(server)}, relaying to {service.upstream}"
    )
    return server


def _bound(server: asyncio.AbstractServer) -> str:
    host, port = server.sockets[0].getsockname()[:2]
    return f"{host}:{port}"


async def serve(config: ServeConfig, clock: Optional[Clock] = None) -> Optional[bool]:
    """Runs the configured role. Server and authenticator run until cancelled, the
    applicant runs one session and returns its verdict"""
    clock = clock or SystemClock()
    if config.role == Role.APPLICANT:
        if config.user is None or config.password_hex is None:
            raise EapLabError("The applicant needs --user and --password-hex")
        try:
            password = check_password(bytes.fromhex(config.password_hex))
        except ValueError as err:
            raise ConfigError(f"--password-hex: {err}") from None
        secrets = ApplicantSecrets(config.user.encode(), password)
        return await run_applicant(config.upstream, config.variant, secrets, clock)

    if config.role == Role.SERVER:
        service = ServerService(
            load_user_db(config.db),
            config.variant,
            FreshnessPolicy(config.window_ms),
            clock,
            challenge_rng(config.seed),
            config.entropy_bits,
        )
        server = await start_server(service, config.listen.host, config.listen.port)
    else:
        authenticator = AuthenticatorService(
            config.upstream, config.variant, config.id_seed, config.mirror
        )
        server = await start_authenticator(
            authenticator, config.listen.host, config.listen.port
        )
    async with server:
        await server.serve_forever()
    return None
