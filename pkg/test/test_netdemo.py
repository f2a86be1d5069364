import asyncio
from pathlib import Path

import pytest

from eapmd5_lab.actors import ApplicantSecrets, FreshnessPolicy, Role
from eapmd5_lab.common import SimulatedClock
from eapmd5_lab.config import Endpoint, ServeConfig
from eapmd5_lab.crypto import Password, challenge_rng
from eapmd5_lab.harness import run_session
from eapmd5_lab.netdemo import (
    AuthenticatorService,
    ServerService,
    run_applicant,
    serve,
    start_authenticator,
    start_server,
)
from eapmd5_lab.protocol import ProtocolVariant
from eapmd5_lab.storage import UserDatabase, load_transcript

epoch = 1_650_000_000_000
alice = ApplicantSecrets(b"alice", Password(b"0123456789abcdef"))
db = UserDatabase({alice.username: alice.password})


def port_of(server: asyncio.AbstractServer) -> int:
    return server.sockets[0].getsockname()[1]


async def wait_for_file(path: Path):
    for _ in range(200):
        if path.is_file():
            return
        await asyncio.sleep(0.01)
    raise TimeoutError(f"{path} was never written")


async def start_pair(variant: ProtocolVariant, mirror=None, id_seed: int = 3):
    server = await start_server(
        ServerService(
            db, variant, FreshnessPolicy(), SimulatedClock(epoch), challenge_rng(7)
        ),
        "127.0.0.1",
        0,
    )
    authenticator = await start_authenticator(
        AuthenticatorService(
            Endpoint(port=port_of(server)), variant, id_seed=id_seed, mirror=mirror
        ),
        "127.0.0.1",
        0,
    )
    return server, authenticator


@pytest.mark.asyncio
@pytest.mark.parametrize("variant", list(ProtocolVariant))
async def test_loopback_matches_harness(tmp_path: Path, variant: ProtocolVariant):
    mirror = tmp_path.joinpath("mirror.eaplab")
    server, authenticator = await start_pair(variant, mirror)
    async with server, authenticator:
        accept = await run_applicant(
            Endpoint(port=port_of(authenticator)), variant, alice, SimulatedClock(epoch)
        )
        await wait_for_file(mirror)
    over_tcp = load_transcript(mirror)

    expected_accept, expected = run_session(
        variant, alice, db, FreshnessPolicy(), 7, SimulatedClock(epoch), id_seed=3
    )
    assert accept is expected_accept is True
    assert over_tcp.encoded() == expected.encoded()
    assert [entry.hop for entry in over_tcp.entries] == [
        entry.hop for entry in expected.entries
    ]


@pytest.mark.asyncio
async def test_wrong_password_over_tcp():
    server, authenticator = await start_pair(ProtocolVariant.HARDENED)
    async with server, authenticator:
        accept = await run_applicant(
            Endpoint(port=port_of(authenticator)),
            ProtocolVariant.HARDENED,
            ApplicantSecrets(b"alice", Password(b"fedcba9876543210")),
            SimulatedClock(epoch),
        )
    assert accept is False


@pytest.mark.asyncio
async def test_server_closes_on_unknown_tag(caplog):
    server, authenticator = await start_pair(ProtocolVariant.BASELINE)
    async with server, authenticator:
        reader, writer = await asyncio.open_connection("127.0.0.1", port_of(server))
        writer.write(bytes.fromhex("7f0000"))
        await writer.drain()
        assert await reader.read() == b""
        writer.close()
    assert any("Unknown type tag 0x7f" in message for message in caplog.messages)


@pytest.mark.asyncio
async def test_serve_applicant():
    server, authenticator = await start_pair(ProtocolVariant.BASELINE)
    config = ServeConfig(
        role=Role.APPLICANT,
        upstream=Endpoint(port=port_of(authenticator)),
        variant=ProtocolVariant.BASELINE,
        user="alice",
        password_hex=alice.password.hex(),
    )
    async with server, authenticator:
        assert await serve(config) is True
