import pytest

from eapmd5_lab.actors import ApplicantSecrets, FreshnessPolicy
from eapmd5_lab.common import AttackError, SimulatedClock
from eapmd5_lab.crypto import Password
from eapmd5_lab.harness import (
    Hop,
    InMemoryChannel,
    SessionAborted,
    Transcript,
    replay_session,
    run_session,
)
from eapmd5_lab.protocol import (
    BaselineResponse,
    ChallengeMasked,
    ChallengePlain,
    HardenedResponse,
    IdentityRequest,
    IdentityResponse,
    ProtocolVariant,
    Start,
    Verdict,
    encode_message,
)
from eapmd5_lab.storage import UserDatabase

epoch = 1_700_000_000_000
alice = ApplicantSecrets(b"alice", Password(b"0123456789abcdef"))
db = UserDatabase({alice.username: alice.password})


def honest(variant: ProtocolVariant, policy=None, clock=None, seed=7, **kwargs):
    return run_session(
        variant,
        alice,
        db,
        policy or FreshnessPolicy(),
        seed,
        clock or SimulatedClock(epoch, tick_millis=1),
        **kwargs,
    )


def test_baseline_transcript():
    accept, transcript = honest(ProtocolVariant.BASELINE, id_seed=41)
    assert accept
    assert [(entry.hop, type(entry.message)) for entry in transcript.entries] == [
        (Hop.APPLICANT_TO_AUTH, Start),
        (Hop.AUTH_TO_SERVER, Start),
        (Hop.AUTH_TO_APPLICANT, IdentityRequest),
        (Hop.APPLICANT_TO_AUTH, IdentityResponse),
        (Hop.AUTH_TO_SERVER, IdentityResponse),
        (Hop.SERVER_TO_AUTH, ChallengePlain),
        (Hop.AUTH_TO_APPLICANT, ChallengePlain),
        (Hop.APPLICANT_TO_AUTH, BaselineResponse),
        (Hop.AUTH_TO_SERVER, BaselineResponse),
        (Hop.SERVER_TO_AUTH, Verdict),
        (Hop.AUTH_TO_APPLICANT, Verdict),
    ]
    assert transcript.first(IdentityRequest) == IdentityRequest(41)
    assert transcript.first(ChallengePlain).id_plus1 == 42


def test_hardened_transcript_hides_challenge():
    channel = InMemoryChannel(ProtocolVariant.HARDENED)
    accept, transcript = honest(ProtocolVariant.HARDENED, channel=channel)
    assert accept
    assert len(transcript) == 11
    assert transcript.first(ChallengePlain) is None
    assert transcript.first(ChallengeMasked) is not None
    response = transcript.first(HardenedResponse)
    # The applicant read the clock once, before the server did
    assert response.timestamp == epoch

    # Same seed, so the baseline session draws the same challenge
    _, baseline = honest(ProtocolVariant.BASELINE)
    challenge = baseline.first(ChallengePlain).challenge.value
    assert all(challenge not in encoded for _hop, encoded in channel.delivered)


def test_wrong_password():
    accept, transcript = run_session(
        ProtocolVariant.HARDENED,
        ApplicantSecrets(b"alice", Password(b"fedcba9876543210")),
        db,
        FreshnessPolicy(),
        7,
        SimulatedClock(epoch, tick_millis=1),
    )
    assert not accept
    assert len(transcript) == 11
    assert transcript.entries[-1].message == Verdict(False)


def test_unknown_user():
    accept, transcript = run_session(
        ProtocolVariant.BASELINE,
        ApplicantSecrets(b"mallory", Password(b"0123456789abcdef")),
        db,
        FreshnessPolicy(),
        7,
        SimulatedClock(epoch, tick_millis=1),
    )
    assert not accept
    assert len(transcript) == 7
    assert transcript.first(ChallengePlain) is None


@pytest.mark.parametrize("variant", list(ProtocolVariant))
def test_tap_is_passive(variant: ProtocolVariant):
    tapped = InMemoryChannel(variant, tap=True)
    untapped = InMemoryChannel(variant, tap=False)
    verdict_tapped, transcript = honest(variant, channel=tapped)
    verdict_untapped, empty = honest(variant, channel=untapped)
    assert verdict_tapped == verdict_untapped
    assert tapped.delivered == untapped.delivered
    assert len(empty) == 0
    assert transcript.encoded() == [encoded for _hop, encoded in tapped.delivered]


def test_capture_clock_is_separate():
    channel = InMemoryChannel(
        ProtocolVariant.HARDENED, capture_clock=SimulatedClock(5, tick_millis=1)
    )
    _, transcript = honest(ProtocolVariant.HARDENED, channel=channel)
    assert [entry.capture_time for entry in transcript.entries] == list(range(5, 16))
    assert transcript.first(HardenedResponse).timestamp == epoch


def test_replay_baseline_is_accepted():
    policy = FreshnessPolicy()
    clock = SimulatedClock(epoch, tick_millis=1)
    accept, transcript = honest(ProtocolVariant.BASELINE, policy, clock)
    assert accept
    assert replay_session(transcript, db, policy, clock, rng_seed=7)
    clock.advance(10 * 60 * 1000)
    assert replay_session(transcript, db, policy, clock, rng_seed=7)


def test_replay_baseline_with_fresh_challenge_fails():
    policy = FreshnessPolicy()
    accept, transcript = honest(ProtocolVariant.BASELINE, policy)
    assert accept
    assert not replay_session(transcript, db, policy, rng_seed=8)


def test_replay_hardened_is_rejected():
    policy = FreshnessPolicy(window_millis=30_000)
    clock = SimulatedClock(epoch, tick_millis=1)
    accept, transcript = honest(ProtocolVariant.HARDENED, policy, clock)
    assert accept
    assert not replay_session(transcript, db, policy, clock, rng_seed=7)
    clock.advance(30_001)
    assert not replay_session(transcript, db, policy, clock, rng_seed=7)


def test_replay_hardened_stale_with_fresh_policy():
    """Even a server that forgot the last accepted timestamp rejects stale replays"""
    clock = SimulatedClock(epoch, tick_millis=1)
    _, transcript = honest(ProtocolVariant.HARDENED, clock=clock)
    clock.advance(30_001)
    assert not replay_session(transcript, db, FreshnessPolicy(), clock, rng_seed=7)


def test_replay_incomplete_transcript():
    _, transcript = run_session(
        ProtocolVariant.BASELINE,
        ApplicantSecrets(b"mallory", Password(b"0123456789abcdef")),
        db,
        FreshnessPolicy(),
        7,
        SimulatedClock(epoch, tick_millis=1),
    )
    with pytest.raises(AttackError, match="Start, IdentityResponse"):
        replay_session(transcript, db, FreshnessPolicy(), rng_seed=7)
    with pytest.raises(AttackError, match="nothing"):
        replay_session(Transcript(ProtocolVariant.HARDENED), db, FreshnessPolicy())


class ScramblingChannel(InMemoryChannel):
    """Swaps the challenge for a second identity request"""

    def deliver(self, hop, message):
        if isinstance(message, ChallengePlain) and hop == Hop.AUTH_TO_APPLICANT:
            message = IdentityRequest(0)
        return super().deliver(hop, message)


def test_abort_carries_partial_transcript():
    channel = ScramblingChannel(ProtocolVariant.BASELINE)
    with pytest.raises(SessionAborted) as excinfo:
        honest(ProtocolVariant.BASELINE, channel=channel)
    transcript = excinfo.value.transcript
    assert len(transcript) == 7
    assert transcript.entries[-1].message == IdentityRequest(0)
    assert "baseline session aborted" in str(excinfo.value)


def test_encoded_matches_codec():
    _, transcript = honest(ProtocolVariant.BASELINE)
    assert transcript.encoded()[0] == encode_message(Start())
    assert [type(message) for message in transcript.applicant_messages()] == [
        Start,
        IdentityResponse,
        BaselineResponse,
    ]
