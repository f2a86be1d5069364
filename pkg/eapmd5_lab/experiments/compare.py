"""Side by side measurement of the baseline and the masked-challenge variant: speed,
robustness against replay and cost of the offline attack, next to the claimed values"""

import logging
import random
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Type

import orjson
import tomli_w

from eapmd5_lab.actors import DEFAULT_WINDOW_MILLIS, ApplicantSecrets, FreshnessPolicy
from eapmd5_lab.attack import (
    Dictionary,
    Strategy,
    baseline_dictionary_attack,
    hardened_challenge_bruteforce,
    hardened_transcript_probe,
)
from eapmd5_lab.common import SimulatedClock
from eapmd5_lab.experiments.sweep import EXPERIMENT_EPOCH_MILLIS
from eapmd5_lab.harness import replay_session, run_session
from eapmd5_lab.protocol import (
    BASELINE_SESSION_MD5_CALLS,
    HARDENED_SESSION_MD5_CALLS,
    ProtocolVariant,
)
from eapmd5_lab.storage import UserDatabase, atomic_write_text

logger = logging.getLogger(__name__)

claimed = {
    ProtocolVariant.BASELINE: {"replay_robust": False, "attack_complexity": "2^c"},
    ProtocolVariant.HARDENED: {
        "replay_robust": True,
        "attack_complexity": "2^(128+c)",
    },
}


@dataclass
class VariantMeasurement:
    variant: str
    mean_session_micros: float
    md5_calls_per_session: int
    replays_accepted_within_window: int
    replays_accepted_stale: int
    attack_strategy: str
    mean_attack_evaluations: float
    attack_success_rate: float
    claimed_replay_robust: bool
    claimed_attack_complexity: str


@dataclass
class ComparisonReport:
    trials: int
    entropy_bits: int
    window_ms: int
    dictionary_size: int
    seed: Optional[int]
    baseline: VariantMeasurement
    hardened: VariantMeasurement
    probe_success_rate: float
    probe_mean_evaluations: float

    def to_dict(self) -> Dict[str, Any]:
        # TOML has no null
        return {key: value for key, value in asdict(self).items() if value is not None}

    def to_json(self) -> bytes:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2)

    def to_toml(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def format_table(self) -> str:
        lines = [
            f"{'':10} {'session us':>10} {'md5/session':>11} "
            f"{'replay ok (fresh/stale)':>23} {'attack evals':>13} {'claimed':>10}"
        ]
        for measurement in (self.baseline, self.hardened):
            replays = (
                f"{measurement.replays_accepted_within_window}/"
                f"{measurement.replays_accepted_stale} of {self.trials}"
            )
            lines.append(
                f"{measurement.variant:10} {measurement.mean_session_micros:>10.1f} "
                f"{measurement.md5_calls_per_session:>11} {replays:>23} "
                f"{measurement.mean_attack_evaluations:>13.1f} "
                f"{measurement.claimed_attack_complexity:>10}"
            )
        lines.append(
            f"transcript probe on the hardened transcripts: "
            f"{self.probe_success_rate:.0%} found, "
            f"{self.probe_mean_evaluations:.1f} mean evaluations"
        )
        return "\n".join(lines)


def write_comparison_toml(report: ComparisonReport, path: Path):
    atomic_write_text(path, report.to_toml())
    logger.info(f"Wrote comparison report to {path}")


def run_comparison(
    trials: int,
    entropy_bits: int,
    dictionary: Dictionary,
    seed: Optional[int] = None,
    window_ms: int = DEFAULT_WINDOW_MILLIS,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
) -> ComparisonReport:
    """Each trial plants a random dictionary word as password, runs one honest session
    per variant, replays it right away and again after the window elapsed, and attacks
    the transcript offline"""
    if not dictionary.words:
        raise ValueError("The comparison needs a non-empty dictionary")
    rng = random.Random(seed)
    session_micros = {variant: 0.0 for variant in ProtocolVariant}
    replays_fresh = {variant: 0 for variant in ProtocolVariant}
    replays_stale = {variant: 0 for variant in ProtocolVariant}
    attack_evaluations = {variant: 0 for variant in ProtocolVariant}
    attack_found = {variant: 0 for variant in ProtocolVariant}
    probe_found = 0
    probe_evaluations = 0

    for trial in range(trials):
        index = rng.randrange(len(dictionary))
        session_seed = rng.getrandbits(32)
        id_seed = rng.randrange(256)
        username = f"user{trial}".encode()
        password = dictionary.words[index]
        db = UserDatabase({username: password})
        for variant in ProtocolVariant:
            clock = SimulatedClock(EXPERIMENT_EPOCH_MILLIS, tick_millis=1)
            policy = FreshnessPolicy(window_ms)
            start = time.perf_counter()
            accept, transcript = run_session(
                variant,
                ApplicantSecrets(username, password),
                db,
                policy,
                session_seed,
                clock,
                id_seed=id_seed,
                entropy_bits=entropy_bits,
            )
            session_micros[variant] += (time.perf_counter() - start) * 1e6
            assert accept, f"Honest {variant.value} session was rejected"

            replays_fresh[variant] += replay_session(
                transcript, db, policy, clock, session_seed, entropy_bits
            )
            clock.advance(window_ms + 1)
            replays_stale[variant] += replay_session(
                transcript, db, policy, clock, session_seed, entropy_bits
            )

            if variant == ProtocolVariant.BASELINE:
                report = baseline_dictionary_attack(
                    transcript, dictionary, jobs, executor
                )
            else:
                report = hardened_challenge_bruteforce(
                    transcript, dictionary, entropy_bits, jobs, executor
                )
                probe = hardened_transcript_probe(transcript, dictionary, jobs, executor)
                probe_found += probe.found is not None
                probe_evaluations += probe.hash_evaluations
            attack_evaluations[variant] += report.hash_evaluations
            attack_found[variant] += report.found is not None

    def measurement(variant: ProtocolVariant, strategy: Strategy, md5_calls: int):
        return VariantMeasurement(
            variant=variant.value,
            mean_session_micros=session_micros[variant] / trials,
            md5_calls_per_session=md5_calls,
            replays_accepted_within_window=replays_fresh[variant],
            replays_accepted_stale=replays_stale[variant],
            attack_strategy=strategy.value,
            mean_attack_evaluations=attack_evaluations[variant] / trials,
            attack_success_rate=attack_found[variant] / trials,
            claimed_replay_robust=claimed[variant]["replay_robust"],
            claimed_attack_complexity=claimed[variant]["attack_complexity"],
        )

    return ComparisonReport(
        trials=trials,
        entropy_bits=entropy_bits,
        window_ms=window_ms,
        dictionary_size=len(dictionary),
        seed=seed,
        baseline=measurement(
            ProtocolVariant.BASELINE,
            Strategy.BASELINE_DICTIONARY,
            BASELINE_SESSION_MD5_CALLS,
        ),
        hardened=measurement(
            ProtocolVariant.HARDENED,
            Strategy.HARDENED_CHALLENGE_BRUTEFORCE,
            HARDENED_SESSION_MD5_CALLS,
        ),
        probe_success_rate=probe_found / trials,
        probe_mean_evaluations=probe_evaluations / trials,
    )
