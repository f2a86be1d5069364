"""Cost of the offline attacks as a function of the challenge entropy.

For every (entropy, trial) a random dictionary word is planted as the password, one
baseline and one masked session are run with challenges restricted to the entropy, and
all three attack engines are run on the captured transcripts. The multiplicative claim
predicts that log2(mean challenge-bruteforce cost / mean dictionary cost) grows with
slope 1 in the entropy.
"""

import logging
import math
import random
import string
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Type

import numpy
import orjson
from tqdm import tqdm

from eapmd5_lab.actors import ApplicantSecrets, FreshnessPolicy
from eapmd5_lab.attack import (
    Dictionary,
    baseline_dictionary_attack,
    hardened_challenge_bruteforce,
    hardened_transcript_probe,
)
from eapmd5_lab.common import SimulatedClock
from eapmd5_lab.crypto import Password
from eapmd5_lab.harness import run_session
from eapmd5_lab.protocol import ProtocolVariant
from eapmd5_lab.storage import UserDatabase

logger = logging.getLogger(__name__)

# 2020-01-01T00:00:00Z, start of the simulated clock of experiment sessions
EXPERIMENT_EPOCH_MILLIS = 1_577_836_800_000


@dataclass(frozen=True)
class SweepRow:
    entropy_bits: int
    trial: int
    index: int
    dictionary_evaluations: int
    bruteforce_evaluations: int
    bruteforce_found: bool
    probe_evaluations: int
    probe_found: bool

    csv_header = (
        "entropy_bits",
        "trial",
        "index",
        "dictionary_evaluations",
        "bruteforce_evaluations",
        "bruteforce_found",
        "probe_evaluations",
        "probe_found",
    )

    def to_csv_row(self) -> tuple:
        return (
            self.entropy_bits,
            self.trial,
            self.index,
            self.dictionary_evaluations,
            self.bruteforce_evaluations,
            int(self.bruteforce_found),
            self.probe_evaluations,
            int(self.probe_found),
        )


@dataclass(frozen=True)
class EntropySummary:
    entropy_bits: int
    trials: int
    mean_dictionary_evaluations: float
    mean_bruteforce_evaluations: float
    ratio: float
    log2_ratio: float
    probe_success_rate: float


@dataclass(frozen=True)
class SweepSummary:
    per_entropy: List[EntropySummary]
    # Least squares slope of log2_ratio over entropy_bits, None for a single entropy
    slope: Optional[float]
    intercept: Optional[float]

    def to_json(self) -> bytes:
        return orjson.dumps(self, option=orjson.OPT_INDENT_2)


def synthetic_dictionary(size: int, seed: int = 0) -> Dictionary:
    """Distinct lowercase words of 8 to 12 letters, deterministic in the seed"""
    rng = random.Random(seed)
    words = {}
    while len(words) < size:
        length = rng.randint(8, 12)
        word = "".join(rng.choices(string.ascii_lowercase, k=length)).encode()
        words.setdefault(word, None)
    return Dictionary([Password(word) for word in words])


def run_trial(
    entropy_bits: int,
    trial: int,
    dictionary: Dictionary,
    rng: random.Random,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
) -> SweepRow:
    index = rng.randrange(len(dictionary))
    session_seed = rng.getrandbits(32)
    id_seed = rng.randrange(256)
    username = f"user{trial}".encode()
    password = dictionary.words[index]
    db = UserDatabase({username: password})
    secrets = ApplicantSecrets(username, password)
    clock = SimulatedClock(EXPERIMENT_EPOCH_MILLIS, tick_millis=1)

    transcripts = {}
    for variant in ProtocolVariant:
        accept, transcripts[variant] = run_session(
            variant,
            secrets,
            db,
            FreshnessPolicy(),
            session_seed,
            clock,
            id_seed=id_seed,
            entropy_bits=entropy_bits,
        )
        assert accept, f"Honest {variant.value} session was rejected"

    dictionary_report = baseline_dictionary_attack(
        transcripts[ProtocolVariant.BASELINE], dictionary, jobs, executor
    )
    bruteforce_report = hardened_challenge_bruteforce(
        transcripts[ProtocolVariant.HARDENED], dictionary, entropy_bits, jobs, executor
    )
    probe_report = hardened_transcript_probe(
        transcripts[ProtocolVariant.HARDENED], dictionary, jobs, executor
    )
    return SweepRow(
        entropy_bits=entropy_bits,
        trial=trial,
        index=index,
        dictionary_evaluations=dictionary_report.hash_evaluations,
        bruteforce_evaluations=bruteforce_report.hash_evaluations,
        bruteforce_found=bruteforce_report.found is not None,
        probe_evaluations=probe_report.hash_evaluations,
        probe_found=probe_report.found is not None,
    )


def run_sweep(
    entropy_list: Sequence[int],
    trials: int,
    dictionary: Dictionary,
    seed: Optional[int] = None,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
    progress: bool = False,
) -> List[SweepRow]:
    if not dictionary.words:
        raise ValueError("The sweep needs a non-empty dictionary")
    rng = random.Random(seed)
    rows = []
    for entropy_bits in entropy_list:
        start = time.time()
        for trial in tqdm(
            range(trials), desc=f"{entropy_bits} bits", disable=not progress
        ):
            rows.append(
                run_trial(entropy_bits, trial, dictionary, rng, jobs, executor)
            )
        end = time.time()
        logger.info(f"{trials} trials at {entropy_bits} bits took {end - start:.2f}s")
    return rows


def summarize_sweep(rows: Sequence[SweepRow]) -> SweepSummary:
    per_entropy = []
    for entropy_bits in sorted({row.entropy_bits for row in rows}):
        selected = [row for row in rows if row.entropy_bits == entropy_bits]
        mean_dictionary = float(
            numpy.mean([row.dictionary_evaluations for row in selected])
        )
        mean_bruteforce = float(
            numpy.mean([row.bruteforce_evaluations for row in selected])
        )
        ratio = mean_bruteforce / mean_dictionary
        per_entropy.append(
            EntropySummary(
                entropy_bits=entropy_bits,
                trials=len(selected),
                mean_dictionary_evaluations=mean_dictionary,
                mean_bruteforce_evaluations=mean_bruteforce,
                ratio=ratio,
                log2_ratio=math.log2(ratio),
                probe_success_rate=sum(row.probe_found for row in selected)
                / len(selected),
            )
        )

    if len(per_entropy) < 2:
        return SweepSummary(per_entropy, None, None)
    slope, intercept = numpy.polyfit(
        [entry.entropy_bits for entry in per_entropy],
        [entry.log2_ratio for entry in per_entropy],
        1,
    )
    return SweepSummary(per_entropy, float(slope), float(intercept))


def format_summary(summary: SweepSummary) -> str:
    lines = [
        "entropy_bits  mean_dictionary  mean_bruteforce  log2_ratio  probe_success"
    ]
    for entry in summary.per_entropy:
        lines.append(
            f"{entry.entropy_bits:>12}  {entry.mean_dictionary_evaluations:>15.1f}  "
            f"{entry.mean_bruteforce_evaluations:>15.1f}  {entry.log2_ratio:>10.3f}  "
            f"{entry.probe_success_rate:>13.2f}"
        )
    if summary.slope is not None:
        lines.append(f"slope of log2_ratio over entropy_bits: {summary.slope:.3f}")
    return "\n".join(lines)
