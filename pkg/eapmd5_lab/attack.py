"""Offline adversaries working on captured transcripts.

* dictionary: the classic attack on the baseline. ID+1 and the challenge are on the
  wire, so every candidate costs one MD5 evaluation.
* challenge-bruteforce: the attack the masked variant is designed against. For every
  candidate the whole (reduced) challenge space is searched for a value that reproduces
  the captured request; a hit is confirmed against the captured response.
* transcript-probe: composes the unmasking and the response computation over values
  that are all on the wire (request, response, timestamp), one MD5 per candidate.

Cost is counted in MD5 evaluations, XORs are free. Every engine returns the first
match in dictionary order, also when the dictionary is split across workers.
"""

import logging
import time
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from functools import partial
from typing import Callable, Iterator, List, Optional, Tuple, Type

from eapmd5_lab.common import AttackError, Timestamp
from eapmd5_lab.crypto import (
    BLOCK_LEN,
    CHALLENGE_BITS,
    Digest128,
    IdByte,
    Password,
    md5_digest,
    pad_password,
    widen_timestamp,
    xor128,
)
from eapmd5_lab.harness import Transcript
from eapmd5_lab.protocol import (
    BaselineResponse,
    ChallengeMasked,
    ChallengePlain,
    HardenedResponse,
    ProtocolVariant,
)

logger = logging.getLogger(__name__)

DEFAULT_BRUTEFORCE_CAP = 24


class Strategy(str, Enum):
    BASELINE_DICTIONARY = "dictionary"
    HARDENED_CHALLENGE_BRUTEFORCE = "challenge-bruteforce"
    HARDENED_TRANSCRIPT_PROBE = "transcript-probe"

    @property
    def variant(self) -> ProtocolVariant:
        if self == Strategy.BASELINE_DICTIONARY:
            return ProtocolVariant.BASELINE
        return ProtocolVariant.HARDENED


@dataclass
class Dictionary:
    """Candidate passwords. Order matters, cost is measured until the first match"""

    words: List[Password]

    def __len__(self) -> int:
        return len(self.words)

    def __iter__(self) -> Iterator[Password]:
        return iter(self.words)


@dataclass(frozen=True)
class AttackReport:
    strategy: Strategy
    found: Optional[Password]
    # 0-based position of `found` in the dictionary
    index: Optional[int]
    hash_evaluations: int
    elapsed_millis: int
    entropy_bits: Optional[int] = None
    # The recovered challenge value, challenge-bruteforce only
    challenge: Optional[int] = None

    csv_header = (
        "strategy",
        "found",
        "index",
        "hash_evaluations",
        "elapsed_millis",
        "entropy_bits",
    )

    def __post_init__(self):
        if self.found is not None and self.hash_evaluations < 1:
            raise ValueError("A found password costs at least one evaluation")

    def to_record(self) -> str:
        fields = [
            f"strategy={self.strategy.value}",
            f"found={self.found.hex() if self.found is not None else '-'}",
            f"index={self.index if self.index is not None else '-'}",
            f"hash_evaluations={self.hash_evaluations}",
            f"elapsed_millis={self.elapsed_millis}",
        ]
        if self.entropy_bits is not None:
            fields.append(f"entropy_bits={self.entropy_bits}")
        if self.challenge is not None:
            fields.append(f"challenge={self.challenge:032x}")
        return " ".join(fields)

    def to_csv_row(self) -> Tuple[str, str, str, int, int, str]:
        return (
            self.strategy.value,
            self.found.hex() if self.found is not None else "",
            str(self.index) if self.index is not None else "",
            self.hash_evaluations,
            self.elapsed_millis,
            str(self.entropy_bits) if self.entropy_bits is not None else "",
        )


@dataclass(frozen=True)
class BaselineTarget:
    id_plus1: IdByte
    challenge: bytes
    digest: Digest128


@dataclass(frozen=True)
class HardenedTarget:
    id: IdByte
    request: bytes
    digest: Digest128
    timestamp: Timestamp


@dataclass(frozen=True)
class ShardResult:
    # Position of the match inside the shard
    offset: Optional[int]
    hash_evaluations: int
    challenge: Optional[int] = None


def _check_variant(transcript: Transcript, strategy: Strategy):
    if transcript.variant != strategy.variant:
        raise AttackError(
            f"{strategy.value} needs a {strategy.variant.value} transcript, "
            f"got a {transcript.variant.value} one"
        )


def baseline_target(transcript: Transcript) -> BaselineTarget:
    _check_variant(transcript, Strategy.BASELINE_DICTIONARY)
    challenge = transcript.first(ChallengePlain)
    response = transcript.first(BaselineResponse)
    if challenge is None or response is None:
        raise AttackError(
            "The transcript lacks the plain challenge or the response, "
            "was the username rejected?"
        )
    return BaselineTarget(challenge.id_plus1, challenge.challenge.value, response.digest)


def hardened_target(transcript: Transcript, strategy: Strategy) -> HardenedTarget:
    _check_variant(transcript, strategy)
    challenge = transcript.first(ChallengeMasked)
    response = transcript.first(HardenedResponse)
    if challenge is None or response is None:
        raise AttackError(
            "The transcript lacks the masked challenge or the response, "
            "was the username rejected?"
        )
    return HardenedTarget(
        challenge.id, challenge.request, response.digest, response.timestamp
    )


def dictionary_shard(target: BaselineTarget, words: List[Password]) -> ShardResult:
    prefix = bytes([target.id_plus1])
    for offset, word in enumerate(words):
        if md5_digest(prefix + word + target.challenge) == target.digest:
            return ShardResult(offset, offset + 1)
    return ShardResult(None, len(words))


def bruteforce_shard(
    target: HardenedTarget, entropy_bits: int, words: List[Password]
) -> ShardResult:
    """Per candidate, walks the challenges in ascending order"""
    id_int = target.id
    timestamp_block = widen_timestamp(target.timestamp)
    evaluations = 0
    for offset, word in enumerate(words):
        # hash(ID ⊕ Challenge) that reproduces the captured request under this word
        wanted = xor128(target.request, pad_password(word))
        for value in range(2**entropy_bits):
            inner = md5_digest((id_int ^ value).to_bytes(BLOCK_LEN, "big"))
            evaluations += 1
            if inner != wanted:
                continue
            evaluations += 1
            if md5_digest(xor128(inner, timestamp_block)) == target.digest:
                return ShardResult(offset, evaluations, value)
    return ShardResult(None, evaluations)


def probe_shard(target: HardenedTarget, words: List[Password]) -> ShardResult:
    timestamp_block = widen_timestamp(target.timestamp)
    for offset, word in enumerate(words):
        c = xor128(target.request, pad_password(word))
        if md5_digest(xor128(c, timestamp_block)) == target.digest:
            return ShardResult(offset, offset + 1)
    return ShardResult(None, len(words))


def split_shards(words: List[Password], jobs: int) -> List[Tuple[int, List[Password]]]:
    """Contiguous slices as (start index, words), at most `jobs` of them"""
    shards = []
    size = -(-len(words) // jobs) if words else 0
    for start in range(0, len(words), max(size, 1)):
        shards.append((start, words[start : start + size]))
    return shards


def merge_shards(
    shards: List[Tuple[int, List[Password]]], results: List[ShardResult]
) -> Tuple[Optional[int], int, Optional[int]]:
    """(global index, evaluations, challenge) with sequential semantics: every earlier
    shard is paid in full, later shards don't count"""
    evaluations = 0
    for (start, _words), result in zip(shards, results):
        evaluations += result.hash_evaluations
        if result.offset is not None:
            return start + result.offset, evaluations, result.challenge
    return None, evaluations, None


def run_sharded(
    search: Callable[[List[Password]], ShardResult],
    words: List[Password],
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
) -> Tuple[Optional[int], int, Optional[int]]:
    if jobs < 1:
        raise ValueError(f"jobs must be at least 1, got {jobs}")
    if jobs == 1 or len(words) < 2:
        result = search(words)
        index = result.offset
        return index, result.hash_evaluations, result.challenge

    shards = split_shards(words, jobs)
    logger.debug(f"Searching {len(words)} candidates in {len(shards)} shards")
    with executor(max_workers=jobs) as pool:
        results = list(pool.map(search, [shard for _start, shard in shards]))
    return merge_shards(shards, results)


def _report(
    strategy: Strategy,
    dictionary: Dictionary,
    outcome: Tuple[Optional[int], int, Optional[int]],
    start: float,
    entropy_bits: Optional[int] = None,
) -> AttackReport:
    index, evaluations, challenge = outcome
    report = AttackReport(
        strategy=strategy,
        found=dictionary.words[index] if index is not None else None,
        index=index,
        hash_evaluations=evaluations,
        elapsed_millis=int((time.perf_counter() - start) * 1000),
        entropy_bits=entropy_bits,
        challenge=challenge,
    )
    logger.info(
        f"{strategy.value}: {'found' if index is not None else 'not found'} "
        f"after {evaluations} MD5 evaluations in {report.elapsed_millis}ms"
    )
    return report


def baseline_dictionary_attack(
    transcript: Transcript,
    dictionary: Dictionary,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
) -> AttackReport:
    start = time.perf_counter()
    target = baseline_target(transcript)
    outcome = run_sharded(
        partial(dictionary_shard, target), dictionary.words, jobs, executor
    )
    return _report(Strategy.BASELINE_DICTIONARY, dictionary, outcome, start)


def hardened_challenge_bruteforce(
    transcript: Transcript,
    dictionary: Dictionary,
    entropy_bits: int,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
    cap: int = DEFAULT_BRUTEFORCE_CAP,
) -> AttackReport:
    """The session must have been run with challenges restricted to `entropy_bits`,
    otherwise the search can't succeed"""
    if not 1 <= entropy_bits <= CHALLENGE_BITS:
        raise AttackError(f"entropy_bits must be in 1..={CHALLENGE_BITS}")
    if entropy_bits > cap:
        raise AttackError(
            f"Searching 2^{entropy_bits} challenges per candidate is infeasible, "
            f"the cap is {cap} bits"
        )
    start = time.perf_counter()
    target = hardened_target(transcript, Strategy.HARDENED_CHALLENGE_BRUTEFORCE)
    outcome = run_sharded(
        partial(bruteforce_shard, target, entropy_bits),
        dictionary.words,
        jobs,
        executor,
    )
    return _report(
        Strategy.HARDENED_CHALLENGE_BRUTEFORCE,
        dictionary,
        outcome,
        start,
        entropy_bits=entropy_bits,
    )


def hardened_transcript_probe(
    transcript: Transcript,
    dictionary: Dictionary,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
) -> AttackReport:
    start = time.perf_counter()
    target = hardened_target(transcript, Strategy.HARDENED_TRANSCRIPT_PROBE)
    outcome = run_sharded(partial(probe_shard, target), dictionary.words, jobs, executor)
    return _report(Strategy.HARDENED_TRANSCRIPT_PROBE, dictionary, outcome, start)


def run_attack(
    strategy: Strategy,
    transcript: Transcript,
    dictionary: Dictionary,
    entropy_bits: int = CHALLENGE_BITS,
    jobs: int = 1,
    executor: Type[Executor] = ProcessPoolExecutor,
    cap: int = DEFAULT_BRUTEFORCE_CAP,
) -> AttackReport:
    if strategy == Strategy.BASELINE_DICTIONARY:
        return baseline_dictionary_attack(transcript, dictionary, jobs, executor)
    elif strategy == Strategy.HARDENED_CHALLENGE_BRUTEFORCE:
        return hardened_challenge_bruteforce(
            transcript, dictionary, entropy_bits, jobs, executor, cap
        )
    else:
        return hardened_transcript_probe(transcript, dictionary, jobs, executor)
