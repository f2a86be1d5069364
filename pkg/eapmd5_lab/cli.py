"""Command line entry point: `run`, `attack`, `replay`, `sweep`, `compare` and `serve`.

Exit codes: 0 accept (or a completed experiment), 1 reject, 2 error.
"""

import asyncio
import logging
import secrets
import sys
from argparse import ArgumentParser, Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from eapmd5_lab.actors import ApplicantSecrets, FreshnessPolicy, Role
from eapmd5_lab.attack import AttackReport, Dictionary, Strategy, run_attack
from eapmd5_lab.common import (
    Clock,
    ConfigError,
    EapLabError,
    SimulatedClock,
    SystemClock,
)
from eapmd5_lab.config import (
    Endpoint,
    ExperimentConfig,
    ServeConfig,
    load_config_file,
)
from eapmd5_lab.crypto import check_password
from eapmd5_lab.experiments.common import comparison_toml, sweep_csv
from eapmd5_lab.experiments.compare import run_comparison, write_comparison_toml
from eapmd5_lab.experiments.sweep import (
    SweepRow,
    format_summary,
    run_sweep,
    summarize_sweep,
    synthetic_dictionary,
)
from eapmd5_lab.harness import InMemoryChannel, replay_session, run_session
from eapmd5_lab.netdemo import serve
from eapmd5_lab.protocol import ProtocolVariant
from eapmd5_lab.storage import (
    append_csv_row,
    load_transcript,
    load_user_db,
    load_wordlist,
    save_transcript,
    write_csv,
)

logger = logging.getLogger(__name__)

EXIT_ACCEPT = 0
EXIT_REJECT = 1
EXIT_ERROR = 2

flags: Dict[str, Dict[str, Any]] = {
    "config": {"type": Path, "help": "TOML file with defaults for the flags"},
    "variant": {"choices": [variant.value for variant in ProtocolVariant]},
    "entropy-bits": {"type": int, "help": "Challenge entropy, 128 in production"},
    "seed": {"type": int, "help": "Seed for every random choice"},
    "window-ms": {"type": int, "help": "Freshness window of the server"},
    "id-seed": {"type": int, "help": "First session ID of the authenticator"},
    "db": {"type": Path, "help": "User database, `username:hex-password` lines"},
    "wordlist": {"type": Path},
    "transcript": {"type": Path},
    "out": {"type": Path},
    "summary": {"type": Path, "help": "JSON summary output"},
    "user": {},
    "password-hex": {},
    "strategy": {"choices": [strategy.value for strategy in Strategy]},
    "trials": {"type": int},
    "jobs": {"type": int, "help": "Attack workers, doesn't change the results"},
    "bruteforce-cap": {"type": int},
    "entropy-list": {"type": int, "nargs": "+"},
    "dict-size": {"type": int, "help": "Size of the generated dictionary"},
    "delay-ms": {"type": int, "help": "Time between the session and its replay"},
    "epoch-ms": {"type": int, "help": "Use a simulated clock starting here"},
    "role": {"choices": [role.value for role in Role]},
    "host": {},
    "port": {"type": int},
    "upstream": {"help": "host:port of the next hop"},
}


def _add_flags(parser: ArgumentParser, names: List[str]):
    for name in ["config", *names]:
        parser.add_argument(f"--{name}", **flags[name])
    parser.add_argument("--verbose", action="store_true")
    parser.add_argument("--quiet", action="store_true")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="eapmd5-lab",
        description="EAP-MD5 and masked-challenge EAP-MD5 handshakes, "
        "offline attacks and experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one honest session")
    _add_flags(
        run,
        [
            "variant",
            "db",
            "user",
            "password-hex",
            "transcript",
            "seed",
            "entropy-bits",
            "window-ms",
            "id-seed",
            "epoch-ms",
        ],
    )
    run.set_defaults(handler=cmd_run, command_defaults={})

    attack = subparsers.add_parser("attack", help="Attack a captured transcript")
    _add_flags(
        attack,
        [
            "transcript",
            "wordlist",
            "strategy",
            "entropy-bits",
            "bruteforce-cap",
            "out",
            "jobs",
        ],
    )
    attack.set_defaults(handler=cmd_attack, command_defaults={})

    replay = subparsers.add_parser(
        "replay", help="Run a session and replay it against the same server"
    )
    _add_flags(
        replay,
        [
            "variant",
            "db",
            "user",
            "password-hex",
            "transcript",
            "seed",
            "entropy-bits",
            "window-ms",
            "id-seed",
            "delay-ms",
            "epoch-ms",
        ],
    )
    replay.set_defaults(handler=cmd_replay, command_defaults={})

    sweep = subparsers.add_parser(
        "sweep", help="Attack cost over the challenge entropy"
    )
    _add_flags(
        sweep,
        [
            "entropy-list",
            "trials",
            "wordlist",
            "dict-size",
            "seed",
            "out",
            "summary",
            "jobs",
            "bruteforce-cap",
        ],
    )
    sweep.set_defaults(handler=cmd_sweep, command_defaults={"trials": 50})

    compare = subparsers.add_parser(
        "compare", help="Measured comparison of both variants"
    )
    _add_flags(
        compare,
        [
            "trials",
            "entropy-bits",
            "wordlist",
            "dict-size",
            "seed",
            "window-ms",
            "out",
            "summary",
            "jobs",
            "bruteforce-cap",
        ],
    )
    compare.set_defaults(
        handler=cmd_compare, command_defaults={"trials": 100, "entropy_bits": 8}
    )

    serve_parser = subparsers.add_parser(
        "serve", help="Run one actor over TCP (netdemo)"
    )
    _add_flags(
        serve_parser,
        [
            "role",
            "host",
            "port",
            "upstream",
            "variant",
            "db",
            "transcript",
            "user",
            "password-hex",
            "seed",
            "entropy-bits",
            "window-ms",
            "id-seed",
        ],
    )
    serve_parser.set_defaults(handler=cmd_serve, command_defaults={})
    return parser


def _layered_values(args: Namespace) -> Dict[str, Any]:
    """defaults < config file < explicit flags"""
    values = dict(args.command_defaults)
    if args.config:
        values.update(load_config_file(args.config))
    for key, value in vars(args).items():
        if key in ("config", "handler", "command", "command_defaults"):
            continue
        if value is not None:
            values[key] = value
    return values


def experiment_config(args: Namespace) -> ExperimentConfig:
    return ExperimentConfig(**_layered_values(args))


def serve_config(args: Namespace) -> ServeConfig:
    values = _layered_values(args)
    if values.get("role") is None:
        raise ConfigError("--role is required")
    port = values.pop("port", None)
    host = values.pop("host", "127.0.0.1")
    upstream = values.pop("upstream", None)
    if isinstance(upstream, str):
        try:
            upstream = Endpoint.parse(upstream)
        except ValueError as err:
            raise ConfigError(f"--upstream: {err}") from None
    return ServeConfig(
        listen=Endpoint(host=host, port=port) if port is not None else None,
        upstream=upstream,
        mirror=values.pop("transcript", None),
        **values,
    )


def _clock(config: ExperimentConfig) -> Clock:
    if config.epoch_ms is not None:
        return SimulatedClock(config.epoch_ms, tick_millis=1)
    return SystemClock()


def _channel(config: ExperimentConfig) -> InMemoryChannel:
    """The wiretap reads its own clock, simulated too under --epoch-ms so that seeded
    transcripts come out byte for byte the same"""
    capture_clock = None
    if config.epoch_ms is not None:
        capture_clock = SimulatedClock(config.epoch_ms, tick_millis=1)
    return InMemoryChannel(config.variant, capture_clock=capture_clock)


def _require(path: Optional[Path], flag: str) -> Path:
    if path is None:
        raise ConfigError(f"--{flag} is required")
    return path


def _secrets(config: ExperimentConfig) -> ApplicantSecrets:
    try:
        password = check_password(config.password())
    except ValueError as err:
        raise ConfigError(f"--password-hex: {err}") from None
    return ApplicantSecrets(config.username(), password)


def _dictionary(config: ExperimentConfig) -> Dictionary:
    if config.wordlist is not None:
        dictionary = load_wordlist(config.wordlist)
        if not dictionary.words:
            raise ConfigError(f"{config.wordlist} has no candidates")
        return dictionary
    return synthetic_dictionary(config.dict_size, config.seed or 0)


def cmd_run(config: ExperimentConfig) -> int:
    db = load_user_db(_require(config.db, "db"))
    accept, transcript = run_session(
        config.variant,
        _secrets(config),
        db,
        FreshnessPolicy(config.window_ms),
        config.seed,
        _clock(config),
        id_seed=config.id_seed,
        entropy_bits=config.entropy_bits,
        channel=_channel(config),
    )
    print(f"verdict={'accept' if accept else 'reject'}")
    if config.transcript is not None:
        save_transcript(transcript, config.transcript)
    return EXIT_ACCEPT if accept else EXIT_REJECT


def cmd_attack(config: ExperimentConfig) -> int:
    transcript = load_transcript(_require(config.transcript, "transcript"))
    dictionary = load_wordlist(_require(config.wordlist, "wordlist"))
    report = run_attack(
        config.strategy,
        transcript,
        dictionary,
        entropy_bits=config.entropy_bits,
        jobs=config.jobs,
        cap=config.bruteforce_cap,
    )
    print(report.to_record())
    if (
        config.strategy == Strategy.HARDENED_CHALLENGE_BRUTEFORCE
        and report.index is not None
    ):
        # What the dictionary attack pays for the same password on the baseline
        ratio = report.hash_evaluations / (report.index + 1)
        print(f"ratio_vs_dictionary={ratio:.1f}")
    if config.out is not None:
        append_csv_row(config.out, AttackReport.csv_header, report.to_csv_row())
    return EXIT_ACCEPT


def cmd_replay(config: ExperimentConfig) -> int:
    db = load_user_db(_require(config.db, "db"))
    # The replayed session must see the original challenge again
    seed = config.seed if config.seed is not None else secrets.randbits(32)
    epoch = config.epoch_ms if config.epoch_ms is not None else SystemClock()()
    clock = SimulatedClock(epoch, tick_millis=1)
    policy = FreshnessPolicy(config.window_ms)
    original, transcript = run_session(
        config.variant,
        _secrets(config),
        db,
        policy,
        seed,
        clock,
        id_seed=config.id_seed,
        entropy_bits=config.entropy_bits,
        channel=_channel(config),
    )
    if config.transcript is not None:
        save_transcript(transcript, config.transcript)
    if not original:
        print("original=reject replayed=-")
        return EXIT_ACCEPT
    clock.advance(config.delay_ms)
    replayed = replay_session(
        transcript, db, policy, clock, seed, entropy_bits=config.entropy_bits
    )
    print(
        f"original={'accept' if original else 'reject'} "
        f"replayed={'accept' if replayed else 'reject'}"
    )
    return EXIT_ACCEPT


def cmd_sweep(config: ExperimentConfig) -> int:
    dictionary = _dictionary(config)
    rows = run_sweep(
        config.entropy_list,
        config.trials,
        dictionary,
        config.seed,
        config.jobs,
        progress=sys.stderr.isatty(),
    )
    out = config.out or sweep_csv
    write_csv(out, SweepRow.csv_header, [row.to_csv_row() for row in rows])
    logger.info(f"Wrote {len(rows)} rows to {out}")
    summary = summarize_sweep(rows)
    print(format_summary(summary))
    if config.summary is not None:
        config.summary.parent.mkdir(parents=True, exist_ok=True)
        config.summary.write_bytes(summary.to_json())
    return EXIT_ACCEPT


def cmd_compare(config: ExperimentConfig) -> int:
    if config.entropy_bits > config.bruteforce_cap:
        raise ConfigError(
            f"--entropy-bits {config.entropy_bits} is above the brute force cap of "
            f"{config.bruteforce_cap} bits"
        )
    report = run_comparison(
        config.trials,
        config.entropy_bits,
        _dictionary(config),
        config.seed,
        config.window_ms,
        config.jobs,
    )
    print(report.format_table())
    write_comparison_toml(report, config.out or comparison_toml)
    if config.summary is not None:
        config.summary.parent.mkdir(parents=True, exist_ok=True)
        config.summary.write_bytes(report.to_json())
    return EXIT_ACCEPT


def cmd_serve(config: ServeConfig) -> int:
    try:
        accept = asyncio.run(serve(config))
    except KeyboardInterrupt:
        logger.info(f"{config.role.value} stopped")
        return EXIT_ACCEPT
    if accept is None:
        return EXIT_ACCEPT
    print(f"verdict={'accept' if accept else 'reject'}")
    return EXIT_ACCEPT if accept else EXIT_REJECT


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = logging.INFO
    logging.basicConfig(level=level)
    logging.captureWarnings(True)
    del args.verbose, args.quiet

    try:
        if args.handler is cmd_serve:
            return cmd_serve(serve_config(args))
        return args.handler(experiment_config(args))
    except (EapLabError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except ValidationError as err:
        print(f"error: invalid configuration\n{err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
