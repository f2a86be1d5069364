"""Validated configuration for the command line and the network demo.

Values come from defaults, then an optional TOML file (`--config`), then explicit
command line flags, later sources winning.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import tomlkit
from pydantic import BaseModel, conint, root_validator, validator
from tomlkit.exceptions import TOMLKitError

from eapmd5_lab.actors import DEFAULT_WINDOW_MILLIS, Role
from eapmd5_lab.attack import DEFAULT_BRUTEFORCE_CAP, Strategy
from eapmd5_lab.common import ConfigError
from eapmd5_lab.crypto import CHALLENGE_BITS
from eapmd5_lab.protocol import USERNAME_MAX_LEN, ProtocolVariant

logger = logging.getLogger(__name__)


def _check_user(value: Optional[str]) -> Optional[str]:
    if value is not None and not 1 <= len(value.encode()) <= USERNAME_MAX_LEN:
        raise ValueError(f"Usernames must be 1 to {USERNAME_MAX_LEN} bytes")
    return value


def _check_hex(value: Optional[str]) -> Optional[str]:
    if value is not None:
        bytes.fromhex(value)
    return value


class Endpoint(BaseModel):
    host: str = "127.0.0.1"
    port: conint(ge=1, le=65535)

    @classmethod
    def parse(cls, value: str) -> "Endpoint":
        """`host:port`, the host may be omitted (`:port` or `port`)"""
        host, sep, port = value.rpartition(":")
        if not port.isdigit():
            raise ValueError(f"Expected `host:port`, got {value!r}")
        if sep and host:
            return cls(host=host, port=int(port))
        return cls(port=int(port))

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


class ExperimentConfig(BaseModel):
    variant: ProtocolVariant = ProtocolVariant.HARDENED
    entropy_bits: conint(ge=1, le=CHALLENGE_BITS) = CHALLENGE_BITS
    seed: Optional[int] = None
    window_ms: conint(gt=0) = DEFAULT_WINDOW_MILLIS
    id_seed: conint(ge=0, le=255) = 0
    db: Optional[Path] = None
    wordlist: Optional[Path] = None
    transcript: Optional[Path] = None
    out: Optional[Path] = None
    summary: Optional[Path] = None
    user: Optional[str] = None
    password_hex: Optional[str] = None
    strategy: Strategy = Strategy.BASELINE_DICTIONARY
    trials: conint(ge=1) = 1
    jobs: conint(ge=1) = 1
    bruteforce_cap: conint(ge=1, le=CHALLENGE_BITS) = DEFAULT_BRUTEFORCE_CAP
    entropy_list: List[conint(ge=1, le=CHALLENGE_BITS)] = [6, 8, 10, 12]
    dict_size: conint(ge=1) = 1000
    delay_ms: conint(ge=0) = 0
    epoch_ms: Optional[conint(ge=0)] = None

    _user_length = validator("user", allow_reuse=True)(_check_user)
    _password_is_hex = validator("password_hex", allow_reuse=True)(_check_hex)

    @root_validator(skip_on_failure=True)
    def entropy_within_cap(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        cap = values["bruteforce_cap"]
        if (
            values["strategy"] == Strategy.HARDENED_CHALLENGE_BRUTEFORCE
            and values["entropy_bits"] > cap
        ):
            raise ValueError(
                f"--entropy-bits {values['entropy_bits']} is above the brute force "
                f"cap of {cap} bits"
            )
        too_large = [bits for bits in values["entropy_list"] if bits > cap]
        if too_large:
            raise ValueError(
                f"--entropy-list contains {too_large}, "
                f"above the brute force cap of {cap} bits"
            )
        return values

    def password(self) -> bytes:
        if self.password_hex is None:
            raise ConfigError("--password-hex is required")
        return bytes.fromhex(self.password_hex)

    def username(self) -> bytes:
        if self.user is None:
            raise ConfigError("--user is required")
        return self.user.encode()


class ServeConfig(BaseModel):
    role: Role
    listen: Optional[Endpoint] = None
    upstream: Optional[Endpoint] = None
    variant: ProtocolVariant = ProtocolVariant.HARDENED
    db: Optional[Path] = None
    window_ms: conint(gt=0) = DEFAULT_WINDOW_MILLIS
    entropy_bits: conint(ge=1, le=CHALLENGE_BITS) = CHALLENGE_BITS
    seed: Optional[int] = None
    id_seed: conint(ge=0, le=255) = 0
    mirror: Optional[Path] = None
    user: Optional[str] = None
    password_hex: Optional[str] = None

    _user_length = validator("user", allow_reuse=True)(_check_user)
    _password_is_hex = validator("password_hex", allow_reuse=True)(_check_hex)

    @validator("upstream", always=True)
    def upstream_for_relay(
        cls, value: Optional[Endpoint], values: Dict[str, Any]
    ) -> Optional[Endpoint]:
        role = values.get("role")
        if role in (Role.AUTHENTICATOR, Role.APPLICANT) and value is None:
            raise ValueError(f"The {role.value} needs --upstream")
        return value

    @validator("db", always=True)
    def db_for_server(cls, value: Optional[Path], values: Dict[str, Any]):
        if values.get("role") == Role.SERVER and value is None:
            raise ValueError("The server needs --db")
        return value

    @validator("listen", always=True)
    def listen_for_services(
        cls, value: Optional[Endpoint], values: Dict[str, Any]
    ) -> Optional[Endpoint]:
        if values.get("role") in (Role.AUTHENTICATOR, Role.SERVER) and value is None:
            raise ValueError("--port is required for the server and the authenticator")
        return value


def load_config_file(path: Path) -> Dict[str, Any]:
    """Reads a flat TOML table; keys may be written like the flags (`window-ms`) or as
    identifiers (`window_ms`)"""
    try:
        document = tomlkit.parse(path.read_bytes().decode("utf-8"))
    except UnicodeDecodeError as err:
        raise ConfigError(f"{path} is not valid UTF-8: {err}") from None
    except TOMLKitError as err:
        raise ConfigError(f"Invalid TOML in {path}: {err}") from err
    values = {key.replace("-", "_"): value for key, value in document.unwrap().items()}
    logger.debug(f"Config file {path}: {values}")
    return values
