from pathlib import Path

import pytest
from pydantic import ValidationError

from eapmd5_lab.actors import Role
from eapmd5_lab.attack import Strategy
from eapmd5_lab.common import ConfigError
from eapmd5_lab.config import Endpoint, ExperimentConfig, ServeConfig, load_config_file
from eapmd5_lab.protocol import ProtocolVariant


def test_endpoint_parse():
    assert Endpoint.parse("example.org:1812") == Endpoint(host="example.org", port=1812)
    assert Endpoint.parse(":1813") == Endpoint(port=1813)
    assert Endpoint.parse("1814") == Endpoint(host="127.0.0.1", port=1814)
    assert str(Endpoint(port=9)) == "127.0.0.1:9"
    with pytest.raises(ValueError):
        Endpoint.parse("example.org")
    with pytest.raises(ValidationError):
        Endpoint.parse("example.org:70000")


def test_experiment_defaults():
    config = ExperimentConfig()
    assert config.variant == ProtocolVariant.HARDENED
    assert config.entropy_bits == 128
    assert config.window_ms == 30_000
    assert config.entropy_list == [6, 8, 10, 12]


def test_experiment_validation():
    with pytest.raises(ValidationError, match="above the brute force cap of 24 bits"):
        ExperimentConfig(strategy=Strategy.HARDENED_CHALLENGE_BRUTEFORCE)
    ExperimentConfig(strategy="challenge-bruteforce", entropy_bits=24)
    with pytest.raises(ValidationError, match="contains \\[30\\]"):
        ExperimentConfig(entropy_list=[6, 30])
    with pytest.raises(ValidationError):
        ExperimentConfig(window_ms=0)
    with pytest.raises(ValidationError):
        ExperimentConfig(password_hex="xyz")


def test_experiment_credentials():
    config = ExperimentConfig(user="alice", password_hex="4142")
    assert config.username() == b"alice"
    assert config.password() == b"AB"
    with pytest.raises(ConfigError, match="--user is required"):
        ExperimentConfig().username()
    with pytest.raises(ConfigError, match="--password-hex is required"):
        ExperimentConfig().password()


def test_serve_config_requirements():
    with pytest.raises(ValidationError, match="The server needs --db"):
        ServeConfig(role=Role.SERVER, listen=Endpoint(port=1812))
    with pytest.raises(ValidationError, match="The authenticator needs --upstream"):
        ServeConfig(role=Role.AUTHENTICATOR, listen=Endpoint(port=1812))
    with pytest.raises(ValidationError, match="--port is required"):
        ServeConfig(role=Role.SERVER, db=Path("users.txt"))
    applicant = ServeConfig(role="applicant", upstream=Endpoint(port=1812))
    assert applicant.listen is None


def test_load_config_file(tmp_path: Path):
    path = tmp_path.joinpath("lab.toml")
    path.write_text('variant = "baseline"\nwindow-ms = 5000\nentropy_list = [4, 6]\n')
    values = load_config_file(path)
    assert values == {"variant": "baseline", "window_ms": 5000, "entropy_list": [4, 6]}
    config = ExperimentConfig(**values)
    assert config.variant == ProtocolVariant.BASELINE

    path.write_text("variant = \n")
    with pytest.raises(ConfigError, match="Invalid TOML"):
        load_config_file(path)
