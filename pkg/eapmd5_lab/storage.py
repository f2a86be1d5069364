"""User databases, wordlists, transcripts and experiment rows on disk.

User database: one `username:hex-password` per line.
Wordlist: one candidate per line, UTF-8.
Transcript: header `EAPLAB1 <variant> <entry-count>`, then one
`<hop-tag> <capture_millis> <hex of the encoded message>` line per entry.

`#` comments are skipped in user databases and wordlists. User databases also skip
blank lines, wordlists only empty ones since whitespace is a valid candidate. All files
use LF line endings and must be valid UTF-8.
"""

import csv
import logging
import os
import random
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Union

from eapmd5_lab.actors import UserRecord
from eapmd5_lab.attack import Dictionary
from eapmd5_lab.common import DecodeError, StorageError, Timestamp
from eapmd5_lab.crypto import PASSWORD_MAX_LEN, Password, check_password
from eapmd5_lab.harness import Hop, Transcript, TranscriptEntry
from eapmd5_lab.protocol import (
    USERNAME_MAX_LEN,
    ProtocolVariant,
    decode_message,
    encode_message,
)

logger = logging.getLogger(__name__)

TRANSCRIPT_MAGIC = "EAPLAB1"


@dataclass
class UserDatabase(Mapping):
    """username -> password, read-only mapping view for the server"""

    records: Dict[bytes, Password] = field(default_factory=dict)
    source_path: Optional[Path] = None

    @classmethod
    def from_records(
        cls, records: Iterable[UserRecord], source_path: Optional[Path] = None
    ) -> "UserDatabase":
        db = cls(source_path=source_path)
        for record in records:
            db.add(record)
        return db

    def add(self, record: UserRecord):
        if record.username in self.records:
            raise ValueError(f"Duplicate username {record.username!r}")
        self.records[record.username] = record.password

    def __getitem__(self, username: bytes) -> Password:
        return self.records[username]

    def __iter__(self) -> Iterator[bytes]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


def atomic_write_text(path: Path, content: str):
    """Writes through a temp file in the same directory so readers never see a
    half-written file"""
    path.parent.mkdir(exist_ok=True, parents=True)
    characters = "abcdefghijklmnopqrstuvwxyz0123456789_"
    temp_name = "." + "".join(random.choices(characters, k=8))
    temp_file = path.parent.joinpath(temp_name)
    with temp_file.open("w", encoding="utf-8", newline="\n") as f:
        f.write(content)
    os.replace(temp_file, path)


def _read_utf8(path: Path, what: str) -> str:
    try:
        return path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as err:
        raise StorageError(f"{what} is not valid UTF-8: {err}", path) from None


def _content_lines(text: str, keep_blank: bool = False) -> Iterator[tuple]:
    """(1-based line number, line) for lines that aren't empty or comments.

    Whitespace-only lines are skipped too unless `keep_blank` is set.
    """
    for number, line in enumerate(text.split("\n"), start=1):
        if not line or line.startswith("#"):
            continue
        if not keep_blank and not line.strip():
            continue
        yield number, line


def _storable_line(value: bytes, what: str, path: Path) -> str:
    """`value` as the start of a line that parses back to the same bytes"""
    try:
        text = value.decode("utf-8")
    except UnicodeDecodeError:
        raise StorageError(f"{what} {value!r} is not valid UTF-8", path) from None
    if not text or text.startswith("#") or "\n" in text:
        raise StorageError(
            f"{what} {value!r} can't be stored, it is empty, starts with `#` or "
            "contains a line break",
            path,
        )
    return text


def parse_user_db(text: str, path: Optional[Path] = None) -> UserDatabase:
    db = UserDatabase(source_path=path)
    for number, line in _content_lines(text):
        username_str, sep, password_hex = line.partition(":")
        if not sep:
            raise StorageError("Expected `username:hex-password`", path, number)
        if ":" in password_hex:
            raise StorageError("Usernames must not contain `:`", path, number)
        username = username_str.encode()
        if not 1 <= len(username) <= USERNAME_MAX_LEN:
            raise StorageError(
                f"Usernames must be 1 to {USERNAME_MAX_LEN} bytes", path, number
            )
        try:
            password = bytes.fromhex(password_hex.strip())
        except ValueError:
            raise StorageError(
                f"Password of {username_str} is not valid hex: {password_hex!r}",
                path,
                number,
            ) from None
        try:
            db.add(UserRecord(username, check_password(password)))
        except ValueError as err:
            raise StorageError(str(err), path, number) from None
    return db


def load_user_db(path: Path) -> UserDatabase:
    db = parse_user_db(_read_utf8(path, "User database"), path)
    logger.info(f"Loaded {len(db)} users from {path}")
    return db


def save_user_db(db: UserDatabase, path: Path):
    lines = []
    for username, password in db.records.items():
        name = _storable_line(username, "Username", path)
        if ":" in name:
            raise StorageError(f"Username {username!r} contains `:`", path)
        lines.append(f"{name}:{password.hex()}\n")
    atomic_write_text(path, "".join(lines))


def parse_wordlist(text: str, path: Optional[Path] = None) -> Dictionary:
    words = []
    for number, line in _content_lines(text, keep_blank=True):
        word = line.encode("utf-8")
        if len(word) > PASSWORD_MAX_LEN:
            raise StorageError(
                f"Candidate is {len(word)} bytes, at most {PASSWORD_MAX_LEN} allowed",
                path,
                number,
            )
        words.append(Password(word))
    return Dictionary(words)


def load_wordlist(path: Path) -> Dictionary:
    dictionary = parse_wordlist(_read_utf8(path, "Wordlist"), path)
    logger.info(f"Loaded {len(dictionary)} candidates from {path}")
    return dictionary


def save_wordlist(dictionary: Dictionary, path: Path):
    lines = [
        _storable_line(word, "Candidate", path) + "\n" for word in dictionary.words
    ]
    atomic_write_text(path, "".join(lines))


def format_transcript(transcript: Transcript) -> str:
    lines = [
        f"{TRANSCRIPT_MAGIC} {transcript.variant.value} {len(transcript.entries)}\n"
    ]
    for entry in transcript.entries:
        lines.append(
            f"{entry.hop.value} {entry.capture_time} "
            f"{encode_message(entry.message).hex()}\n"
        )
    return "".join(lines)


def parse_transcript(text: str, path: Optional[Path] = None) -> Transcript:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise StorageError("Empty transcript", path, 1)

    header = lines[0].split(" ")
    if len(header) != 3 or header[0] != TRANSCRIPT_MAGIC:
        raise StorageError(
            f"Expected `{TRANSCRIPT_MAGIC} <variant> <entry-count>`, "
            f"got {lines[0]!r}",
            path,
            1,
        )
    try:
        variant = ProtocolVariant(header[1])
    except ValueError:
        raise StorageError(f"Unknown variant {header[1]!r}", path, 1) from None
    if not header[2].isdigit():
        raise StorageError(f"Invalid entry count {header[2]!r}", path, 1)
    entry_count = int(header[2])
    if entry_count != len(lines) - 1:
        raise StorageError(
            f"Header announces {entry_count} entries, found {len(lines) - 1}", path, 1
        )

    transcript = Transcript(variant)
    for number, line in enumerate(lines[1:], start=2):
        fields = line.split(" ")
        if len(fields) != 3:
            raise StorageError(
                f"Expected `<hop> <capture_millis> <hex>`, got {line!r}", path, number
            )
        hop_tag, capture_millis, message_hex = fields
        try:
            hop = Hop(hop_tag)
        except ValueError:
            raise StorageError(f"Unknown hop {hop_tag!r}", path, number) from None
        if not capture_millis.isdigit():
            raise StorageError(
                f"Invalid capture time {capture_millis!r}", path, number
            )
        if message_hex != message_hex.lower():
            raise StorageError("Message hex must be lowercase", path, number)
        try:
            message = decode_message(bytes.fromhex(message_hex))
        except ValueError:
            raise StorageError(f"Bad hex {message_hex!r}", path, number) from None
        except DecodeError as err:
            raise StorageError(str(err), path, number) from None
        transcript.entries.append(
            TranscriptEntry(hop, message, Timestamp(int(capture_millis)))
        )
    return transcript


def save_transcript(transcript: Transcript, path: Path):
    atomic_write_text(path, format_transcript(transcript))
    logger.info(f"Saved {len(transcript)} entry transcript to {path}")


def load_transcript(path: Path) -> Transcript:
    return parse_transcript(_read_utf8(path, "Transcript"), path)


def append_csv_row(
    path: Path, header: Sequence[str], row: Sequence[Union[str, int, float]]
):
    """Appends one row, writing the header first if the file is new or empty"""
    new_file = not path.is_file() or path.stat().st_size == 0
    path.parent.mkdir(exist_ok=True, parents=True)
    with path.open("a", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        if new_file:
            writer.writerow(header)
        writer.writerow(row)


def write_csv(
    path: Path, header: Sequence[str], rows: List[Sequence[Union[str, int, float]]]
):
    path.parent.mkdir(exist_ok=True, parents=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
