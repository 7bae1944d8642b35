"""Corpus manifest: one JSON object per line, one line per audio sample."""

from __future__ import annotations

import json
import os

from .errors import ConfigError
from .valabel import EMOTIONS, GENDERS, SIZES

SOURCES = ("original", "enhanced")

REQUIRED_FIELDS = ("id", "path", "emotion", "breed", "size", "gender", "source")
LABEL_FIELDS = ("valence", "arousal")
_FIELD_ORDER = REQUIRED_FIELDS + LABEL_FIELDS


def validate_row(row: dict, lineno: int | None = None) -> None:
    where = f"manifest line {lineno}" if lineno is not None else "manifest row"
    for field in REQUIRED_FIELDS:
        if field not in row:
            raise ConfigError(f"{where}: missing field {field!r}")
    if row["emotion"] not in EMOTIONS:
        raise ConfigError(f"{where}: unknown emotion {row['emotion']!r}")
    if row["size"] not in SIZES:
        raise ConfigError(f"{where}: unknown size {row['size']!r}")
    if row["gender"] not in GENDERS:
        raise ConfigError(f"{where}: unknown gender {row['gender']!r}")
    if row["source"] not in SOURCES:
        raise ConfigError(f"{where}: unknown source {row['source']!r}")
    has_v, has_a = "valence" in row, "arousal" in row
    if has_v != has_a:
        raise ConfigError(f"{where}: valence/arousal must be present together")
    if has_v:
        if not -1.0 <= float(row["valence"]) <= 1.0:
            raise ConfigError(f"{where}: valence out of range")
        if not 0.0 <= float(row["arousal"]) <= 1.0:
            raise ConfigError(f"{where}: arousal out of range")


def read_manifest(path) -> list[dict]:
    rows = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"manifest line {lineno}: invalid JSON ({exc})") from exc
            validate_row(row, lineno)
            if row["id"] in seen:
                raise ConfigError(f"manifest line {lineno}: duplicate id {row['id']!r}")
            seen.add(row["id"])
            rows.append(row)
    if not rows:
        raise ConfigError(f"{path}: empty manifest")
    return rows


def write_manifest(path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            validate_row(row)
            ordered = {k: row[k] for k in _FIELD_ORDER if k in row}
            ordered.update({k: row[k] for k in row if k not in _FIELD_ORDER})
            fh.write(json.dumps(ordered, sort_keys=False) + "\n")


def resolve_audio_path(manifest_path, row) -> str:
    p = row["path"]
    if os.path.isabs(p):
        return p
    return os.path.join(os.path.dirname(os.path.abspath(manifest_path)), p)


def is_labeled(rows) -> bool:
    return all("valence" in r and "arousal" in r for r in rows)
