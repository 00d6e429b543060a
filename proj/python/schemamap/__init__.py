"""Map relational database schemas to Schema.org."""

import json

from ._core import (
    SchemamapError,
    Vocabulary,
    aggregate_confidence,
    baseline_embed,
    baseline_fingerprint,
    cosine,
    format_percent,
    load_vocabulary,
    parse_ntriples,
    request_digest,
    serialize_ntriples,
)
from . import _core

__all__ = [
    "SchemamapError",
    "Vocabulary",
    "aggregate_confidence",
    "baseline_embed",
    "baseline_fingerprint",
    "cosine",
    "error_code",
    "format_percent",
    "load_vocabulary",
    "parse_ntriples",
    "profile",
    "request_digest",
    "run_eval",
    "run_map",
    "serialize_ntriples",
]


def error_code(exc):
    """The stable code of a SchemamapError, e.g. "GoldNotFound"."""
    return exc.args[0]


def profile(db_path, sample_rows=5):
    return json.loads(_core.profile_json(db_path, sample_rows))


def run_map(config_path, db_path, out=""):
    return json.loads(_core.run_map(config_path, db_path, out))


def run_eval(config_path, db_path, out=""):
    text, report = _core.run_eval(config_path, db_path, out)
    return text, json.loads(report)
