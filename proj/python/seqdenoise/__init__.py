"""Python front end for the seqdenoise pipeline.

Every stage takes a config dict (the same schema as the CLI's JSON config)
and returns the stage report as a dict.
"""

import json

from . import _core
from ._core import Error, flag, noisy_variant, parse_output, render_output, select_eta, tokenize

SCHEMA_VERSION = _core.SCHEMA_VERSION

__all__ = [
    "Error",
    "SCHEMA_VERSION",
    "corpus",
    "default_config",
    "denoise",
    "evaluate",
    "flag",
    "ingest",
    "inject",
    "noisy_variant",
    "parse_output",
    "render_output",
    "report",
    "select_eta",
    "synth",
    "tokenize",
    "validate_config",
]


def _call(fn, config, *args, **kwargs):
    return json.loads(fn(json.dumps(config), *args, **kwargs))


def default_config():
    return json.loads(_core.default_config())


def validate_config(config):
    """Returns the normalized config or raises Error."""
    return _call(_core.validate_config, config)


def synth(config):
    return _call(_core.synth, config)


def ingest(config):
    return _call(_core.ingest, config)


def inject(config):
    return _call(_core.inject, config)


def corpus(config):
    return _call(_core.corpus, config)


def denoise(config, variant, targets="both", output=None):
    return _call(_core.denoise, config, variant, targets, output)


def evaluate(config, variant, ranks=False):
    return _call(_core.evaluate, config, variant, ranks)


def report(config):
    return _call(_core.report, config)
