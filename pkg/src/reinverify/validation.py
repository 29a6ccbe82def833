"""JSON schemas for every document the command line writes."""
from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

NAMES = ("verify_result", "search_result", "interpret_answer", "shaped_step", "shape_report")


@lru_cache(maxsize=None)
def load_schema(name):
    if name not in NAMES:
        raise KeyError(f"no schema named {name!r}")
    text = resources.files("reinverify").joinpath("schemas", f"{name}.json").read_text("utf-8")
    return json.loads(text)


def validate(name, document):
    """Raise ``jsonschema.ValidationError`` when ``document`` does not match."""
    jsonschema.validate(document, load_schema(name))
