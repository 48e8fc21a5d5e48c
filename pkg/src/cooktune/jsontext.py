"""Lenient extraction of JSON objects embedded in model replies."""

from __future__ import annotations

import json
from typing import Iterator


def iter_json_objects(text: str) -> Iterator[dict]:
    """Yield each JSON object parseable from ``text``, left to right.

    Model replies often wrap the requested JSON in prose or code fences.
    This scans for every position where an object can be decoded and
    yields the decoded dicts; nested objects are not yielded separately.
    Never raises.
    """
    decoder = json.JSONDecoder()
    index = text.find("{")
    while index != -1:
        try:
            obj, end = decoder.raw_decode(text, index)
        except ValueError:
            index = text.find("{", index + 1)
            continue
        if isinstance(obj, dict):
            yield obj
            index = text.find("{", end)
        else:
            index = text.find("{", index + 1)
