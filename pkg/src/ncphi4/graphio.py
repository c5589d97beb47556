"""Graph description files.

One JSON document per graph::

    {
      "externals": ["c", "d"],
      "lines": [["a", "b"]],
      "root": "V",
      "vertices": {"V": ["a", "b", "c", "d"]}
    }

``serialize`` writes the canonical form (sorted keys, two-space indent,
trailing newline) so that ``serialize(parse(text)) == text`` for every
canonical document.
"""

from __future__ import annotations

import json

from .ribbon import GraphError, RibbonGraph, build_graph


class ParseError(GraphError):
    """Malformed document; message carries line/column when known."""


def parse(text: str) -> RibbonGraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)


def from_dict(doc) -> RibbonGraph:
    if not isinstance(doc, dict):
        raise ParseError("graph document must be an object")
    unknown = set(doc) - {"vertices", "lines", "externals", "root"}
    if unknown:
        raise ParseError(f"unknown key {sorted(unknown)[0]!r}")
    for key in ("vertices", "lines", "root"):
        if key not in doc:
            if key == "root":
                raise GraphError("missing root")
            raise ParseError(f"missing key {key!r}")
    verts = doc["vertices"]
    if not isinstance(verts, dict):
        raise ParseError("'vertices' must map vertex ids to corner lists")
    return build_graph(verts, doc["lines"], doc.get("externals"), doc["root"])


def serialize(g: RibbonGraph) -> str:
    return json.dumps(g.to_dict(), sort_keys=True, indent=2) + "\n"


def load(path) -> RibbonGraph:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def dump(g: RibbonGraph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(g))
