"""Shared helpers for the tab-separated model file formats."""

from __future__ import annotations

from typing import Iterator

from .dataset import Attribute, AttributeSchema, Kind


class ModelFormatError(ValueError):
    pass


def fmt(x: float) -> str:
    # repr round-trips every finite double and also writes inf/-inf/nan
    return repr(float(x))


def schema_lines(schema: AttributeSchema) -> list[str]:
    lines = [f"schema\t{len(schema)}\t{schema.class_position}"]
    lines += [f"attr\t{a.name}\t{a.kind.value}" for a in schema.attributes]
    return lines


class LineReader:
    """Iterates over tab-split lines, tracking position for error messages."""

    def __init__(self, text: str):
        self._lines = text.splitlines()
        self.pos = 0

    def __iter__(self) -> Iterator[list[str]]:
        return self

    def __next__(self) -> list[str]:
        if self.pos >= len(self._lines):
            raise StopIteration
        line = self._lines[self.pos]
        self.pos += 1
        return line.split("\t")

    def peek(self) -> list[str] | None:
        if self.pos >= len(self._lines):
            return None
        return self._lines[self.pos].split("\t")

    def expect(self, tag: str) -> list[str]:
        try:
            parts = next(self)
        except StopIteration:
            raise ModelFormatError(f"unexpected end of model file, wanted {tag!r}") from None
        if parts[0] != tag:
            raise ModelFormatError(f"line {self.pos}: expected {tag!r}, found {parts[0]!r}")
        return parts


def read_header(reader: LineReader, magic: str) -> int:
    parts = reader.expect(magic)
    return int(parts[1])


def read_schema(reader: LineReader) -> AttributeSchema:
    _, n, class_pos = reader.expect("schema")
    attrs = []
    for _ in range(int(n)):
        _, name, kind = reader.expect("attr")
        attrs.append(Attribute(name, Kind(kind)))
    return AttributeSchema(tuple(attrs), class_position=int(class_pos))
