"""Core code identifiers shared by every stage of the pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class CodeType(str, Enum):
    """The three kinds of medical codes a visit can contain."""

    DX = "dx"
    RX = "rx"
    PX = "px"

    @classmethod
    def parse(cls, s: str) -> "CodeType":
        try:
            return cls(s.lower())
        except ValueError:
            raise ValueError(f"unknown code type: {s!r} (expected dx, rx, or px)")


@dataclass(frozen=True, order=True)
class CodeId:
    """A typed code identifier; (id, type) is the vocabulary key."""

    id: str
    type: CodeType

    def __post_init__(self):
        if not self.id:
            raise ValueError("code id must be non-empty")

    def key(self) -> str:
        """Stable wire form, e.g. 'dx:401'."""
        return f"{self.type.value}:{self.id}"

    @classmethod
    def from_key(cls, key: str) -> "CodeId":
        type_s, _, id_s = key.partition(":")
        return cls(id=id_s, type=CodeType.parse(type_s))
