"""Routing proposals between bands.

During training each band's second stage consumes only the proposals its
own first stage produced, so the heads learn band-specific appearance. At
test time every band receives the union of all bands' proposals: an object
visible in one band is then scored everywhere, and per-band suppression
keeps whichever evidence each band actually supports.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..data.types import BandId


@dataclass(frozen=True)
class Proposal:
    """A candidate box together with the band whose head proposed it."""

    x: float
    y: float
    w: float
    h: float
    score: float
    source_band: BandId

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def combine_proposals(
    per_band: dict[BandId, list[Proposal]],
    mode: str,
) -> dict[BandId, list[Proposal]]:
    """Route proposals across bands.

    ``train`` keeps each band's own list untouched. ``test`` hands every
    band the concatenated union over all bands, ordered by ascending band
    layer then original position, with duplicates preserved (downstream
    suppression arbitrates).
    """
    if mode not in ("train", "test"):
        raise ValueError(f"mode must be 'train' or 'test', got {mode!r}")
    if mode == "train":
        return {band: list(props) for band, props in per_band.items()}
    merged: list[Proposal] = []
    for band in sorted(per_band):
        merged.extend(per_band[band])
    return {band: list(merged) for band in per_band}
