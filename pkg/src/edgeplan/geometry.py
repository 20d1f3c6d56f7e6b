"""Partition schemes and fusion geometry as exact integer arithmetic.

Everything here operates on closed integer boxes over a layer's output tensor
(rows x cols x channels).  A node may own several boxes (grid partitions),
and boxes produced by backward halo propagation may overlap, so volume
computations always deduplicate via coordinate compression.  No floats.
"""

from __future__ import annotations

from enum import IntEnum
from typing import NamedTuple, Optional, Sequence

from .errors import ValidationError
from .models import CHANNELWISE_KINDS, LayerSpec, flops_per_output_element


class Scheme(IntEnum):
    """Output-tensor partition axis. Ordinal order is the planner tie-break order."""

    INH = 0     # contiguous row bands
    INW = 1     # contiguous column bands
    OUTC = 2    # channel bands, full spatial extent per node
    GRID2D = 3  # rows x cols cell grid, cells dealt round-robin

    @property
    def token(self) -> str:
        return self.name.lower()


SPATIAL_SCHEMES = (Scheme.INH, Scheme.INW, Scheme.GRID2D)

_SCHEME_BY_TOKEN = {s.token: s for s in Scheme}


def scheme_from_token(token: str) -> Scheme:
    try:
        return _SCHEME_BY_TOKEN[token]
    except KeyError:
        raise ValidationError(f"unknown scheme {token!r}") from None


class Mode(IntEnum):
    """Per-layer choice: transmit the output (T) or recompute halos locally (NT)."""

    T = 0
    NT = 1

    @property
    def token(self) -> str:
        return self.name.lower()


def mode_from_token(token: str) -> Mode:
    try:
        return Mode[token.upper()]
    except KeyError:
        raise ValidationError(f"unknown mode {token!r}") from None


class Region(NamedTuple):
    """A closed integer box in tensor coordinates (all bounds inclusive)."""

    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int
    ch_lo: int
    ch_hi: int

    def volume(self) -> int:
        return ((self.row_hi - self.row_lo + 1)
                * (self.col_hi - self.col_lo + 1)
                * (self.ch_hi - self.ch_lo + 1))

    def intersect(self, other: "Region") -> Optional["Region"]:
        r0 = max(self.row_lo, other.row_lo)
        r1 = min(self.row_hi, other.row_hi)
        c0 = max(self.col_lo, other.col_lo)
        c1 = min(self.col_hi, other.col_hi)
        k0 = max(self.ch_lo, other.ch_lo)
        k1 = min(self.ch_hi, other.ch_hi)
        if r0 > r1 or c0 > c1 or k0 > k1:
            return None
        return Region(r0, r1, c0, c1, k0, k1)


#: A node's holding: zero or more boxes (empty tuple = needs/owns nothing).
RegionSet = tuple[Region, ...]


class PlanEntry(NamedTuple):
    scheme: Scheme
    mode: Mode


Plan = tuple[PlanEntry, ...]


class TileMap(NamedTuple):
    """Disjoint per-node ownership of one layer's full output tensor."""

    node_count: int
    tiles: tuple[RegionSet, ...]


def split_even(extent: int, parts: int) -> list[tuple[int, int]]:
    """Contiguous near-equal chunks; the remainder goes to the lowest indices."""
    base, rem = divmod(extent, parts)
    bounds = []
    lo = 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        bounds.append((lo, lo + size - 1))
        lo += size
    return bounds


def _grid_side(node_count: int) -> int:
    g = 1
    while g * g < node_count:
        g += 1
    return g


def assign_tiles(layer: LayerSpec, scheme: Scheme, node_count: int) -> TileMap:
    """Partition the layer's output tensor among ``node_count`` nodes."""
    if node_count < 2:
        raise ValidationError(f"layer {layer.id}: need at least 2 nodes, got {node_count}")
    h, w, c = layer.out_h, layer.out_w, layer.out_c
    full_rows, full_cols, full_chs = (0, h - 1), (0, w - 1), (0, c - 1)

    if scheme is Scheme.INH:
        if h < node_count:
            raise ValidationError(
                f"layer {layer.id}: {h} output rows cannot host {node_count} nodes"
            )
        tiles = tuple(
            (Region(lo, hi, *full_cols, *full_chs),)
            for lo, hi in split_even(h, node_count)
        )
    elif scheme is Scheme.INW:
        if w < node_count:
            raise ValidationError(
                f"layer {layer.id}: {w} output columns cannot host {node_count} nodes"
            )
        tiles = tuple(
            (Region(*full_rows, lo, hi, *full_chs),)
            for lo, hi in split_even(w, node_count)
        )
    elif scheme is Scheme.OUTC:
        if c < node_count:
            raise ValidationError(
                f"layer {layer.id}: {c} output channels cannot host {node_count} nodes"
            )
        tiles = tuple(
            (Region(*full_rows, *full_cols, lo, hi),)
            for lo, hi in split_even(c, node_count)
        )
    else:  # Scheme.GRID2D
        g = _grid_side(node_count)
        if h < g or w < g:
            raise ValidationError(
                f"layer {layer.id}: {h}x{w} output cannot host a {g}x{g} cell grid"
            )
        row_chunks = split_even(h, g)
        col_chunks = split_even(w, g)
        cells = [
            Region(rlo, rhi, clo, chi, *full_chs)
            for rlo, rhi in row_chunks
            for clo, chi in col_chunks
        ]
        owned: list[list[Region]] = [[] for _ in range(node_count)]
        for idx, cell in enumerate(cells):
            owned[idx % node_count].append(cell)
        tiles = tuple(tuple(boxes) for boxes in owned)
    return TileMap(node_count=node_count, tiles=tiles)


def input_region(layer: LayerSpec, out_region: Region) -> Optional[Region]:
    """Input box the layer must read to produce ``out_region``.

    Spatial bounds follow the window formula and are clamped to the input
    tensor; a window that falls entirely into padding needs no input at all,
    in which case None is returned.  Channel range is the full input depth for
    cross-channel kinds and the output's own range for channelwise kinds.
    """
    s, k, p = layer.stride, layer.kernel, layer.padding
    r0 = out_region.row_lo * s - p
    r1 = out_region.row_hi * s - p + k - 1
    c0 = out_region.col_lo * s - p
    c1 = out_region.col_hi * s - p + k - 1
    r0, r1 = max(r0, 0), min(r1, layer.in_h - 1)
    c0, c1 = max(c0, 0), min(c1, layer.in_w - 1)
    if r0 > r1 or c0 > c1:
        return None
    if layer.kind in CHANNELWISE_KINDS:
        k0, k1 = out_region.ch_lo, out_region.ch_hi
    else:
        k0, k1 = 0, layer.in_c - 1
    return Region(r0, r1, c0, c1, k0, k1)


def input_region_set(layer: LayerSpec, out_regions: RegionSet) -> RegionSet:
    return tuple(r for r in (input_region(layer, box) for box in out_regions)
                 if r is not None)


def backward_regions(
    layers: Sequence[LayerSpec], scheme: Scheme, node_count: int
) -> list[tuple[RegionSet, ...]]:
    """Per-layer output regions each node must produce inside a fused chain.

    ``layers`` is the contiguous chain; the last layer's owned tiles seed the
    recursion and halos accumulate backwards.  Index i of the result holds the
    per-node output regions of ``layers[i]``.
    """
    if scheme not in SPATIAL_SCHEMES:
        raise ValidationError(
            f"chained recomputation is only defined for spatial schemes, not {scheme.token}"
        )
    if not layers:
        raise ValidationError("chain must contain at least one layer")
    tiles = assign_tiles(layers[-1], scheme, node_count)
    per_layer: list[tuple[RegionSet, ...]] = [tiles.tiles]
    for layer in reversed(layers[1:]):
        per_layer.append(tuple(
            input_region_set(layer, regions) for regions in per_layer[-1]
        ))
    per_layer.reverse()
    return per_layer


def chain_entry_regions(
    layers: Sequence[LayerSpec], scheme: Scheme, node_count: int
) -> tuple[RegionSet, ...]:
    """Input each node must hold before the chain so no transfer occurs inside it."""
    first_out = backward_regions(layers, scheme, node_count)[0]
    return tuple(input_region_set(layers[0], regions) for regions in first_out)


def _union_volume(boxes: Sequence[Region]) -> int:
    """Exact volume of a union of boxes via coordinate compression."""
    if not boxes:
        return 0
    if len(boxes) == 1:
        return boxes[0].volume()
    rows = sorted({b.row_lo for b in boxes} | {b.row_hi + 1 for b in boxes})
    cols = sorted({b.col_lo for b in boxes} | {b.col_hi + 1 for b in boxes})
    chs = sorted({b.ch_lo for b in boxes} | {b.ch_hi + 1 for b in boxes})
    total = 0
    for ri in range(len(rows) - 1):
        r = rows[ri]
        rspan = rows[ri + 1] - r
        for ci in range(len(cols) - 1):
            c = cols[ci]
            cspan = cols[ci + 1] - c
            for ki in range(len(chs) - 1):
                k = chs[ki]
                if any(b.row_lo <= r <= b.row_hi and b.col_lo <= c <= b.col_hi
                       and b.ch_lo <= k <= b.ch_hi for b in boxes):
                    total += rspan * cspan * (chs[ki + 1] - k)
    return total


def region_set_volume(regions: RegionSet) -> int:
    return _union_volume(regions)


def region_set_intersection_volume(a: RegionSet, b: RegionSet) -> int:
    pieces = []
    for box_a in a:
        for box_b in b:
            hit = box_a.intersect(box_b)
            if hit is not None:
                pieces.append(hit)
    return _union_volume(pieces)


def region_set_bounds(regions: RegionSet) -> Optional[Region]:
    """Bounding box of a region set (None when empty)."""
    if not regions:
        return None
    return Region(
        min(b.row_lo for b in regions), max(b.row_hi for b in regions),
        min(b.col_lo for b in regions), max(b.col_hi for b in regions),
        min(b.ch_lo for b in regions), max(b.ch_hi for b in regions),
    )


def node_workload(layer: LayerSpec, out_regions: RegionSet | Region) -> int:
    """Exact flop count to produce the given output region(s) of the layer."""
    if isinstance(out_regions, Region):
        out_regions = (out_regions,)
    return flops_per_output_element(layer) * _union_volume(out_regions)


def transfer_volumes(
    producer: LayerSpec,
    producer_tiles: TileMap,
    consumer_regions: Sequence[RegionSet],
    element_size: int,
) -> list[list[int]]:
    """Bytes each node must send to each other node.

    Entry (u, v) is the overlap between u's owned output and v's required
    input, u != v; diagonal entries are zero (local data moves nothing).
    """
    n = producer_tiles.node_count
    if len(consumer_regions) != n:
        raise ValidationError(
            f"consumer regions for {len(consumer_regions)} nodes, producer has {n}"
        )
    matrix = [[0] * n for _ in range(n)]
    for u in range(n):
        owned = producer_tiles.tiles[u]
        for v in range(n):
            if u == v:
                continue
            vol = region_set_intersection_volume(owned, consumer_regions[v])
            matrix[u][v] = vol * element_size
    return matrix


def feasible(
    scheme: Scheme,
    mode: Mode,
    layer: LayerSpec,
    next_layer: Optional[LayerSpec] = None,
    next_scheme: Optional[Scheme] = None,
) -> bool:
    """Whether a (scheme, mode) choice is admissible for this layer.

    T is always admissible.  NT requires a spatial scheme (a channel-split
    node cannot locally reproduce the other channels the next layer reads),
    a following layer, and that the following layer uses the same scheme.
    """
    if mode is Mode.T:
        return True
    if scheme not in SPATIAL_SCHEMES:
        return False
    if next_layer is None:
        return False
    return next_scheme == scheme


def scheme_executable(layer: LayerSpec, scheme: Scheme, node_count: int) -> bool:
    """Whether the layer's output tensor can actually be tiled this way."""
    if node_count < 2:
        return False
    if scheme is Scheme.INH:
        return layer.out_h >= node_count
    if scheme is Scheme.INW:
        return layer.out_w >= node_count
    if scheme is Scheme.OUTC:
        return layer.out_c >= node_count
    g = _grid_side(node_count)
    return layer.out_h >= g and layer.out_w >= g
