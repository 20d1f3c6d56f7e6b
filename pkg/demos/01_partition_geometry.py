#!/usr/bin/env python3
"""Tour of the partition schemes and halo geometry on a single conv layer.

Shows how each scheme tiles a 14x14x512 output across 4 nodes, what input
each node then needs, and how much data crosses nodes when the producer is
tiled differently from the consumer.
"""

from edgeplan import (
    LayerKind,
    LayerSpec,
    Scheme,
    assign_tiles,
    chain_entry_regions,
    node_workload,
    transfer_volumes,
)
from edgeplan.geometry import backward_regions, region_set_volume
from edgeplan.models import layer_flops

layer = LayerSpec(id=0, kind=LayerKind.STANDARD_CONV,
                  in_h=14, in_w=14, in_c=512,
                  out_h=14, out_w=14, out_c=512,
                  kernel=3, stride=1, padding=1)
NODES = 4

print(f"layer: 3x3 conv, 14x14x512 -> 14x14x512, {layer_flops(layer):,} flops\n")

print("=== how each scheme carves the output tensor ===")
for scheme in Scheme:
    tiles = assign_tiles(layer, scheme, NODES)
    shares = [region_set_volume(t) for t in tiles.tiles]
    total = sum(shares)
    pretty = ", ".join(f"node{i}: {s * 100 / total:.1f}%" for i, s in enumerate(shares))
    print(f"{scheme.token:>7}: {pretty}")
print("note: 14 rows do not divide by 4, so inh is imbalanced while outc")
print("      splits 512 channels exactly evenly.\n")

print("=== grid2d with 3 nodes: the classic 2:1:1 imbalance ===")
tiles3 = assign_tiles(layer, Scheme.GRID2D, 3)
for i, t in enumerate(tiles3.tiles):
    print(f"node{i}: {len(t)} cell(s), {region_set_volume(t):,} elements")
print()

print("=== halo growth through a fused pair of 3x3 convs ===")
chain = [layer, LayerSpec(id=1, kind=LayerKind.STANDARD_CONV,
                          in_h=14, in_w=14, in_c=512,
                          out_h=14, out_w=14, out_c=512,
                          kernel=3, stride=1, padding=1)]
entries = chain_entry_regions(chain, Scheme.INH, NODES)
tiles = assign_tiles(chain[-1], Scheme.INH, NODES)
for node in range(NODES):
    owned = tiles.tiles[node][0]
    entry = entries[node][0]
    print(f"node{node}: owns out rows [{owned.row_lo},{owned.row_hi}]  "
          f"needs in rows [{entry.row_lo},{entry.row_hi}] before the chain")
first_layer_regions = backward_regions(chain, Scheme.INH, NODES)[0]
redundant = sum(node_workload(chain[0], regions) for regions in first_layer_regions)
print(f"first-layer work with halos: {redundant:,} flops "
      f"vs {layer_flops(chain[0]):,} without fusion\n")

print("=== redistribution cost when schemes change between layers ===")
producer_tiles = assign_tiles(layer, Scheme.OUTC, NODES)
consumer_entry = chain_entry_regions([chain[1]], Scheme.INH, NODES)
matrix = transfer_volumes(layer, producer_tiles, consumer_entry, element_size=4)
print("bytes sent, outc producer -> inh consumer:")
for row in matrix:
    print("   ", ["%7d" % v for v in row])
print("every consumer must fetch the channels it lacks from all the others.")
