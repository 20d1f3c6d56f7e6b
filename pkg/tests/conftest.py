import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

from edgeplan.models import LayerKind, LayerSpec, ModelGraph, conv_out_dim


def conv_layer(lid=0, kind=LayerKind.STANDARD_CONV, in_h=14, in_w=14, in_c=512,
               out_c=512, kernel=3, stride=1, padding=1):
    if kind in (LayerKind.DEPTHWISE_CONV, LayerKind.POOL):
        out_c = in_c
    if kind in (LayerKind.POINTWISE_CONV, LayerKind.MATMUL):
        kernel, padding = 1, 0
    return LayerSpec(
        id=lid, kind=kind, in_h=in_h, in_w=in_w, in_c=in_c,
        out_h=conv_out_dim(in_h, kernel, stride, padding),
        out_w=conv_out_dim(in_w, kernel, stride, padding),
        out_c=out_c, kernel=kernel, stride=stride, padding=padding,
    )


def stacked_graph(*layers, element_size=4):
    return ModelGraph(layers=tuple(layers), element_size=element_size)
