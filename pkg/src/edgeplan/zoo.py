"""Built-in benchmark model analogs.

Shape tables follow the public descriptions of the referenced families at
224x224 input (a 512-token sequence for the transformer analog), with two
deliberate departures, both needed so that every layer stays partitionable by
up to 6 nodes on every axis:

* classifier heads (global pool + FC) are replaced by a 3x3/s1 pool that
  preserves the 7x7 spatial extent -- a global pool's 1x1 output cannot be
  row/column-partitioned at all;
* the transformer analog folds its 512-token sequence into a 32x16 spatial
  grid (channels = hidden width 768) so that row, column and grid partitions
  all apply; each of the 12 encoder blocks is modeled as its dominant
  hidden-to-hidden matmul.

``scale`` multiplies every channel dimension (rounded to nearest, and it is an
error if any channel rounds to zero); spatial dims are untouched.
"""

from __future__ import annotations

from .errors import ValidationError
from .models import LayerKind, LayerSpec, ModelGraph, conv_out_dim

BUILTIN_NAMES = ("mobilenet-like", "resnet18-like", "resnet101-like", "bert-like")

# Table rows: (kind, out_c, kernel, stride, padding).  out_c None means
# "same as input" (depthwise / pool).  Input tensor per model below.

_MOBILENET_INPUT = (224, 224, 3)


def _mobilenet_rows():
    rows = [(LayerKind.STANDARD_CONV, 32, 3, 2, 1)]
    # 13 depthwise-separable blocks; dw stride 2 where the net downsamples.
    pw_out = [64, 128, 128, 256, 256, 512, 512, 512, 512, 512, 512, 1024, 1024]
    dw_stride = [1, 2, 1, 2, 1, 2, 1, 1, 1, 1, 1, 2, 1]
    for s, c in zip(dw_stride, pw_out):
        rows.append((LayerKind.DEPTHWISE_CONV, None, 3, s, 1))
        rows.append((LayerKind.POINTWISE_CONV, c, 1, 1, 0))
    rows.append((LayerKind.POOL, None, 3, 1, 1))
    return rows


_RESNET18_INPUT = (224, 224, 3)


def _resnet18_rows():
    rows = [(LayerKind.STANDARD_CONV, 64, 7, 2, 3)]
    # 8 basic blocks of two 3x3 convs; stage-leading conv downsamples.
    for out_c, blocks, lead_stride in ((64, 2, 2), (128, 2, 2), (256, 2, 2), (512, 2, 2)):
        for b in range(blocks):
            s = lead_stride if b == 0 else 1
            rows.append((LayerKind.STANDARD_CONV, out_c, 3, s, 1))
            rows.append((LayerKind.STANDARD_CONV, out_c, 3, 1, 1))
    rows.append((LayerKind.POOL, None, 3, 1, 1))
    return rows


_RESNET101_INPUT = (224, 224, 3)


def _resnet101_rows():
    rows = [(LayerKind.STANDARD_CONV, 64, 7, 2, 3)]
    # Bottleneck stages (1x1 reduce, 3x3, 1x1 expand); residual adds are
    # cost-free and omitted from the chain.
    for mid_c, out_c, blocks in ((64, 256, 3), (128, 512, 4), (256, 1024, 23), (512, 2048, 3)):
        for b in range(blocks):
            s = 2 if b == 0 else 1
            rows.append((LayerKind.POINTWISE_CONV, mid_c, 1, 1, 0))
            rows.append((LayerKind.STANDARD_CONV, mid_c, 3, s, 1))
            rows.append((LayerKind.POINTWISE_CONV, out_c, 1, 1, 0))
    rows.append((LayerKind.POOL, None, 3, 1, 1))
    return rows


_BERT_INPUT = (32, 16, 768)  # 512 tokens folded to 32x16; hidden width 768


def _bert_rows():
    return [(LayerKind.MATMUL, 768, 1, 1, 0)] * 12


_BUILTINS = {
    "mobilenet-like": (_MOBILENET_INPUT, _mobilenet_rows),
    "resnet18-like": (_RESNET18_INPUT, _resnet18_rows),
    "resnet101-like": (_RESNET101_INPUT, _resnet101_rows),
    "bert-like": (_BERT_INPUT, _bert_rows),
}


def _scaled_channels(c: int, scale: float) -> int:
    scaled = round(c * scale)
    if scaled < 1:
        raise ValidationError(
            f"scale {scale} collapses a {c}-channel dimension to zero"
        )
    return scaled


def builtin_model(name: str, scale: float = 1.0, element_size: int = 4) -> ModelGraph:
    """Construct one of the built-in benchmark analogs.

    ``scale`` in (0, 1] multiplies channel dimensions.
    """
    if name not in _BUILTINS:
        raise ValidationError(
            f"unknown builtin model {name!r}; expected one of {BUILTIN_NAMES}"
        )
    if not 0.0 < scale <= 1.0:
        raise ValidationError(f"scale must be in (0, 1], got {scale}")
    (in_h, in_w, in_c), rows_fn = _BUILTINS[name]
    h, w, c = in_h, in_w, _scaled_channels(in_c, scale)
    layers = []
    for pos, (kind, out_c, kernel, stride, padding) in enumerate(rows_fn()):
        oc = c if out_c is None else _scaled_channels(out_c, scale)
        oh = conv_out_dim(h, kernel, stride, padding)
        ow = conv_out_dim(w, kernel, stride, padding)
        layers.append(LayerSpec(
            id=pos, kind=kind,
            in_h=h, in_w=w, in_c=c,
            out_h=oh, out_w=ow, out_c=oc,
            kernel=kernel, stride=stride, padding=padding,
        ))
        h, w, c = oh, ow, oc
    return ModelGraph(layers=tuple(layers), element_size=element_size)
