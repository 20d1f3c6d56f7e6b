"""Layer-graph data model: shape records, validation, (de)serialization, flop counts.

A model is an ordered chain of layers.  Each layer is a shape record only --
no weights, no tensor values.  All fields are integers and all derived
quantities (flop counts, element counts) are computed exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import ParseError, ValidationError


class LayerKind(str, Enum):
    STANDARD_CONV = "standard-conv"
    DEPTHWISE_CONV = "depthwise-conv"
    POINTWISE_CONV = "pointwise-conv"
    POOL = "pool"
    MATMUL = "matmul"


#: Ordinal encoding used by the cost-model feature schema.
CONV_TYPE_ORDINAL = {
    LayerKind.STANDARD_CONV: 0,
    LayerKind.DEPTHWISE_CONV: 1,
    LayerKind.POINTWISE_CONV: 2,
    LayerKind.POOL: 3,
    LayerKind.MATMUL: 4,
}

#: Kinds whose output channel count must equal the input channel count and
#: whose window reads only its own channel.
CHANNELWISE_KINDS = (LayerKind.DEPTHWISE_CONV, LayerKind.POOL)

#: Kinds restricted to kernel == 1 and padding == 0.
UNIT_KERNEL_KINDS = (LayerKind.POINTWISE_CONV, LayerKind.MATMUL)


def conv_out_dim(in_dim: int, kernel: int, stride: int, padding: int) -> int:
    """Output extent of a windowed op along one spatial axis."""
    return (in_dim + 2 * padding - kernel) // stride + 1


@dataclass(frozen=True)
class LayerSpec:
    """One layer of the chain: input/output feature-map shape plus window geometry.

    ``id`` is the 0-based position of the layer in its graph.  Spatial dims are
    (height, width); ``in_c``/``out_c`` are channel counts.  ``kernel`` is the
    square window size, ``padding`` is symmetric.
    """

    id: int
    kind: LayerKind
    in_h: int
    in_w: int
    in_c: int
    out_h: int
    out_w: int
    out_c: int
    kernel: int
    stride: int
    padding: int

    def validate(self) -> None:
        lid = self.id
        dims = (self.in_h, self.in_w, self.in_c, self.out_h, self.out_w, self.out_c)
        if any(d < 1 for d in dims):
            raise ValidationError(f"layer {lid}: all dimensions must be >= 1, got {dims}")
        if self.kernel < 1:
            raise ValidationError(f"layer {lid}: kernel must be >= 1")
        if self.stride < 1:
            raise ValidationError(f"layer {lid}: stride must be >= 1")
        if self.padding < 0:
            raise ValidationError(f"layer {lid}: padding must be >= 0")
        for name, in_dim, out_dim in (("out_h", self.in_h, self.out_h),
                                      ("out_w", self.in_w, self.out_w)):
            expect = conv_out_dim(in_dim, self.kernel, self.stride, self.padding)
            if out_dim != expect:
                raise ValidationError(
                    f"layer {lid}: {name}={out_dim} inconsistent with shape formula "
                    f"(expected {expect} from in={in_dim} K={self.kernel} "
                    f"S={self.stride} P={self.padding})"
                )
        if self.kind in CHANNELWISE_KINDS and self.out_c != self.in_c:
            raise ValidationError(
                f"layer {lid}: {self.kind.value} requires out_c == in_c "
                f"({self.out_c} != {self.in_c})"
            )
        if self.kind in UNIT_KERNEL_KINDS:
            if self.kernel != 1:
                raise ValidationError(f"layer {lid}: {self.kind.value} requires kernel == 1")
            if self.padding != 0:
                raise ValidationError(f"layer {lid}: {self.kind.value} requires padding == 0")


@dataclass(frozen=True)
class ModelGraph:
    """An ordered, chain-consistent sequence of layers."""

    layers: tuple[LayerSpec, ...]
    element_size: int = 4

    def __post_init__(self) -> None:
        validate_graph(self)

    def __len__(self) -> int:
        return len(self.layers)


def validate_graph(graph: ModelGraph) -> None:
    if not graph.layers:
        raise ValidationError("model must contain at least one layer")
    if graph.element_size < 1:
        raise ValidationError("element_size must be >= 1 byte")
    for pos, layer in enumerate(graph.layers):
        if layer.id != pos:
            raise ValidationError(f"layer {pos}: id {layer.id} does not match position")
        layer.validate()
    for prev, nxt in zip(graph.layers, graph.layers[1:]):
        got = (nxt.in_h, nxt.in_w, nxt.in_c)
        want = (prev.out_h, prev.out_w, prev.out_c)
        if got != want:
            raise ValidationError(
                f"layer {nxt.id}: input shape {got} does not chain from "
                f"layer {prev.id} output {want}"
            )


def flops_per_output_element(layer: LayerSpec) -> int:
    """Exact op count to produce one output element (MAC counted as 2 flops)."""
    k2 = layer.kernel * layer.kernel
    if layer.kind is LayerKind.STANDARD_CONV:
        return 2 * layer.in_c * k2
    if layer.kind is LayerKind.DEPTHWISE_CONV:
        return 2 * k2
    if layer.kind in UNIT_KERNEL_KINDS:
        return 2 * layer.in_c
    # pool: one op per window element
    return k2


def layer_flops(layer: LayerSpec) -> int:
    """Total op count of the layer over its full output tensor."""
    return flops_per_output_element(layer) * layer.out_h * layer.out_w * layer.out_c


_LAYER_FIELDS = ("kind", "in_h", "in_w", "in_c", "out_h", "out_w", "out_c",
                 "kernel", "stride", "padding")


def parse_model(text: str) -> ModelGraph:
    """Decode and validate a model document (JSON).

    Document shape: ``{"element_size": int, "layers": [{kind, in_h, ...}]}``.
    Unknown fields are rejected; layer ids are assigned by position.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("model document must be a JSON object")
    unknown = set(doc) - {"element_size", "layers"}
    if unknown:
        raise ParseError(f"model document has unknown fields: {sorted(unknown)}")
    if "layers" not in doc:
        raise ParseError("model document is missing 'layers'")
    raw_layers = doc["layers"]
    if not isinstance(raw_layers, list):
        raise ParseError("'layers' must be a list")
    element_size = doc.get("element_size", 4)
    if not isinstance(element_size, int):
        raise ParseError("'element_size' must be an integer byte count")

    layers = []
    for pos, raw in enumerate(raw_layers):
        if not isinstance(raw, dict):
            raise ParseError(f"layer {pos}: must be an object")
        unknown = set(raw) - set(_LAYER_FIELDS)
        if unknown:
            raise ParseError(f"layer {pos}: unknown fields {sorted(unknown)}")
        missing = set(_LAYER_FIELDS) - set(raw)
        if missing:
            raise ParseError(f"layer {pos}: missing fields {sorted(missing)}")
        try:
            kind = LayerKind(raw["kind"])
        except ValueError:
            raise ParseError(f"layer {pos}: unknown kind {raw['kind']!r}") from None
        ints = {}
        for field in _LAYER_FIELDS[1:]:
            value = raw[field]
            if not isinstance(value, int) or isinstance(value, bool):
                raise ParseError(f"layer {pos}: field {field} must be an integer")
            ints[field] = value
        layers.append(LayerSpec(id=pos, kind=kind, **ints))
    return ModelGraph(layers=tuple(layers), element_size=element_size)


def serialize_model(graph: ModelGraph) -> str:
    """Inverse of :func:`parse_model`; stable bytes for identical graphs."""
    doc = {
        "element_size": graph.element_size,
        "layers": [
            {"kind": layer.kind.value,
             **{f: getattr(layer, f) for f in _LAYER_FIELDS[1:]}}
            for layer in graph.layers
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
