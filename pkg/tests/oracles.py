"""Independent brute-force oracles used to cross-check the geometry module.

These deliberately avoid the package's interval arithmetic: receptive fields
are computed by marking, per output element, exactly the input cells inside
that element's window.  The numpy batching below is mechanical (one shift per
kernel offset); the semantics stay element-by-element, so agreement with the
box-propagation code is meaningful.
"""

from __future__ import annotations

import numpy as np

from edgeplan.geometry import RegionSet
from edgeplan.models import CHANNELWISE_KINDS, LayerSpec


def mark_regions(shape: tuple[int, int, int], regions: RegionSet) -> np.ndarray:
    mask = np.zeros(shape, dtype=bool)
    for box in regions:
        mask[box.row_lo:box.row_hi + 1,
             box.col_lo:box.col_hi + 1,
             box.ch_lo:box.ch_hi + 1] = True
    return mask


def backward_mark_batch(layer: LayerSpec, out_masks: np.ndarray) -> np.ndarray:
    """Which input cells influence any marked output cell, per batch entry.

    ``out_masks`` is (batch, out_h, out_w, out_c); the result is
    (batch, in_h, in_w, in_c).  Output elements whose window lies entirely in
    padding mark nothing.
    """
    batch = out_masks.shape[0]
    in_masks = np.zeros((batch, layer.in_h, layer.in_w, layer.in_c), dtype=bool)
    k, s, p = layer.kernel, layer.stride, layer.padding
    rows_base = np.arange(layer.out_h) * s - p
    cols_base = np.arange(layer.out_w) * s - p
    channelwise = layer.kind in CHANNELWISE_KINDS
    batch_ix = np.arange(batch)
    for dr in range(k):
        rows_in = rows_base + dr
        rsel = (rows_in >= 0) & (rows_in < layer.in_h)
        if not rsel.any():
            continue
        for dc in range(k):
            cols_in = cols_base + dc
            csel = (cols_in >= 0) & (cols_in < layer.in_w)
            if not csel.any():
                continue
            src = out_masks[:, rsel][:, :, csel]
            ix = np.ix_(batch_ix, rows_in[rsel], cols_in[csel])
            if channelwise:
                in_masks[ix] |= src
            else:
                in_masks[ix] |= src.any(axis=3)[..., None]
    return in_masks


def backward_mark(layer: LayerSpec, out_mask: np.ndarray) -> np.ndarray:
    return backward_mark_batch(layer, out_mask[None])[0]


def chain_entry_mask_batch(layers, owned_masks: np.ndarray) -> np.ndarray:
    """Input of the first layer needed for each batch entry's owned outputs."""
    masks = owned_masks
    for layer in reversed(layers):
        masks = backward_mark_batch(layer, masks)
    return masks


def chain_entry_mask(layers, owned: RegionSet) -> np.ndarray:
    last = layers[-1]
    mask = mark_regions((last.out_h, last.out_w, last.out_c), owned)
    return chain_entry_mask_batch(layers, mask[None])[0]
