"""
Where the perturbation is allowed to hide
=========================================

A one-level Haar transform splits an image into a coarse band and three
detail bands. The coarse band rebuilds the flat regions (F_homo); whatever
is left over is edges and texture (F_stru).
"""
import numpy as np
import torch

from style_cloak import dwt2, homogeneous_component, idwt2, structural_component
from style_cloak.samples import synthetic_artwork

x = synthetic_artwork(seed=1)
pyr = dwt2(x)
for name, band in zip(("ll", "lh", "hl", "hh"), (pyr.ll, pyr.lh, pyr.hl, pyr.hh)):
    print(f"{name}: shape {tuple(band.shape)}  energy {float((band**2).sum()):10.2f}")

# orthonormal: the bands keep all of the energy and rebuild the image exactly
print("energy image", round(float((x**2).sum()), 2), "bands", round(pyr.energy(), 2))
print("reconstruction error", float((idwt2(pyr) - x).abs().max()))

homo = homogeneous_component(x)
stru = structural_component(x)
print("homo + stru == x:", torch.allclose(homo + stru, x, atol=1e-12))

# most of a painting's energy sits in the coarse band
share = float((pyr.ll**2).sum()) / pyr.energy()
print(f"coarse band holds {100 * share:.1f}% of the energy")

# a 2x2 checkerboard lives purely in hh, so F_homo ignores it entirely
board = torch.from_numpy(np.indices((8, 8)).sum(0) % 2 * 2.0 - 1.0)[None]
print("checkerboard homo max", float(homogeneous_component(board).abs().max()))
print("checkerboard hh", float(dwt2(board).hh.abs().mean()))
