"""An identity model reproduces bicubic upsampling; the spatial stage sees a 3x3 block."""

import numpy as np

from panlut.lattice import LutTable
from panlut.pipeline import PanLutModel, sharpen
from panlut.raster import MultiBandImage, upsample_bicubic
from panlut.stages import SdLut, sdlut_apply

rng = np.random.default_rng(1)
pan = MultiBandImage(rng.random((1, 64, 64)))
ms = MultiBandImage(rng.random((4, 16, 16)))

# %% With identity tables the three stages pass the upsampled MS bands through,
# so the output equals (clamped) bicubic interpolation.
model = PanLutModel.identity()
print("parameters:", model.n_params)
out = sharpen(model, pan, ms)
ref = np.clip(upsample_bicubic(ms, 4).data, 0, 1)
print("max |sharpen - bicubic|:", np.abs(out.data - ref).max())

# %% The spatial table reads a 2x2 quadrant; four rotated quadrants together
# cover the 3x3 neighbourhood. Perturb each pixel of a 7x7 patch and mark
# which ones move the centre output.
lut = SdLut(LutTable(rng.random((9,) * 4 + (1,))), mode="ensemble")
x = rng.random((1, 7, 7))
centre = sdlut_apply(lut, x)[0, 3, 3]
influence = np.zeros((7, 7), dtype=int)
for y in range(7):
    for xx in range(7):
        p = x.copy()
        p[0, y, xx] = rng.random()
        influence[y, xx] = sdlut_apply(lut, p)[0, 3, 3] != centre
print("pixels that influence the centre:\n", influence)
