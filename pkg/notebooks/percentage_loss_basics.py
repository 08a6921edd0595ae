"""
Percentage loss basics
======================

How the two training losses treat over- and under-forecasts, and where the
intercept-only model lands under each of them.
"""

import numpy as np

from efm.loss import loss
from efm.metrics import diagnostics, verify_theorem1
from efm.model import FeatureConfig
from efm.schema import build_dataset
from efm.selection import null_model_level

# a forecast of 120 against an actual of 100 costs more than the mirror image
over = 2 * loss("PES", [120.0], [100.0])
under = 2 * loss("PES", [100.0], [120.0])
print(f"over-forecast {over:.4f}  under-forecast {under:.4f}")

# right-skewed responses: the ES level chases the tail, the PES level sits low
rng = np.random.default_rng(0)
d = np.exp(rng.normal(1.0, 1.0, 200))
for kind in ("ES", "PES"):
    level = null_model_level(kind, d)
    dg = diagnostics(np.full_like(d, level), d)
    print(f"{kind:3s} level {level:7.3f}  MES {dg.mes:9.3f}  MPES {dg.mpes:7.3f}  under {dg.underestimation_ratio:.2f}")

# each minimizer loses at most a factor d_max^2 / d_min^2 on the other criterion
small = build_dataset({"a": ["x", "y", "x", "y", "x"]}, [1.0, 2.5, 4.0, 0.7, 3.0])
rep = verify_theorem1(small, FeatureConfig((0,)))
print(f"ratio indicator {rep.ratio_indicator:.2f}  ES loss ratio {rep.es_ratio:.3f}  "
      f"PES loss ratio {rep.pes_ratio:.3f}  holds {rep.holds}")
