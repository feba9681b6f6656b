"""
Input frequency and learning
============================

Scaling every pixel current changes how fast input neurons fire. Presentation
time is stretched or shrunk so the brightest pixel always fires ten times.
The question is how much accuracy moves with the scale, for VDSP versus
normalized pair STDP. Adaptation is switched off for this comparison.
"""

import os

from vdsp import experiments as ex
from vdsp.config import from_dict

mnist = os.environ.get("VDSP_MNIST_DIR", "data/mnist")
cfg = from_dict(
    {
        "dataset_dir": mnist,
        "training": {"train_samples": 5000, "label_samples": 2000, "test_samples": 1000},
    }
)

###############################################################################
# Scale 0.5 puts a white pixel exactly at threshold once the bias is added,
# so that point is flagged rather than simulated.
rows = ex.frequency_sweep(cfg, [0.5, 1.0, 2.0], seeds=[0, 1])
for r in rows:
    flag = " (subthreshold)" if r["flagged"] else ""
    print(f"scale {r['scale']:>4}  {r['rule']:>4}  {100 * r['accuracy_mean']:5.1f}%  {r['mean_duration_ms']:6.0f} ms{flag}")

###############################################################################
print("range vdsp:", round(ex.accuracy_range(rows, "vdsp"), 3), " stdp:", round(ex.accuracy_range(rows, "stdp"), 3))
