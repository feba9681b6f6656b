"""
Unsupervised digits with ten output neurons
===========================================

Train the two-layer network on a slice of MNIST, label each output neuron
by the class it answers to most, score the test set, and dump the learned
receptive fields as PGM images.

Set ``VDSP_MNIST_DIR`` to a directory with the four raw IDX files.
"""

import os
from pathlib import Path

import numpy as np

from vdsp import experiments as ex
from vdsp.config import from_dict

mnist = os.environ.get("VDSP_MNIST_DIR", "data/mnist")
out = Path("runs/notebook_02")
out.mkdir(parents=True, exist_ok=True)

###############################################################################
# A small budget keeps this under a minute; drop the sample counts for the
# full 60k/10k protocol.
cfg = from_dict(
    {
        "dataset_dir": mnist,
        "training": {"seeds": [0], "train_samples": 10000, "label_samples": 5000, "test_samples": 2000},
    }
)
result = ex.run_one(cfg, seed=0)
rep = result.report
print(f"accuracy {100 * rep.accuracy:.1f}%  neuron labels {rep.labels}")

###############################################################################
# Rows of the confusion matrix are true classes.
print(rep.confusion.astype(int))

###############################################################################
# Weights pile up near 0 and 1 under the multiplicative rule.
stats = ex.weight_stats(result.weights)
print(f"mass near the bounds {stats['tail_mass']:.2f}, in the middle {stats['middle_mass']:.2f}")

###############################################################################
# One 28x28 image per output neuron.
for j, img in enumerate(ex.field_images(result.weights)):
    ex.write_pgm(out / f"field_{j:03d}.pgm", img)
print("fields written to", out)
print("mean field intensity per neuron:", np.round([f.mean() for f in ex.field_images(result.weights)], 1))
