"""
How many synapses does each rule touch?
=======================================

VDSP updates one column of the weight matrix per postsynaptic spike. Pair
STDP additionally updates one row per presynaptic spike. Feeding both rules
the same spike trains makes the difference concrete.
"""

import numpy as np

from vdsp.encoding import EncodingConfig, encode_sample
from vdsp.network import NetworkConfig, build_network, present_sample
from vdsp.plasticity import PlasticityConfig

rng = np.random.default_rng(0)
images = np.zeros((20, 28, 28), dtype=np.uint8)
for k in range(20):
    r, c = rng.integers(4, 18, size=2)
    images[k, r : r + 8, c : c + 3] = 255
    images[k, r : r + 3, c : c + 8] = 200

###############################################################################
# A vanishing learning rate keeps the two networks on identical trajectories.
for rule in ("vdsp_multiplicative", "stdp_pair"):
    net = NetworkConfig(plasticity=PlasticityConfig(rule=rule, lr=1e-12))
    state = build_network(net, np.random.default_rng(1))
    post = pre = 0
    for img in images:
        s = encode_sample(img, EncodingConfig(), 350, net.dt)
        res = present_sample(state, s.drive, s.n_steps, net, record=True)
        post += int(res.output_raster.sum())
        pre += int(res.input_raster.sum())
    print(f"{rule:>20}: {state.synapses.update_events:>9} updates  ({pre} pre, {post} post spikes)")
