#deterministic seed splitting
#
#every random stream is derived from the master seed and a spawn key:
#  (0, realization)                          fiber draw
#  (1, sweep_index, session)                 spad streams, detector d spawns (d,) from it
#  (2, sweep_index, session)                 alice record
#  (2, sweep_index, session, 1)              photon arrivals and analyzer routing
#  (3,)                                      eye diagram symbols
#fiber draws do not depend on the sweep index so every sweep point sees the same fiber

import numpy as np

FIBER_STREAM = 0
DETECTOR_STREAM = 1
ALICE_STREAM = 2
EYE_STREAM = 3


def derive_seed(master: int, *key: int) -> int:
    sequence = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1, np.uint64)[0])
