"""saflosim: deterministic MPTCP-scheduling simulator and attack/defense harness.

Subpackages map to the system's parts: core (shared types and channels),
netsim (discrete-event engine), schedulers (Saflo/BLEST/RD/singlepath),
manager (user-space subflow manager), detector (CNN attack detector), cnn
(the shared network), workloads (traffic generators), adversary (observation
model and attacks), harness (experiment orchestration) and cli.
"""

__version__ = "0.1.0"

from . import _kernels

KERNEL_BACKEND = _kernels.BACKEND
