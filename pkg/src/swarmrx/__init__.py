"""swarmrx: a self-healing multi-receiver combining stack.

One transmitter, N cooperating receivers. Each receiver demodulates its own
branch; a rotating leader collects the branch reports, scores them against
a known reference, and picks the combining algorithm (max-SNR, interference
whitening, or best-branch selection) that the current interference
situation calls for. The package bundles the baseband modem, the channel
simulator, the combining math, the coordination protocol (deterministic
in-process and TCP transports), and a scenario/CLI layer for reproducible
experiments.
"""

from . import channel, combining, phy, scenario, selfheal, swarm

__version__ = "0.1.0"

__all__ = ["channel", "combining", "phy", "scenario", "selfheal", "swarm", "__version__"]
