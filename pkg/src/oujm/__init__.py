"""Joint modeling of intensive longitudinal outcomes and a time-to-event outcome.

A dynamic factor model with Ornstein-Uhlenbeck latent factors is linked to a
proportional-hazards survival model; the joint posterior is sampled with HMC.
Submodules are imported on demand so that ``oujm`` itself stays light.
"""

__version__ = "0.1.0"
