"""macsched: decentralized scheduling and power control for a slotted MAC.

Library layout:

- ``dist``: exact discrete laws (rates, fading power gains, queue states).
- ``alloc_unit``: optimal unit-delay power allocation (fixed, dynamic and
  L-user fading), lower bound and outage audit.
- ``alloc_continuous``: unit-delay allocation for continuous rate laws.
- ``mdp``: queue dynamics, value-iteration schedulers, robust and
  derivative-directed heuristics.
- ``iteropt``: alternating scheduler/allocation optimization for general
  delay budgets, plus convex rate-power curve construction.
- ``baselines``: TDMA variants and the centralized corner allocation.
- ``sim``: seeded slot-level Monte Carlo with outage and delay audits.
- ``cli``: config-driven command line front end.
"""

__version__ = "0.1.0"
