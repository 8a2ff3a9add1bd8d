"""Symbolic kitchen planning with successor-representation agents.

Subpackages and modules:

- :mod:`srkitchen.domain`: scenes, world states, actions and tasks
- :mod:`srkitchen.strips`: STRIPS parsing and grounding
- :mod:`srkitchen.planner`: optimal and fixed-order search planners
- :mod:`srkitchen.env`: the episodic environment and observation encoding
- :mod:`srkitchen.nn`, :mod:`srkitchen.sr_model`: networks and the SR model
- :mod:`srkitchen.training`: imitation and reinforcement learning
- :mod:`srkitchen.evaluation`, :mod:`srkitchen.transfer`: metrics and transfer
- :mod:`srkitchen.catalog`: shipped scenes and tasks
"""

__version__ = "0.1.0"
