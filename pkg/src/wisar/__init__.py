"""Wilderness search-and-rescue simulation stack.

Predicts a lost person's spatio-temporal probability distribution with an
agent-based Monte Carlo model over procedural terrain, then plans a
distributed multi-UAV receding-horizon search over that distribution.
"""

__version__ = "0.1.0"
