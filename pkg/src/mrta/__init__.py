"""Multi-robot task allocation for cooperative transport.

Simulator, priority-consensus controller, MADDPG training, and evaluation.
"""

__version__ = "0.1.0"
