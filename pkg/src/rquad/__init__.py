"""Action-robust reinforcement learning for quadcopter waypoint control."""
__version__ = "0.1.0"
