"""Meta representations for agents: a desk-scale multi-agent RL lab."""
__version__ = "0.1.0"
