"""rrtlab: RRT / RRT* with executable asymptotic-optimality machinery."""

__version__ = "0.1.0"
