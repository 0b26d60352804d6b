"""Leader-follower cooperative transport of a payload with a moving CG.

A PID leader and a soft actor-critic follower carry a rigidly attached rod
whose center of gravity oscillates along the rod.
"""
__version__ = "0.1.0"
