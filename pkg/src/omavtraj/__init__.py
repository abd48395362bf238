"""Whole-body 6-D trajectory planning for fully actuated multirotors.

Pipeline: RRT path search, safe flight corridor, MINCO spline optimization
over position and stereographic attitude, flatness maps and a tracking
simulator.
"""

__version__ = "0.1.0"
