"""Simulator and analysis toolkit for semilinear parabolic transmission
problems with nonlocal dynamic interface conditions on an embedded
(possibly prefractal) interface."""

__version__ = "0.1.0"
