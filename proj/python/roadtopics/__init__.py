"""Personal road network HMM and road-signal HDP."""

from ._roadtopics import *  # noqa: F401,F403
from ._roadtopics import __doc__  # noqa: F401

__version__ = "0.3.0"
