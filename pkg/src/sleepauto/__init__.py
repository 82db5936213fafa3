__version__ = "0.0.1"

from sleepauto.elements.events    import EventList, SpindleEvent
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
from sleepauto.pipeline           import PipelineResult, SleepAnalysis

from sleepauto.exceptions import SleepAutoError

name = "sleepauto"
