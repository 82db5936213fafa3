from sleepauto.elements.events    import TIME_EPS, EventList, SpindleEvent
from sleepauto.elements.hypnogram import EPOCH_LEN_S, Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
