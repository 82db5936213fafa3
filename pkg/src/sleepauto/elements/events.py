import numpy as np

from dataclasses import dataclass, field
from typing      import FrozenSet, Iterable, Iterator, List, overload

from sleepauto.exceptions import NegativeDuration, OverlappingEvents

# tolerance of time comparisons (events are sample-aligned, far coarser than this)
TIME_EPS = 1e-9

@dataclass(frozen=True)
class SpindleEvent:
    """
    A spindle on the recording timeline.

    :ivar float          start_s:    start (seconds from record start)
    :ivar float          duration_s: duration (seconds)
    :ivar FrozenSet[str] channels:   labels of the channels the event was annotated on
    """
    start_s:float
    duration_s:float
    channels:FrozenSet[str] = field( default_factory= frozenset )

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s

    def shifted( self, offset_s:float ) -> 'SpindleEvent':
        return SpindleEvent( self.start_s + offset_s, self.duration_s, self.channels )

class EventList:
    """
    Spindle events sorted by start time.

    :param Iterable[SpindleEvent] events: events in any order

    :raises NegativeDuration:  if an event has non-positive duration
    :raises OverlappingEvents: if two events of the same channel overlap
    """
    def __init__( self, events:Iterable[SpindleEvent]= () ) -> None:
        self.events:List[SpindleEvent] = sorted( events, key= lambda event : ( event.start_s, event.duration_s ) )

        for event in self.events:
            if not event.duration_s > 0:
                raise NegativeDuration( f'event at {event.start_s} s has non-positive duration {event.duration_s}' )

        # per-channel overlap check
        last_end = {}
        for event in self.events:
            for channel in event.channels:
                if channel in last_end and event.start_s < last_end[channel] - TIME_EPS:
                    raise OverlappingEvents( f'events overlap on channel "{channel}" at {event.start_s} s' )

                last_end[channel] = max( last_end.get( channel, event.end_s ), event.end_s )

    def __len__(self) -> int:
        return len( self.events )

    def __iter__(self) -> Iterator[SpindleEvent]:
        return iter( self.events )

    @overload
    def __getitem__( self, index:int ) -> SpindleEvent: ...
    @overload
    def __getitem__( self, index:slice ) -> List[SpindleEvent]: ...
    def __getitem__( self, index ):
        return self.events[index]

    def __eq__( self, other:object ) -> bool:
        return isinstance( other, EventList ) and self.events == other.events

    def __repr__(self) -> str:
        return f'EventList({len(self)} events)'

    @property
    def starts(self) -> np.ndarray:
        return np.array( [ event.start_s for event in self.events ], dtype= np.float64 )

    @property
    def ends(self) -> np.ndarray:
        return np.array( [ event.end_s for event in self.events ], dtype= np.float64 )

    @property
    def durations(self) -> np.ndarray:
        return np.array( [ event.duration_s for event in self.events ], dtype= np.float64 )

    def shifted( self, offset_s:float ) -> 'EventList':
        """Returns the events moved by the given offset on the timeline."""
        return EventList( event.shifted( offset_s ) for event in self.events )

    def for_channel( self, label:str ) -> 'EventList':
        """Returns the events annotated on the given channel."""
        return EventList( event for event in self.events if label in event.channels )
