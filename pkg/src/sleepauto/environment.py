from simpy.core   import Environment, SimTime
from simpy.events import Event, EventCallbacks, EventPriority, Timeout
from typing       import Any, Optional

class SleepEvent(Event):
    """
    simpy Event scheduled with an explicit priority, so that processes waking at the same
    simulated time run in a fixed order (stage transitions before spindle arrivals).
    """
    def __init__( self, env:Environment, delay:SimTime= 0, priority:int= 1, value:Optional[Any]= None ):
        if delay < 0:
            raise ValueError( f'negative delay {delay}' )

        self.env                      = env
        self.callbacks:EventCallbacks = []
        self._value                   = value
        self._delay                   = delay
        self._ok                      = True

        env.schedule( self, EventPriority( priority ), delay )

class SleepEnvironment(Environment):
    """
    simpy Environment of the synthetic night; the simulated time is the recording time in seconds.
    """
    def __init__(self):
        super().__init__( initial_time= 0 )

    def timeout( self, delay:SimTime= 0, priority:int= 3, value:Optional[Any]= None ) -> Timeout:
        return SleepEvent( self, delay, priority, value )

    def stage_timeout( self, delay:SimTime= 0, value:Optional[Any]= None ) -> Timeout:
        """Returns a timeout processed before any other event of the same time (simpy: lower value first)."""
        return self.timeout( delay= delay, priority= 0, value= value )

    def event_timeout( self, delay:SimTime= 0, value:Optional[Any]= None ) -> Timeout:
        """Returns a timeout processed after the stage transitions of the same time."""
        return self.timeout( delay= delay, priority= 1, value= value )
