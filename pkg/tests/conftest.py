import numpy  as np
import pytest

from sleepauto.elements.events    import EventList, SpindleEvent
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
from sleepauto.synth              import SynthSpec, simulate

CHANNELS = [ 'C3-A2', 'C4-A1' ]

def tone( freq_hz:float, fs:float, duration_s:float, amplitude:float= 1.0, phase:float= 0.0 ) -> np.ndarray:
    t = np.arange( int( round( duration_s * fs ) ) ) / fs
    return amplitude * np.sin( 2 * np.pi * freq_hz * t + phase )

def make_record( signals:dict, fs:float ) -> SignalRecord:
    return SignalRecord( Channel( label, samples, fs ) for label, samples in signals.items() )

def events( *intervals, channels=( 'C3-A2', ) ) -> EventList:
    return EventList( SpindleEvent( start, duration, frozenset( channels ) ) for start, duration in intervals )

def acceptance_spec( seed:int= 3, duration_h:float= 0.5, channels=CHANNELS, initial_stage:str= 'N2', **kwargs ) -> SynthSpec:
    """Synthetic night at the acceptance signal-to-noise ratio."""
    values = dict(
        seed= seed,
        duration_h= duration_h,
        fs= 256.0,
        channels= list( channels ),
        initial_stage= initial_stage,
        spindle_rate_per_min= 12.0,
        duration_range_s= [ 0.8, 1.5 ],
        amplitude_range_uv= [ 15.0, 25.0 ],
        noise_uv= 5.0,
    )
    values.update( kwargs )
    return SynthSpec.from_dict( values )

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng( 1234 )

@pytest.fixture(scope='session')
def synthetic_night():
    """Half an hour of synthetic sleep starting in N2, with its ground truth."""
    return simulate( acceptance_spec() )

@pytest.fixture(scope='session')
def n2_night():
    """Ten minutes of uninterrupted N2 sleep with planted spindles."""
    spec = acceptance_spec( seed= 11, duration_h= 1 / 6 )
    return simulate( spec, Hypnogram( [ Stage.N2 ] * spec.n_epochs ) )
