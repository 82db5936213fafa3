"""
Synthetic polysomnography with known ground truth.

A night is simulated on a simpy timeline: one process walks the Markov-chain hypnogram epoch by
epoch, another one generates Poisson spindle arrivals and plants those falling inside N2 sleep.
The signal is rendered afterwards: 1/f background noise, stage-dependent band-limited boosts and
Hann-windowed sinusoidal bursts at the planted spindles.
"""
import dataclasses
import json
import math
import os

import numpy as np

from dataclasses import dataclass, field
from typing      import Any, Dict, Generator, List, Mapping, Optional, Sequence, Tuple

from sleepauto.exceptions         import InvalidRecord, InvalidSpec, InvalidTransitionMatrix
from sleepauto.elements.events    import EventList, SpindleEvent
from sleepauto.elements.hypnogram import EPOCH_LEN_S, N_STAGES, Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
from sleepauto.environment        import Event, SleepEnvironment
from sleepauto.record_io          import write_events, write_hypnogram
from sleepauto.utils.files        import atomic_write_bytes, create_directory, read_jsonfile, write_jsonfile
from sleepauto.utils.logging      import DefaultLoggingCallback, LoggingCallback

# rows/columns: W, N1, N2, N3, REM
DEFAULT_TRANSITIONS = [
    [ 0.85, 0.10, 0.05, 0.00, 0.00 ],
    [ 0.05, 0.60, 0.30, 0.00, 0.05 ],
    [ 0.02, 0.03, 0.85, 0.07, 0.03 ],
    [ 0.02, 0.00, 0.10, 0.88, 0.00 ],
    [ 0.05, 0.05, 0.05, 0.00, 0.85 ],
]

# stage token -> band-limited noise added to the background
DEFAULT_STAGE_BOOSTS = {
    'W':   { 'band_hz': [ 16.0, 30.0 ], 'gain': 1.5 },
    'N1':  { 'band_hz': [ 4.0, 8.0 ],   'gain': 1.0 },
    'N3':  { 'band_hz': [ 0.5, 2.0 ],   'gain': 2.5 },
    'REM': { 'band_hz': [ 8.0, 12.0 ],  'gain': 1.0 },
}

# duration band of postprocessed spindles
SPINDLE_DURATION_LIMITS_S = ( 0.3, 2.5 )

HIGHPASS_NOISE_HZ = 0.3

@dataclass
class SynthSpec:
    """
    Parameters of a synthetic recording.

    :ivar int   seed:                 random seed (Philox counter-based generator)
    :ivar float duration_h:           duration in hours (rounded to whole epochs)
    :ivar float fs:                   sampling rate (Hz)
    :ivar list  channels:             channel labels
    :ivar list  transition_matrix:    5x5 stage transition probabilities per epoch
    :ivar str   initial_stage:        stage token of the first epoch
    :ivar float spindle_rate_per_min: Poisson arrival rate of spindles during N2 sleep
    :ivar list  duration_range_s:     uniform range of spindle durations
    :ivar list  frequency_range_hz:   uniform range of spindle frequencies
    :ivar list  amplitude_range_uv:   uniform range of spindle peak amplitudes
    :ivar float noise_uv:             RMS of the 1/f background
    :ivar float noise_slope:          exponent of the 1/f^slope background power spectrum
    :ivar dict  stage_boosts:         stage token -> band and gain (relative to noise_uv) of added noise
    :ivar float snr:                  factor applied to every spindle amplitude
    :ivar float min_gap_s:            minimum gap between planted spindles
    :ivar bool  clean:                render spindles without any background
    """
    seed:int                          = 0
    duration_h:float                  = 1.0
    fs:float                          = 256.0
    channels:List[str]                = field( default_factory= lambda : [ 'C3-A2', 'C4-A1', 'F3-A2', 'F4-A1' ] )
    transition_matrix:List[List[float]] = field( default_factory= lambda : [ list( row ) for row in DEFAULT_TRANSITIONS ] )
    initial_stage:str                 = 'W'
    spindle_rate_per_min:float        = 4.0
    duration_range_s:List[float]      = field( default_factory= lambda : [ 0.5, 1.5 ] )
    frequency_range_hz:List[float]    = field( default_factory= lambda : [ 11.0, 15.0 ] )
    amplitude_range_uv:List[float]    = field( default_factory= lambda : [ 5.0, 25.0 ] )
    noise_uv:float                    = 10.0
    noise_slope:float                 = 1.0
    stage_boosts:Dict[str,Dict[str,Any]] = field( default_factory= lambda : json.loads( json.dumps( DEFAULT_STAGE_BOOSTS ) ) )
    snr:float                         = 1.0
    min_gap_s:float                   = 0.5
    clean:bool                        = False

    @property
    def n_epochs(self) -> int:
        return int( round( self.duration_h * 3600.0 / EPOCH_LEN_S ) )

    def validate(self) -> None:
        """
        :raises InvalidTransitionMatrix: unless the matrix is 5x5, non-negative, with rows summing to 1
        :raises InvalidSpec:             on any other invalid parameter
        """
        matrix = np.asarray( self.transition_matrix, dtype= np.float64 )
        if matrix.shape != ( N_STAGES, N_STAGES ) or np.any( matrix < 0 ) or not np.allclose( matrix.sum( axis= 1 ), 1.0, atol= 1e-9 ):
            raise InvalidTransitionMatrix( 'transition matrix must be 5x5, non-negative, with rows summing to 1' )

        if not ( self.duration_h > 0 and self.n_epochs >= 1 ):
            raise InvalidSpec( f'duration of {self.duration_h} h holds no epoch' )

        if not self.fs > 0 or len( self.channels ) == 0 or len( set( self.channels ) ) != len( self.channels ):
            raise InvalidSpec( 'sampling rate must be positive and channel labels unique and non-empty' )

        for name in ( 'duration_range_s', 'frequency_range_hz', 'amplitude_range_uv' ):
            lo, hi = getattr( self, name )
            if not 0 < lo <= hi:
                raise InvalidSpec( f'{name} must satisfy 0 < low <= high, got [{lo}, {hi}]' )

        lo, hi = self.duration_range_s
        if lo < SPINDLE_DURATION_LIMITS_S[0] or hi > SPINDLE_DURATION_LIMITS_S[1]:
            raise InvalidSpec( f'spindle durations must lie in {list( SPINDLE_DURATION_LIMITS_S )} s' )

        if self.frequency_range_hz[1] >= self.fs / 2:
            raise InvalidSpec( f'spindle frequencies must stay below Nyquist ({self.fs / 2} Hz)' )

        if self.spindle_rate_per_min < 0 or self.noise_uv < 0 or self.snr < 0 or self.min_gap_s < 0:
            raise InvalidSpec( 'rates, noise level, SNR factor and gap must be non-negative' )

        try:
            Stage.from_token( self.initial_stage )
            for token in self.stage_boosts:
                Stage.from_token( token )

        except Exception as exc:
            raise InvalidSpec( str( exc ) )

    @classmethod
    def from_dict( cls, values:Mapping[str,Any] ) -> 'SynthSpec':
        """
        :raises InvalidSpec: on unknown keys or invalid values
        """
        known   = { f.name for f in dataclasses.fields( cls ) }
        unknown = sorted( set( values ) - known )
        if unknown:
            raise InvalidSpec( f'unknown synthesis parameter(s): {", ".join( unknown )}' )

        spec = cls( **values )
        spec.validate()
        return spec

    @classmethod
    def from_json( cls, path:str ) -> 'SynthSpec':
        return cls.from_dict( read_jsonfile( path ) )

    def to_dict(self) -> Dict[str,Any]:
        return dataclasses.asdict( self )

@dataclass(frozen=True)
class PlantedSpindle:
    """Ground-truth spindle with its generating parameters."""
    event:SpindleEvent
    frequency_hz:float
    amplitude_uv:float
    phase:float

@dataclass
class SynthResult:
    spec:SynthSpec
    hypnogram:Hypnogram
    record:SignalRecord
    planted:List[PlantedSpindle]

    @property
    def events(self) -> EventList:
        """Returns the ground-truth events."""
        return EventList( spindle.event for spindle in self.planted )

    def export( self, directory:str ) -> Dict[str,str]:
        """
        Writes ``record.edf``, ``hypnogram.txt``, ``events.csv`` (ground truth), ``planted.json``
        and ``spec.json`` into the directory.

        :return: artifact name -> path
        """
        create_directory( directory )
        paths = { name : os.path.join( directory, name ) for name in ( 'record.edf', 'hypnogram.txt', 'events.csv', 'planted.json', 'spec.json' ) }

        write_edf( self.record, paths['record.edf'] )
        write_hypnogram( self.hypnogram, paths['hypnogram.txt'] )
        write_events( self.events, paths['events.csv'] )
        write_jsonfile( [
            { 'start_s': spindle.event.start_s, 'duration_s': spindle.event.duration_s, 'frequency_hz': spindle.frequency_hz, 'amplitude_uv': spindle.amplitude_uv, 'phase': spindle.phase }
            for spindle in self.planted
        ], paths['planted.json'] )
        write_jsonfile( self.spec.to_dict(), paths['spec.json'] )

        return paths

def _rng( seed:int, stream:int ) -> np.random.Generator:
    return np.random.Generator( np.random.Philox( seed ).jumped( stream ) )

#region Hypnogram

def gen_hypnogram( spec:SynthSpec ) -> Hypnogram:
    """
    Samples a hypnogram of ``duration_h * 120`` epochs from the stage Markov chain.

    :raises InvalidTransitionMatrix: on an invalid transition matrix
    """
    spec.validate()

    rng    = _rng( spec.seed, 0 )
    matrix = np.asarray( spec.transition_matrix, dtype= np.float64 )
    matrix = matrix / matrix.sum( axis= 1, keepdims= True )

    stages = [ Stage.from_token( spec.initial_stage ).value ]
    for _ in range( spec.n_epochs - 1 ):
        stages.append( int( rng.choice( N_STAGES, p= matrix[stages[-1]] ) ) )

    return Hypnogram( stages )

#endregion

#region Simulation

class SleepSimulation:
    """
    Discrete-event simulation of the ground-truth spindles of a night.

    :param SynthSpec spec: parameters
    :param Hypnogram hyp:  hypnogram to follow

    :ivar SleepEnvironment     env:     simulation environment (time in recording seconds)
    :ivar Stage                stage:   stage of the current epoch
    :ivar List[PlantedSpindle] planted: spindles planted so far
    :ivar LoggingCallback      log:     logger
    """
    def __init__( self, spec:SynthSpec, hyp:Hypnogram ) -> None:
        self.spec = spec
        self.hyp  = hyp
        self.env  = SleepEnvironment()
        self.rng  = _rng( spec.seed, 1 )

        self.stage:Optional[Stage]          = None
        self.epoch:int                      = -1
        self.planted:List[PlantedSpindle]   = []
        self._last_end_s:float              = -math.inf

        # end of the N2 run holding each epoch
        self._run_end_s = np.zeros( len( hyp ) )
        for run in hyp.runs( Stage.N2 ):
            self._run_end_s[run.start:run.stop] = run.stop * EPOCH_LEN_S

        self.log:LoggingCallback = None
        self._init_logger()

    def _init_logger(self) -> None:
        """Initializes the logging callback."""
        self.log = DefaultLoggingCallback( clock= lambda : self.env.now )

    @property
    def end_s(self) -> float:
        return len( self.hyp ) * EPOCH_LEN_S

    def _stage_proc(self) -> Generator[Event,Any,None]:
        for index, stage in enumerate( self.hyp ):
            self.epoch = index
            self.stage = stage
            self.log.on_epoch( index, stage )

            yield self.env.stage_timeout( EPOCH_LEN_S )

    def _draw_spindle( self, start_s:float ) -> Tuple[int,int,float,float,float]:
        spec = self.spec
        fs   = spec.fs

        duration  = self.rng.uniform( *spec.duration_range_s )
        frequency = self.rng.uniform( *spec.frequency_range_hz )
        amplitude = self.rng.uniform( *spec.amplitude_range_uv ) * spec.snr
        phase     = self.rng.uniform( 0.0, 2.0 * math.pi )

        start = int( math.ceil( start_s * fs - 1e-9 ) )
        n     = int( round( duration * fs ) )
        n     = min( max( n, int( math.ceil( SPINDLE_DURATION_LIMITS_S[0] * fs - 1e-9 ) ) ), int( math.floor( SPINDLE_DURATION_LIMITS_S[1] * fs + 1e-9 ) ) )

        return start, n, frequency, amplitude, phase

    def _spindle_proc(self) -> Generator[Event,Any,None]:
        spec = self.spec
        mean_interval_s = 60.0 / spec.spindle_rate_per_min

        while True:
            yield self.env.event_timeout( self.rng.exponential( mean_interval_s ) )

            if self.env.now >= self.end_s:
                return

            start, n, frequency, amplitude, phase = self._draw_spindle( self.env.now )
            start_s, duration_s = start / spec.fs, n / spec.fs

            if self.stage is not Stage.N2:
                self.log.on_spindle_rejected( self.env.now, f'stage {self.stage.token}' )

            elif start_s + duration_s > self._run_end_s[self.epoch] + 1e-9:
                self.log.on_spindle_rejected( self.env.now, 'crosses the end of N2 sleep' )

            elif start_s < self._last_end_s + spec.min_gap_s - 1e-9:
                self.log.on_spindle_rejected( self.env.now, 'too close to the previous spindle' )

            else:
                event = SpindleEvent( start_s, duration_s, frozenset( spec.channels ) )
                self.planted.append( PlantedSpindle( event, float( frequency ), float( amplitude ), float( phase ) ) )
                self._last_end_s = event.end_s
                self.log.on_spindle_planted( event )

    def run(self) -> List[PlantedSpindle]:
        """Runs the simulation over the whole hypnogram and returns the planted spindles."""
        self.log.on_simulation_start()

        self.env.process( self._stage_proc() )
        if self.spec.spindle_rate_per_min > 0:
            self.env.process( self._spindle_proc() )

        self.env.run( until= self.end_s )

        self.log.on_simulation_finish()
        return self.planted

#endregion

#region Signal rendering

def _shaped_noise( rng:np.random.Generator, n:int, fs:float, gain:np.ndarray ) -> np.ndarray:
    spectrum = np.fft.rfft( rng.standard_normal( n ) ) * gain
    noise    = np.fft.irfft( spectrum, n )
    rms      = np.sqrt( np.mean( noise ** 2 ) )

    return noise / rms if rms > 0 else noise

def render_channel( spec:SynthSpec, hyp:Hypnogram, planted:Sequence[PlantedSpindle], rng:np.random.Generator ) -> np.ndarray:
    """Renders one channel: background, stage boosts and the planted spindles."""
    fs = spec.fs
    n  = int( round( len( hyp ) * EPOCH_LEN_S * fs ) )
    x  = np.zeros( n )

    if not spec.clean and spec.noise_uv > 0:
        freqs = np.fft.rfftfreq( n, 1.0 / fs )
        gain  = np.zeros_like( freqs )
        above = freqs >= HIGHPASS_NOISE_HZ
        gain[above] = freqs[above] ** ( -spec.noise_slope / 2.0 )

        x += spec.noise_uv * _shaped_noise( rng, n, fs, gain )

        stages = hyp.to_array()
        epoch  = np.minimum( ( np.arange( n ) / fs // EPOCH_LEN_S ).astype( np.int64 ), len( hyp ) - 1 )
        for token, boost in sorted( spec.stage_boosts.items() ):
            lo, hi = boost['band_hz']
            band   = ( ( freqs >= lo ) & ( freqs <= hi ) ).astype( np.float64 )
            noise  = spec.noise_uv * boost['gain'] * _shaped_noise( rng, n, fs, band )
            x     += noise * ( stages[epoch] == Stage.from_token( token ).value )

    for spindle in planted:
        start  = int( round( spindle.event.start_s * fs ) )
        length = int( round( spindle.event.duration_s * fs ) )
        t      = np.arange( length ) / fs
        x[start:start + length] += spindle.amplitude_uv * np.hanning( length ) * np.sin( 2.0 * math.pi * spindle.frequency_hz * t + spindle.phase )

    return x

def simulate( spec:SynthSpec, hyp:Optional[Hypnogram]= None ) -> SynthResult:
    """
    Generates a synthetic recording following the given hypnogram (sampled from ``spec`` when
    not given).

    :raises InvalidSpec: on invalid parameters
    """
    spec.validate()
    if hyp is None:
        hyp = gen_hypnogram( spec )

    planted = SleepSimulation( spec, hyp ).run()

    channels = []
    for index, label in enumerate( spec.channels ):
        rng = _rng( spec.seed, 2 + index )
        channels.append( Channel( label, render_channel( spec, hyp, planted, rng ), spec.fs ) )

    return SynthResult( spec, hyp, SignalRecord( channels ), planted )

def gen_record( spec:SynthSpec, hyp:Hypnogram ) -> Tuple[SignalRecord,EventList]:
    """Returns the synthetic recording following the hypnogram and its ground-truth events."""
    result = simulate( spec, hyp )
    return result.record, result.events

#endregion

#region EDF writer

def _ascii( value:Any, width:int ) -> bytes:
    text = str( value )
    if len( text ) > width:
        raise InvalidRecord( f'EDF header field "{text}" exceeds {width} characters' )

    return text.ljust( width ).encode( 'ascii' )

def write_edf( record:SignalRecord, path:str, physical_range:Optional[Tuple[float,float]]= None ) -> None:
    """
    Writes the record as 16-bit EDF with 1-second data records. The physical range of each channel
    is the given one, or its integer-rounded sample range widened by 1 on both sides.

    :raises InvalidRecord: if a sampling rate is not an integer number of samples per second
    """
    ns       = len( record.channels )
    spr      = []
    n_records = 0
    for channel in record.channels:
        if abs( channel.fs - round( channel.fs ) ) > 1e-9:
            raise InvalidRecord( f'channel "{channel.label}" has a non-integer sampling rate {channel.fs}' )

        spr.append( int( round( channel.fs ) ) )
        n_records = max( n_records, int( math.ceil( len( channel.samples ) / spr[-1] - 1e-9 ) ) )

    ranges = []
    for channel in record.channels:
        if physical_range is not None:
            ranges.append( ( float( physical_range[0] ), float( physical_range[1] ) ) )

        else:
            ranges.append( ( math.floor( channel.samples.min() ) - 1, math.ceil( channel.samples.max() ) + 1 ) )

    dmin, dmax = -32768, 32767

    header  = _ascii( '0', 8 )
    header += _ascii( 'X X X X', 80 )
    header += _ascii( 'Startdate X X X X', 80 )
    header += _ascii( '01.01.00', 8 ) + _ascii( '00.00.00', 8 )
    header += _ascii( 256 + 256 * ns, 8 )
    header += _ascii( '', 44 )
    header += _ascii( n_records, 8 ) + _ascii( 1, 8 ) + _ascii( ns, 4 )

    header += b''.join( _ascii( channel.label, 16 ) for channel in record.channels )
    header += b''.join( _ascii( 'EEG', 80 ) for _ in record.channels )
    header += b''.join( _ascii( 'uV', 8 ) for _ in record.channels )
    header += b''.join( _ascii( f'{lo:g}', 8 ) for lo, _ in ranges )
    header += b''.join( _ascii( f'{hi:g}', 8 ) for _, hi in ranges )
    header += b''.join( _ascii( dmin, 8 ) for _ in record.channels )
    header += b''.join( _ascii( dmax, 8 ) for _ in record.channels )
    header += b''.join( _ascii( '', 80 ) for _ in record.channels )
    header += b''.join( _ascii( samples, 8 ) for samples in spr )
    header += b''.join( _ascii( '', 32 ) for _ in record.channels )

    blocks = []
    for channel, samples, ( lo, hi ) in zip( record.channels, spr, ranges ):
        gain    = ( hi - lo ) / ( dmax - dmin )
        offset  = hi - gain * dmax
        padded  = np.zeros( n_records * samples )
        padded[:len( channel.samples )] = channel.samples
        digital = np.clip( np.round( ( padded - offset ) / gain ), dmin, dmax ).astype( '<i2' )
        blocks.append( digital.reshape( n_records, samples ) )

    data = np.concatenate( blocks, axis= 1 ) if ns > 1 else blocks[0]
    atomic_write_bytes( header + np.ascontiguousarray( data ).tobytes(), path )

#endregion
