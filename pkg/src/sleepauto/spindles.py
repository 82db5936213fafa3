"""
Spindle detection restricted to N2 sleep: extraction of contiguous N2 blocks, block
preprocessing, detectors (U-Net or sigma-band RMS baseline), post-processing of the detected
events and their union across channels.
"""
import numpy as np
import scipy.ndimage

from abc         import ABC, abstractmethod
from dataclasses import dataclass
from itertools   import groupby
from typing      import Dict, Iterable, List, Optional, Sequence, Tuple

from sleepauto.exceptions         import BlockTooShort
from sleepauto.elements.events    import TIME_EPS, EventList, SpindleEvent
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.elements.record    import SignalRecord
from sleepauto.dsp                import FilterKind, apply_filter, boolean_runs, design_butterworth, resample, robust_normalize
from sleepauto.dsp                import clip as clip_amplitude
from sleepauto.unet               import UNetModel, forward, masks_to_events

MIN_BLOCK_S = 1.0

@dataclass
class N2Block:
    """
    Contiguous run of N2 epochs cut from one channel.

    :ivar str        channel:         channel label
    :ivar np.ndarray samples:         samples of the block
    :ivar float      fs:              sampling rate
    :ivar float      record_offset_s: start of the block on the recording timeline (a multiple of 30 s)
    """
    channel:str
    samples:np.ndarray
    fs:float
    record_offset_s:float

    @property
    def duration_s(self) -> float:
        return len( self.samples ) / self.fs

    def with_samples( self, samples:np.ndarray, fs:float ) -> 'N2Block':
        return N2Block( self.channel, samples, fs, self.record_offset_s )

#region Blocks

def extract_n2_blocks( rec:SignalRecord, hyp:Hypnogram, channel:str ) -> List[N2Block]:
    """
    Cuts the maximal runs of consecutive N2 epochs out of the given channel, in time order.

    :raises ChannelNotFound: if the record has no such channel
    """
    source = rec.channel( channel )
    blocks = []

    for run in hyp.runs( Stage.N2 ):
        offset_s = run.start * hyp.epoch_len_s
        start    = int( round( offset_s * source.fs ) )
        end      = min( int( round( run.stop * hyp.epoch_len_s * source.fs ) ), len( source.samples ) )

        if end > start:
            blocks.append( N2Block( channel, source.samples[start:end].copy(), source.fs, offset_s ) )

    return blocks

def preprocess_block( b:N2Block, highpass_hz:float= 0.3, lowpass_hz:float= 30.0, order:int= 20, fs:float= 100.0, clip:float= 20.0, mode:str= 'zero_phase', **resampling ) -> N2Block:
    """
    Butterworth high pass, then low pass (the low-pass corner is lowered to 0.45 times the block
    rate when needed), resampling to ``fs``, robust normalization and clipping.

    :raises DegenerateSignal: if the block has zero interquartile range
    """
    highpass = design_butterworth( FilterKind.HIGHPASS, order, highpass_hz, b.fs )
    lowpass  = design_butterworth( FilterKind.LOWPASS, order, min( lowpass_hz, 0.45 * b.fs ), b.fs )

    filtered = apply_filter( lowpass, apply_filter( highpass, b.samples, mode ), mode )
    samples  = resample( filtered, b.fs, fs, **resampling )

    return b.with_samples( clip_amplitude( robust_normalize( samples ), -clip, clip ), fs )

#endregion

#region Detectors

def _runs_to_events( runs:np.ndarray, b:N2Block ) -> EventList:
    channels = frozenset( [ b.channel ] )
    return EventList( SpindleEvent( float( b.record_offset_s + start / b.fs ), float( ( end - start ) / b.fs ), channels ) for start, end in runs )

def sigma_rms( x:np.ndarray, fs:float, band_hz:Sequence[float]= ( 11.0, 16.0 ), order:int= 4, rms_window_s:float= 0.3 ) -> np.ndarray:
    """Returns the moving RMS of the band-passed (zero-phase) signal."""
    spec  = design_butterworth( FilterKind.BANDPASS, order, tuple( band_hz ), fs )
    sigma = apply_filter( spec, x )
    size  = max( int( round( rms_window_s * fs ) ), 1 )

    return np.sqrt( np.maximum( scipy.ndimage.uniform_filter1d( sigma ** 2, size= size, mode= 'reflect' ), 0.0 ) )

def detect_baseline( b:N2Block, band_hz:Sequence[float]= ( 11.0, 16.0 ), order:int= 4, rms_window_s:float= 0.3, percentile:float= 85.0, min_duration_s:float= 0.3 ) -> EventList:
    """
    Classical sigma-power detector: events are the runs where the moving RMS of the sigma band
    exceeds the block's ``percentile``-th RMS value for at least ``min_duration_s``.
    Events are returned on the recording timeline.

    :raises BlockTooShort: if the block is shorter than 1 second
    """
    if b.duration_s < MIN_BLOCK_S - TIME_EPS:
        raise BlockTooShort( f'block at {b.record_offset_s:g} s lasts {b.duration_s:.2f} s, at least {MIN_BLOCK_S:g} s needed' )

    rms       = sigma_rms( b.samples, b.fs, band_hz, order, rms_window_s )
    threshold = np.percentile( rms, percentile )
    runs      = boolean_runs( rms > threshold )

    min_samples = int( np.ceil( min_duration_s * b.fs - 1e-6 ) )
    return _runs_to_events( runs[( runs[:, 1] - runs[:, 0] ) >= min_samples], b )

def detect_unet( b:N2Block, model:UNetModel ) -> EventList:
    """
    Segments the block with the U-Net and returns the spindle runs on the recording timeline.

    :raises InputTooShort: if the block is shorter than the model's pooling product
    """
    return masks_to_events( forward( model, b.samples ), b.fs, b.channel ).shifted( b.record_offset_s )

class Detector(ABC):
    """
    Spindle detector applied to preprocessed N2 blocks.
    """
    name:str = 'detector'

    @abstractmethod
    def detect( self, b:N2Block ) -> EventList:
        """Returns the events detected in the block, on the recording timeline."""
        ...

    def describe(self) -> Dict[str,object]:
        """Returns a JSON-serializable description for run manifests."""
        return { 'name': self.name }

class BaselineDetector(Detector):
    """
    Sigma-band RMS detector (see :func:`detect_baseline`).

    :param dict params: detector parameters (``band_hz``, ``order``, ``rms_window_s``, ``percentile``, ``min_duration_s``)
    """
    name = 'baseline'

    def __init__( self, **params ) -> None:
        self.params = params

    def detect( self, b:N2Block ) -> EventList:
        return detect_baseline( b, **self.params )

    def describe(self) -> Dict[str,object]:
        return { 'name': self.name, **{ key : list( value ) if isinstance( value, tuple ) else value for key, value in self.params.items() } }

class UNetDetector(Detector):
    """
    U-Net detector (see :func:`detect_unet`).

    :param UNetModel model:  loaded model
    :param str       source: (optional) weight file the model was loaded from
    """
    name = 'unet'

    def __init__( self, model:UNetModel, source:Optional[str]= None ) -> None:
        self.model  = model
        self.source = source

    def detect( self, b:N2Block ) -> EventList:
        return detect_unet( b, self.model )

    def describe(self) -> Dict[str,object]:
        return { 'name': self.name, 'weights': self.source, 'parameters': self.model.parameter_count() }

#endregion

#region Post-processing

def _merge_pass( events:List[SpindleEvent], merge_max_duration_s:float, merge_max_gap_s:float ) -> Tuple[List[SpindleEvent],bool]:
    merged  = []
    changed = False

    for event in events:
        if merged:
            last  = merged[-1]
            gap   = event.start_s - last.end_s
            short = last.duration_s < merge_max_duration_s - TIME_EPS or event.duration_s < merge_max_duration_s - TIME_EPS

            if short and gap < merge_max_gap_s - TIME_EPS:
                end        = max( last.end_s, event.end_s )
                merged[-1] = SpindleEvent( last.start_s, end - last.start_s, last.channels | event.channels )
                changed    = True
                continue

        merged.append( event )

    return merged, changed

def postprocess_events( e:EventList, merge_max_duration_s:float= 0.3, merge_max_gap_s:float= 0.1, min_duration_s:float= 0.3, max_duration_s:float= 2.5 ) -> EventList:
    """
    Merges neighbouring events when at least one of them is shorter than ``merge_max_duration_s``
    and they are separated by less than ``merge_max_gap_s`` (the merged event spans both, gap
    included), then drops events shorter than ``min_duration_s`` or longer than ``max_duration_s``.

    Merging runs in left-to-right passes until no pair qualifies. Events of different channel
    sets are processed separately.
    """
    kept = []
    for _, group in groupby( sorted( e, key= lambda event : ( sorted( event.channels ), event.start_s, event.duration_s ) ), key= lambda event : event.channels ):
        events  = list( group )
        changed = True
        while changed:
            events, changed = _merge_pass( events, merge_max_duration_s, merge_max_gap_s )

        kept.extend( event for event in events if min_duration_s - TIME_EPS <= event.duration_s <= max_duration_s + TIME_EPS )

    return EventList( kept )

def union_channels( per_channel:Iterable[EventList] ) -> EventList:
    """
    Merges temporally overlapping events across channels into events spanning their union with
    the union of their channel labels; events that merely touch stay separate.
    """
    events = sorted( ( event for events in per_channel for event in events ), key= lambda event : ( event.start_s, event.duration_s ) )
    union  = []

    start, end, channels = None, None, frozenset()
    for event in events:
        if start is not None and event.start_s < end - TIME_EPS:
            end      = max( end, event.end_s )
            channels = channels | event.channels
            continue

        if start is not None:
            union.append( SpindleEvent( start, end - start, channels ) )

        start, end, channels = event.start_s, event.end_s, event.channels

    if start is not None:
        union.append( SpindleEvent( start, end - start, channels ) )

    return EventList( union )

#endregion
