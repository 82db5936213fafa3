"""
Per-spindle characteristics (duration, frequency, amplitude) measured on the unprocessed signal,
fast/slow classification, spindle density and per-channel cohort comparisons.
"""
import io
import math

import numpy  as np
import pandas as pd

from dataclasses import asdict, dataclass, field
from typing      import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from sleepauto.exceptions         import CharacteristicsError, CohortTooSmall, EmptySample, EmptySegment, NoN2Sleep, SampleTooSmall, TooFewCrossings, UnparsableRow
from sleepauto.elements.events    import EventList, SpindleEvent
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.elements.record    import SignalRecord
from sleepauto.dsp                import FilterKind, analytic_signal, apply_filter, design_butterworth
from sleepauto.stats              import Sidedness, welch_t_test, wilcoxon_rank_sum
from sleepauto.utils.files        import atomic_write_text
from sleepauto.utils.logging      import get_logger

FAST_THRESHOLD_HZ = 13.0

# characteristics of the cohort tables, in row order
CHARACTERISTICS = [ 'density', 'duration_s', 'frequency_hz', 'amplitude_uv' ]

FEATURE_COLUMNS = [ 'start_s', 'duration_s', 'channel', 'frequency_hz', 'amplitude_uv', 'is_fast' ]

WILCOXON_MARKER = '†'

@dataclass(frozen=True)
class SpindleFeatures:
    """
    Characteristics of one spindle on one channel.

    :ivar float start_s:      start of the event on the recording timeline
    :ivar float duration_s:   duration of the event
    :ivar str   channel:      channel the features were measured on
    :ivar float frequency_hz: mean instantaneous frequency
    :ivar float amplitude_uv: mean amplitude
    :ivar bool  is_fast:      dominant frequency above the fast/slow threshold
    """
    start_s:float
    duration_s:float
    channel:str
    frequency_hz:float
    amplitude_uv:float
    is_fast:bool

#region Per-spindle characteristics

def spindle_density( events:EventList, hyp:Hypnogram ) -> float:
    """
    Returns the number of events per minute of N2 sleep.

    :raises NoN2Sleep: if the hypnogram has no N2 epoch
    """
    minutes = hyp.minutes( Stage.N2 )
    if minutes <= 0:
        raise NoN2Sleep( 'hypnogram contains no N2 sleep' )

    return len( events ) / minutes

def classify_fast_slow( f:float, fast_threshold_hz:float= FAST_THRESHOLD_HZ ) -> bool:
    """Returns True for fast spindles (frequency strictly above the threshold)."""
    return f > fast_threshold_hz

def filtered_segment( rec:SignalRecord, event:SpindleEvent, channel:str, band_hz:Sequence[float]= ( 10.0, 16.0 ), order:int= 4, filter_pad_s:float= 1.0 ) -> Tuple[np.ndarray,int,int,float]:
    """
    Band-passes (zero-phase) the raw channel over the event extended by ``filter_pad_s`` of
    surrounding signal on each side.

    :return: filtered samples, start and end index of the event within them, sampling rate

    :raises EmptySegment:    if the event holds no sample of the channel
    :raises ChannelNotFound: if the record has no such channel
    """
    source = rec.channel( channel )
    fs     = source.fs
    n      = len( source.samples )

    start = min( max( int( round( event.start_s * fs ) ), 0 ), n )
    end   = min( max( int( round( event.end_s * fs ) ), 0 ), n )
    if end <= start:
        raise EmptySegment( f'event at {event.start_s:g} s holds no sample of channel "{channel}"' )

    pad   = int( round( filter_pad_s * fs ) )
    first = max( start - pad, 0 )
    last  = min( end + pad, n )

    spec = design_butterworth( FilterKind.BANDPASS, order, tuple( band_hz ), fs )
    return apply_filter( spec, source.samples[first:last] ), start - first, end - first, fs

def zero_crossings( x:np.ndarray ) -> np.ndarray:
    """
    Returns the (fractional) sample positions of the sign changes of the signal, located by linear
    interpolation between the samples on both sides. Zero counts as non-positive.
    """
    positive = x > 0
    index    = np.flatnonzero( positive[:-1] != positive[1:] )
    return index + x[index] / ( x[index] - x[index + 1] )

def spindle_frequency( rec:SignalRecord, event:SpindleEvent, channel:str, band_hz:Sequence[float]= ( 10.0, 16.0 ), order:int= 4, filter_pad_s:float= 1.0 ) -> float:
    """
    Returns the mean of the instantaneous frequencies, half the reciprocals of the intervals
    between consecutive zero crossings of the band-passed event.

    :raises TooFewCrossings: if the event has fewer than 3 zero crossings
    """
    filtered, start, end, fs = filtered_segment( rec, event, channel, band_hz, order, filter_pad_s )
    crossings = zero_crossings( filtered[start:end] )

    if len( crossings ) < 3:
        raise TooFewCrossings( f'event at {event.start_s:g} s on "{channel}" has {len(crossings)} zero crossing(s)' )

    return float( np.mean( fs / ( 2.0 * np.diff( crossings ) ) ) )

def spindle_amplitude( rec:SignalRecord, event:SpindleEvent, channel:str, convention:str= 'envelope', band_hz:Sequence[float]= ( 10.0, 16.0 ), order:int= 4, envelope_pad_s:float= 0.2, filter_pad_s:float= 1.0 ) -> float:
    """
    Returns the mean amplitude of the band-passed event: the mean analytic-signal envelope
    (``envelope``) or the mean absolute Hilbert transform (``literal``). The analytic signal is
    computed over the event extended by ``envelope_pad_s`` on each side, then cut to the event.

    :raises EmptySegment: if the event holds no sample of the channel
    """
    if convention not in ( 'envelope', 'literal' ):
        raise CharacteristicsError( f'unknown amplitude convention "{convention}"' )

    filtered, start, end, fs = filtered_segment( rec, event, channel, band_hz, order, filter_pad_s )

    pad      = int( round( envelope_pad_s * fs ) )
    first    = max( start - pad, 0 )
    analytic = analytic_signal( filtered[first:min( end + pad, len( filtered ) )] )[start - first : end - first]

    values = np.abs( analytic ) if convention == 'envelope' else np.abs( np.imag( analytic ) )
    return float( values.mean() )

def characterize_events( rec:SignalRecord, events:EventList, channels:Sequence[str], band_hz:Sequence[float]= ( 10.0, 16.0 ), order:int= 4, fast_threshold_hz:float= FAST_THRESHOLD_HZ, amplitude_convention:str= 'envelope', envelope_pad_s:float= 0.2, filter_pad_s:float= 1.0 ) -> List[SpindleFeatures]:
    """
    Measures every event on each of the given channels it was detected on, using that channel's
    own signal. Events without enough zero crossings are skipped (logged).
    """
    logger   = get_logger()
    features = []

    for event in events:
        for channel in channels:
            if channel not in event.channels:
                continue

            try:
                frequency = spindle_frequency( rec, event, channel, band_hz, order, filter_pad_s )
                amplitude = spindle_amplitude( rec, event, channel, amplitude_convention, band_hz, order, envelope_pad_s, filter_pad_s )

            except ( TooFewCrossings, EmptySegment ) as exc:
                logger.debug( f'spindle skipped: {exc}' )
                continue

            features.append( SpindleFeatures( event.start_s, event.duration_s, channel, frequency, amplitude, classify_fast_slow( frequency, fast_threshold_hz ) ) )

    return features

#endregion

#region Reports

def events_per_stage( events:EventList, hyp:Hypnogram ) -> Dict[str,int]:
    """
    Counts the events by the stage of the epoch holding their midpoint; ``outside`` counts the
    events beyond the scored epochs.
    """
    counts = { stage.token : 0 for stage in Stage }
    counts['outside'] = 0

    for event in events:
        stage = hyp.stage_at( event.start_s + event.duration_s / 2.0 )
        counts[stage.token if stage is not None else 'outside'] += 1

    return counts

def density_report( features:Sequence[SpindleFeatures], events:EventList, hyp:Hypnogram, channels:Sequence[str], fast_threshold_hz:float= FAST_THRESHOLD_HZ ) -> Dict[str,object]:
    """
    Returns the overall density of the (union) events and per channel the density of the events
    detected on it and of its fast and slow spindles. Densities are None without N2 sleep.
    """
    minutes = hyp.minutes( Stage.N2 )
    report  = { 'n2_minutes': minutes, 'no_n2_sleep': minutes <= 0, 'n_events': len( events ), 'overall': None, 'channels': {} }

    def density( count:int ) -> Optional[float]:
        return count / minutes if minutes > 0 else None

    report['overall'] = density( len( events ) )
    for channel in channels:
        own = [ feature for feature in features if feature.channel == channel ]
        report['channels'][channel] = {
            'density':      density( sum( 1 for event in events if channel in event.channels ) ),
            'fast_density': density( sum( 1 for feature in own if feature.frequency_hz > fast_threshold_hz ) ),
            'slow_density': density( sum( 1 for feature in own if feature.frequency_hz <= fast_threshold_hz ) ),
        }

    return report

def subject_aggregates( features:Sequence[SpindleFeatures], hyp:Hypnogram, channels:Sequence[str], speed:str= 'fast' ) -> Dict[str,Dict[str,float]]:
    """
    Returns per channel the density and the mean duration, frequency and amplitude of the
    spindles of the given speed class (NaN means when the class is empty).

    :raises NoN2Sleep: if the hypnogram has no N2 epoch
    """
    if speed not in ( 'fast', 'slow' ):
        raise CharacteristicsError( f'unknown speed class "{speed}"' )

    minutes = hyp.minutes( Stage.N2 )
    if minutes <= 0:
        raise NoN2Sleep( 'hypnogram contains no N2 sleep' )

    aggregates = {}
    for channel in channels:
        selected = [ feature for feature in features if feature.channel == channel and feature.is_fast == ( speed == 'fast' ) ]

        def mean( name:str ) -> float:
            return float( np.mean( [ getattr( feature, name ) for feature in selected ] ) ) if selected else math.nan

        aggregates[channel] = {
            'density':      len( selected ) / minutes,
            'duration_s':   mean( 'duration_s' ),
            'frequency_hz': mean( 'frequency_hz' ),
            'amplitude_uv': mean( 'amplitude_uv' ),
        }

    return aggregates

def features_to_frame( features:Iterable[SpindleFeatures] ) -> pd.DataFrame:
    return pd.DataFrame( [ asdict( feature ) for feature in features ], columns= FEATURE_COLUMNS )

def write_features( features:Iterable[SpindleFeatures], path:str ) -> None:
    """Writes the features as CSV."""
    buffer = io.StringIO()
    features_to_frame( features ).to_csv( buffer, index= False, lineterminator= '\n' )
    atomic_write_text( buffer.getvalue(), path )

def read_features( path:str ) -> List[SpindleFeatures]:
    """
    Reads a features CSV written by :func:`write_features`.

    :raises UnparsableRow: on a wrong header
    """
    table = pd.read_csv( path, dtype= { 'channel': str } )
    if list( table.columns ) != FEATURE_COLUMNS:
        raise UnparsableRow( f'{path}: expected header {",".join( FEATURE_COLUMNS )}' )

    return [
        SpindleFeatures( float( row.start_s ), float( row.duration_s ), str( row.channel ), float( row.frequency_hz ), float( row.amplitude_uv ), str( row.is_fast ).strip().lower() == 'true' )
        for row in table.itertuples( index= False )
    ]

#endregion

#region Cohort tables

@dataclass
class CohortCell:
    """Mean, SD and subject count of one cohort for one characteristic and channel."""
    mean:float
    sd:float
    n:int

    def __str__(self) -> str:
        return f'{self.mean:.2f} ({self.sd:.2f})' if self.n > 0 else 'n/a'

@dataclass
class CohortRow:
    """
    One (characteristic, channel) line of a cohort table.

    :ivar Dict[str,CohortCell] cells:   per-cohort aggregates
    :ivar float                p_value: two-sided p-value (NaN if a cohort has too few values)
    :ivar str                  test:    ``welch`` or ``wilcoxon``
    """
    characteristic:str
    channel:str
    cells:Dict[str,CohortCell] = field( default_factory= dict )
    p_value:float              = math.nan
    test:str                   = 'welch'

class CohortTable:
    """
    Comparison of two cohorts per characteristic and channel, subjects being the statistical unit.

    :ivar List[str]       cohorts: the two cohort labels, in column order
    :ivar str             speed:   ``fast`` or ``slow``
    :ivar List[CohortRow] rows:    rows in characteristic, then channel order
    """
    def __init__( self, cohorts:List[str], speed:str, rows:List[CohortRow] ) -> None:
        self.cohorts = cohorts
        self.speed   = speed
        self.rows    = rows

    def row( self, characteristic:str, channel:str ) -> CohortRow:
        for row in self.rows:
            if row.characteristic == characteristic and row.channel == channel:
                return row

        raise KeyError( ( characteristic, channel ) )

    def to_frame(self) -> pd.DataFrame:
        records = []
        for row in self.rows:
            record = { 'characteristic': row.characteristic, 'channel': row.channel }
            for cohort in self.cohorts:
                cell = row.cells[cohort]
                record[cohort]            = str( cell )
                record[f'{cohort}_mean'] = cell.mean
                record[f'{cohort}_sd']   = cell.sd
                record[f'{cohort}_n']    = cell.n

            record['p_value'] = row.p_value
            record['test']    = row.test
            record['marker']  = WILCOXON_MARKER if row.test == 'wilcoxon' else ''
            records.append( record )

        return pd.DataFrame( records )

    def to_csv( self, path:str ) -> None:
        """Writes the table as CSV."""
        buffer = io.StringIO()
        self.to_frame().to_csv( buffer, index= False, lineterminator= '\n' )
        atomic_write_text( buffer.getvalue(), path )

def cohort_table( subject_features:Mapping[str,Mapping[str,Mapping[str,float]]], cohorts:Mapping[str,str], speed:str= 'fast', wilcoxon:Iterable[Tuple[str,str]]= (), cohort_order:Optional[Sequence[str]]= None ) -> CohortTable:
    """
    Aggregates subject-level characteristics to cohort mean (SD) per channel and compares the two
    cohorts with Welch's two-sided t-test, or the Wilcoxon rank-sum test for the
    ``(characteristic, channel)`` cells listed in ``wilcoxon``. Missing (NaN) subject values are
    left out of their cell.

    :param Mapping subject_features: subject -> channel -> characteristic -> value (see :func:`subject_aggregates`)
    :param Mapping cohorts:          subject -> cohort label
    :param str     speed:            speed class the aggregates were computed for
    :param list    cohort_order:     (optional) the two cohort labels in column order

    :raises CohortTooSmall: unless there are exactly two cohorts with at least 2 subjects each
    """
    missing = [ subject for subject in subject_features if subject not in cohorts ]
    if missing:
        raise CharacteristicsError( f'subject(s) without cohort: {", ".join( sorted( missing ) )}' )

    labels = list( cohort_order ) if cohort_order is not None else list( dict.fromkeys( cohorts[subject] for subject in subject_features ) )
    if len( labels ) != 2:
        raise CohortTooSmall( f'cohort comparison needs exactly two cohorts, got {labels}' )

    members = { label : [ subject for subject in subject_features if cohorts[subject] == label ] for label in labels }
    for label, subjects in members.items():
        if len( subjects ) < 2:
            raise CohortTooSmall( f'cohort "{label}" has {len(subjects)} subject(s), at least 2 needed' )

    wilcoxon = set( wilcoxon )
    channels = list( dict.fromkeys( channel for values in subject_features.values() for channel in values ) )
    rows     = []

    for characteristic in CHARACTERISTICS:
        for channel in channels:
            row     = CohortRow( characteristic, channel, test= 'wilcoxon' if ( characteristic, channel ) in wilcoxon else 'welch' )
            samples = []

            for label in labels:
                values = np.array( [ subject_features[subject].get( channel, {} ).get( characteristic, math.nan ) for subject in members[label] ], dtype= np.float64 )
                values = values[~np.isnan( values )]
                samples.append( values )

                row.cells[label] = CohortCell( float( values.mean() ) if len( values ) else math.nan, float( values.std( ddof= 1 ) ) if len( values ) > 1 else 0.0, len( values ) )

            try:
                test        = wilcoxon_rank_sum if row.test == 'wilcoxon' else welch_t_test
                row.p_value = test( samples[0], samples[1], Sidedness.TWO ).p_value

            except ( SampleTooSmall, EmptySample ) as exc:
                get_logger().warning( f'no p-value for {characteristic} on {channel}: {exc}' )

            rows.append( row )

    return CohortTable( labels, speed, rows )

#endregion
