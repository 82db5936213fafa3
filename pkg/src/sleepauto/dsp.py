"""
Digital signal primitives shared by staging, spindle detection and spindle characteristics:
Butterworth design/application as second-order sections, rational resampling,
robust normalization, clipping and the analytic-signal envelope.
"""
import numpy as np
import scipy.signal

from dataclasses import dataclass
from enum        import Enum
from fractions   import Fraction
from typing      import Sequence, Tuple, Union

from sleepauto.exceptions import CutoffOutOfRange, DegenerateSignal, EmptyInput, InvalidBounds, InvalidOrder, IrrationalRatio

class FilterKind(Enum):
    LOWPASS  = 'lowpass'
    HIGHPASS = 'highpass'
    BANDPASS = 'bandpass'

class FilterMode(Enum):
    FORWARD    = 'forward'
    ZERO_PHASE = 'zero_phase'

#region Filters

@dataclass(frozen=True)
class FilterSpec:
    """
    Butterworth filter realized as a cascade of second-order sections.

    :ivar FilterKind        kind:       filter kind
    :ivar int               order:      design order
    :ivar Tuple[float,...]  cutoffs_hz: one (low/high pass) or two (band pass) cutoffs
    :ivar float             fs_hz:      sampling rate
    :ivar np.ndarray        sections:   ``(n, 6)`` array of ``[b0, b1, b2, 1, a1, a2]`` rows (read-only)
    """
    kind:FilterKind
    order:int
    cutoffs_hz:Tuple[float,...]
    fs_hz:float
    sections:np.ndarray

    def __post_init__(self) -> None:
        sections = np.array( self.sections, dtype= np.float64 )
        sections.setflags( write= False )
        object.__setattr__( self, 'sections', sections )

    def poles(self) -> np.ndarray:
        """Returns the poles of every section."""
        return np.concatenate( [ np.roots( section[3:] ) for section in self.sections ] )

    def magnitude( self, freqs_hz:Union[float,Sequence[float]] ) -> np.ndarray:
        """Returns the magnitude response (single pass) at the given frequencies."""
        _, response = scipy.signal.sosfreqz( self.sections, worN= np.atleast_1d( np.asarray( freqs_hz, dtype= np.float64 ) ), fs= self.fs_hz )
        return np.abs( response )

def design_butterworth( kind:Union[FilterKind,str], order:int, cutoffs_hz:Union[float,Sequence[float]], fs_hz:float ) -> FilterSpec:
    """
    Designs a digital Butterworth filter.

    :param FilterKind   kind:       lowpass, highpass or bandpass
    :param int          order:      filter order (a band pass of order N has N sections)
    :param float|tuple  cutoffs_hz: cutoff(s) in Hz
    :param float        fs_hz:      sampling rate

    :raises InvalidOrder:      if the order is not a positive integer
    :raises CutoffOutOfRange:  if a cutoff is not in (0, fs/2) or the cutoff count does not fit the kind
    """
    kind = FilterKind( kind )

    if isinstance( order, bool ) or not isinstance( order, ( int, np.integer ) ) or order < 1:
        raise InvalidOrder( f'filter order must be a positive integer, got {order!r}' )

    cutoffs = tuple( float(cutoff) for cutoff in np.atleast_1d( cutoffs_hz ) )
    nyquist = fs_hz / 2.0

    if len( cutoffs ) != ( 2 if kind is FilterKind.BANDPASS else 1 ):
        raise CutoffOutOfRange( f'{kind.value} filter needs {2 if kind is FilterKind.BANDPASS else 1} cutoff(s), got {len(cutoffs)}' )

    for cutoff in cutoffs:
        if not 0 < cutoff < nyquist:
            raise CutoffOutOfRange( f'cutoff {cutoff} Hz is outside (0, {nyquist}) Hz' )

    if kind is FilterKind.BANDPASS and not cutoffs[0] < cutoffs[1]:
        raise CutoffOutOfRange( f'band edges must be increasing, got {cutoffs}' )

    sections = scipy.signal.butter( int(order), cutoffs if len( cutoffs ) == 2 else cutoffs[0], btype= kind.value, fs= fs_hz, output= 'sos' )

    return FilterSpec( kind, int(order), cutoffs, float(fs_hz), sections )

def _sosfiltfilt_padlen( sections:np.ndarray ) -> int:
    # default edge of scipy.signal.sosfiltfilt
    ntaps  = 2 * len( sections ) + 1
    ntaps -= min( int( ( sections[:, 2] == 0 ).sum() ), int( ( sections[:, 5] == 0 ).sum() ) )
    return 3 * ntaps

def apply_filter( spec:FilterSpec, x:np.ndarray, mode:Union[FilterMode,str]= FilterMode.ZERO_PHASE ) -> np.ndarray:
    """
    Filters the given signal.

    :param FilterSpec spec: filter
    :param np.ndarray x:    signal
    :param FilterMode mode: forward (causal, zero initial state) or zero_phase (forward-backward)

    :return: filtered signal of the same length

    :raises EmptyInput: if the signal is empty
    """
    x    = np.asarray( x, dtype= np.float64 )
    mode = FilterMode( mode )

    if len( x ) == 0:
        raise EmptyInput( 'cannot filter an empty signal' )

    if mode is FilterMode.FORWARD:
        return scipy.signal.sosfilt( spec.sections.copy(), x )

    padlen = min( _sosfiltfilt_padlen( spec.sections ), len( x ) - 1 )
    return scipy.signal.sosfiltfilt( spec.sections.copy(), x, padlen= padlen )

#endregion

#region Resampling

def rational_ratio( fs_in:float, fs_out:float, max_term:int= 10000 ) -> Tuple[int,int]:
    """
    Returns ``(up, down)`` in lowest terms with ``fs_out / fs_in = up / down``.

    :raises IrrationalRatio: if the ratio has no exact representation with terms up to max_term
    """
    if not ( fs_in > 0 and fs_out > 0 ):
        raise IrrationalRatio( f'sampling rates must be positive, got {fs_in} and {fs_out}' )

    ratio = ( Fraction( fs_out ) / Fraction( fs_in ) ).limit_denominator( max_term )

    if ratio.numerator > max_term or abs( float( ratio ) - fs_out / fs_in ) > 1e-12 * ( fs_out / fs_in ):
        raise IrrationalRatio( f'ratio {fs_out}/{fs_in} is not reducible to integers up to {max_term}' )

    return ratio.numerator, ratio.denominator

def resampling_filter( up:int, down:int, attenuation_db:float= 60.0, transition:float= 0.2 ) -> np.ndarray:
    """
    Designs the Kaiser-windowed sinc lowpass of the polyphase resampler. The stop band starts
    at the lower of the two Nyquist frequencies, the pass band ends ``transition`` (relative)
    below it.
    """
    max_rate     = max( up, down )
    width        = transition / max_rate
    numtaps, beta = scipy.signal.kaiserord( attenuation_db, width )
    numtaps      |= 1

    return scipy.signal.firwin( numtaps, ( 1.0 - transition / 2.0 ) / max_rate, window= ( 'kaiser', beta ) )

def resample( x:np.ndarray, fs_in:float, fs_out:float, attenuation_db:float= 60.0, transition:float= 0.2, max_term:int= 10000 ) -> np.ndarray:
    """
    Resamples the signal by an exact rational factor (upsample, polyphase Kaiser lowpass, downsample).

    :param np.ndarray x:      signal
    :param float      fs_in:  input sampling rate
    :param float      fs_out: output sampling rate

    :return: signal of ``round(len(x) * fs_out / fs_in)`` samples

    :raises IrrationalRatio: see :func:`rational_ratio`
    """
    x        = np.asarray( x, dtype= np.float64 )
    up, down = rational_ratio( fs_in, fs_out, max_term )

    if up == down:
        return x.copy()

    if len( x ) == 0:
        raise EmptyInput( 'cannot resample an empty signal' )

    n_out = ( 2 * len( x ) * up + down ) // ( 2 * down )
    taps  = resampling_filter( up, down, attenuation_db, transition )

    return scipy.signal.resample_poly( x, up, down, window= taps )[:n_out]

#endregion

#region Amplitude

def robust_normalize( x:np.ndarray ) -> np.ndarray:
    """
    Subtracts the median and divides by the interquartile range (linear-interpolation quantiles).

    :raises DegenerateSignal: on fewer than 4 samples or zero IQR
    """
    x = np.asarray( x, dtype= np.float64 )

    if len( x ) < 4:
        raise DegenerateSignal( f'robust normalization needs at least 4 samples, got {len(x)}' )

    q1, median, q3 = np.quantile( x, [ 0.25, 0.5, 0.75 ] )
    iqr = q3 - q1

    if not iqr > 0:
        raise DegenerateSignal( 'signal has zero interquartile range' )

    return ( x - median ) / iqr

def clip( x:np.ndarray, lo:float= -20.0, hi:float= 20.0 ) -> np.ndarray:
    """
    Clips amplitudes to ``[lo, hi]``.

    :raises InvalidBounds: if lo >= hi
    """
    if not lo < hi:
        raise InvalidBounds( f'clipping bounds must satisfy lo < hi, got [{lo}, {hi}]' )

    return np.clip( np.asarray( x, dtype= np.float64 ), lo, hi )

#endregion

#region Analytic signal

def analytic_signal( x:np.ndarray ) -> np.ndarray:
    """
    Returns the analytic signal ``x + iH(x)``. The FFT is taken over the signal reflected at
    both ends up to the next power of two; the padding is removed from the result.

    :raises EmptyInput: if the signal is empty
    """
    x = np.asarray( x, dtype= np.float64 )
    n = len( x )

    if n == 0:
        raise EmptyInput( 'cannot compute the analytic signal of an empty signal' )

    n_fft = 1 << ( n - 1 ).bit_length()
    pad   = n_fft - n
    left  = pad // 2

    padded = np.pad( x, ( left, pad - left ), mode= 'reflect' ) if pad > 0 else x
    return scipy.signal.hilbert( padded )[left:left + n]

def analytic_envelope( x:np.ndarray ) -> np.ndarray:
    """Returns the magnitude of the analytic signal at each sample."""
    return np.abs( analytic_signal( x ) )

def quadrature( x:np.ndarray ) -> np.ndarray:
    """Returns the Hilbert transform (quadrature component) of the signal."""
    return np.imag( analytic_signal( x ) )

#endregion

def boolean_runs( mask:np.ndarray ) -> np.ndarray:
    """
    Returns the maximal runs of True values as an ``(n, 2)`` array of ``[start, end)`` sample indices.
    """
    padded = np.concatenate( [ [ 0 ], np.asarray( mask, dtype= np.int8 ), [ 0 ] ] )
    edges  = np.diff( padded )
    return np.stack( [ np.flatnonzero( edges == 1 ), np.flatnonzero( edges == -1 ) ], axis= 1 )
