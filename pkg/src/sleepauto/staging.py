"""
Automatic sleep staging: preprocessing, 30-second epoching, sliding 21-epoch windows over the
zero-buffered recording and geometric-mean aggregation of the per-window stage probabilities.
"""
import math

import numpy  as np
import pandas as pd
import scipy.signal

from abc    import ABC, abstractmethod
from typing import Optional

from sleepauto.exceptions         import LengthMismatch, NoEpochs, NonProbabilityRow
from sleepauto.elements.hypnogram import EPOCH_LEN_S, N_STAGES, Hypnogram
from sleepauto.elements.record    import SignalRecord
from sleepauto.dsp                import FilterKind, apply_filter, design_butterworth, resample, robust_normalize
from sleepauto.dsp                import clip as clip_amplitude

PROBABILITY_COLUMNS = [ 'wake', 'n1', 'n2', 'n3', 'rem' ]

class StageProbabilities:
    """
    Per-epoch probability vectors over (Wake, N1, N2, N3, REM).

    :param np.ndarray probs: ``(n_epochs, 5)`` array with rows summing to 1
    """
    def __init__( self, probs:np.ndarray ) -> None:
        self.probs = np.asarray( probs, dtype= np.float64 )

        if self.probs.ndim != 2 or self.probs.shape[1] != N_STAGES:
            raise NonProbabilityRow( f'stage probabilities must have shape (n, {N_STAGES}), got {self.probs.shape}' )

        if np.any( self.probs < 0 ) or not np.allclose( self.probs.sum( axis= 1 ), 1.0, atol= 1e-6 ):
            raise NonProbabilityRow( 'every row must be a probability vector' )

    def __len__(self) -> int:
        return len( self.probs )

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame( self.probs, columns= PROBABILITY_COLUMNS )

#region Preprocessing and epoching

def preprocess_for_staging( rec:SignalRecord, low_hz:float= 0.3, high_hz:float= 30.0, order:int= 4, fs:float= 60.0, clip:float= 20.0, mode:str= 'zero_phase', **resampling ) -> SignalRecord:
    """
    Band-pass filters (Butterworth), resamples to ``fs``, robust-normalizes and clips every channel.
    The upper band edge is lowered to 0.45 times the channel rate when it would reach Nyquist.

    :raises DegenerateSignal: if a channel has zero interquartile range
    """
    channels = []
    for channel in rec.channels:
        band     = ( low_hz, min( high_hz, 0.45 * channel.fs ) )
        spec     = design_butterworth( FilterKind.BANDPASS, order, band, channel.fs )
        filtered = apply_filter( spec, channel.samples, mode )
        samples  = resample( filtered, channel.fs, fs, **resampling )

        channels.append( channel.with_samples( clip_amplitude( robust_normalize( samples ), -clip, clip ), fs ) )

    return SignalRecord( channels, rec.start_time )

def epoch_count( rec:SignalRecord ) -> int:
    """Returns the number of complete 30-second epochs (a trailing partial epoch is dropped)."""
    return int( math.floor( rec.duration_s / EPOCH_LEN_S + 1e-9 ) )

def epoch_tensor( rec:SignalRecord, n_epochs:Optional[int]= None ) -> np.ndarray:
    """
    Cuts a preprocessed record (all channels at the same rate) into an
    ``(n_epochs, n_channels, samples_per_epoch)`` array; short channels are zero-padded.
    """
    fs       = rec.channels[0].fs
    n_epochs = epoch_count( rec ) if n_epochs is None else n_epochs
    width    = int( round( EPOCH_LEN_S * fs ) )

    tensor = np.zeros( ( n_epochs, len( rec.channels ), width ) )
    for c, channel in enumerate( rec.channels ):
        samples = np.zeros( n_epochs * width )
        head    = channel.samples[:n_epochs * width]
        samples[:len( head )] = head

        tensor[:, c, :] = samples.reshape( n_epochs, width )

    return tensor

#endregion

#region Classifier backends

class ClassifierBackend(ABC):
    """
    Abstract stage classifier evaluated on windows of consecutive epochs.

    Implementations must be deterministic and safe to call from several threads.

    :ivar str name:              backend name recorded in run manifests
    :ivar int window_len_epochs: number of epochs per window
    """
    name:str              = 'backend'
    window_len_epochs:int = 21

    @abstractmethod
    def predict( self, window:np.ndarray, first_epoch:int ) -> np.ndarray:
        """
        Returns stage probabilities for every epoch of the window.

        :param np.ndarray window:      ``(window_len_epochs, n_channels, samples_per_epoch)`` preprocessed window
        :param int        first_epoch: index of the first window epoch on the real-epoch axis (negative inside the leading buffer)

        :return: ``(window_len_epochs, 5)`` array
        """
        ...

    def predict_windows( self, buffered:np.ndarray, buffer_epochs:int ) -> np.ndarray:
        """
        Evaluates every window of the buffered epoch sequence with step 1 epoch.

        :return: ``(n_windows, window_len_epochs, 5)`` array
        """
        n_windows = len( buffered ) - self.window_len_epochs + 1
        return np.stack( [
            self.predict( buffered[start:start + self.window_len_epochs], start - buffer_epochs )
            for start in range( n_windows )
        ] )

# relative band powers: delta, theta, alpha, sigma, beta
BANDS_HZ = [ ( 0.5, 4.0 ), ( 4.0, 8.0 ), ( 8.0, 12.0 ), ( 12.0, 16.0 ), ( 16.0, 30.0 ) ]

# linear stage scores over the relative band powers (rows: Wake, N1, N2, N3, REM)
SCORE_WEIGHTS = np.array( [
    [  0.0,  0.0,  0.0,  0.0, 10.0 ],
    [  0.0, 10.0,  0.0,  0.0,  0.0 ],
    [  6.0,  0.0,  0.0,  6.0,  0.0 ],
    [ 12.0,  0.0,  0.0,  0.0,  0.0 ],
    [  0.0,  0.0, 10.0,  0.0,  0.0 ],
] )
SCORE_BIAS = np.array( [ 0.0, 0.0, -1.2, -6.0, 0.0 ] )

class BandPowerBackend(ClassifierBackend):
    """
    Reference classifier: relative band powers of each epoch (Welch, 2-second segments),
    averaged over channels, mapped to stage probabilities by a softmax over fixed linear scores.
    Epochs without power (buffer epochs) get uniform probabilities.

    :param float fs: sampling rate of the preprocessed windows
    """
    name = 'baseline'

    def __init__( self, fs:float= 60.0 ) -> None:
        self.fs = fs

    def epoch_probabilities( self, epochs:np.ndarray ) -> np.ndarray:
        """
        Returns ``(n_epochs, 5)`` probabilities of the given ``(n_epochs, n_channels, samples)`` epochs.
        """
        nperseg      = min( int( 2 * self.fs ), epochs.shape[-1] )
        freqs, power = scipy.signal.welch( epochs, fs= self.fs, nperseg= nperseg, axis= -1 )

        band_power = np.stack( [ power[..., ( lo <= freqs ) & ( freqs < hi )].sum( axis= -1 ) for lo, hi in BANDS_HZ ], axis= -1 )
        total      = band_power.sum( axis= -1, keepdims= True )
        active     = total > 0

        # channel mean over channels with power
        relative = ( band_power / np.where( active, total, 1.0 ) ).sum( axis= 1 )
        n_active = active.sum( axis= 1 )
        relative = relative / np.maximum( n_active, 1 )
        silent   = n_active[:, 0] == 0

        scores = relative @ SCORE_WEIGHTS.T + SCORE_BIAS
        scores = scores - scores.max( axis= 1, keepdims= True )
        probs  = np.exp( scores )
        probs /= probs.sum( axis= 1, keepdims= True )

        probs[silent] = 1.0 / N_STAGES
        return probs

    def predict( self, window:np.ndarray, first_epoch:int ) -> np.ndarray:
        return self.epoch_probabilities( window )

    def predict_windows( self, buffered:np.ndarray, buffer_epochs:int ) -> np.ndarray:
        # predictions do not depend on the window context: evaluate each epoch once
        probs = self.epoch_probabilities( buffered )
        view  = np.lib.stride_tricks.sliding_window_view( probs, self.window_len_epochs, axis= 0 )
        return np.ascontiguousarray( np.moveaxis( view, -1, 1 ) )

class PrecomputedBackend(ClassifierBackend):
    """
    Replays externally computed per-epoch probabilities (e.g. of a pretrained network).

    :param np.ndarray probs: ``(n_epochs, 5)`` probability rows
    """
    name = 'precomputed'

    def __init__( self, probs:np.ndarray ) -> None:
        self.probs = np.asarray( probs, dtype= np.float64 )

    def predict( self, window:np.ndarray, first_epoch:int ) -> np.ndarray:
        out = np.full( ( self.window_len_epochs, N_STAGES ), 1.0 / N_STAGES )

        lo = max( first_epoch, 0 )
        hi = min( first_epoch + self.window_len_epochs, len( self.probs ) )
        if lo < hi:
            out[lo - first_epoch : hi - first_epoch] = self.probs[lo:hi]

        return out

    def check_length( self, n_epochs:int ) -> None:
        if n_epochs != len( self.probs ):
            raise LengthMismatch( f'{len(self.probs)} stored probability rows for {n_epochs} epochs' )

def baseline_bandpower_backend( fs:float= 60.0 ) -> BandPowerBackend:
    """Returns the reference band-power classifier."""
    return BandPowerBackend( fs )

def precomputed_backend( path:str, tolerance:float= 0.1 ) -> PrecomputedBackend:
    """
    Loads per-epoch probabilities from a CSV with header ``wake,n1,n2,n3,rem``.
    Rows whose sum is within ``tolerance`` of 1 are renormalized.

    :raises NonProbabilityRow: on negative, non-finite or non-normalizable rows
    """
    table = pd.read_csv( path )

    if [ str(column).strip().lower() for column in table.columns ] != PROBABILITY_COLUMNS:
        raise NonProbabilityRow( f'{path}: expected header {",".join( PROBABILITY_COLUMNS )}' )

    probs = table.to_numpy( dtype= np.float64 )
    sums  = probs.sum( axis= 1 )

    for row, ( values, total ) in enumerate( zip( probs, sums ), start= 2 ):
        if not np.all( np.isfinite( values ) ) or np.any( values < 0 ):
            raise NonProbabilityRow( f'{path}, row {row}: negative or missing probability' )

        if abs( total - 1.0 ) > tolerance:
            raise NonProbabilityRow( f'{path}, row {row}: probabilities sum to {total:g}' )

    return PrecomputedBackend( probs / sums[:, None] )

#endregion

#region Aggregation

def aggregate_windows( predictions:np.ndarray, n_epochs:int, buffer_epochs:int= 20, prob_floor:float= 1e-12 ) -> np.ndarray:
    """
    Geometric mean of the window predictions covering each real epoch, renormalized.

    :param np.ndarray predictions: ``(n_windows, window_len, 5)`` backend outputs over the buffered sequence
    :param int        n_epochs:    number of real epochs

    :return: ``(n_epochs, 5)`` array
    """
    window_len = predictions.shape[1]
    logp       = np.log( np.maximum( predictions, prob_floor ) )
    epochs     = np.arange( n_epochs )
    acc        = np.zeros( ( n_epochs, N_STAGES ) )
    count      = np.zeros( n_epochs )

    for position in range( window_len ):
        # window starting at buffered index s holds real epoch e at position e + buffer - s
        starts = epochs + buffer_epochs - position
        valid  = ( starts >= 0 ) & ( starts < len( predictions ) )
        acc[valid]   += logp[starts[valid], position]
        count[valid] += 1

    probs  = np.exp( acc / count[:, None] )
    return probs / probs.sum( axis= 1, keepdims= True )

def stage_probabilities( rec:SignalRecord, backend:ClassifierBackend, buffer_epochs:int= 20, prob_floor:float= 1e-12, window_epochs:int= 21, preprocessed:bool= False, **preprocessing ) -> StageProbabilities:
    """
    Stages a recording: preprocessing (unless ``preprocessed``), epoching, buffering with
    zero epochs, sliding-window evaluation and geometric-mean aggregation.

    :raises NoEpochs:       if the recording is shorter than one epoch
    :raises LengthMismatch: if a precomputed backend does not match the epoch count, or the backend
                            window differs from ``window_epochs``
    """
    if backend.window_len_epochs != window_epochs:
        raise LengthMismatch( f'backend evaluates windows of {backend.window_len_epochs} epochs, expected {window_epochs}' )

    n_epochs = epoch_count( rec )
    if n_epochs < 1:
        raise NoEpochs( f'recording of {rec.duration_s:.1f} s holds no complete epoch' )

    if isinstance( backend, PrecomputedBackend ):
        backend.check_length( n_epochs )

    if not preprocessed:
        rec = preprocess_for_staging( rec, **preprocessing )

    epochs   = epoch_tensor( rec, n_epochs )
    buffer   = np.zeros( ( buffer_epochs, ) + epochs.shape[1:] )
    buffered = np.concatenate( [ buffer, epochs, buffer ] )

    predictions = backend.predict_windows( buffered, buffer_epochs )
    return StageProbabilities( aggregate_windows( predictions, n_epochs, buffer_epochs, prob_floor ) )

def hypnogram_from_probs( p:StageProbabilities ) -> Hypnogram:
    """Per-epoch argmax; ties go to the earlier stage in Wake, N1, N2, N3, REM order."""
    return Hypnogram( np.argmax( p.probs, axis= 1 ).tolist() )

#endregion
