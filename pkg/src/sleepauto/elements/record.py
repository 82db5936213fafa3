import numpy as np

from datetime import datetime
from typing   import Iterable, List, Optional

from sleepauto.exceptions import ChannelNotFound, InvalidRecord

class Channel:
    """
    One sampled signal of a recording.

    :param str        label:   channel label (e.g. "C3-A2")
    :param np.ndarray samples: samples in microvolts
    :param float      fs:      sampling rate (Hz)

    :raises InvalidRecord: if the sampling rate is not positive or there are no samples
    """
    def __init__( self, label:str, samples:np.ndarray, fs:float ) -> None:
        self.label:str          = label
        self.samples:np.ndarray = np.asarray( samples, dtype= np.float64 )
        self.fs:float           = float( fs )

        if not self.fs > 0:
            raise InvalidRecord( f'channel "{label}" has non-positive sampling rate {fs}' )

        if self.samples.ndim != 1 or len( self.samples ) == 0:
            raise InvalidRecord( f'channel "{label}" must be a non-empty one-dimensional signal' )

    @property
    def duration_s(self) -> float:
        """Returns the duration of the channel in seconds."""
        return len( self.samples ) / self.fs

    def with_samples( self, samples:np.ndarray, fs:Optional[float]= None ) -> 'Channel':
        """Returns a channel with the same label and the given samples."""
        return Channel( self.label, samples, self.fs if fs is None else fs )

    def __repr__(self) -> str:
        return f'Channel({self.label}, {len(self.samples)} samples @ {self.fs:g} Hz)'

class SignalRecord:
    """
    Multi-channel recording with per-channel sampling rates.

    :param Iterable[Channel] channels:   channels of the recording
    :param datetime          start_time: (optional) start of the recording

    :ivar List[Channel] channels:   channels
    :ivar datetime      start_time: start of the recording, if known

    :raises InvalidRecord: if there is no channel or labels are not unique
    """
    def __init__( self, channels:Iterable[Channel], start_time:Optional[datetime]= None ) -> None:
        self.channels:List[Channel]          = list( channels )
        self.start_time:Optional[datetime]   = start_time

        if len( self.channels ) == 0:
            raise InvalidRecord( 'record has no channels' )

        labels = self.labels
        if len( set( labels ) ) != len( labels ):
            raise InvalidRecord( f'channel labels are not unique: {labels}' )

    @property
    def labels(self) -> List[str]:
        """Returns the channel labels in record order."""
        return [ channel.label for channel in self.channels ]

    @property
    def duration_s(self) -> float:
        """Returns the duration of the longest channel in seconds."""
        return max( channel.duration_s for channel in self.channels )

    def channel( self, label:str ) -> Channel:
        """
        Returns the channel with the given label.

        :raises ChannelNotFound: if there is no such channel
        """
        for channel in self.channels:
            if channel.label == label:
                return channel

        raise ChannelNotFound( f'channel "{label}" not found (available: {", ".join( self.labels )})' )

    def select( self, labels:Iterable[str] ) -> 'SignalRecord':
        """Returns a record consisting of the given channels (in the given order)."""
        return SignalRecord( [ self.channel( label ) for label in labels ], self.start_time )

    def scaled( self, factor:float ) -> 'SignalRecord':
        """Returns a copy of the record with every sample multiplied by the given factor."""
        return SignalRecord( [ channel.with_samples( channel.samples * factor ) for channel in self.channels ], self.start_time )

    def __repr__(self) -> str:
        return f'SignalRecord({", ".join( self.labels )}; {self.duration_s:.1f} s)'
