import numpy as np

from enum   import Enum
from typing import Iterable, Iterator, List, Union, overload

from sleepauto.exceptions import EmptyHypnogram, UnknownStageToken

EPOCH_LEN_S = 30.0

class Stage(Enum):
    """
    AASM sleep stages. The integer values fix the order used for tie-breaking and for
    probability vectors (Wake < N1 < N2 < N3 < REM).
    """
    WAKE = 0
    N1   = 1
    N2   = 2
    N3   = 3
    REM  = 4

    @property
    def token(self) -> str:
        """Returns the token of the stage used in hypnogram files."""
        return _TOKENS[self]

    @classmethod
    def from_token( cls, token:str ) -> 'Stage':
        """
        Returns the stage of the given (case-insensitive) token.

        :raises UnknownStageToken: if the token is not one of W, N1, N2, N3, REM
        """
        stage = _STAGES_BY_TOKEN.get( token.strip().upper(), None )
        if stage is None:
            raise UnknownStageToken( f'unknown stage token "{token.strip()}"' )

        return stage

_TOKENS = { Stage.WAKE : 'W', Stage.N1 : 'N1', Stage.N2 : 'N2', Stage.N3 : 'N3', Stage.REM : 'REM' }
_STAGES_BY_TOKEN = { token : stage for stage, token in _TOKENS.items() }

N_STAGES = len( Stage )

class Hypnogram:
    """
    Sequence of stage labels over consecutive 30-second epochs.

    :param Iterable[Stage|int] stages: stage of each epoch

    :ivar List[Stage] stages:      stage of each epoch
    :ivar float       epoch_len_s: epoch length in seconds (always 30)

    :raises EmptyHypnogram: if no stage is given
    """
    def __init__( self, stages:Iterable[Union[Stage,int]] ) -> None:
        self.stages:List[Stage] = [ stage if isinstance( stage, Stage ) else Stage( int(stage) ) for stage in stages ]
        self.epoch_len_s:float  = EPOCH_LEN_S

        if len( self.stages ) == 0:
            raise EmptyHypnogram( 'hypnogram has no epochs' )

    def __len__(self) -> int:
        return len( self.stages )

    def __iter__(self) -> Iterator[Stage]:
        return iter( self.stages )

    @overload
    def __getitem__( self, index:int ) -> Stage: ...
    @overload
    def __getitem__( self, index:slice ) -> List[Stage]: ...
    def __getitem__( self, index ):
        return self.stages[index]

    def __eq__( self, other:object ) -> bool:
        return isinstance( other, Hypnogram ) and self.stages == other.stages

    def __repr__(self) -> str:
        return f'Hypnogram({len(self)} epochs)'

    def to_array(self) -> np.ndarray:
        """Returns the stage codes as an integer array."""
        return np.fromiter( ( stage.value for stage in self.stages ), dtype= np.int64, count= len(self.stages) )

    def count( self, stage:Stage ) -> int:
        """Returns the number of epochs of the given stage."""
        return sum( 1 for s in self.stages if s is stage )

    def count_n2(self) -> int:
        """Returns the number of N2 epochs."""
        return self.count( Stage.N2 )

    def minutes( self, stage:Stage ) -> float:
        """Returns the total duration of the given stage in minutes."""
        return self.count( stage ) * self.epoch_len_s / 60.0

    def runs( self, stage:Stage ) -> List[range]:
        """
        Returns the maximal runs of consecutive epochs of the given stage as epoch index ranges.
        """
        runs  = []
        start = None

        for index, s in enumerate( self.stages ):
            if s is stage and start is None:
                start = index

            elif s is not stage and start is not None:
                runs.append( range( start, index ) )
                start = None

        if start is not None:
            runs.append( range( start, len(self.stages) ) )

        return runs

    def stage_at( self, time_s:float ) -> Union[Stage,None]:
        """Returns the stage at the given recording time, or None outside the scored epochs."""
        if time_s < 0:
            return None

        index = int( time_s // self.epoch_len_s )
        return self.stages[index] if index < len(self.stages) else None
