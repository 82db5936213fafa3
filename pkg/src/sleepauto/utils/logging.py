import logging, logging.config
import copy

from abc    import ABC
from typing import TYPE_CHECKING, Callable, Optional

if TYPE_CHECKING:
    from sleepauto.elements.events    import EventList, SpindleEvent
    from sleepauto.elements.hypnogram import Hypnogram, Stage
    from sleepauto.elements.record    import SignalRecord

LOGGER_NAME = 'sleepauto-logger'

DEFAULT_LOGGING_CONFIG = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "simple": {
            "format": "%(levelname)-8s: %(message)s"
        },
        "file": {
            "format": "%(asctime)s %(levelname)-8s: %(message)s"
        }
    },
    "handlers": {
        "stderr": {
            "class": "logging.StreamHandler",
            "level": "INFO",
            "formatter": "simple",
            "stream": "ext://sys.stderr"
        }
    },
    "loggers": {
        LOGGER_NAME: {
            "level": "DEBUG",
            "handlers": [
                "stderr"
            ],
            "propagate": False
        }
    }
}

_configured:bool = False

def configure_logging( level:str= 'INFO', filename:Optional[str]= None ) -> None:
    """
    (Re)configures the package logger.

    :param str level:    level of the console handler
    :param str filename: (optional) log file receiving every message
    """
    global _configured

    config = copy.deepcopy( DEFAULT_LOGGING_CONFIG )
    config['handlers']['stderr']['level'] = level.upper()

    if filename is not None:
        config['handlers']['file'] = {
            "class": "logging.FileHandler",
            "level": "DEBUG",
            "formatter": "file",
            "filename": filename,
            "mode": "w"
        }
        config['loggers'][LOGGER_NAME]['handlers'].append( 'file' )

    try:
        logging.config.dictConfig( config )
        _configured = True

    except Exception as exc:
        logging.getLogger( LOGGER_NAME ).warning( f'could not initialize logger due to: {exc}' )

def get_logger() -> logging.Logger:
    """Returns the package logger, configuring it on first use."""
    if not _configured:
        configure_logging()

    return logging.getLogger( LOGGER_NAME )

class LoggingCallback(ABC):
    """
    Abstract base class for logging callbacks.

    Methods of the class should be used only for logging messages via the logger of the class.

    :param Callable clock: (optional) function returning the current time (seconds) shown in messages

    :ivar logging.Logger logger: logger
    """
    def __init__( self, clock:Optional[Callable[[],float]]= None ) -> None:
        super().__init__()

        self.clock  = clock
        self.logger = get_logger()

    def info( self, msg:str ):
        """Logs info message."""
        self.logger.info( msg )

    def warning( self, msg:str ):
        """Logs warning message."""
        self.logger.warning( msg )

    def debug( self, msg:str ):
        """Logs debug message."""
        self.logger.debug( msg )

    def error( self, msg:str ):
        """Logs error message."""
        self.logger.error( msg )

    #region Analysis-related

    def on_analysis_start( self, rec:'SignalRecord', variant:str ) -> None:
        """
        This callback method is called when the analysis of a recording is about to be started.

        :param SignalRecord rec: analysed recording
        :param str variant:      pipeline variant ("staged", "expert" or "unstaged")
        """
        pass

    def on_staging_finish( self, hyp:'Hypnogram' ) -> None:
        """
        This method is called when the automatic staging of a recording is finished.

        :param Hypnogram hyp: resulting hypnogram
        """
        pass

    def on_block_detected( self, channel:str, offset_s:float, duration_s:float, n_events:int ) -> None:
        """
        This method is called whenever detection in an N2 block is finished.

        :param str channel:      channel label
        :param float offset_s:   block start on the recording timeline
        :param float duration_s: block length
        :param int n_events:     number of raw events found in the block
        """
        pass

    def on_block_skipped( self, channel:str, offset_s:float, reason:str ) -> None:
        """
        This method is called whenever an N2 block is skipped.

        :param str channel:    channel label
        :param float offset_s: block start on the recording timeline
        :param str reason:     reason of skipping
        """
        pass

    def on_channel_finish( self, channel:str, n_raw:int, n_postprocessed:int ) -> None:
        """
        This method is called when every block of a channel is processed.
        """
        pass

    def on_union_finish( self, events:'EventList' ) -> None:
        """
        This method is called when the channel union is computed.
        """
        pass

    def on_characterization_finish( self, n_features:int ) -> None:
        """
        This method is called when the spindle characteristics are computed.
        """
        pass

    def on_analysis_finish( self ) -> None:
        """
        This method is called when the analysis of a recording is finished.
        """
        pass

    #endregion

    #region Simulation-related

    def on_simulation_start( self ) -> None:
        """
        This callback method is called when the simulation is about to be started.
        """
        pass

    def on_epoch( self, index:int, stage:'Stage' ) -> None:
        """
        This method is called whenever a new epoch starts in the simulated hypnogram.

        :param int index:   epoch index
        :param Stage stage: stage of the epoch
        """
        pass

    def on_spindle_planted( self, event:'SpindleEvent' ) -> None:
        """
        This method is called whenever a ground-truth spindle is planted.
        """
        pass

    def on_spindle_rejected( self, start_s:float, reason:str ) -> None:
        """
        This method is called whenever a spindle arrival could not be planted.
        """
        pass

    def on_simulation_finish( self ) -> None:
        """
        This callback method is called when the simulation is finished.
        """
        pass

    #endregion

class DefaultLoggingCallback(LoggingCallback):
    """
    Default logging callback.
    """
    def __init__( self, clock:Optional[Callable[[],float]]= None ) -> None:
        super().__init__( clock )

    def time_to_str( self, time:float ) -> str:
        """
        Converts the given recording time to a string of the format "%H:%M:%S".
        """
        hours, remainder = divmod( int(time), 3600 )
        minutes, seconds = divmod( remainder, 60 )

        return f'{hours:02d}:{minutes:02d}:{seconds:02d}'

    @property
    def _prefix(self) -> str:
        if self.clock is None:
            return '|'

        now = self.clock()
        return f'{now:10.1f} | {self.time_to_str( now )} |'

    #region Analysis-related

    def on_analysis_start( self, rec:'SignalRecord', variant:str ) -> None:
        self.logger.info( f'{self._prefix} START {variant} analysis of {len(rec.channels)} channel(s), {rec.duration_s:.1f} s' )

    def on_staging_finish( self, hyp:'Hypnogram' ) -> None:
        self.logger.info( f'{self._prefix} staging finished: {len(hyp)} epochs, {hyp.count_n2()} N2' )

    def on_block_detected( self, channel:str, offset_s:float, duration_s:float, n_events:int ) -> None:
        self.logger.debug( f'{self._prefix} {channel} | block at {self.time_to_str( offset_s )} ({duration_s:.0f} s): {n_events} event(s)' )

    def on_block_skipped( self, channel:str, offset_s:float, reason:str ) -> None:
        self.logger.warning( f'{self._prefix} {channel} | block at {self.time_to_str( offset_s )} is skipped: {reason}' )

    def on_channel_finish( self, channel:str, n_raw:int, n_postprocessed:int ) -> None:
        self.logger.info( f'{self._prefix} {channel} | {n_raw} raw -> {n_postprocessed} postprocessed event(s)' )

    def on_union_finish( self, events:'EventList' ) -> None:
        self.logger.info( f'{self._prefix} channel union: {len(events)} event(s)' )

    def on_characterization_finish( self, n_features:int ) -> None:
        self.logger.info( f'{self._prefix} characterized {n_features} event-channel pair(s)' )

    def on_analysis_finish( self ) -> None:
        self.logger.info( f'{self._prefix} FINISH' )

    #endregion

    #region Simulation-related

    def on_simulation_start( self ) -> None:
        self.logger.info( f'{self._prefix} START simulation' )

    def on_epoch( self, index:int, stage:'Stage' ) -> None:
        self.logger.debug( f'{self._prefix} epoch {index}: {stage.token}' )

    def on_spindle_planted( self, event:'SpindleEvent' ) -> None:
        self.logger.debug( f'{self._prefix} spindle planted ({event.duration_s:.2f} s)' )

    def on_spindle_rejected( self, start_s:float, reason:str ) -> None:
        self.logger.debug( f'{self._prefix} spindle arrival at {start_s:.2f} s rejected: {reason}' )

    def on_simulation_finish( self ) -> None:
        self.logger.info( f'{self._prefix} FINISH simulation' )

    #endregion
