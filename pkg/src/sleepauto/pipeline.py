"""
End-to-end analysis of a recording: sleep staging (or an expert hypnogram), restriction to N2
blocks, spindle detection, post-processing, channel union and characterization.
"""
import os

from dataclasses import dataclass, field
from importlib   import metadata
from typing      import Any, Dict, List, Optional, Sequence, Tuple

import sleepauto

from sleepauto.config             import config_hash, load_config
from sleepauto.exceptions         import BlockTooShort, DegenerateSignal, InputTooShort, LengthMismatch
from sleepauto.elements.events    import EventList
from sleepauto.elements.hypnogram import EPOCH_LEN_S, Hypnogram
from sleepauto.elements.record    import SignalRecord
from sleepauto.characteristics    import SpindleFeatures, characterize_events, density_report, events_per_stage, write_features
from sleepauto.record_io          import write_events, write_hypnogram
from sleepauto.spindles           import Detector, N2Block, extract_n2_blocks, postprocess_events, preprocess_block, union_channels
from sleepauto.staging            import ClassifierBackend, StageProbabilities, epoch_count, hypnogram_from_probs, stage_probabilities
from sleepauto.utils.files        import atomic_write_text, create_directory, write_jsonfile
from sleepauto.utils.logging      import DefaultLoggingCallback, LoggingCallback

VERSIONED_PACKAGES = [ 'numpy', 'scipy', 'pandas', 'torch', 'simpy' ]

@dataclass
class PipelineResult:
    """
    Outcome of one analysis with all of its intermediate artifacts.

    :ivar str                    variant:       ``staged``, ``expert`` or ``unstaged``
    :ivar Hypnogram              hypnogram:     hypnogram restricting the detection (None when unstaged without one)
    :ivar StageProbabilities     probabilities: per-epoch stage probabilities (staged variant only)
    :ivar Dict[str,EventList]    raw:           detector output per channel
    :ivar Dict[str,EventList]    postprocessed: post-processed events per channel
    :ivar EventList              events:        channel union of the post-processed events
    :ivar List[SpindleFeatures]  features:      per event-channel characteristics
    :ivar dict                   density:       density report (None without hypnogram)
    :ivar dict                   plausibility:  events per stage (None without hypnogram)
    :ivar dict                   manifest:      inputs, configuration and versions of the run
    """
    variant:str
    hypnogram:Optional[Hypnogram]
    probabilities:Optional[StageProbabilities]
    raw:Dict[str,EventList]
    postprocessed:Dict[str,EventList]
    events:EventList
    features:List[SpindleFeatures]
    density:Optional[Dict[str,Any]]
    plausibility:Optional[Dict[str,int]]
    manifest:Dict[str,Any] = field( default_factory= dict )

    def export( self, directory:str ) -> Dict[str,str]:
        """
        Writes every artifact of the run into the given directory.

        :return: artifact name -> path
        """
        create_directory( directory )
        paths = {}

        def target( name:str ) -> str:
            paths[name] = os.path.join( directory, name )
            return paths[name]

        if self.hypnogram is not None:
            write_hypnogram( self.hypnogram, target( 'hypnogram.txt' ) )

        if self.probabilities is not None:
            atomic_write_text( self.probabilities.to_frame().to_csv( index= False, lineterminator= '\n' ), target( 'probabilities.csv' ) )

        for channel in sorted( self.raw ):
            write_events( self.raw[channel], target( f'events_raw_{channel}.csv' ) )
            write_events( self.postprocessed[channel], target( f'events_postprocessed_{channel}.csv' ) )

        write_events( self.events, target( 'events.csv' ) )
        write_features( self.features, target( 'features.csv' ) )

        if self.density is not None:
            write_jsonfile( self.density, target( 'density.json' ) )

        if self.plausibility is not None:
            write_jsonfile( self.plausibility, target( 'plausibility.json' ) )

        write_jsonfile( { **self.manifest, 'artifacts': sorted( list( paths ) + [ 'manifest.json' ] ) }, target( 'manifest.json' ) )
        return paths

def package_versions() -> Dict[str,Optional[str]]:
    """Returns the versions of sleepauto and of its numerical dependencies."""
    versions = { 'sleepauto': sleepauto.__version__ }
    for package in VERSIONED_PACKAGES:
        try:
            versions[package] = metadata.version( package )

        except metadata.PackageNotFoundError:
            versions[package] = None

    return versions

class SleepAnalysis:
    """
    Analysis of single recordings with a fixed configuration.

    :param dict config: (optional) configuration (see :mod:`sleepauto.config`), defaults when not given

    :ivar dict            config: configuration
    :ivar LoggingCallback log:    logger
    """
    def __init__( self, config:Optional[Dict[str,Any]]= None ) -> None:
        self.config:Dict[str,Any] = config if config is not None else load_config()

        self.log:LoggingCallback = None
        self._init_logger()

    def _init_logger(self) -> None:
        """Initializes the logging callback."""
        self.log = DefaultLoggingCallback()

    #region Steps

    def stage( self, rec:SignalRecord, backend:ClassifierBackend ) -> Tuple[StageProbabilities,Hypnogram]:
        """Returns the stage probabilities and the hypnogram of the record."""
        probs = stage_probabilities( rec, backend, **self.config['staging'], **self.config['resampling'] )
        hyp   = hypnogram_from_probs( probs )

        self.log.on_staging_finish( hyp )
        return probs, hyp

    def detect_blocks( self, blocks:Sequence[N2Block], detector:Detector, channel:str ) -> Tuple[EventList,EventList]:
        """
        Preprocesses the blocks of one channel and runs the detector on them. Blocks with a flat
        signal or too short for the detector are skipped.

        :return: raw and post-processed events of the channel
        """
        raw = []
        for block in blocks:
            try:
                events = detector.detect( preprocess_block( block, **self.config['spindles'], **self.config['resampling'] ) )

            except ( DegenerateSignal, BlockTooShort, InputTooShort ) as exc:
                self.log.on_block_skipped( channel, block.record_offset_s, str( exc ) )
                continue

            self.log.on_block_detected( channel, block.record_offset_s, block.duration_s, len( events ) )
            raw.extend( events )

        raw           = EventList( raw )
        postprocessed = postprocess_events( raw, **self.config['postprocess'] )

        self.log.on_channel_finish( channel, len( raw ), len( postprocessed ) )
        return raw, postprocessed

    def characterize( self, rec:SignalRecord, events:EventList, channels:Sequence[str] ) -> List[SpindleFeatures]:
        features = characterize_events( rec, events, channels, **self.config['characteristics'] )

        self.log.on_characterization_finish( len( features ) )
        return features

    def _analyze( self, variant:str, rec:SignalRecord, hyp:Optional[Hypnogram], blocks:Dict[str,List[N2Block]], detector:Detector, channels:Sequence[str], probs:Optional[StageProbabilities]= None ) -> PipelineResult:
        raw, postprocessed = {}, {}
        for channel in channels:
            raw[channel], postprocessed[channel] = self.detect_blocks( blocks[channel], detector, channel )

        events = union_channels( postprocessed[channel] for channel in channels )
        self.log.on_union_finish( events )

        features = self.characterize( rec, events, channels )

        density, plausibility = None, None
        if hyp is not None:
            density      = density_report( features, events, hyp, channels, self.config['characteristics']['fast_threshold_hz'] )
            plausibility = events_per_stage( events, hyp )

        manifest = {
            'variant':     variant,
            'channels':    list( channels ),
            'detector':    detector.describe(),
            'config':      self.config,
            'config_hash': config_hash( self.config ),
            'versions':    package_versions(),
        }

        self.log.on_analysis_finish()
        return PipelineResult( variant, hyp, probs, raw, postprocessed, events, features, density, plausibility, manifest )

    #endregion

    #region Variants

    def run_full( self, rec:SignalRecord, staging_backend:ClassifierBackend, detector:Detector, channels:Sequence[str] ) -> PipelineResult:
        """
        Stages the record, then detects spindles in the N2 blocks of the model hypnogram.

        :raises ChannelNotFound: if a channel is missing from the record
        """
        for channel in channels:
            rec.channel( channel )

        self.log.on_analysis_start( rec, 'staged' )
        probs, hyp = self.stage( rec, staging_backend )

        blocks = { channel : extract_n2_blocks( rec, hyp, channel ) for channel in channels }
        result = self._analyze( 'staged', rec, hyp, blocks, detector, channels, probs )
        result.manifest['staging_backend'] = staging_backend.name
        return result

    def run_with_expert_stages( self, rec:SignalRecord, hyp:Hypnogram, detector:Detector, channels:Sequence[str] ) -> PipelineResult:
        """
        Detects spindles in the N2 blocks of the given (expert) hypnogram.

        :raises LengthMismatch:  if the hypnogram does not cover exactly the complete epochs of the record
        :raises ChannelNotFound: if a channel is missing from the record
        """
        if len( hyp ) != epoch_count( rec ):
            raise LengthMismatch( f'hypnogram has {len( hyp )} epochs, the record {epoch_count( rec )}' )

        for channel in channels:
            rec.channel( channel )

        self.log.on_analysis_start( rec, 'expert' )

        blocks = { channel : extract_n2_blocks( rec, hyp, channel ) for channel in channels }
        return self._analyze( 'expert', rec, hyp, blocks, detector, channels )

    def run_without_staging( self, rec:SignalRecord, detector:Detector, channels:Sequence[str], hyp:Optional[Hypnogram]= None ) -> PipelineResult:
        """
        Detects spindles over all complete epochs of the record, regardless of sleep stage.
        The optional hypnogram only feeds the density and stage plausibility reports.

        :raises LengthMismatch: if the given hypnogram does not match the record
        """
        n_epochs = epoch_count( rec )
        if hyp is not None and len( hyp ) != n_epochs:
            raise LengthMismatch( f'hypnogram has {len( hyp )} epochs, the record {n_epochs}' )

        self.log.on_analysis_start( rec, 'unstaged' )

        blocks = {}
        for channel in channels:
            source = rec.channel( channel )
            end    = int( round( n_epochs * EPOCH_LEN_S * source.fs ) )
            blocks[channel] = [ N2Block( channel, source.samples[:end].copy(), source.fs, 0.0 ) ] if end > 0 else []

        return self._analyze( 'unstaged', rec, hyp, blocks, detector, channels )

    #endregion

def run_full( rec:SignalRecord, staging_backend:ClassifierBackend, detector:Detector, channels:Sequence[str], config:Optional[Dict[str,Any]]= None ) -> PipelineResult:
    return SleepAnalysis( config ).run_full( rec, staging_backend, detector, channels )

def run_with_expert_stages( rec:SignalRecord, hyp:Hypnogram, detector:Detector, channels:Sequence[str], config:Optional[Dict[str,Any]]= None ) -> PipelineResult:
    return SleepAnalysis( config ).run_with_expert_stages( rec, hyp, detector, channels )

def run_without_staging( rec:SignalRecord, detector:Detector, channels:Sequence[str], hyp:Optional[Hypnogram]= None, config:Optional[Dict[str,Any]]= None ) -> PipelineResult:
    return SleepAnalysis( config ).run_without_staging( rec, detector, channels, hyp )
