"""
Command-line interface: ``sleepauto <subcommand> ...``.

Every subcommand reads the configuration (``--config``), writes its artifacts atomically and
reports failures as a JSON object on stderr with exit code 1.
"""
import argparse
import json
import os
import sys

import pandas as pd

from concurrent.futures import ProcessPoolExecutor
from typing             import Any, Dict, List, Optional, Sequence, Tuple

from sleepauto.config          import load_config
from sleepauto.exceptions      import ConfigError, SleepAutoError
from sleepauto.characteristics import CHARACTERISTICS, WILCOXON_MARKER, characterize_events, cohort_table, density_report, events_per_stage, read_features, subject_aggregates, write_features
from sleepauto.metrics         import compare_to_raters, iou_f1, macro_f1, match_events, pairwise_agreement_distribution, stage_confusion, summarize_distribution
from sleepauto.pipeline        import SleepAnalysis
from sleepauto.record_io       import parse_edf, read_events, read_hypnogram, write_events, write_hypnogram
from sleepauto.spindles        import BaselineDetector, Detector, UNetDetector
from sleepauto.staging         import ClassifierBackend, baseline_bandpower_backend, precomputed_backend
from sleepauto.synth           import SynthSpec, simulate
from sleepauto.unet            import load_weights
from sleepauto.utils.files     import atomic_write_text, read_jsonfile, write_jsonfile
from sleepauto.utils.logging   import configure_logging, get_logger
from sleepauto.utils.reports   import print_table

#region Helpers

def make_backend( spec:str, config:Dict[str,Any] ) -> ClassifierBackend:
    """Returns the staging backend named by ``baseline`` or ``probs:<csv>``."""
    if spec == 'baseline':
        return baseline_bandpower_backend( config['staging']['fs'] )

    if spec.startswith( 'probs:' ):
        return precomputed_backend( spec[len( 'probs:' ):] )

    raise ConfigError( f'unknown staging backend "{spec}" (expected baseline or probs:<csv>)' )

def make_detector( spec:str, config:Dict[str,Any] ) -> Detector:
    """Returns the spindle detector named by ``baseline`` or ``unet:<weights>``."""
    if spec == 'baseline':
        return BaselineDetector( **config['baseline_detector'] )

    if spec.startswith( 'unet:' ):
        path = spec[len( 'unet:' ):]
        return UNetDetector( load_weights( path ), path )

    raise ConfigError( f'unknown detector "{spec}" (expected baseline or unet:<weights>)' )

def _channels( value:Optional[str], available:Sequence[str] ) -> List[str]:
    return [ label.strip() for label in value.split( ',' ) if label.strip() ] if value else list( available )

def _emit( data:Any, output:Optional[str] ) -> None:
    if output is not None:
        write_jsonfile( data, output )

    else:
        print( json.dumps( data, indent= 2, sort_keys= True ) )

def _write_frame( frame:pd.DataFrame, path:str ) -> None:
    atomic_write_text( frame.to_csv( index= False, lineterminator= '\n' ), path )

#endregion

#region Subcommands

def cmd_stage( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    rec      = parse_edf( args.edf )
    rec      = rec.select( _channels( args.channels, rec.labels ) )
    analysis = SleepAnalysis( config )

    probs, hyp = analysis.stage( rec, make_backend( args.backend, config ) )
    write_hypnogram( hyp, args.output )

    if args.probabilities is not None:
        _write_frame( probs.to_frame(), args.probabilities )

def cmd_detect( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    rec      = parse_edf( args.edf )
    channels = _channels( args.channels, rec.labels )
    result   = SleepAnalysis( config ).run_with_expert_stages( rec, read_hypnogram( args.hypnogram ), make_detector( args.detector, config ), channels )

    write_events( result.events, args.output )

def _synthesis_seed( edf:str ) -> Optional[int]:
    """Returns the seed of the ``spec.json`` written by ``synth`` next to the recording, if any."""
    path = os.path.join( os.path.dirname( os.path.abspath( edf ) ), 'spec.json' )
    if not os.path.isfile( path ):
        return None

    spec = read_jsonfile( path )
    seed = spec.get( 'seed' ) if isinstance( spec, dict ) else None
    return seed if isinstance( seed, int ) and not isinstance( seed, bool ) else None

def _run_one( job:Tuple[str,str,Dict[str,Any]] ) -> str:
    edf, directory, options = job
    config   = options['config']
    rec      = parse_edf( edf )
    channels = _channels( options['channels'], rec.labels )
    detector = make_detector( options['detector'], config )
    analysis = SleepAnalysis( config )

    if options['hypnogram'] is not None:
        result = analysis.run_with_expert_stages( rec, read_hypnogram( options['hypnogram'] ), detector, channels )

    elif options['no_staging']:
        result = analysis.run_without_staging( rec, detector, channels )

    else:
        result = analysis.run_full( rec, make_backend( options['backend'], config ), detector, channels )

    result.manifest['inputs'] = { 'edf': os.path.basename( edf ), 'hypnogram': options['hypnogram'] and os.path.basename( options['hypnogram'] ) }
    result.manifest['seed']   = _synthesis_seed( edf )
    result.export( directory )
    return directory

def cmd_run( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    if args.hypnogram is not None and len( args.edf ) > 1:
        raise ConfigError( '--hypnogram applies to a single recording' )

    options = { 'config': config, 'channels': args.channels, 'backend': args.backend, 'detector': args.detector, 'hypnogram': args.hypnogram, 'no_staging': args.no_staging }

    if len( args.edf ) == 1:
        jobs = [ ( args.edf[0], args.output, options ) ]

    else:
        jobs = [ ( edf, os.path.join( args.output, os.path.splitext( os.path.basename( edf ) )[0] ), options ) for edf in args.edf ]

    if args.jobs > 1 and len( jobs ) > 1:
        with ProcessPoolExecutor( max_workers= args.jobs ) as executor:
            done = list( executor.map( _run_one, jobs ) )

    else:
        done = [ _run_one( job ) for job in jobs ]

    get_logger().info( f'{len( done )} recording(s) analyzed' )

def cmd_agree_stages( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    a, b   = read_hypnogram( args.hyp_a ), read_hypnogram( args.hyp_b )
    policy = config['metrics']['absent_stage_policy']

    _emit( {
        'macro_f1':      macro_f1( a, b, policy ),
        'absent_policy': policy,
        'per_stage':     stage_confusion( a, b ).to_dict(),
    }, args.output )

def cmd_agree_events( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    a, b      = read_events( args.events_a ), read_events( args.events_b )
    threshold = config['metrics']['iou_threshold']
    matching  = match_events( a, b, threshold )

    _emit( {
        'iou_f1':    iou_f1( [ ( a, b ) ], threshold, config['metrics']['strict'] ),
        'threshold': threshold,
        'tp':        matching.tp,
        'fp':        matching.fp,
        'fn':        matching.fn,
    }, args.output )

def _load_raters( manifest_path:str ) -> Tuple[str,Dict[str,Dict[str,Any]]]:
    """
    Reads a rater manifest ``{"metric": ..., "raters": {rater: {item: file}}}``; file paths are
    relative to the manifest.
    """
    manifest = read_jsonfile( manifest_path )
    if not isinstance( manifest, dict ) or 'raters' not in manifest:
        raise ConfigError( f'rater manifest "{manifest_path}" must be an object with a "raters" entry' )

    metric = manifest.get( 'metric', 'macro_f1' )
    reader = read_hypnogram if metric == 'macro_f1' else read_events
    base   = os.path.dirname( os.path.abspath( manifest_path ) )

    raters = {
        str( rater ) : { str( item ) : reader( os.path.join( base, path ) ) for item, path in items.items() }
        for rater, items in manifest['raters'].items()
    }
    return metric, raters

def cmd_rater_dist( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    metric, raters = _load_raters( args.manifest )
    options        = { 'absent_policy': config['metrics']['absent_stage_policy'] } if metric == 'macro_f1' else { 'threshold': config['metrics']['iou_threshold'], 'strict': config['metrics']['strict'] }

    scores  = pairwise_agreement_distribution( raters, metric, config['metrics']['min_joint_items'], **options )
    frame   = pd.DataFrame( [ { 'rater_a': s.rater_a, 'rater_b': s.rater_b, 'item': s.item, 'n_items': s.n_items, 'score': s.score } for s in scores ], columns= [ 'rater_a', 'rater_b', 'item', 'n_items', 'score' ] )
    summary = { 'metric': metric, 'n_pairs': len( { ( s.rater_a, s.rater_b ) for s in scores } ), 'raters': summarize_distribution( scores ).to_dict() }

    rows = { 'raters': summary['raters'] }
    if args.model_scores is not None:
        model_scores = pd.read_csv( args.model_scores )['score'].astype( float ).tolist()
        comparison   = compare_to_raters( model_scores, [ s.score for s in scores ] )

        summary['model'] = comparison.model.to_dict()
        summary['test']  = { 'test': comparison.test.test, 'statistic': comparison.test.statistic, 'df': comparison.test.df, 'p_value': comparison.test.p_value, 'sidedness': comparison.test.sidedness.value }
        rows['model']    = summary['model']

    _write_frame( frame, args.output )
    write_jsonfile( summary, f'{args.output}.summary.json' )

    if args.print:
        print_table( rows, header= metric, columns= [ 'n', 'mean', 'sd', 'q1', 'median', 'q3' ] )

def cmd_characterize( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    rec      = parse_edf( args.edf )
    events   = read_events( args.events )
    hyp      = read_hypnogram( args.hypnogram )
    channels = _channels( args.channels, rec.labels )
    features = characterize_events( rec, events, channels, **config['characteristics'] )

    write_features( features, args.output )
    write_jsonfile( {
        'density':      density_report( features, events, hyp, channels, config['characteristics']['fast_threshold_hz'] ),
        'plausibility': events_per_stage( events, hyp ),
    }, f'{args.output}.summary.json' )

def cmd_cohort( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    mapping  = pd.read_csv( args.cohorts, dtype= str )
    cohorts  = dict( zip( mapping['subject'], mapping['cohort'] ) )
    channels = _channels( args.channels, [] )

    subjects = {}
    for subject in cohorts:
        directory = os.path.join( args.features_dir, subject )
        features  = read_features( os.path.join( directory, 'features.csv' ) )
        hyp       = read_hypnogram( os.path.join( directory, 'hypnogram.txt' ) )
        subjects[subject] = subject_aggregates( features, hyp, channels or sorted( { f.channel for f in features } ), args.speed )

    wilcoxon = [ tuple( cell.split( ':', 1 ) ) for cell in args.wilcoxon ]
    for characteristic, _ in wilcoxon:
        if characteristic not in CHARACTERISTICS:
            raise ConfigError( f'unknown characteristic "{characteristic}" (expected one of {", ".join( CHARACTERISTICS )})' )

    table = cohort_table( subjects, cohorts, args.speed, wilcoxon, list( dict.fromkeys( mapping['cohort'] ) ) )
    table.to_csv( args.output )

    if args.print:
        rows = {
            f'{row.characteristic[:4]} {row.channel}' : { **{ cohort : str( row.cells[cohort] ) for cohort in table.cohorts }, 'p': f'{row.p_value:.3f}' + ( WILCOXON_MARKER if row.test == 'wilcoxon' else '' ) }
            for row in table.rows
        }
        print_table( rows, header= args.speed, columns= table.cohorts + [ 'p' ], column_width= 13 )

def cmd_synth( args:argparse.Namespace, config:Dict[str,Any] ) -> None:
    result = simulate( SynthSpec.from_json( args.spec ) )
    result.export( args.output )

#endregion

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser( prog= 'sleepauto', description= 'Automated sleep staging, N2 spindle detection and spindle analysis.' )
    parser.add_argument( '--config', help= 'JSON configuration file' )
    parser.add_argument( '--log-level', default= 'INFO', help= 'console log level (default: INFO)' )
    parser.add_argument( '--log-file', help= 'additional log file' )

    commands = parser.add_subparsers( dest= 'command', required= True )

    stage = commands.add_parser( 'stage', help= 'stage a recording' )
    stage.add_argument( 'edf' )
    stage.add_argument( '--backend', default= 'baseline', help= 'baseline or probs:<csv>' )
    stage.add_argument( '--channels', help= 'comma-separated channel labels (default: all)' )
    stage.add_argument( '--probabilities', help= 'also write the stage probabilities to this CSV' )
    stage.add_argument( '-o', '--output', required= True, help= 'hypnogram file' )
    stage.set_defaults( func= cmd_stage )

    detect = commands.add_parser( 'detect', help= 'detect spindles in the N2 sleep of a given hypnogram' )
    detect.add_argument( 'edf' )
    detect.add_argument( '--hypnogram', required= True )
    detect.add_argument( '--detector', default= 'baseline', help= 'baseline or unet:<weights>' )
    detect.add_argument( '--channels', help= 'comma-separated channel labels (default: all)' )
    detect.add_argument( '-o', '--output', required= True, help= 'events CSV' )
    detect.set_defaults( func= cmd_detect )

    run = commands.add_parser( 'run', help= 'full analysis with all artifacts and a manifest' )
    run.add_argument( 'edf', nargs= '+' )
    run.add_argument( '--backend', default= 'baseline', help= 'baseline or probs:<csv>' )
    run.add_argument( '--detector', default= 'baseline', help= 'baseline or unet:<weights>' )
    run.add_argument( '--hypnogram', help= 'expert hypnogram (skips staging)' )
    run.add_argument( '--no-staging', action= 'store_true', help= 'detect over the whole recording' )
    run.add_argument( '--channels', help= 'comma-separated channel labels (default: all)' )
    run.add_argument( '--amplitude-convention', choices= [ 'envelope', 'literal' ] )
    run.add_argument( '--jobs', type= int, default= 1, help= 'recordings analyzed in parallel' )
    run.add_argument( '-o', '--output', required= True, help= 'output directory (one subdirectory per recording when several are given)' )
    run.set_defaults( func= cmd_run )

    agree_stages = commands.add_parser( 'agree-stages', help= 'Macro F1 of two hypnograms' )
    agree_stages.add_argument( 'hyp_a' )
    agree_stages.add_argument( 'hyp_b' )
    agree_stages.add_argument( '--absent-policy', choices= [ 'exclude', 'zero', 'one' ] )
    agree_stages.add_argument( '-o', '--output', help= 'JSON file (default: stdout)' )
    agree_stages.set_defaults( func= cmd_agree_stages )

    agree_events = commands.add_parser( 'agree-events', help= 'IoU-F1 of two event files' )
    agree_events.add_argument( 'events_a' )
    agree_events.add_argument( 'events_b' )
    agree_events.add_argument( '--threshold', type= float )
    agree_events.add_argument( '--strict', action= 'store_true', default= None, help= 'fail when both files are empty' )
    agree_events.add_argument( '-o', '--output', help= 'JSON file (default: stdout)' )
    agree_events.set_defaults( func= cmd_agree_events )

    rater_dist = commands.add_parser( 'rater-dist', help= 'inter-rater agreement distribution' )
    rater_dist.add_argument( 'manifest', help= 'JSON {"metric": macro_f1|iou_f1, "raters": {rater: {item: file}}}' )
    rater_dist.add_argument( '--min-joint', type= int )
    rater_dist.add_argument( '--threshold', type= float )
    rater_dist.add_argument( '--absent-policy', choices= [ 'exclude', 'zero', 'one' ] )
    rater_dist.add_argument( '--model-scores', help= 'CSV with a score column of model-vs-expert scores' )
    rater_dist.add_argument( '--print', action= 'store_true', help= 'print the summary table' )
    rater_dist.add_argument( '-o', '--output', required= True, help= 'distribution CSV (summary goes to <output>.summary.json)' )
    rater_dist.set_defaults( func= cmd_rater_dist )

    characterize = commands.add_parser( 'characterize', help= 'per-spindle characteristics' )
    characterize.add_argument( 'edf' )
    characterize.add_argument( 'events' )
    characterize.add_argument( 'hypnogram' )
    characterize.add_argument( '--channels', help= 'comma-separated channel labels (default: all)' )
    characterize.add_argument( '--amplitude-convention', choices= [ 'envelope', 'literal' ] )
    characterize.add_argument( '-o', '--output', required= True, help= 'features CSV (reports go to <output>.summary.json)' )
    characterize.set_defaults( func= cmd_characterize )

    cohort = commands.add_parser( 'cohort', help= 'cohort comparison table' )
    cohort.add_argument( 'features_dir', help= 'directory with <subject>/features.csv and <subject>/hypnogram.txt' )
    cohort.add_argument( 'cohorts', help= 'CSV with subject and cohort columns' )
    cohort.add_argument( '--speed', choices= [ 'fast', 'slow' ], default= 'fast' )
    cohort.add_argument( '--channels', help= 'comma-separated channel labels (default: all found)' )
    cohort.add_argument( '--wilcoxon', action= 'append', default= [], metavar= 'CHARACTERISTIC:CHANNEL', help= 'use the Wilcoxon rank-sum test for this cell' )
    cohort.add_argument( '--print', action= 'store_true', help= 'print the table' )
    cohort.add_argument( '-o', '--output', required= True, help= 'table CSV' )
    cohort.set_defaults( func= cmd_cohort )

    synth = commands.add_parser( 'synth', help= 'synthetic recording with ground truth' )
    synth.add_argument( 'spec', help= 'JSON synthesis parameters' )
    synth.add_argument( '-o', '--output', required= True, help= 'output directory' )
    synth.set_defaults( func= cmd_synth )

    return parser

# flag -> (section, key) of the configuration it overrides
FLAG_OVERRIDES = {
    'threshold':            ( 'metrics', 'iou_threshold' ),
    'min_joint':            ( 'metrics', 'min_joint_items' ),
    'strict':               ( 'metrics', 'strict' ),
    'absent_policy':        ( 'metrics', 'absent_stage_policy' ),
    'amplitude_convention': ( 'characteristics', 'amplitude_convention' ),
}

def main( argv:Optional[Sequence[str]]= None ) -> int:
    args = build_parser().parse_args( argv )
    configure_logging( args.log_level, args.log_file )

    try:
        overrides = {}
        for flag, ( section, key ) in FLAG_OVERRIDES.items():
            value = getattr( args, flag, None )
            if value is not None:
                overrides.setdefault( section, {} )[key] = value

        args.func( args, load_config( args.config, overrides ) )

    except ( SleepAutoError, OSError, KeyError, ValueError ) as exc:
        sys.stderr.write( json.dumps( { 'error': type( exc ).__name__, 'message': str( exc ) } ) + '\n' )
        return 1

    return 0

if __name__ == '__main__':
    sys.exit( main() )
