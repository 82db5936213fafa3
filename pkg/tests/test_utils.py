import json
import os

import pytest

from sleepauto.config             import DEFAULT_CONFIG, config_hash, load_config
from sleepauto.exceptions         import ConfigError
from sleepauto.elements.events    import SpindleEvent
from sleepauto.elements.hypnogram import Stage
from sleepauto.utils.files        import atomic_write_text, create_directory, read_jsonfile, write_jsonfile
from sleepauto.utils.logging      import DefaultLoggingCallback, configure_logging
from sleepauto.utils.reports      import format_table

#region Configuration

def test_defaults():
    config = load_config()

    assert config == DEFAULT_CONFIG and config is not DEFAULT_CONFIG
    assert config['postprocess'] == { 'merge_max_duration_s': 0.3, 'merge_max_gap_s': 0.1, 'min_duration_s': 0.3, 'max_duration_s': 2.5 }
    assert config['staging']['window_epochs'] == 21 and config['staging']['buffer_epochs'] == 20
    assert config['metrics']['iou_threshold'] == 0.2 and config['characteristics']['fast_threshold_hz'] == 13.0

def test_file_then_overrides(tmp_path):
    ( tmp_path / 'config.json' ).write_text( json.dumps( { 'version': 1, 'metrics': { 'iou_threshold': 0.3, 'strict': True } } ) )
    config = load_config( str( tmp_path / 'config.json' ), { 'metrics': { 'iou_threshold': 0.5 } } )

    assert config['metrics']['iou_threshold'] == 0.5
    assert config['metrics']['strict'] is True
    assert config['metrics']['min_joint_items'] == 5

@pytest.mark.parametrize( 'update', [
    { 'metrics': { 'iou_treshold': 0.3 } },
    { 'detector': {} },
    { 'metrics': 0.3 },
    { 'version': 2 },
] )
def test_invalid_configuration(update):
    with pytest.raises( ConfigError ):
        load_config( overrides= update )

def test_unreadable_configuration(tmp_path):
    ( tmp_path / 'config.json' ).write_text( '{ not json' )
    with pytest.raises( OSError ):
        load_config( str( tmp_path / 'config.json' ) )

def test_config_hash_follows_the_values():
    assert config_hash( load_config() ) == config_hash( load_config() )
    assert config_hash( load_config() ) != config_hash( load_config( overrides= { 'postprocess': { 'max_duration_s': 3.0 } } ) )

#endregion

#region Files

def test_json_files(tmp_path):
    path = str( tmp_path / 'sub' / 'data.json' )
    create_directory( os.path.dirname( path ) )
    write_jsonfile( { 'b': 1, 'a': [ 1.5, None ] }, path )

    assert read_jsonfile( path ) == { 'a': [ 1.5, None ], 'b': 1 }
    assert ( tmp_path / 'sub' / 'data.json' ).read_text().startswith( '{\n  "a"' )

def test_atomic_write_leaves_no_temporary_file(tmp_path):
    atomic_write_text( 'first', str( tmp_path / 'out.txt' ) )
    atomic_write_text( 'second', str( tmp_path / 'out.txt' ) )

    assert ( tmp_path / 'out.txt' ).read_text() == 'second'
    assert os.listdir( tmp_path ) == [ 'out.txt' ]

def test_write_into_missing_directory(tmp_path):
    with pytest.raises( OSError ):
        atomic_write_text( 'x', str( tmp_path / 'missing' / 'out.txt' ) )

#endregion

#region Reports

def test_table_layout():
    text  = format_table( { 'raters': { 'n': 18, 'mean': 0.6712, 'note': 'ok' } }, header= 'macro_f1', columns= [ 'n', 'mean', 'note' ], column_width= 6 )
    lines = text.split( '\n' )

    assert len( lines ) == 5
    assert lines[1] == 'macro_ │      n │   mean │   note'
    assert lines[3] == 'raters │     18 │  0.671 │     ok'
    assert len( { len( line ) for line in lines } ) == 1

def test_table_footer_and_missing_cells():
    text = format_table( { 'a': { 'x': 1 } }, columns= [ 'x', 'y' ], footer= { 'sum': { 'y': True } }, column_width= 5 )

    assert text.count( '─┼─' ) == 2 * 2
    assert 'sum   │       │  True' in text

#endregion

#region Logging

def test_default_callback_messages(capsys):
    configure_logging( 'DEBUG' )
    log = DefaultLoggingCallback( clock= lambda : 3725.0 )

    log.on_spindle_planted( SpindleEvent( 3725.0, 0.8, frozenset( [ 'C3-A2' ] ) ) )
    log.on_epoch( 124, Stage.N2 )
    log.on_block_skipped( 'C3-A2', 60.0, 'flat signal' )

    err = capsys.readouterr().err
    assert '01:02:05' in err
    assert 'flat signal' in err and 'WARNING' in err

    configure_logging()

#endregion
