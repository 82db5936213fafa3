import json
import time

import numpy  as np
import pytest

from sleepauto.config             import load_config
from sleepauto.exceptions         import ChannelNotFound, LengthMismatch
from sleepauto.elements.hypnogram import EPOCH_LEN_S, Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
from sleepauto.metrics            import iou_f1, match_events
from sleepauto.pipeline           import SleepAnalysis, package_versions, run_full, run_with_expert_stages, run_without_staging
from sleepauto.spindles           import BaselineDetector
from sleepauto.staging            import BandPowerBackend
from sleepauto.synth              import SynthSpec, simulate

from conftest import CHANNELS, acceptance_spec

def _detector( config= None ) -> BaselineDetector:
    return BaselineDetector( **( config or load_config() )['baseline_detector'] )

def _scaled( rec:SignalRecord, factor:float ) -> SignalRecord:
    return SignalRecord( channel.with_samples( factor * channel.samples, channel.fs ) for channel in rec.channels )

def _sample_bounds( events, fs:float= 100.0 ):
    return [ ( round( event.start_s * fs ), round( event.end_s * fs ) ) for event in events ]

def _inside_n2( events, hyp:Hypnogram ) -> bool:
    return all( hyp.stage_at( event.start_s ) is Stage.N2 and hyp.stage_at( event.end_s - 1e-6 ) is Stage.N2 for event in events )

@pytest.fixture(scope='module')
def expert_result(synthetic_night):
    return run_with_expert_stages( synthetic_night.record, synthetic_night.hypnogram, _detector(), CHANNELS )

@pytest.fixture(scope='module')
def staged_result(synthetic_night):
    return run_full( synthetic_night.record, BandPowerBackend(), _detector(), CHANNELS )

#region Recovery

def test_planted_spindles_are_recovered_with_expert_stages(synthetic_night, expert_result):
    assert len( synthetic_night.planted ) > 50
    assert iou_f1( [ ( expert_result.events, synthetic_night.events ) ] ) >= 0.9

def test_automatic_staging_costs_little_recovery(synthetic_night, expert_result, staged_result):
    expert = iou_f1( [ ( expert_result.events, synthetic_night.events ) ] )
    staged = iou_f1( [ ( staged_result.events, synthetic_night.events ) ] )

    assert expert - staged <= 0.15

def test_events_stay_inside_n2(expert_result, staged_result):
    assert _inside_n2( expert_result.events, expert_result.hypnogram )
    assert _inside_n2( staged_result.events, staged_result.hypnogram )

def test_union_events_carry_both_channels(expert_result):
    assert sum( 1 for event in expert_result.events if event.channels == frozenset( CHANNELS ) ) >= 0.9 * len( expert_result.events )
    assert { feature.channel for feature in expert_result.features } == set( CHANNELS )

def test_planted_frequencies_are_measured(synthetic_night, expert_result):
    matched = match_events( expert_result.events, synthetic_night.events )
    errors  = []
    for i, j, _ in matched.pairs:
        start    = expert_result.events[i].start_s
        measured = [ feature.frequency_hz for feature in expert_result.features if feature.start_s == start ]
        errors.extend( abs( value - synthetic_night.planted[j].frequency_hz ) for value in measured )

    assert np.median( errors ) < 0.5

#endregion

#region Variants

def test_expert_stages_equal_to_the_model_reproduce_the_full_run(synthetic_night, staged_result):
    again = run_with_expert_stages( synthetic_night.record, staged_result.hypnogram, _detector(), CHANNELS )

    assert again.events == staged_result.events
    assert again.features == staged_result.features
    assert again.variant == 'expert' and staged_result.variant == 'staged'

def test_scaled_record_gives_identical_boundaries(synthetic_night, staged_result):
    scaled = run_full( _scaled( synthetic_night.record, 3.0 ), BandPowerBackend(), _detector(), CHANNELS )

    assert scaled.hypnogram == staged_result.hypnogram
    assert _sample_bounds( scaled.events ) == _sample_bounds( staged_result.events )
    assert [ f.amplitude_uv for f in scaled.features ] == pytest.approx( [ 3.0 * f.amplitude_uv for f in staged_result.features ], rel= 1e-6 )
    assert [ f.frequency_hz for f in scaled.features ] == pytest.approx( [ f.frequency_hz for f in staged_result.features ], abs= 1e-9 )

def test_no_n2_gives_no_events(synthetic_night):
    wake   = Hypnogram( [ Stage.WAKE ] * len( synthetic_night.hypnogram ) )
    result = run_with_expert_stages( synthetic_night.record, wake, _detector(), CHANNELS )

    assert len( result.events ) == 0 and result.features == []
    assert result.density['no_n2_sleep'] and result.density['overall'] is None
    assert all( count == 0 for count in result.plausibility.values() )

def test_wider_n2_mask_keeps_the_events(synthetic_night, expert_result):
    stages = [ Stage.N2 if stage is Stage.N1 else stage for stage in synthetic_night.hypnogram ]
    wider  = run_with_expert_stages( synthetic_night.record, Hypnogram( stages ), _detector(), CHANNELS )

    # block normalization and block edges may move a few boundaries
    kept = match_events( expert_result.events, wider.events )
    assert kept.tp >= 0.9 * len( expert_result.events )

def test_hypnogram_must_match_the_record(synthetic_night):
    with pytest.raises( LengthMismatch ):
        run_with_expert_stages( synthetic_night.record, Hypnogram( [ Stage.N2 ] * 3 ), _detector(), CHANNELS )

def test_missing_channel(synthetic_night):
    with pytest.raises( ChannelNotFound ):
        run_with_expert_stages( synthetic_night.record, synthetic_night.hypnogram, _detector(), [ 'O1-A2' ] )

def test_unstaged_run_covers_every_epoch(n2_night):
    result = run_without_staging( n2_night.record, _detector(), [ 'C3-A2' ], n2_night.hypnogram )

    assert result.variant == 'unstaged' and result.probabilities is None
    assert iou_f1( [ ( result.events, n2_night.events ) ] ) >= 0.85
    assert result.density['overall'] == pytest.approx( len( result.events ) / n2_night.hypnogram.minutes( Stage.N2 ) )

    bare = run_without_staging( n2_night.record, _detector(), [ 'C3-A2' ] )
    assert bare.density is None and bare.events == result.events

def test_flat_channel_blocks_are_skipped(n2_night):
    channel = n2_night.record.channel( 'C3-A2' )
    rec     = SignalRecord( [ channel, Channel( 'Cz', np.zeros_like( channel.samples ), channel.fs ) ] )
    result  = run_with_expert_stages( rec, n2_night.hypnogram, _detector(), [ 'C3-A2', 'Cz' ] )

    assert len( result.raw['Cz'] ) == 0
    assert len( result.events ) > 0 and all( event.channels == frozenset( [ 'C3-A2' ] ) for event in result.events )

def test_configuration_reaches_every_step(n2_night):
    config = load_config( overrides= { 'postprocess': { 'min_duration_s': 1.2 } } )
    result = SleepAnalysis( config ).run_with_expert_stages( n2_night.record, n2_night.hypnogram, _detector( config ), [ 'C3-A2' ] )

    assert np.all( result.events.durations >= 1.2 - 1e-9 )
    assert result.manifest['config']['postprocess']['min_duration_s'] == 1.2

#endregion

#region Artifacts

def test_export(tmp_path, staged_result):
    paths = staged_result.export( str( tmp_path / 'run' ) )

    expected = { 'hypnogram.txt', 'probabilities.csv', 'events.csv', 'features.csv', 'density.json', 'plausibility.json', 'manifest.json' }
    expected |= { f'events_{kind}_{channel}.csv' for kind in ( 'raw', 'postprocessed' ) for channel in CHANNELS }
    assert set( paths ) == expected

    manifest = json.loads( ( tmp_path / 'run' / 'manifest.json' ).read_text() )
    assert manifest['variant'] == 'staged' and manifest['staging_backend'] == 'baseline'
    assert manifest['detector']['name'] == 'baseline'
    assert manifest['artifacts'] == sorted( expected )
    assert len( manifest['config_hash'] ) == 64

def test_package_versions():
    versions = package_versions()
    assert versions['sleepauto'] is not None
    assert set( versions ) >= { 'numpy', 'scipy', 'simpy' }

@pytest.mark.slow
@pytest.mark.parametrize( 'seed', range( 20 ) )
def test_detection_chain_is_scale_invariant(seed):
    spec   = acceptance_spec( seed= 100 + seed, duration_h= 0.05, channels= [ 'C3-A2' ], initial_stage= 'W' )
    night  = simulate( spec )
    if night.hypnogram.count_n2() == 0:
        night = simulate( spec, Hypnogram( [ Stage.N2 ] * spec.n_epochs ) )

    base = run_with_expert_stages( night.record, night.hypnogram, _detector(), [ 'C3-A2' ] )
    for factor in ( 0.5, 3.0, 10.0 ):
        scaled = run_with_expert_stages( _scaled( night.record, factor ), night.hypnogram, _detector(), [ 'C3-A2' ] )
        assert _sample_bounds( scaled.events ) == _sample_bounds( base.events )

@pytest.mark.slow
def test_full_night_throughput():
    spec  = SynthSpec( seed= 1, duration_h= 8.0, fs= 256.0 )
    night = simulate( spec )

    started = time.perf_counter()
    result  = run_full( night.record, BandPowerBackend(), _detector(), spec.channels )
    elapsed = time.perf_counter() - started

    assert len( result.hypnogram ) == 8 * 3600 / EPOCH_LEN_S
    assert elapsed < 60.0

#endregion
