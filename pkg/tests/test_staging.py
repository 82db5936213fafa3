import numpy  as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from sleepauto.exceptions         import LengthMismatch, NoEpochs, NonProbabilityRow
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.staging            import BandPowerBackend, PrecomputedBackend, StageProbabilities, aggregate_windows, baseline_bandpower_backend, epoch_count, epoch_tensor, hypnogram_from_probs, precomputed_backend, preprocess_for_staging, stage_probabilities
from sleepauto.synth              import SynthSpec, simulate

from conftest import make_record

def _random_probs( rng, n ):
    probs = rng.random( ( n, 5 ) ) + 0.01
    return probs / probs.sum( axis= 1, keepdims= True )

#region Preprocessing and epoching

def test_preprocessing_output(rng):
    rec = make_record( { 'C3-A2': 30.0 * rng.standard_normal( 256 * 90 ) }, 256.0 )
    out = preprocess_for_staging( rec ).channel( 'C3-A2' )

    assert out.fs == 60.0
    assert len( out.samples ) == 60 * 90
    assert np.all( np.abs( out.samples ) <= 20.0 )
    assert np.median( out.samples ) == pytest.approx( 0.0, abs= 1e-9 )

def test_low_rate_channel_gets_lower_band_edge(rng):
    rec = make_record( { 'EEG': rng.standard_normal( 50 * 60 ) }, 50.0 )
    assert preprocess_for_staging( rec ).channel( 'EEG' ).fs == 60.0

@pytest.mark.parametrize( 'seconds, expected', [ ( 95.0, 3 ), ( 90.0, 3 ), ( 29.99, 0 ), ( 30.0, 1 ) ] )
def test_epoch_count_drops_partial_epoch(seconds, expected):
    assert epoch_count( make_record( { 'EEG': np.ones( int( round( seconds * 100 ) ) ) }, 100.0 ) ) == expected

def test_epoch_tensor_layout():
    rec    = make_record( { 'A': np.arange( 60 * 60, dtype= float ), 'B': -np.arange( 60 * 60, dtype= float ) }, 60.0 )
    tensor = epoch_tensor( rec )

    assert tensor.shape == ( 2, 2, 1800 )
    assert tensor[1, 0, 0] == 1800.0
    assert tensor[1, 1, -1] == -3599.0

#endregion

#region Aggregation

def test_aggregation_is_the_renormalized_geometric_mean(rng):
    window_len, buffer_epochs, n_epochs = 3, 2, 2
    predictions = rng.random( ( n_epochs + 2 * buffer_epochs - window_len + 1, window_len, 5 ) ) + 0.05

    expected = []
    for epoch in range( n_epochs ):
        index = epoch + buffer_epochs
        rows  = [ predictions[start, index - start] for start in range( len( predictions ) ) if 0 <= index - start < window_len ]
        mean  = np.exp( np.mean( np.log( rows ), axis= 0 ) )
        expected.append( mean / mean.sum() )

    assert_allclose( aggregate_windows( predictions, n_epochs, buffer_epochs ), expected, rtol= 1e-12 )

def test_precomputed_probabilities_are_replayed(rng):
    probs = _random_probs( rng, 25 )
    rec   = make_record( { 'EEG': rng.standard_normal( 60 * 30 * 25 ) }, 60.0 )

    staged = stage_probabilities( rec, PrecomputedBackend( probs ), preprocessed= True )
    assert_allclose( staged.probs, probs, rtol= 1e-9 )

def test_precomputed_length_must_match(rng):
    rec = make_record( { 'EEG': rng.standard_normal( 60 * 30 * 25 ) }, 60.0 )

    with pytest.raises( LengthMismatch ):
        stage_probabilities( rec, PrecomputedBackend( _random_probs( rng, 24 ) ), preprocessed= True )

def test_window_length_must_match(rng):
    rec = make_record( { 'EEG': rng.standard_normal( 60 * 30 * 3 ) }, 60.0 )

    with pytest.raises( LengthMismatch ):
        stage_probabilities( rec, BandPowerBackend(), window_epochs= 11 )

def test_record_without_epochs(rng):
    with pytest.raises( NoEpochs ):
        stage_probabilities( make_record( { 'EEG': rng.standard_normal( 60 * 20 ) }, 60.0 ), BandPowerBackend() )

def test_ties_go_to_the_earlier_stage():
    probs = np.array( [ [ 0.2 ] * 5, [ 0.1, 0.1, 0.4, 0.4, 0.0 ] ] )
    assert hypnogram_from_probs( StageProbabilities( probs ) ).stages == [ Stage.WAKE, Stage.N2 ]

@pytest.mark.parametrize( 'probs', [ np.ones( ( 3, 4 ) ) / 4, np.array( [ [ 0.5, 0.5, 0.5, -0.5, 0.0 ] ] ), np.full( ( 2, 5 ), 0.3 ) ] )
def test_invalid_probabilities(probs):
    with pytest.raises( NonProbabilityRow ):
        StageProbabilities( probs )

#endregion

#region Probability files

def test_probability_file_is_renormalized(tmp_path):
    path = tmp_path / 'probs.csv'
    path.write_text( 'wake,n1,n2,n3,rem\n0.1,0.1,0.6,0.1,0.15\n0.2,0.2,0.2,0.2,0.2\n' )

    backend = precomputed_backend( str( path ) )
    assert_allclose( backend.probs.sum( axis= 1 ), 1.0 )
    assert backend.probs[0, 2] == pytest.approx( 0.6 / 1.05 )

@pytest.mark.parametrize( 'content', [
    'wake,n1,n2,n3\n0.25,0.25,0.25,0.25\n',
    'wake,n1,n2,n3,rem\n0.5,0.5,0.5,0.0,0.0\n',
    'wake,n1,n2,n3,rem\n1.2,-0.2,0.0,0.0,0.0\n',
] )
def test_invalid_probability_file(tmp_path, content):
    path = tmp_path / 'probs.csv'
    path.write_text( content )

    with pytest.raises( NonProbabilityRow ):
        precomputed_backend( str( path ) )

#endregion

#region Band-power backend

@pytest.fixture(scope='module')
def staged_night():
    result = simulate( SynthSpec( seed= 5, duration_h= 1.0, fs= 128.0, channels= [ 'C3-A2' ], spindle_rate_per_min= 6.0, noise_uv= 5.0 ) )
    return result, stage_probabilities( result.record, baseline_bandpower_backend() )

def test_band_power_backend_recovers_the_stages(staged_night):
    result, probs = staged_night
    staged = hypnogram_from_probs( probs )

    assert len( staged ) == len( result.hypnogram )
    assert np.mean( staged.to_array() == result.hypnogram.to_array() ) >= 0.85

def test_staging_is_scale_invariant(staged_night):
    result, probs = staged_night
    scaled = stage_probabilities( result.record.scaled( 3.0 ), baseline_bandpower_backend() )

    assert_array_equal( hypnogram_from_probs( scaled ).to_array(), hypnogram_from_probs( probs ).to_array() )
    assert_allclose( scaled.probs, probs.probs, rtol= 1e-6, atol= 1e-9 )

def test_probability_table_columns(staged_night):
    _, probs = staged_night
    assert list( probs.to_frame().columns ) == [ 'wake', 'n1', 'n2', 'n3', 'rem' ]

#endregion
