import json

import numpy  as np
import pytest

from numpy.testing import assert_array_equal

from sleepauto.exceptions         import InvalidSpec, InvalidTransitionMatrix
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.environment        import SleepEnvironment
from sleepauto.characteristics    import spindle_frequency
from sleepauto.record_io          import parse_edf, read_events, read_hypnogram
from sleepauto.synth              import SleepSimulation, SynthSpec, gen_hypnogram, gen_record, simulate
from sleepauto.utils.logging      import LoggingCallback

from conftest import acceptance_spec

IDENTITY = np.eye( 5 ).tolist()

#region Synthesis parameters

def test_defaults_are_valid():
    spec = SynthSpec()
    spec.validate()

    assert spec.n_epochs == 120
    assert SynthSpec.from_dict( spec.to_dict() ) == spec

def test_unknown_parameter():
    with pytest.raises( InvalidSpec, match= 'colour' ):
        SynthSpec.from_dict( { 'seed': 1, 'colour': 'pink' } )

@pytest.mark.parametrize( 'values', [
    { 'duration_range_s': [ 0.2, 1.0 ] },
    { 'duration_range_s': [ 1.0, 3.0 ] },
    { 'frequency_range_hz': [ 15.0, 11.0 ] },
    { 'amplitude_range_uv': [ 0.0, 5.0 ] },
    { 'fs': 20.0 },
    { 'channels': [ 'C3-A2', 'C3-A2' ] },
    { 'initial_stage': 'S2' },
    { 'duration_h': 0.0 },
    { 'spindle_rate_per_min': -1.0 },
] )
def test_invalid_parameters(values):
    with pytest.raises( InvalidSpec ):
        SynthSpec.from_dict( values )

def test_rows_must_sum_to_one():
    matrix = [ list( row ) for row in IDENTITY ]
    matrix[2][3] = 0.5

    with pytest.raises( InvalidTransitionMatrix ):
        gen_hypnogram( SynthSpec( transition_matrix= matrix ) )

def test_spec_file(tmp_path):
    path = tmp_path / 'spec.json'
    path.write_text( json.dumps( { 'seed': 9, 'duration_h': 0.25, 'channels': [ 'Cz' ] } ) )

    spec = SynthSpec.from_json( str( path ) )
    assert ( spec.seed, spec.n_epochs, spec.channels ) == ( 9, 30, [ 'Cz' ] )

#endregion

#region Hypnogram

def test_absorbing_chain():
    hyp = gen_hypnogram( SynthSpec( transition_matrix= IDENTITY, initial_stage= 'N2' ) )
    assert hyp.stages == [ Stage.N2 ] * 120

def test_hypnogram_is_seeded():
    assert gen_hypnogram( SynthSpec( seed= 4 ) ) == gen_hypnogram( SynthSpec( seed= 4 ) )
    assert gen_hypnogram( SynthSpec( seed= 4 ) ) != gen_hypnogram( SynthSpec( seed= 5 ) )

def test_hypnogram_starts_with_the_initial_stage():
    assert gen_hypnogram( SynthSpec( seed= 2, initial_stage= 'REM', duration_h= 2.0 ) ).stages[0] is Stage.REM

#endregion

#region Ground truth

class RecordingCallback(LoggingCallback):
    def __init__(self) -> None:
        super().__init__()
        self.calls = []

    def on_epoch( self, index, stage ):
        self.calls.append( ( 'epoch', index ) )

    def on_spindle_planted( self, event ):
        self.calls.append( ( 'planted', event.start_s ) )

    def on_spindle_rejected( self, start_s, reason ):
        self.calls.append( ( 'rejected', reason ) )

def test_stage_transitions_precede_arrivals():
    env   = SleepEnvironment()
    order = []

    def arrival():
        yield env.event_timeout( 30.0 )
        order.append( 'arrival' )

    def stages():
        yield env.stage_timeout( 30.0 )
        order.append( 'stage' )

    env.process( arrival() )
    env.process( stages() )
    env.run()

    assert order == [ 'stage', 'arrival' ]

def test_spindles_are_planted_inside_n2_runs():
    spec = acceptance_spec( seed= 21, duration_h= 1.0, initial_stage= 'W', spindle_rate_per_min= 8.0 )
    hyp  = gen_hypnogram( spec )

    simulation     = SleepSimulation( spec, hyp )
    simulation.log = RecordingCallback()
    planted        = simulation.run()

    assert len( planted ) > 0
    for spindle in planted:
        event = spindle.event
        assert hyp.stage_at( event.start_s ) is Stage.N2
        assert hyp.stage_at( event.end_s - 1e-6 ) is Stage.N2
        assert 0.3 <= event.duration_s <= 2.5
        assert event.start_s * spec.fs == pytest.approx( round( event.start_s * spec.fs ) )
        assert 11.0 <= spindle.frequency_hz <= 15.0 and 15.0 <= spindle.amplitude_uv <= 25.0

    gaps = np.array( [ b.event.start_s - a.event.end_s for a, b in zip( planted, planted[1:] ) ] )
    assert np.all( gaps >= 0.5 - 1e-9 )

    kinds = [ call[0] for call in simulation.log.calls ]
    assert kinds.count( 'epoch' ) == 120 and kinds.count( 'planted' ) == len( planted )
    assert 'rejected' in kinds

def test_no_spindles_at_zero_rate():
    spec = acceptance_spec( duration_h= 0.1, spindle_rate_per_min= 0.0 )
    rec, truth = gen_record( spec, Hypnogram( [ Stage.N2 ] * spec.n_epochs ) )

    assert len( truth ) == 0
    assert rec.channel( 'C3-A2' ).samples.std() > 0

def test_spindle_count_follows_the_rate():
    spec = SynthSpec( seed= 6, duration_h= 1 / 6, spindle_rate_per_min= 4.0, channels= [ 'C3-A2' ] )
    _, truth = gen_record( spec, Hypnogram( [ Stage.N2 ] * spec.n_epochs ) )

    # the gap and run-end rejections thin the Poisson stream slightly
    assert 22 <= len( truth ) <= 55

def test_generation_is_reproducible():
    spec   = acceptance_spec( seed= 8, duration_h= 0.25, initial_stage= 'W' )
    first  = simulate( spec )
    second = simulate( spec )

    assert first.hypnogram == second.hypnogram
    assert first.planted == second.planted
    for a, b in zip( first.record.channels, second.record.channels ):
        assert_array_equal( a.samples, b.samples )

def test_channels_differ_in_background():
    result = simulate( acceptance_spec( seed= 8, duration_h= 0.1 ) )
    assert not np.array_equal( result.record.channels[0].samples, result.record.channels[1].samples )

def test_planted_frequencies_are_measurable():
    spec   = acceptance_spec( seed= 13, duration_h= 0.1, clean= True, frequency_range_hz= [ 12.0, 14.0 ], duration_range_s= [ 1.0, 1.5 ] )
    result = simulate( spec, Hypnogram( [ Stage.N2 ] * spec.n_epochs ) )

    assert len( result.planted ) > 10
    for spindle in result.planted:
        assert spindle_frequency( result.record, spindle.event, 'C3-A2' ) == pytest.approx( spindle.frequency_hz, abs= 0.05 )

def test_export(tmp_path):
    result = simulate( acceptance_spec( seed= 1, duration_h= 0.05 ) )
    paths  = result.export( str( tmp_path / 'night' ) )

    assert read_hypnogram( paths['hypnogram.txt'] ) == result.hypnogram
    assert len( read_events( paths['events.csv'] ) ) == len( result.planted )
    assert SynthSpec.from_json( paths['spec.json'] ) == result.spec

    rec = parse_edf( paths['record.edf'] )
    assert rec.labels == result.record.labels
    assert len( rec.channel( 'C3-A2' ).samples ) == len( result.record.channel( 'C3-A2' ).samples )

#endregion
