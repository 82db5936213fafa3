import struct

import numpy  as np
import pytest

from numpy.testing import assert_allclose, assert_array_equal

from sleepauto.exceptions import InputTooShort, ShapeMismatch, TruncatedTensorData, UnknownActivation
from sleepauto.unet       import SegmentationMask, UNetModel, forward, header_parameter_count, header_tensor_shapes, load_weights, masks_to_events, save_weights, unet_header, validate_header

def _sign_header( affine:bool= False, in_channels:int= 1 ):
    """Header of a pooling-free model scoring spindle = x and non-spindle = -x."""
    return {
        'depth': 0, 'pool': [], 'in_channels': in_channels,
        'encoder': [], 'bottleneck': [], 'decoder': [],
        'head': { 'name': 'head', 'in_channels': in_channels, 'out_channels': 2, 'kernel': 1, 'activation': 'identity', 'affine': affine },
    }

def _sign_tensors( in_channels:int= 1 ):
    weight = np.zeros( ( 2, in_channels, 1 ), dtype= np.float32 )
    weight[0, 0, 0], weight[1, 0, 0] = 1.0, -1.0
    return { 'head.weight': weight, 'head.bias': np.zeros( 2, dtype= np.float32 ) }

def _random_tensors( header, rng ):
    return { name : ( 0.3 * rng.standard_normal( shape ) ).astype( np.float32 ) for name, shape in header_tensor_shapes( header ).items() }

#region Architecture

def test_default_header_is_valid():
    header = unet_header()
    validate_header( header )

    model = UNetModel( header )
    assert model.multiple == 4
    assert model.parameter_count() == header_parameter_count( header )

def test_head_must_output_two_masks():
    header = unet_header()
    header['head']['out_channels'] = 3

    with pytest.raises( ShapeMismatch ):
        validate_header( header )

def test_skip_connection_width_is_checked():
    header = unet_header()
    header['decoder'][0][0]['in_channels'] = 40

    with pytest.raises( ShapeMismatch, match= 'skip connection' ):
        validate_header( header )

def test_block_counts_follow_depth():
    header = unet_header()
    header['pool'] = [ 2 ]

    with pytest.raises( ShapeMismatch ):
        validate_header( header )

def test_unknown_activation():
    with pytest.raises( UnknownActivation ):
        UNetModel( unet_header( activation= 'swish' ) )

def test_missing_or_misshaped_tensor(rng):
    header  = unet_header()
    tensors = _random_tensors( header, rng )

    missing = dict( tensors )
    del missing['mid.1.bias']
    with pytest.raises( ShapeMismatch, match= 'missing' ):
        UNetModel.from_arrays( header, missing )

    wrong = dict( tensors )
    wrong['enc0.0.weight'] = np.zeros( ( 16, 1, 5 ), dtype= np.float32 )
    with pytest.raises( ShapeMismatch ):
        UNetModel.from_arrays( header, wrong )

#endregion

#region Inference

def test_sign_model_segments_positive_runs():
    model = UNetModel.from_arrays( _sign_header(), _sign_tensors() )
    x     = np.array( [ -1.0, 2.0, 3.0, -0.5, 0.0, 4.0, 4.0, 4.0, -2.0 ] )

    mask = forward( model, x )
    assert_allclose( mask.spindle, x )
    assert_allclose( mask.non_spindle, -x )

    events = masks_to_events( mask, fs= 10.0, channel= 'C3-A2' )
    assert_allclose( events.starts, [ 0.1, 0.5 ] )
    assert_allclose( events.durations, [ 0.2, 0.3 ] )
    assert all( event.channels == frozenset( [ 'C3-A2' ] ) for event in events )

def test_affine_layer_is_applied():
    tensors = _sign_tensors()
    tensors['head.scale'] = np.array( [ 2.0, 1.0 ], dtype= np.float32 )
    tensors['head.shift'] = np.array( [ 0.5, 0.0 ], dtype= np.float32 )
    model = UNetModel.from_arrays( _sign_header( affine= True ), tensors )

    mask = forward( model, np.array( [ 1.0, -1.0 ] ) )
    assert_allclose( mask.spindle, [ 2.5, -1.5 ] )

def test_output_keeps_the_input_length(rng):
    header = unet_header()
    model  = UNetModel.from_arrays( header, _random_tensors( header, rng ) )

    for n in ( 4, 1001, 1024 ):
        mask = forward( model, rng.standard_normal( n ) )
        assert len( mask ) == n
        assert np.all( np.isfinite( mask.spindle ) )

def test_padding_does_not_change_the_valid_prefix(rng):
    header = unet_header( channels= ( 1, 4 ), kernel= 1, layers_per_block= 1 )
    model  = UNetModel.from_arrays( header, _random_tensors( header, rng ) )
    x      = rng.standard_normal( 64 )

    # with kernel 1 and pool 2 a sample only interacts with its pooling partner
    assert_allclose( forward( model, x[:63] ).spindle[:62], forward( model, x ).spindle[:62], rtol= 1e-6, atol= 1e-7 )

def test_input_shorter_than_pooling_product(rng):
    header = unet_header()
    model  = UNetModel.from_arrays( header, _random_tensors( header, rng ) )

    with pytest.raises( InputTooShort ):
        forward( model, np.zeros( 3 ) )

def test_multichannel_model_is_rejected():
    model = UNetModel.from_arrays( _sign_header( in_channels= 2 ), _sign_tensors( 2 ) )

    with pytest.raises( ShapeMismatch ):
        forward( model, np.zeros( 8 ) )

def test_masks_without_spindle():
    assert len( masks_to_events( SegmentationMask( np.zeros( 10 ), np.ones( 10 ) ), 100.0 ) ) == 0

#endregion

#region Container

def test_loaded_model_matches_the_arrays(tmp_path, rng):
    header  = unet_header()
    tensors = _random_tensors( header, rng )
    path    = tmp_path / 'weights.bin'
    save_weights( str( path ), header, tensors )

    x = rng.standard_normal( 500 )
    assert_array_equal( forward( load_weights( str( path ) ), x ).spindle, forward( UNetModel.from_arrays( header, tensors ), x ).spindle )

def test_truncated_payload(tmp_path, rng):
    header = unet_header()
    path   = tmp_path / 'weights.bin'
    save_weights( str( path ), header, _random_tensors( header, rng ) )
    path.write_bytes( path.read_bytes()[:-4] )

    with pytest.raises( TruncatedTensorData ):
        load_weights( str( path ) )

def test_trailing_bytes(tmp_path, rng):
    header = unet_header()
    path   = tmp_path / 'weights.bin'
    save_weights( str( path ), header, _random_tensors( header, rng ) )
    path.write_bytes( path.read_bytes() + b'\x00' * 4 )

    with pytest.raises( ShapeMismatch ):
        load_weights( str( path ) )

def test_cut_off_header(tmp_path):
    path = tmp_path / 'weights.bin'
    path.write_bytes( struct.pack( '<Q', 1000 ) + b'{}' )

    with pytest.raises( TruncatedTensorData ):
        load_weights( str( path ) )

#endregion
