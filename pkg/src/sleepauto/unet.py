"""
Inference of a compact 1D U-Net segmenting a preprocessed EEG block into per-sample spindle and
non-spindle scores.

Weight container layout: an 8-byte little-endian unsigned header length, a UTF-8 JSON header and
the little-endian float32 tensors in the order of the header's ``tensors`` list. The header
describes the architecture::

    {
        "depth": 2, "pool": [2, 2], "in_channels": 1,
        "encoder":    [ [layer, ...], [layer, ...] ],
        "bottleneck": [ layer, ... ],
        "decoder":    [ [layer, ...], [layer, ...] ],
        "head":       layer,
        "tensors":    [ { "name": "enc0.0.weight", "shape": [16, 1, 3] }, ... ]
    }

where a layer is ``{"name", "in_channels", "out_channels", "kernel", "activation", "affine"}``.
Decoder block ``i`` receives the upsampled output of the previous stage concatenated with the
output of encoder block ``depth - 1 - i``.
"""
import copy
import json
import struct

import numpy as np
import torch
import torch.nn            as nn
import torch.nn.functional as F

from dataclasses import dataclass
from typing      import Any, Dict, List, Mapping, Optional, Sequence

from sleepauto.exceptions      import InputTooShort, ShapeMismatch, TruncatedTensorData, UnknownActivation
from sleepauto.dsp             import boolean_runs
from sleepauto.elements.events import EventList, SpindleEvent
from sleepauto.utils.files     import atomic_write_bytes

ACTIVATIONS = {
    'relu':       nn.ReLU,
    'elu':        nn.ELU,
    'leaky_relu': nn.LeakyReLU,
    'tanh':       nn.Tanh,
    'sigmoid':    nn.Sigmoid,
    'identity':   nn.Identity,
}

# spindle and non-spindle score channels
N_MASKS = 2

@dataclass
class SegmentationMask:
    """
    Per-sample scores of the two output channels.

    :ivar np.ndarray spindle:     spindle scores
    :ivar np.ndarray non_spindle: non-spindle scores
    """
    spindle:np.ndarray
    non_spindle:np.ndarray

    def __len__(self) -> int:
        return len( self.spindle )

class ConvLayer(nn.Module):
    """
    'Same'-padded 1D convolution with an optional per-channel affine map (a folded normalization
    layer) and an activation.
    """
    def __init__( self, spec:Mapping[str,Any] ) -> None:
        super().__init__()

        activation = spec.get( 'activation', 'identity' )
        if activation not in ACTIVATIONS:
            raise UnknownActivation( f'layer "{spec["name"]}" has unknown activation "{activation}"' )

        self.name       = spec['name']
        self.conv       = nn.Conv1d( spec['in_channels'], spec['out_channels'], spec['kernel'], padding= 'same' )
        self.affine     = bool( spec.get( 'affine', False ) )
        self.activation = ACTIVATIONS[activation]()

        if self.affine:
            self.scale = nn.Parameter( torch.ones( spec['out_channels'] ) )
            self.shift = nn.Parameter( torch.zeros( spec['out_channels'] ) )

    def forward( self, x:torch.Tensor ) -> torch.Tensor:
        x = self.conv( x )
        if self.affine:
            x = x * self.scale[:, None] + self.shift[:, None]

        return self.activation( x )

def _layer_tensor_shapes( spec:Mapping[str,Any] ) -> Dict[str,List[int]]:
    name   = spec['name']
    shapes = {
        f'{name}.weight': [ spec['out_channels'], spec['in_channels'], spec['kernel'] ],
        f'{name}.bias':   [ spec['out_channels'] ],
    }
    if spec.get( 'affine', False ):
        shapes[f'{name}.scale'] = [ spec['out_channels'] ]
        shapes[f'{name}.shift'] = [ spec['out_channels'] ]

    return shapes

def _layers( header:Mapping[str,Any] ) -> List[Mapping[str,Any]]:
    layers = [ layer for block in header.get( 'encoder', [] ) for layer in block ]
    layers += list( header.get( 'bottleneck', [] ) )
    layers += [ layer for block in header.get( 'decoder', [] ) for layer in block ]
    return layers + [ header['head'] ]

def _check_chain( block:List[Mapping[str,Any]], channels:int, where:str ) -> int:
    for layer in block:
        if layer['in_channels'] != channels:
            raise ShapeMismatch( f'{where}: layer "{layer["name"]}" expects {layer["in_channels"]} input channels, receives {channels}' )

        if layer['kernel'] < 1 or layer['out_channels'] < 1:
            raise ShapeMismatch( f'{where}: layer "{layer["name"]}" has an empty kernel or no output channel' )

        channels = layer['out_channels']

    return channels

def validate_header( header:Mapping[str,Any] ) -> None:
    """
    Checks the architecture: block counts, pooling factors and channel counts along every path,
    skip connections included.

    :raises ShapeMismatch:     on inconsistent shapes
    :raises UnknownActivation: on an unsupported activation name
    """
    depth    = header.get( 'depth', 0 )
    pool     = list( header.get( 'pool', [] ) )
    encoder  = header.get( 'encoder', [] )
    decoder  = header.get( 'decoder', [] )

    if not ( len( pool ) == len( encoder ) == len( decoder ) == depth ):
        raise ShapeMismatch( f'depth {depth} needs as many pooling factors, encoder and decoder blocks, got {len(pool)}, {len(encoder)}, {len(decoder)}' )

    if any( factor < 1 for factor in pool ):
        raise ShapeMismatch( f'pooling factors must be positive, got {pool}' )

    for layer in _layers( header ):
        if layer.get( 'activation', 'identity' ) not in ACTIVATIONS:
            raise UnknownActivation( f'layer "{layer["name"]}" has unknown activation "{layer.get("activation")}"' )

    channels = header.get( 'in_channels', 1 )
    skips    = []
    for index, block in enumerate( encoder ):
        if len( block ) == 0:
            raise ShapeMismatch( f'encoder block {index} has no layer' )

        channels = _check_chain( block, channels, f'encoder block {index}' )
        skips.append( channels )

    channels = _check_chain( header.get( 'bottleneck', [] ), channels, 'bottleneck' )

    for index, block in enumerate( decoder ):
        if len( block ) == 0:
            raise ShapeMismatch( f'decoder block {index} has no layer' )

        skip     = skips[depth - 1 - index]
        expected = block[0]['in_channels']
        if expected != channels + skip:
            raise ShapeMismatch( f'decoder block {index}: skip connection carries {channels} + {skip} channels, layer "{block[0]["name"]}" expects {expected}' )

        channels = _check_chain( block, channels + skip, f'decoder block {index}' )

    channels = _check_chain( [ header['head'] ], channels, 'head' )
    if channels != N_MASKS:
        raise ShapeMismatch( f'head must output {N_MASKS} mask channels, outputs {channels}' )

def header_parameter_count( header:Mapping[str,Any] ) -> int:
    """Returns the number of parameters declared by the architecture."""
    return sum( int( np.prod( shape ) ) for layer in _layers( header ) for shape in _layer_tensor_shapes( layer ).values() )

class UNetModel(nn.Module):
    """
    1D U-Net built from a validated header; immutable after loading.

    :param dict header: architecture description (see the module docstring)
    """
    def __init__( self, header:Mapping[str,Any] ) -> None:
        super().__init__()
        validate_header( header )

        self.header      = copy.deepcopy( dict( header ) )
        self.depth:int   = header.get( 'depth', 0 )
        self.pool        = [ int(factor) for factor in header.get( 'pool', [] ) ]
        self.in_channels = header.get( 'in_channels', 1 )

        self.encoder    = nn.ModuleList( [ nn.Sequential( *( ConvLayer( layer ) for layer in block ) ) for block in header.get( 'encoder', [] ) ] )
        self.bottleneck = nn.Sequential( *( ConvLayer( layer ) for layer in header.get( 'bottleneck', [] ) ) )
        self.decoder    = nn.ModuleList( [ nn.Sequential( *( ConvLayer( layer ) for layer in block ) ) for block in header.get( 'decoder', [] ) ] )
        self.head       = ConvLayer( header['head'] )

        self.eval()

    @property
    def multiple(self) -> int:
        """Returns the length granularity of the pooling path."""
        return int( np.prod( self.pool ) ) if self.pool else 1

    def conv_layers(self) -> List[ConvLayer]:
        return [ module for module in self.modules() if isinstance( module, ConvLayer ) ]

    def parameter_count(self) -> int:
        return sum( parameter.numel() for parameter in self.parameters() )

    @classmethod
    def from_arrays( cls, header:Mapping[str,Any], tensors:Mapping[str,np.ndarray] ) -> 'UNetModel':
        """
        Builds a model from the architecture and named weight arrays.

        :raises ShapeMismatch: if a tensor is missing or has a wrong shape
        """
        model = cls( header )

        with torch.no_grad():
            for layer in model.conv_layers():
                targets = { 'weight': layer.conv.weight, 'bias': layer.conv.bias }
                if layer.affine:
                    targets.update( scale= layer.scale, shift= layer.shift )

                for suffix, parameter in targets.items():
                    name  = f'{layer.name}.{suffix}'
                    array = tensors.get( name, None )
                    if array is None:
                        raise ShapeMismatch( f'missing tensor "{name}"' )

                    array = np.asarray( array, dtype= np.float32 )
                    if list( array.shape ) != list( parameter.shape ):
                        raise ShapeMismatch( f'tensor "{name}" has shape {list(array.shape)}, layer needs {list(parameter.shape)}' )

                    parameter.copy_( torch.from_numpy( array.copy() ) )

        for parameter in model.parameters():
            parameter.requires_grad_( False )

        return model

    def forward( self, x:torch.Tensor ) -> torch.Tensor:
        skips = []
        for block, factor in zip( self.encoder, self.pool ):
            x = block( x )
            skips.append( x )
            x = F.max_pool1d( x, factor )

        x = self.bottleneck( x )

        for index, block in enumerate( self.decoder ):
            skip = skips[self.depth - 1 - index]
            x    = torch.repeat_interleave( x, self.pool[self.depth - 1 - index], dim= -1 )
            x    = block( torch.cat( [ x, skip ], dim= 1 ) )

        return self.head( x )

#region Container

def load_weights( path:str ) -> UNetModel:
    """
    Loads a model from a weight container.

    :raises ShapeMismatch:       on inconsistent architecture or tensor shapes, or trailing data
    :raises UnknownActivation:   on unsupported activations
    :raises TruncatedTensorData: if the payload holds fewer floats than the header declares
    """
    try:
        with open( path, 'rb' ) as weightfile:
            raw = weightfile.read()

    except OSError as exc:
        raise OSError( f'could not read file "{path}" due to {exc}' )

    if len( raw ) < 8:
        raise TruncatedTensorData( f'{path}: missing header length' )

    ( header_len, ) = struct.unpack( '<Q', raw[:8] )
    if len( raw ) < 8 + header_len:
        raise TruncatedTensorData( f'{path}: header of {header_len} bytes is cut off' )

    header = json.loads( raw[8:8 + header_len].decode( 'utf-8' ) )
    validate_header( header )

    declared = header.get( 'tensors', [] )
    n_floats = sum( int( np.prod( entry['shape'] ) ) for entry in declared )
    payload  = raw[8 + header_len:]

    if len( payload ) < 4 * n_floats:
        raise TruncatedTensorData( f'{path}: header declares {n_floats} floats, payload holds {len(payload) // 4}' )

    if len( payload ) > 4 * n_floats:
        raise ShapeMismatch( f'{path}: {len(payload) - 4 * n_floats} bytes after the declared tensors' )

    values  = np.frombuffer( payload, dtype= '<f4' )
    tensors = {}
    offset  = 0
    for entry in declared:
        size = int( np.prod( entry['shape'] ) )
        tensors[entry['name']] = values[offset:offset + size].reshape( entry['shape'] )
        offset += size

    return UNetModel.from_arrays( header, tensors )

def save_weights( path:str, header:Mapping[str,Any], tensors:Mapping[str,np.ndarray] ) -> None:
    """
    Writes a weight container; tensors are stored in the given mapping order and listed in the
    header's ``tensors`` entry.
    """
    header = dict( header )
    header['tensors'] = [ { 'name': name, 'shape': list( np.shape( array ) ) } for name, array in tensors.items() ]

    encoded = json.dumps( header, sort_keys= True ).encode( 'utf-8' )
    payload = b''.join( np.ascontiguousarray( array, dtype= '<f4' ).tobytes() for array in tensors.values() )

    atomic_write_bytes( struct.pack( '<Q', len( encoded ) ) + encoded + payload, path )

def unet_header( channels:Sequence[int]= ( 1, 16, 32 ), kernel:int= 3, activation:str= 'relu', pool:int= 2, layers_per_block:int= 2 ) -> Dict[str,Any]:
    """
    Returns the header of a plain U-Net: ``len(channels) - 1`` encoder blocks widening the
    channels as listed, a bottleneck at the last width and mirrored decoder blocks.
    """
    def block( prefix:str, c_in:int, c_out:int ) -> List[Dict[str,Any]]:
        layers = []
        for index in range( layers_per_block ):
            layers.append( { 'name': f'{prefix}.{index}', 'in_channels': c_in if index == 0 else c_out, 'out_channels': c_out, 'kernel': kernel, 'activation': activation } )

        return layers

    depth   = len( channels ) - 1
    encoder = [ block( f'enc{index}', channels[index], channels[index + 1] ) for index in range( depth ) ]
    decoder = []

    width = channels[-1]
    for index in range( depth ):
        skip = channels[depth - index]
        out  = channels[max( depth - index - 1, 1 )]
        decoder.append( block( f'dec{index}', width + skip, out ) )
        width = out

    return {
        'depth':       depth,
        'pool':        [ pool ] * depth,
        'in_channels': channels[0],
        'encoder':     encoder,
        'bottleneck':  block( 'mid', channels[-1], channels[-1] ),
        'decoder':     decoder,
        'head':        { 'name': 'head', 'in_channels': width, 'out_channels': N_MASKS, 'kernel': 1, 'activation': 'identity' },
    }

def header_tensor_shapes( header:Mapping[str,Any] ) -> Dict[str,List[int]]:
    """Returns the tensor names and shapes of the architecture in layer order."""
    shapes = {}
    for layer in _layers( header ):
        shapes.update( _layer_tensor_shapes( layer ) )

    return shapes

#endregion

#region Inference

def forward( model:UNetModel, x:np.ndarray ) -> SegmentationMask:
    """
    Runs the model on a single-channel sequence. Inputs whose length is not a multiple of the
    pooling product are right-padded with zeros; the masks are cut back to the input length.

    :raises InputTooShort: if the input is shorter than the pooling product
    """
    if model.in_channels != 1:
        raise ShapeMismatch( f'model expects {model.in_channels} input channels, inference runs on single-channel blocks' )

    x = np.asarray( x, dtype= np.float32 )
    n = len( x )

    if n < model.multiple:
        raise InputTooShort( f'input of {n} samples is shorter than the pooling product {model.multiple}' )

    padded = np.zeros( -( -n // model.multiple ) * model.multiple, dtype= np.float32 )
    padded[:n] = x

    with torch.no_grad():
        out = model( torch.from_numpy( padded ).reshape( 1, 1, -1 ) )[0, :, :n].numpy().astype( np.float64 )

    return SegmentationMask( out[0], out[1] )

def masks_to_events( mask:SegmentationMask, fs:float, channel:Optional[str]= None ) -> EventList:
    """
    Returns an event for every maximal run of samples where the spindle score is strictly
    greater than the non-spindle score.
    """
    runs     = boolean_runs( mask.spindle > mask.non_spindle )
    channels = frozenset( [ channel ] ) if channel is not None else frozenset()

    return EventList( SpindleEvent( float( start / fs ), float( ( end - start ) / fs ), channels ) for start, end in runs )

#endregion
