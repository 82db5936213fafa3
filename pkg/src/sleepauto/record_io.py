"""
Reading PSG recordings (EDF/EDF+) and reading/writing hypnogram and event annotations.
"""
import io
import math

import numpy  as np
import pandas as pd

from datetime import datetime
from typing   import List, Optional

from sleepauto.exceptions         import InconsistentRecord, MalformedHeader, NegativeDuration, UnknownStageToken, UnparsableRow, UnsupportedEncoding
from sleepauto.elements.events    import EventList, SpindleEvent
from sleepauto.elements.hypnogram import Hypnogram, Stage
from sleepauto.elements.record    import Channel, SignalRecord
from sleepauto.utils.files        import atomic_write_text
from sleepauto.utils.logging      import get_logger

EDF_HEADER_BYTES  = 256
EDF_SIGNAL_BYTES  = 256
ANNOTATION_LABELS = ( 'EDF Annotations', 'BDF Annotations' )

EVENT_COLUMNS = [ 'start_s', 'duration_s', 'channels' ]

# factor converting the physical dimension to microvolts
UNIT_FACTORS = {
    'uv': 1.0,
    'µv': 1.0,
    'μv': 1.0,
    'mv': 1e3,
    'v':  1e6,
    'nv': 1e-3,
}

#region EDF

# (name, width) of the per-signal header fields, in file order
_SIGNAL_FIELDS = [
    ( 'label', 16 ),
    ( 'transducer', 80 ),
    ( 'unit', 8 ),
    ( 'physical_min', 8 ),
    ( 'physical_max', 8 ),
    ( 'digital_min', 8 ),
    ( 'digital_max', 8 ),
    ( 'prefilter', 80 ),
    ( 'samples', 8 ),
    ( 'reserved', 32 ),
]

def _field( raw:bytes, name:str, cast ):
    text = raw.decode( 'latin-1' ).strip()
    try:
        return cast( text )

    except ValueError:
        raise MalformedHeader( f'could not parse header field "{name}" from "{text}"' )

def _parse_start_time( date:str, time:str ) -> Optional[datetime]:
    try:
        day, month, year        = ( int(part) for part in date.strip().split( '.' ) )
        hour, minute, second    = ( int(part) for part in time.strip().split( '.' ) )
        year                   += 1900 if year >= 85 else 2000
        return datetime( year, month, day, hour, minute, second )

    except ValueError:
        return None

def _parse_header( raw:bytes ) -> dict:
    if len( raw ) < EDF_HEADER_BYTES:
        raise MalformedHeader( f'file holds {len(raw)} bytes, shorter than the fixed header' )

    if raw[:1] == b'\xff':
        raise UnsupportedEncoding( 'BDF (24-bit) samples are not supported' )

    if raw[:8].decode( 'latin-1' ).strip() != '0':
        raise MalformedHeader( f'wrong version field {raw[:8]!r}' )

    header = {
        'startdate': raw[168:176].decode( 'latin-1' ),
        'starttime': raw[176:184].decode( 'latin-1' ),
        'bytes':     _field( raw[184:192], 'header bytes', int ),
        'reserved':  raw[192:236].decode( 'latin-1' ).strip(),
        'records':   _field( raw[236:244], 'number of data records', int ),
        'duration':  _field( raw[244:252], 'data record duration', float ),
        'ns':        _field( raw[252:256], 'number of signals', int ),
    }

    if header['reserved'].startswith( 'EDF+D' ):
        raise UnsupportedEncoding( 'discontinuous EDF+ records are not supported' )

    ns = header['ns']
    if ns < 1:
        raise MalformedHeader( f'invalid number of signals {ns}' )

    if header['bytes'] != EDF_HEADER_BYTES + ns * EDF_SIGNAL_BYTES:
        raise MalformedHeader( f'header size field {header["bytes"]} does not match {ns} signal(s)' )

    if len( raw ) < header['bytes']:
        raise MalformedHeader( 'file ends inside the signal headers' )

    if not header['duration'] > 0:
        raise MalformedHeader( f'non-positive data record duration {header["duration"]}' )

    offset = EDF_HEADER_BYTES
    for name, width in _SIGNAL_FIELDS:
        cast = { 'physical_min': float, 'physical_max': float, 'digital_min': int, 'digital_max': int, 'samples': int }.get( name, str )
        header[name] = [ _field( raw[offset + i * width : offset + (i + 1) * width], name, cast ) for i in range( ns ) ]
        offset += ns * width

    for i in range( ns ):
        if header['samples'][i] < 1:
            raise MalformedHeader( f'signal {header["label"][i]} has {header["samples"][i]} samples per record' )

        if header['digital_max'][i] <= header['digital_min'][i]:
            raise MalformedHeader( f'signal {header["label"][i]} has an empty digital range' )

    return header

def parse_edf( path:str ) -> SignalRecord:
    """
    Parses an EDF/EDF+ (continuous) file. Annotation signals are skipped, every other signal
    is calibrated to physical units (converted to microvolts when the dimension is known).

    :param str path: EDF file

    :raises MalformedHeader:     on invalid header fields
    :raises InconsistentRecord:  if the data size contradicts the header
    :raises UnsupportedEncoding: on BDF or discontinuous EDF+ files
    """
    try:
        with open( path, 'rb' ) as edffile:
            raw = edffile.read()

    except OSError as exc:
        raise OSError( f'could not read file "{path}" due to {exc}' )

    header = _parse_header( raw )

    samples_per_record = np.array( header['samples'], dtype= np.int64 )
    record_len         = int( samples_per_record.sum() )
    data               = raw[header['bytes']:]
    n_records          = header['records']

    if n_records == -1:
        n_records = len( data ) // ( 2 * record_len )

    expected = n_records * record_len * 2
    if n_records < 1 or len( data ) != expected:
        raise InconsistentRecord( f'header promises {header["records"]} data record(s) ({expected} bytes), file holds {len(data)} bytes' )

    digital = np.frombuffer( data, dtype= '<i2' ).reshape( n_records, record_len )
    logger  = get_logger()

    channels:List[Channel] = []
    offset = 0
    for i, label in enumerate( header['label'] ):
        width   = samples_per_record[i]
        columns = digital[:, offset : offset + width]
        offset += width

        if label in ANNOTATION_LABELS:
            continue

        gain  = ( header['physical_max'][i] - header['physical_min'][i] ) / ( header['digital_max'][i] - header['digital_min'][i] )
        shift = header['physical_max'][i] - gain * header['digital_max'][i]

        unit   = header['unit'][i].strip().lower()
        factor = UNIT_FACTORS.get( unit, None )
        if factor is None:
            logger.warning( f'unknown physical dimension "{header["unit"][i]}" of channel "{label}", samples kept as stored' )
            factor = 1.0

        samples = ( columns.reshape( -1 ).astype( np.float64 ) * gain + shift ) * factor
        channels.append( Channel( label, samples, width / header['duration'] ) )

    if len( channels ) == 0:
        raise InconsistentRecord( 'file holds annotation signals only' )

    return SignalRecord( channels, _parse_start_time( header['startdate'], header['starttime'] ) )

#endregion

#region Hypnogram files

def read_hypnogram( path:str ) -> Hypnogram:
    """
    Reads a hypnogram file holding one stage token (W, N1, N2, N3, REM) per line.
    Blank lines are ignored.

    :raises UnknownStageToken: on any other token, or if the file is not UTF-8 text
    """
    try:
        with open( path, 'r', encoding= 'utf-8' ) as hypfile:
            lines = hypfile.read().splitlines()

    except UnicodeDecodeError:
        raise UnknownStageToken( f'{path}: not UTF-8 text' )

    stages = []
    for number, line in enumerate( lines, start= 1 ):
        if line.strip() == '':
            continue

        try:
            stages.append( Stage.from_token( line ) )

        except UnknownStageToken as exc:
            raise UnknownStageToken( f'{path}, line {number}: {exc}' )

    return Hypnogram( stages )

def write_hypnogram( hyp:Hypnogram, path:str ) -> None:
    """Writes the hypnogram, one token per line."""
    atomic_write_text( ''.join( f'{stage.token}\n' for stage in hyp ), path )

#endregion

#region Event files

def _parse_event_row( number:int, row:dict ) -> SpindleEvent:
    try:
        start_s    = float( row['start_s'] )
        duration_s = float( row['duration_s'] )

    except ValueError:
        raise UnparsableRow( f'row {number}: could not parse "{row["start_s"]},{row["duration_s"]}"' )

    if not ( math.isfinite( start_s ) and math.isfinite( duration_s ) ):
        raise UnparsableRow( f'row {number}: non-finite time value' )

    if not duration_s > 0:
        raise NegativeDuration( f'row {number}: non-positive duration {duration_s}' )

    channels = frozenset( label for label in str( row['channels'] ).split( '|' ) if label != '' )
    return SpindleEvent( start_s, duration_s, channels )

def read_events( path:str ) -> EventList:
    """
    Reads an event CSV with header ``start_s,duration_s,channels`` (channels pipe-separated).
    Events are sorted by start on read.

    :raises UnparsableRow:    on rows with missing or non-numeric values
    :raises NegativeDuration: on non-positive durations
    """
    try:
        table = pd.read_csv( path, dtype= str, keep_default_na= False )

    except pd.errors.EmptyDataError:
        raise UnparsableRow( f'{path}: missing header' )

    except pd.errors.ParserError as exc:
        raise UnparsableRow( f'{path}: {exc}' )

    if list( table.columns ) != EVENT_COLUMNS:
        raise UnparsableRow( f'{path}: expected header {",".join( EVENT_COLUMNS )}, found {",".join( table.columns )}' )

    return EventList( _parse_event_row( number, row ) for number, row in enumerate( table.to_dict( 'records' ), start= 2 ) )

def events_to_frame( events:EventList ) -> pd.DataFrame:
    """
    Returns the events as a table of strings; times are written in their shortest
    round-tripping decimal form.
    """
    return pd.DataFrame(
        [ [ repr( float( event.start_s ) ), repr( float( event.duration_s ) ), '|'.join( sorted( event.channels ) ) ] for event in events ],
        columns= EVENT_COLUMNS
    )

def write_events( events:EventList, path:str ) -> None:
    """Writes the events as CSV."""
    buffer = io.StringIO()
    events_to_frame( events ).to_csv( buffer, index= False, lineterminator= '\n' )
    atomic_write_text( buffer.getvalue(), path )

#endregion
