import os, errno
import json
import tempfile

from typing import Any

#region IO functions

def atomic_write_text( text:str, filename_with_path:str ) -> None:
    """
    Writes the given text to the given file via a temporary file in the same directory,
    so that readers never observe a partially written file.

    :param str text:               content
    :param str filename_with_path: file name with path
    """
    directory = os.path.dirname( os.path.abspath( filename_with_path ) )
    tmpname   = None

    try:
        with tempfile.NamedTemporaryFile( 'w', dir= directory, delete= False, encoding= 'utf-8', newline= '' ) as tmpfile:
            tmpname = tmpfile.name
            tmpfile.write( text )

        os.replace( tmpname, filename_with_path )

    except Exception as exc:
        if tmpname is not None and os.path.exists( tmpname ):
            os.remove( tmpname )

        raise OSError( f'could not write file "{filename_with_path}" due to {exc}' )

def atomic_write_bytes( data:bytes, filename_with_path:str ) -> None:
    """
    Binary counterpart of :func:`atomic_write_text`.

    :param bytes data:             content
    :param str filename_with_path: file name with path
    """
    directory = os.path.dirname( os.path.abspath( filename_with_path ) )
    tmpname   = None

    try:
        with tempfile.NamedTemporaryFile( 'wb', dir= directory, delete= False ) as tmpfile:
            tmpname = tmpfile.name
            tmpfile.write( data )

        os.replace( tmpname, filename_with_path )

    except Exception as exc:
        if tmpname is not None and os.path.exists( tmpname ):
            os.remove( tmpname )

        raise OSError( f'could not write file "{filename_with_path}" due to {exc}' )

def write_jsonfile( data:Any, filename_with_path:str ) -> None:
    """
    Writes the given JSON data to the given file (atomically, keys sorted).

    :param Any data:               JSON data
    :param str filename_with_path: file name with path
    """
    atomic_write_text( json.dumps( data, indent= 2, sort_keys= True ) + '\n', filename_with_path )

def read_jsonfile( filename_with_path:str ) -> Any:
    """
    Return JSON data from the given file.

    :param str filename_with_path: file name with path
    """
    try:
        with open( filename_with_path, 'r', encoding= 'utf-8' ) as jsonfile:
            return json.load( jsonfile )

    except Exception as exc:
        raise OSError( f'could not read file "{filename_with_path}" due to {exc}' )

def create_directory( dirname_with_path:str ) -> None:
    """
    Creates the given directory, if not exists.

    :param str dirname_with_path: directory name with path
    """
    try:
        os.makedirs( dirname_with_path )

    except OSError as exc:
        if exc.errno != errno.EEXIST:
            raise OSError( f'could not create directory "{dirname_with_path}" due to {exc}' )

#endregion
