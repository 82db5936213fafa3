from typing import Any, List, Mapping, Optional

def _cell( value:Any, column_width:int ) -> str:
    if isinstance( value, bool ) or value is None:
        return f'{str(value)[:column_width]:>{column_width}s}'

    if isinstance( value, ( int, float ) ):
        return f'{value:{column_width}.3g}' if isinstance( value, float ) else f'{value:{column_width}d}'

    return f'{str(value)[:column_width]:>{column_width}s}'

def format_table( rows:Mapping[str,Mapping[str,Any]], header:str= '', columns:Optional[List[str]]= None, footer:Optional[Mapping[str,Mapping[str,Any]]]= None, column_width:int= 10 ) -> str:
    """
    Renders the rows as a box-drawn text table.

    :param Mapping rows:         row label -> column -> value
    :param str     header:       label of the first column
    :param list    columns:      (optional) columns in display order (default: sorted union of the row keys)
    :param Mapping footer:       (optional) rows printed below a separator (e.g. summaries)
    :param int     column_width: width of every column
    """
    if columns is None:
        columns = sorted( set( key for values in rows.values() for key in values.keys() ) )

    ncols = len( columns ) + 1
    lines = []

    def line( label:str, values:Mapping[str,Any] ) -> str:
        return ' │ '.join(
            [ f'{str(label)[:column_width].ljust(column_width)}' ] +
            [ _cell( values[key], column_width ) if key in values else ' ' * column_width for key in columns ]
        )

    lines.append( '─┬─'.join( [ '─' * column_width ] * ncols ) )
    lines.append( ' │ '.join( [ f'{header[:column_width].ljust(column_width)}' ] + [ f'{key[:column_width]:>{column_width}s}' for key in columns ] ) )
    lines.append( '─┼─'.join( [ '─' * column_width ] * ncols ) )

    for label, values in rows.items():
        lines.append( line( label, values ) )

    if footer:
        lines.append( '─┼─'.join( [ '─' * column_width ] * ncols ) )
        for label, values in footer.items():
            lines.append( line( label, values ) )

    lines.append( '─┴─'.join( [ '─' * column_width ] * ncols ) )
    return '\n'.join( lines )

def print_table( rows:Mapping[str,Mapping[str,Any]], header:str= '', columns:Optional[List[str]]= None, footer:Optional[Mapping[str,Mapping[str,Any]]]= None, column_width:int= 10 ) -> None:
    """Prints the rows as a box-drawn text table (see :func:`format_table`)."""
    print( format_table( rows, header, columns, footer, column_width ) )
