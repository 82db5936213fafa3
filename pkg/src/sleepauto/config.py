import copy
import hashlib
import json

from typing import Any, Dict, Optional

from sleepauto.exceptions  import ConfigError
from sleepauto.utils.files import read_jsonfile

CONFIG_VERSION = 1

DEFAULT_CONFIG = {
    "version": CONFIG_VERSION,
    "staging": {
        "low_hz": 0.3,
        "high_hz": 30.0,
        "order": 4,
        "fs": 60.0,
        "clip": 20.0,
        "window_epochs": 21,
        "buffer_epochs": 20,
        "prob_floor": 1e-12,
        "mode": "zero_phase"
    },
    "spindles": {
        "highpass_hz": 0.3,
        "lowpass_hz": 30.0,
        "order": 20,
        "fs": 100.0,
        "clip": 20.0,
        "mode": "zero_phase"
    },
    "baseline_detector": {
        "band_hz": [ 11.0, 16.0 ],
        "order": 4,
        "rms_window_s": 0.3,
        "percentile": 85.0,
        "min_duration_s": 0.3
    },
    "postprocess": {
        "merge_max_duration_s": 0.3,
        "merge_max_gap_s": 0.1,
        "min_duration_s": 0.3,
        "max_duration_s": 2.5
    },
    "metrics": {
        "iou_threshold": 0.2,
        "absent_stage_policy": "exclude",
        "strict": False,
        "min_joint_items": 5
    },
    "characteristics": {
        "band_hz": [ 10.0, 16.0 ],
        "order": 4,
        "fast_threshold_hz": 13.0,
        "amplitude_convention": "envelope",
        "envelope_pad_s": 0.2,
        "filter_pad_s": 1.0
    },
    "resampling": {
        "attenuation_db": 60.0,
        "transition": 0.2,
        "max_term": 10000
    }
}

def _merge( base:Dict[str,Any], update:Dict[str,Any], path:str= '' ) -> None:
    for key, value in update.items():
        if key not in base:
            raise ConfigError( f'unknown configuration key "{path}{key}"' )

        if isinstance( base[key], dict ):
            if not isinstance( value, dict ):
                raise ConfigError( f'configuration section "{path}{key}" must be an object' )

            _merge( base[key], value, f'{path}{key}.' )

        else:
            base[key] = value

def load_config( filename:Optional[str]= None, overrides:Optional[Dict[str,Any]]= None ) -> Dict[str,Any]:
    """
    Returns the default configuration updated by the given JSON file and overrides (in this order).

    :param str  filename:  (optional) JSON configuration file
    :param dict overrides: (optional) nested dictionary of values to override

    :raises ConfigError: on unknown keys or unsupported version
    """
    config = copy.deepcopy( DEFAULT_CONFIG )

    for update in ( read_jsonfile( filename ) if filename is not None else None, overrides ):
        if update is None:
            continue

        if not isinstance( update, dict ):
            raise ConfigError( 'configuration must be a JSON object' )

        if update.get( 'version', CONFIG_VERSION ) != CONFIG_VERSION:
            raise ConfigError( f'unsupported configuration version {update.get( "version" )}' )

        _merge( config, update )

    return config

def config_hash( config:Dict[str,Any] ) -> str:
    """Returns the SHA-256 hex digest of the canonical JSON form of the configuration."""
    canonical = json.dumps( config, sort_keys= True, separators= ( ',', ':' ) )
    return hashlib.sha256( canonical.encode( 'utf-8' ) ).hexdigest()
