"""
JSON and CSV artifacts.

Spectrum file:  {"manifold_dim", "elliptic_order", "blocks": [{"eigenvalue", "multiplicity", "label"?}]}
Field file:     {"spectrum_hash", "blocks": [[[re, im], ...], ...]}
Symbol file:    {"spectrum_hash", "name"?, "blocks": [[[[re, im], ...], ...], ...]}   (row-major)
System file:    {"operators": [<symbol file path relative to this file> | <inline symbol>, ...]}

Every file may carry a "meta" object (config hash, seed, provenance); loaders
ignore it apart from its "calibration" entry, read by ``read_calibration``.
A field or symbol file without "spectrum_hash" is accepted with a warning,
or rejected when the hash is required. Floats are written with repr precision so a reload is
bit-identical. Loaders raise ValidationError naming the offending block.
"""

import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from django.core.exceptions import ValidationError

from spectra.engine.fields import CoefficientField
from spectra.engine.spectrum import BlockInfo, SpectrumModel
from spectra.engine.symbols import InvariantSymbol, SystemSymbol

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def encode_float(value: float) -> Union[float, str]:
    """JSON-safe float: non-finite values become the strings 'inf', '-inf', 'nan'."""
    value = float(value)
    if math.isfinite(value):
        return value
    return 'nan' if math.isnan(value) else ('inf' if value > 0 else '-inf')


def decode_float(value: Union[float, str, int]) -> float:
    return float(value)


def _encode_complex(array: np.ndarray) -> list:
    if array.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in array]
    return [_encode_complex(row) for row in array]


def _decode_complex(data: Any, shape: tuple, index: int, what: str) -> np.ndarray:
    try:
        array = np.asarray(data, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(
            "%(what)s block %(index)s is not a numeric array", code='not_numeric',
            params={'what': what, 'index': index},
        )
    if array.shape != shape + (2,):
        raise ValidationError(
            "%(what)s block %(index)s has shape %(found)s, expected %(expected)s",
            code='block_shape', params={'what': what, 'index': index, 'found': array.shape[:-1], 'expected': shape},
        )
    return array[..., 0] + 1j * array[..., 1]


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return encode_float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _finite_only(value):
    """Replace non-finite floats anywhere in a payload by their string codes."""
    if isinstance(value, dict):
        return {key: _finite_only(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite_only(item) for item in value]
    if isinstance(value, np.ndarray):
        return _finite_only(value.tolist())
    if isinstance(value, (float, np.floating)):
        return encode_float(value)
    return value


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(_finite_only(payload), handle, indent=1, default=_json_default, allow_nan=False)
        handle.write('\n')
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, 'r', encoding='utf-8') as handle:
        try:
            payload = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValidationError(
                "%(path)s is not valid JSON: %(error)s", code='invalid_json',
                params={'path': str(path), 'error': str(exc)},
            )
    if not isinstance(payload, dict):
        raise ValidationError("%(path)s must contain a JSON object", code='invalid_json', params={'path': str(path)})
    return payload


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


# --- spectrum ----------------------------------------------------------------

def spectrum_to_dict(spectrum: SpectrumModel, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    blocks = []
    for block in spectrum.blocks:
        entry = {'eigenvalue': block.eigenvalue, 'multiplicity': block.multiplicity}
        if block.label is not None:
            entry['label'] = block.label
        blocks.append(entry)
    payload = {
        'manifold_dim': spectrum.manifold_dim,
        'elliptic_order': spectrum.elliptic_order,
        'spectrum_hash': spectrum.spectrum_hash,
        'blocks': blocks,
    }
    if meta:
        payload['meta'] = meta
    return payload


def spectrum_from_dict(data: Dict[str, Any]) -> SpectrumModel:
    for key in ('manifold_dim', 'elliptic_order', 'blocks'):
        if key not in data:
            raise ValidationError("spectrum file lacks %(key)r", code='missing_key', params={'key': key})
    if not isinstance(data['blocks'], list):
        raise ValidationError("'blocks' must be a list", code='invalid_blocks')
    blocks = []
    for k, entry in enumerate(data['blocks']):
        try:
            blocks.append(BlockInfo(
                index=k,
                eigenvalue=float(entry['eigenvalue']),
                multiplicity=entry['multiplicity'],
                label=entry.get('label'),
            ))
        except (KeyError, TypeError, ValueError):
            raise ValidationError("block %(index)s is malformed", code='malformed_block', params={'index': k})
    return SpectrumModel(
        manifold_dim=data['manifold_dim'],
        elliptic_order=float(data['elliptic_order']),
        blocks=tuple(blocks),
    )


def dump_spectrum(spectrum: SpectrumModel, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(spectrum_to_dict(spectrum, meta), path)


def load_spectrum(path: PathLike) -> SpectrumModel:
    return spectrum_from_dict(read_json(path))


# --- fields and symbols ------------------------------------------------------

def _check_hash(data: Dict[str, Any], spectrum: SpectrumModel, what: str, require_hash: bool = False) -> None:
    found = data.get('spectrum_hash')
    if found is None:
        if require_hash:
            raise ValidationError(
                "%(what)s file lacks 'spectrum_hash'", code='missing_hash', params={'what': what},
            )
        logger.warning(f"{what} file carries no spectrum_hash; only the block shapes are checked")
    elif found != spectrum.spectrum_hash:
        raise ValidationError(
            "%(what)s was built for spectrum %(found)s, not %(expected)s",
            code='spectrum_hash', params={'what': what, 'found': found[:12], 'expected': spectrum.spectrum_hash[:12]},
        )
    blocks = data.get('blocks')
    if not isinstance(blocks, list):
        raise ValidationError("%(what)s file lacks a 'blocks' list", code='missing_key', params={'what': what})
    if len(blocks) != spectrum.truncation:
        raise ValidationError(
            "%(what)s has %(found)s blocks, the spectrum has %(expected)s",
            code='truncation_mismatch', params={'what': what, 'found': len(blocks), 'expected': spectrum.truncation},
        )


def field_to_dict(u: CoefficientField, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    payload = {'spectrum_hash': u.spectrum.spectrum_hash, 'blocks': [_encode_complex(b) for b in u.blocks]}
    if meta:
        payload['meta'] = meta
    return payload


def field_from_dict(data: Dict[str, Any], spectrum: SpectrumModel, require_hash: bool = False) -> CoefficientField:
    _check_hash(data, spectrum, 'field', require_hash)
    blocks = [
        _decode_complex(block, (int(m),), k, 'field')
        for k, (block, m) in enumerate(zip(data['blocks'], spectrum.multiplicities))
    ]
    return CoefficientField(spectrum, tuple(blocks))


def dump_field(u: CoefficientField, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(field_to_dict(u, meta), path)


def load_field(path: PathLike, spectrum: SpectrumModel, require_hash: bool = False) -> CoefficientField:
    return field_from_dict(read_json(path), spectrum, require_hash)


def symbol_to_dict(P: InvariantSymbol, meta: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    payload = {
        'spectrum_hash': P.spectrum.spectrum_hash,
        'name': P.name,
        'blocks': [_encode_complex(b) for b in P.blocks],
    }
    if meta:
        payload['meta'] = meta
    return payload


def symbol_from_dict(data: Dict[str, Any], spectrum: SpectrumModel, require_hash: bool = False) -> InvariantSymbol:
    _check_hash(data, spectrum, 'symbol', require_hash)
    blocks = [
        _decode_complex(block, (int(m), int(m)), k, 'symbol')
        for k, (block, m) in enumerate(zip(data['blocks'], spectrum.multiplicities))
    ]
    return InvariantSymbol(spectrum, tuple(blocks), name=data.get('name') or '')


def dump_symbol(P: InvariantSymbol, path: PathLike, meta: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(symbol_to_dict(P, meta), path)


def load_symbol(path: PathLike, spectrum: SpectrumModel, require_hash: bool = False) -> InvariantSymbol:
    return symbol_from_dict(read_json(path), spectrum, require_hash)


def dump_system(
    S: SystemSymbol,
    path: PathLike,
    meta: Optional[Dict[str, Any]] = None,
    operator_paths: Optional[Sequence[PathLike]] = None,
) -> Path:
    """Inline operators, or references to already written symbol files."""
    path = Path(path)
    if operator_paths is not None:
        operators: List[Any] = [
            str(Path(p).resolve().relative_to(path.parent.resolve())) if Path(p).is_absolute() else str(p)
            for p in operator_paths
        ]
    else:
        operators = [symbol_to_dict(op) for op in S.operators]
    payload: Dict[str, Any] = {'spectrum_hash': S.spectrum.spectrum_hash, 'operators': operators}
    if meta:
        payload['meta'] = meta
    return write_json(payload, path)


def load_system(path: PathLike, spectrum: SpectrumModel, require_hash: bool = False) -> SystemSymbol:
    """A system file, or a single symbol file read as a one-operator system."""
    path = Path(path)
    data = read_json(path)
    if 'operators' not in data:
        return SystemSymbol.single(symbol_from_dict(data, spectrum, require_hash))
    if not isinstance(data['operators'], list) or not data['operators']:
        raise ValidationError("'operators' must be a non-empty list", code='invalid_operators')
    operators = []
    for j, entry in enumerate(data['operators']):
        if isinstance(entry, str):
            operators.append(load_symbol(path.parent / entry, spectrum, require_hash))
        elif isinstance(entry, dict):
            operators.append(symbol_from_dict(entry, spectrum, require_hash))
        else:
            raise ValidationError("operator %(index)s is neither a path nor a symbol", code='invalid_operators', params={'index': j})
    return SystemSymbol(tuple(operators))


def read_calibration(paths: Sequence[PathLike]) -> Dict[str, Any]:
    """
    The "calibration" meta entry shared by every file in ``paths``: {} when a
    file has none or the files disagree.
    """
    found = []
    for path in paths:
        meta = read_json(path).get('meta')
        found.append(meta.get('calibration') if isinstance(meta, dict) else None)
    if not found or not all(isinstance(entry, dict) for entry in found):
        return {}
    if any(entry != found[0] for entry in found[1:]):
        logger.warning("input files disagree on their calibration; keeping the configured tolerances")
        return {}
    return dict(found[0])
