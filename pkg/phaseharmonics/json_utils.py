"""
JSON documents exchanged by the CLI and the HTTP service.
"""
import json
import logging
from typing import Any, Dict, Optional

import numpy as np

from .descriptors import DescriptorSet, SelectionIndex, count_breakdown
from .errors import SignalFormatError

logger = logging.getLogger('phaseharmonics')

FORMAT_VERSION = 1


def _default(value):
    """json.dump fallback for numpy scalars and arrays"""
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def to_jsonable(data: Any) -> Any:
    """Round-trip through the encoder so the result holds only plain Python types"""
    return json.loads(json.dumps(data, default=_default))


def write_json(data: Any, path: str) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, default=_default)
    logger.info(f"Wrote {path}")


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, default=_default)


def read_json(path: str) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)
    except FileNotFoundError:
        raise SignalFormatError(f"File not found: {path}")
    except json.JSONDecodeError as e:
        raise SignalFormatError(f"Malformed JSON in {path}: {e}")


def descriptor_set_to_json(desc: DescriptorSet) -> Dict[str, Any]:
    """
    Serialize descriptors with their selection

    Entries refer to channels by position in "channels"; each carries its value as re/im.
    """
    sel = desc.selection
    return {
        'version': FORMAT_VERSION,
        'shape': list(desc.shape),
        'bank': dict(desc.bank_params),
        'selection': dict(sel.params),
        'channels': [list(label) for label in sel.labels],
        'counts': count_breakdown(sel),
        'means': [
            {'a': int(c), 'k': int(k), 're': float(v.real), 'im': float(v.imag)}
            for (c, k), v in zip(sel.mean_entries, desc.means)
        ],
        'correlations': [
            {'a': int(c), 'k': int(k), 'b': int(c2), 'k2': int(k2), 're': float(v.real), 'im': float(v.imag)}
            for (c, k, c2, k2), v in zip(sel.corr_entries, desc.corrs)
        ],
    }


def descriptor_set_from_json(data: Dict[str, Any]) -> DescriptorSet:
    """Inverse of descriptor_set_to_json"""
    try:
        labels = tuple(tuple(int(v) for v in label) for label in data['channels'])
        means = data.get('means', [])
        corrs = data.get('correlations', [])
        selection = SelectionIndex(
            corr_entries=np.array([[e['a'], e['k'], e['b'], e['k2']] for e in corrs], dtype=np.int64).reshape(-1, 4),
            mean_entries=np.array([[e['a'], e['k']] for e in means], dtype=np.int64).reshape(-1, 2),
            labels=labels,
            params=dict(data.get('selection', {})),
        )
        desc = DescriptorSet(
            selection=selection,
            means=np.array([complex(e['re'], e['im']) for e in means], dtype=np.complex128),
            corrs=np.array([complex(e['re'], e['im']) for e in corrs], dtype=np.complex128),
            shape=tuple(int(n) for n in data['shape']),
            bank_params=dict(data.get('bank', {})),
        )
    except (KeyError, TypeError) as e:
        raise SignalFormatError(f"Malformed descriptor document: missing or invalid {e}")

    n_channels = len(labels)
    if (selection.corr_entries.size and selection.corr_entries[:, [0, 2]].max() >= n_channels) or \
            (selection.mean_entries.size and selection.mean_entries[:, 0].max() >= n_channels):
        raise SignalFormatError("Descriptor entry refers to an unknown channel")
    return desc


def save_descriptors(desc: DescriptorSet, path: str) -> None:
    write_json(descriptor_set_to_json(desc), path)


def load_descriptors(path: str) -> DescriptorSet:
    return descriptor_set_from_json(read_json(path))


def recovery_report(result, ergodicity: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Report of a reconstruction: losses, PSNR, M, iterations and timing"""
    report = to_jsonable(result.report())
    if ergodicity is not None:
        report['ergodicity'] = to_jsonable(ergodicity)
    return report


def sweep_csv(sweep) -> str:
    """CSV with one row per delta; chi_fit repeats the fitted exponent, empty if undefined"""
    chi = '' if sweep.chi is None else f"{sweep.chi:.6g}"
    lines = ['delta,M,psnr,chi_fit']
    for row in sweep.rows:
        psnr = '' if row['psnr'] is None else f"{row['psnr']:.6g}"
        lines.append(f"{row['delta']},{row['M']},{psnr},{chi}")
    return '\n'.join(lines) + '\n'
