"""
JSON-lines persistence for sketch records

The first line is a header {"format": "sketch-jsonl", "version": 1}; every
following line is one record {id, provenance, primitives: [{kind,
construction, params}]}.

@version: v0.1.0
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

from .sketch_model import Primitive, PrimitiveKind, Provenance, SketchRecord

logger = logging.getLogger(__name__)

FORMAT_NAME = 'sketch-jsonl'
FORMAT_VERSION = 1


class SketchFormatError(ValueError):
    """Raised for malformed or unsupported sketch files"""
    pass


def record_to_dict(rec: SketchRecord) -> Dict[str, Any]:
    return {
        'id': rec.id,
        'provenance': rec.provenance.value,
        'primitives': [
            {'kind': p.kind.name, 'construction': p.construction, 'params': list(p.params)}
            for p in rec.primitives
        ],
    }


def record_from_dict(data: Dict[str, Any]) -> SketchRecord:
    """
    Build a record from its JSON form

    Raises:
        SketchFormatError: If a field is missing or invalid
    """
    try:
        primitives = [
            Primitive(PrimitiveKind[p['kind']], bool(p.get('construction', False)), tuple(p['params']))
            for p in data['primitives']
        ]
        return SketchRecord(str(data['id']), primitives,
                            Provenance(data.get('provenance', Provenance.IMPORTED.value)))
    except (KeyError, TypeError, ValueError) as e:
        raise SketchFormatError(f"invalid record {data.get('id', '?') if isinstance(data, dict) else '?'}: {e}") from e


def write_records(path: Union[str, Path], records: Iterable[SketchRecord]) -> int:
    """
    Write records to a JSON-lines file

    Returns:
        int: number of records written
    """
    path = Path(path)
    count = 0
    with path.open('w', encoding='utf-8') as f:
        f.write(json.dumps({'format': FORMAT_NAME, 'version': FORMAT_VERSION}) + '\n')
        for rec in records:
            f.write(json.dumps(record_to_dict(rec), separators=(',', ':')) + '\n')
            count += 1
    logger.debug("wrote %d records to %s", count, path)
    return count


def read_records(path: Union[str, Path]) -> List[SketchRecord]:
    """
    Read records from a JSON-lines file

    Raises:
        SketchFormatError: If the header is missing, the version is unsupported
            or a line does not parse
    """
    path = Path(path)
    records = []
    with path.open('r', encoding='utf-8') as f:
        header_line = f.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as e:
            raise SketchFormatError(f"{path}: missing header line") from e
        if not isinstance(header, dict) or header.get('format') != FORMAT_NAME:
            raise SketchFormatError(f"{path}: not a {FORMAT_NAME} file")
        if header.get('version') != FORMAT_VERSION:
            raise SketchFormatError(f"{path}: unsupported version {header.get('version')}, "
                                    f"expected {FORMAT_VERSION}")
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise SketchFormatError(f"{path}:{lineno}: {e}") from e
            records.append(record_from_dict(data))
    logger.debug("read %d records from %s", len(records), path)
    return records
