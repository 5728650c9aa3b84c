"""
File Handling Utilities

Input validation for observation files, output directory management, run
metadata and the JSON/CSV writers used by the command line and the
experiment harness.
"""

import csv
import json
import os
import platform
import sys
from datetime import datetime
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple
import logging

import numpy as np
import psutil

from config import ConfigError

logger = logging.getLogger(__name__)

OBSERVATION_COLUMNS = ("s_re", "s_im", "u_re", "u_im")
SPIKE_COLUMNS = ("series", "x_re", "x_im", "w_re", "w_im")


class DataFileValidator:
    """Validates observation CSV files before they are parsed."""

    SUPPORTED_FORMATS = {
        '.csv': 'Comma-separated values',
        '.txt': 'Comma-separated values',
    }

    @classmethod
    def is_supported_format(cls, file_path: Path) -> bool:
        return file_path.suffix.lower() in cls.SUPPORTED_FORMATS

    @classmethod
    def validate_input_file(cls, file_path: Path) -> Dict:
        """Check existence, readability, format and header of an observation file."""
        result = {
            'valid': False,
            'exists': False,
            'readable': False,
            'supported_format': False,
            'file_size': 0,
            'errors': []
        }

        if not file_path.exists():
            result['errors'].append(f"File does not exist: {file_path}")
            return result
        result['exists'] = True

        if not os.access(file_path, os.R_OK):
            result['errors'].append(f"File is not readable: {file_path}")
            return result
        result['readable'] = True
        result['file_size'] = file_path.stat().st_size

        result['supported_format'] = cls.is_supported_format(file_path)
        if not result['supported_format']:
            result['errors'].append(
                f"Unsupported format: {file_path.suffix}. "
                f"Supported formats: {list(cls.SUPPORTED_FORMATS.keys())}"
            )
            return result

        with open(file_path, newline='', encoding='utf-8') as f:
            header = next(csv.reader(f), [])
        missing = [c for c in OBSERVATION_COLUMNS if c not in [h.strip() for h in header]]
        if missing:
            result['errors'].append(f"Missing columns {missing}; header must contain {list(OBSERVATION_COLUMNS)}")
            return result

        result['valid'] = True
        return result


def read_observations_csv(file_path: Path) -> Tuple[np.ndarray, np.ndarray]:
    """
    Read sample locations and values from a CSV with columns s_re, s_im, u_re, u_im.

    Raises:
        ConfigError: if the file is missing, malformed or empty.
    """
    file_path = Path(file_path)
    check = DataFileValidator.validate_input_file(file_path)
    if not check['valid']:
        raise ConfigError("; ".join(check['errors']))

    s, u = [], []
    with open(file_path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f, skipinitialspace=True)
        for line, row in enumerate(reader, start=2):
            try:
                s.append(complex(float(row['s_re']), float(row['s_im'])))
                u.append(complex(float(row['u_re']), float(row['u_im'])))
            except (TypeError, ValueError) as e:
                raise ConfigError(f"{file_path}:{line}: cannot parse row {row}: {e}") from e
    if not s:
        raise ConfigError(f"{file_path} contains no observations")
    logger.info(f"Read {len(s)} observations from {file_path}")
    return np.array(s, dtype=np.complex128), np.array(u, dtype=np.complex128)


def write_observations_csv(file_path: Path, samples: np.ndarray, values: np.ndarray) -> Path:
    rows = [
        {'s_re': repr(float(s.real)), 's_im': repr(float(s.imag)),
         'u_re': repr(float(u.real)), 'u_im': repr(float(u.imag))}
        for s, u in zip(np.ravel(samples), np.ravel(values))
    ]
    return write_csv_rows(file_path, rows, OBSERVATION_COLUMNS)


class OutputManager:
    """Manages output directories for experiment runs."""

    @staticmethod
    def create_output_structure(base_dir: Path, run_name: str) -> Path:
        """Timestamped run folder under base_dir."""
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        clean_name = "".join(c for c in run_name if c.isalnum() or c in ('-', '_')).rstrip()
        output_dir = Path(base_dir) / f"{clean_name}_{timestamp}"
        output_dir.mkdir(parents=True, exist_ok=True)
        return output_dir

    @staticmethod
    def prepare_output_directory(output_path: Path) -> Dict:
        """Create the directory if needed and check that it is writable."""
        result = {
            'success': False,
            'path': output_path,
            'created': False,
            'writable': False,
            'errors': []
        }

        try:
            if not output_path.exists():
                output_path.mkdir(parents=True, exist_ok=True)
                result['created'] = True
                logger.info(f"Created output directory: {output_path}")

            test_file = output_path / ".write_test"
            try:
                test_file.touch()
                test_file.unlink()
                result['writable'] = True
            except OSError as e:
                result['errors'].append(f"Directory not writable: {e}")
                return result

            result['success'] = True

        except OSError as e:
            result['errors'].append(f"Error preparing output directory: {e}")

        return result


class MetadataManager:
    """Run metadata, kept apart from the deterministic report."""

    @staticmethod
    def create_run_metadata(command: str, output_dir: Path, duration: float, extra: Optional[Dict] = None) -> Dict:
        memory = psutil.virtual_memory()
        metadata = {
            'run_info': {
                'timestamp': datetime.now().isoformat(),
                'command': command,
                'output_directory': str(output_dir),
                'duration_seconds': duration,
                'duration_readable': format_duration(duration),
            },
            'system_info': {
                'python_version': get_python_version(),
                'platform': get_platform_info(),
                'cpu_count': psutil.cpu_count(logical=True),
                'memory_total_gb': round(memory.total / 1024 ** 3, 2),
                'memory_available_gb': round(memory.available / 1024 ** 3, 2),
            }
        }
        if extra:
            metadata['run_info'].update(extra)
        return metadata

    @staticmethod
    def save_metadata(metadata: Dict, output_dir: Path) -> Path:
        metadata_file = Path(output_dir) / "run_metadata.json"
        try:
            write_json(metadata_file, metadata)
            logger.info(f"Metadata saved to: {metadata_file}")
            return metadata_file
        except OSError as e:
            logger.error(f"Failed to save metadata: {e}")
            raise


def write_json(file_path: Path, data: Dict) -> Path:
    """Strict JSON with sorted keys so equal data give equal bytes."""
    file_path = Path(file_path)
    with open(file_path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, allow_nan=False)
        f.write("\n")
    return file_path


def write_csv_rows(file_path: Path, rows: Iterable[Dict], columns: Sequence[str]) -> Path:
    file_path = Path(file_path)
    with open(file_path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction='ignore', lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _csv_value(row.get(c)) for c in columns})
    return file_path


def spike_rows(series: str, locations: np.ndarray, weights: np.ndarray) -> List[Dict]:
    """Rows of a spike table (exact / raw / refined series)."""
    return [
        {'series': series, 'x_re': float(x.real), 'x_im': float(x.imag), 'w_re': float(w.real), 'w_im': float(w.imag)}
        for x, w in zip(np.ravel(locations), np.ravel(weights))
    ]


def _csv_value(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def get_python_version() -> str:
    return f"{sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}"


def get_platform_info() -> Dict:
    return {
        'system': platform.system(),
        'release': platform.release(),
        'machine': platform.machine(),
        'processor': platform.processor()
    }


def format_duration(seconds: float) -> str:
    """Format duration in human-readable format."""
    if seconds < 60:
        return f"{seconds:.1f} seconds"
    elif seconds < 3600:
        minutes = seconds / 60
        return f"{minutes:.1f} minutes"
    else:
        hours = seconds / 3600
        return f"{hours:.1f} hours"
