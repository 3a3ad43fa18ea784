"""
Report writing.

``report.json`` is deterministic for a given config: keys sorted, no
timestamps, NaN written as null. Timestamps and host details go to
``run_info.json``.
"""

import json
import logging
import math
import os
import platform
import sys
from datetime import datetime, timezone

import numpy as np

from src import __version__
from src.settings import worker_count

from .plots import draw

logger = logging.getLogger(__name__)


def clean(value):
    """JSON-safe copy: numpy scalars to Python, tuples to lists, NaN/inf to None."""
    if isinstance(value, dict):
        return {str(k): clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return clean(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, (np.complexfloating, complex)):
        return [clean(value.real), clean(value.imag)]
    return value


def build_report(config, settings, results):
    return {
        'magdecay_version': __version__,
        'config_hash': config.digest,
        'config': config.to_dict(),
        'grid': config.grid.info(),
        'settings': settings.info(),
        'experiments': {
            result.name: {'passed': result.passed, 'summary': result.summary} for result in results
        },
    }


def write_series(path, t, values):
    np.savetxt(path, np.column_stack([t, values]), delimiter=',', header='t,value', comments='')


def write_outputs(out_dir, config, settings, results, plots=False, started=None, argv=None):
    """Write report.json, run_info.json, the CSV series, artifacts and (optionally) plots."""
    os.makedirs(out_dir, exist_ok=True)
    report = clean(build_report(config, settings, results))
    with open(os.path.join(out_dir, 'report.json'), 'w', encoding='utf-8') as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write('\n')

    for result in results:
        for name, (t, values) in result.series.items():
            write_series(os.path.join(out_dir, f"{name}.csv"), t, values)
        for prefix, artifact in result.artifacts.items():
            artifact.save(os.path.join(out_dir, prefix))
        if plots:
            for filename, (kind, payload) in result.plots.items():
                draw(kind, payload, os.path.join(out_dir, filename))

    info = {
        'started': started.isoformat() if started else None,
        'finished': datetime.now(timezone.utc).isoformat(),
        'argv': list(argv) if argv is not None else sys.argv,
        'python': platform.python_version(),
        'platform': platform.platform(),
        'threads': worker_count(),
        'config_hash': config.digest,
    }
    with open(os.path.join(out_dir, 'run_info.json'), 'w', encoding='utf-8') as fh:
        json.dump(info, fh, indent=2, sort_keys=True)
    logger.info("wrote reports to %s", out_dir)
    return report
