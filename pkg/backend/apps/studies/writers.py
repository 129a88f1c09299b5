"""
Atomic CSV, JSON and SVG output.

Every file is written to a temporary sibling first and moved into place
with os.replace, so a reader never sees a partial artifact.
"""
import csv
import io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union

import matplotlib

matplotlib.use('Agg')

import numpy as np  # noqa: E402
import structlog  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

logger = structlog.get_logger(__name__)

SVG_HASHSALT = 'agebif'
PathLike = Union[str, Path]


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), '.17g')
    if value is None:
        return ''
    return str(value)


def _atomic_write(path: PathLike, payload: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, 'wb') as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    logger.info("artifact_written", path=str(path), size=len(payload))
    return path


def write_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_cell(cell) for cell in row])
    return _atomic_write(path, buffer.getvalue().encode('utf-8'))


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_json_default)


def write_json(path: PathLike, data: Any) -> Path:
    return _atomic_write(path, (dumps(data) + '\n').encode('utf-8'))


def write_svg(path: PathLike, figure: Figure) -> Path:
    buffer = io.BytesIO()
    with matplotlib.rc_context({'svg.hashsalt': SVG_HASHSALT, 'svg.fonttype': 'path'}):
        figure.savefig(buffer, format='svg', metadata={'Date': None})
    return _atomic_write(path, buffer.getvalue())


def bifurcation_diagram(records: List, mu_label: str, overlays: Optional[List[Dict]] = None,
                        title: str = '') -> Figure:
    """mu horizontally, ||u|| and ||v|| vertically, semi-trivial norms overlaid."""
    figure = Figure(figsize=(6.4, 4.8))
    ax = figure.add_subplot(1, 1, 1)
    mu = [record.mu for record in records]
    ax.plot(mu, [record.norm_u for record in records], marker='.', lw=1.2, label='||u||')
    ax.plot(mu, [record.norm_v for record in records], marker='.', lw=1.2, label='||v||')
    for overlay in overlays or []:
        ax.plot(overlay['mu'], overlay['norm'], ls='--', lw=1.0, label=overlay['label'])
    ax.set_xlabel(mu_label)
    ax.set_ylabel('L2 norm over age x space')
    if title:
        ax.set_title(title)
    ax.legend(loc='best')
    ax.grid(True, alpha=0.3)
    return figure


def norm_series(rows: List[Dict], title: str = '') -> Figure:
    """||u||, ||v|| and the distance to the target against time."""
    figure = Figure(figsize=(6.4, 4.8))
    ax = figure.add_subplot(1, 1, 1)
    t = [row['t'] for row in rows]
    ax.plot(t, [row['norm_u'] for row in rows], lw=1.2, label='||u||')
    ax.plot(t, [row['norm_v'] for row in rows], lw=1.2, label='||v||')
    ax.plot(t, [row['distance'] for row in rows], lw=1.0, ls=':', label='distance to target')
    ax.set_xlabel('t')
    ax.set_ylabel('L2 norm over age x space')
    if title:
        ax.set_title(title)
    ax.legend(loc='best')
    ax.grid(True, alpha=0.3)
    return figure
