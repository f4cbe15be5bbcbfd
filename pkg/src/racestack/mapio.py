"""Map and raceline file IO.

Maps are an 8-bit binary PGM image with a YAML sidecar in the usual robotics
map-server layout. Racelines are semicolon-separated CSV files.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import yaml
from PIL import Image

from racestack.errors import ConfigError, InvalidTrackError
from racestack.track import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, Pose2D, Raceline

log = logging.getLogger(__name__)

RACELINE_HEADER = ("s", "x", "y", "psi", "kappa", "v", "d_left", "d_right")


def load_map(yaml_path: str | Path) -> OccupancyGrid:
    yaml_path = Path(yaml_path)
    try:
        meta = yaml.safe_load(yaml_path.read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read map metadata {yaml_path}: {exc}") from exc
    for key in ("image", "resolution", "origin"):
        if key not in meta:
            raise ConfigError(f"map metadata {yaml_path} lacks '{key}'")
    image_path = Path(meta["image"])
    if not image_path.is_absolute():
        image_path = yaml_path.parent / image_path
    try:
        img = np.asarray(Image.open(image_path).convert("L"), dtype=float)
    except OSError as exc:
        raise ConfigError(f"cannot read map image {image_path}: {exc}") from exc
    occ_t = float(meta.get("occupied_thresh", 0.65))
    free_t = float(meta.get("free_thresh", 0.196))
    p = img / 255.0 if meta.get("negate", 0) else (255.0 - img) / 255.0
    cells = np.full(p.shape, UNKNOWN, dtype=np.int8)
    cells[p >= occ_t] = OCCUPIED
    cells[p <= free_t] = FREE
    # image row 0 is the top of the map; grid row 0 sits at the origin
    cells = cells[::-1]
    ox, oy, opsi = (list(meta["origin"]) + [0.0, 0.0, 0.0])[:3]
    h, w = cells.shape
    return OccupancyGrid(float(meta["resolution"]), Pose2D(ox, oy, opsi), w, h, cells)


def save_map(grid: OccupancyGrid, yaml_path: str | Path) -> None:
    yaml_path = Path(yaml_path)
    pgm_path = yaml_path.with_suffix(".pgm")
    img = np.full(grid.cells.shape, 205, dtype=np.uint8)
    img[grid.cells == FREE] = 254
    img[grid.cells == OCCUPIED] = 0
    Image.fromarray(img[::-1]).save(pgm_path, format="PPM")
    meta = {
        "image": pgm_path.name,
        "resolution": float(grid.resolution),
        "origin": [float(grid.origin.x), float(grid.origin.y), float(grid.origin.psi)],
        "negate": 0,
        "occupied_thresh": 0.65,
        "free_thresh": 0.196,
    }
    yaml_path.write_text(yaml.safe_dump(meta, sort_keys=False))


def load_raceline(csv_path: str | Path, corridor_band: float | None = None) -> Raceline:
    csv_path = Path(csv_path)
    try:
        with open(csv_path) as fh:
            header = fh.readline().strip().split(";")
            data = np.loadtxt(fh, delimiter=";", ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read raceline {csv_path}: {exc}") from exc
    if tuple(h.strip() for h in header) != RACELINE_HEADER:
        raise ConfigError(f"raceline header must be {';'.join(RACELINE_HEADER)}")
    cols = dict(zip(RACELINE_HEADER, data.T))
    s = cols.pop("s")
    if len(s) < 3:
        raise InvalidTrackError("raceline needs at least 3 points")
    step = float(np.mean(np.diff(s)))
    if np.max(np.abs(np.diff(s) - step)) > 1e-6:
        raise InvalidTrackError("raceline s column is not uniformly spaced")
    if abs(s[0]) > 1e-9:
        raise InvalidTrackError("raceline s must start at 0")
    kw = {} if corridor_band is None else {"corridor_band": corridor_band}
    return Raceline(step=step, **cols, **kw)


def save_raceline(raceline: Raceline, csv_path: str | Path) -> None:
    data = np.column_stack([raceline.s, raceline.x, raceline.y, raceline.psi, raceline.kappa,
                            raceline.v, raceline.d_left, raceline.d_right])
    np.savetxt(csv_path, data, delimiter=";", header=";".join(RACELINE_HEADER),
               comments="", fmt="%.9f")
