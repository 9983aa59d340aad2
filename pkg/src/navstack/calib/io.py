"""Point cloud files (ASCII XYZ, PCD) and the calibration text format.

Calibration file: three lines, each four numbers separated by single
spaces, formatted with ``%.17g`` and terminated by ``\\n``. Together they are
the row-major 3x4 matrix ``[R | t]`` mapping sensor points into the base frame.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import InvalidArgument
from .cloud import PointCloud3D, RigidTransform3D

_PCD_TYPES = {("F", 4): "<f4", ("F", 8): "<f8", ("I", 1): "<i1", ("I", 2): "<i2", ("I", 4): "<i4",
              ("I", 8): "<i8", ("U", 1): "<u1", ("U", 2): "<u2", ("U", 4): "<u4", ("U", 8): "<u8"}


def read_xyz(path, sensor_id: str | None = None) -> PointCloud3D:
    path = Path(path)
    try:
        pts = np.loadtxt(path, dtype=float, ndmin=2, usecols=(0, 1, 2))
    except (OSError, ValueError) as exc:
        raise InvalidArgument(f"{path}: cannot read XYZ cloud ({exc})") from exc
    return PointCloud3D(pts.reshape(-1, 3), sensor_id if sensor_id is not None else path.stem)


def _xyz_lines(points):
    # shortest repr that round-trips each double exactly
    return (f"{float(x)!r} {float(y)!r} {float(z)!r}\n" for x, y, z in points)


def write_xyz(path, cloud: PointCloud3D) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("".join(_xyz_lines(cloud.points)))


def _parse_header(f, path):
    header = {}
    while True:
        line = f.readline()
        if not line:
            raise InvalidArgument(f"{path}: PCD header has no DATA line")
        text = line.decode("ascii", "replace").strip()
        if not text or text.startswith("#"):
            continue
        key, *vals = text.split()
        header[key.upper()] = vals
        if key.upper() == "DATA":
            return header


def read_pcd(path, sensor_id: str | None = None) -> PointCloud3D:
    """PCD v0.7 with ``DATA ascii`` or ``DATA binary`` and fields including x, y, z."""
    path = Path(path)
    with open(path, "rb") as f:
        h = _parse_header(f, path)
        fields = h.get("FIELDS", [])
        if not {"x", "y", "z"} <= set(fields):
            raise InvalidArgument(f"{path}: PCD needs x, y and z fields")
        n = len(fields)
        sizes = [int(v) for v in h.get("SIZE", ["4"] * n)]
        types = h.get("TYPE", ["F"] * n)
        counts = [int(v) for v in h.get("COUNT", ["1"] * n)]
        npts = int(h.get("POINTS", h.get("WIDTH", ["0"]))[0])
        mode = h["DATA"][0].lower()
        if mode == "ascii":
            rows = np.loadtxt(f, dtype=float, ndmin=2) if npts else np.zeros((0, sum(counts)))
            cols = np.cumsum([0] + counts)
            pts = np.column_stack([rows[:, cols[fields.index(k)]] for k in "xyz"]) if len(rows) else np.zeros((0, 3))
        elif mode == "binary":
            try:
                dt = np.dtype([(name, _PCD_TYPES[(t.upper(), s)], (c,)) for name, s, t, c in
                               zip(fields, sizes, types, counts)])
            except KeyError as exc:
                raise InvalidArgument(f"{path}: unsupported PCD field type {exc}") from exc
            raw = f.read(dt.itemsize * npts)
            if len(raw) < dt.itemsize * npts:
                raise InvalidArgument(f"{path}: truncated binary PCD data")
            arr = np.frombuffer(raw, dtype=dt, count=npts)
            pts = np.column_stack([arr[k][:, 0].astype(float) for k in "xyz"])
        else:
            raise InvalidArgument(f"{path}: unsupported PCD data mode {mode!r}")
    return PointCloud3D(pts, sensor_id if sensor_id is not None else path.stem)


def write_pcd(path, cloud: PointCloud3D, binary: bool = False) -> None:
    """Write x, y, z as 8-byte floats so values round-trip exactly."""
    n = len(cloud)
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 8 8 8\nTYPE F F F\n"
        f"COUNT 1 1 1\nWIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\n"
        f"DATA {'binary' if binary else 'ascii'}\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(np.ascontiguousarray(cloud.points, dtype="<f8").tobytes())
        else:
            f.write("".join(_xyz_lines(cloud.points)).encode("ascii"))


def read_cloud(path, sensor_id: str | None = None) -> PointCloud3D:
    path = Path(path)
    if path.suffix.lower() == ".pcd":
        return read_pcd(path, sensor_id)
    return read_xyz(path, sensor_id)


def format_calibration(T: RigidTransform3D) -> str:
    m = T.matrix()[:3]
    return "".join(" ".join("%.17g" % v for v in row) + "\n" for row in m)


def write_calibration(path, T: RigidTransform3D) -> None:
    Path(path).write_bytes(format_calibration(T).encode("ascii"))


def read_calibration(path) -> RigidTransform3D:
    path = Path(path)
    try:
        vals = [float(v) for v in path.read_text(encoding="ascii").split()]
    except (OSError, ValueError) as exc:
        raise InvalidArgument(f"{path}: cannot read calibration ({exc})") from exc
    if len(vals) != 12:
        raise InvalidArgument(f"{path}: expected 12 numbers, found {len(vals)}")
    m = np.eye(4)
    m[:3] = np.array(vals).reshape(3, 4)
    return RigidTransform3D.from_matrix(m)
