"""Trace rows, CSV trace/snapshot files and PPM density maps."""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MPD3Error, ParseError

TRACE_HEADER = (
    "step", "worker", "n_particles", "t_md", "t_emd", "t_comm", "t_wait",
    "t_elapsed", "P", "W", "imbalance", "migrations", "energy",
)
SNAPSHOT_HEADER = ("id", "x", "y", "vx", "vy", "owner")


@dataclass
class TraceRow:
    """All workers' timings for one step; written as one CSV line per worker."""

    step: int
    n_particles: np.ndarray
    t_md: np.ndarray
    t_emd: np.ndarray
    t_comm: np.ndarray
    t_wait: np.ndarray
    t_elapsed: np.ndarray
    P: np.ndarray
    W: np.ndarray
    imbalance: float
    migrations: int
    energy: float

    @property
    def n_workers(self):
        return len(self.n_particles)

    def lines(self):
        for k in range(self.n_workers):
            yield (
                self.step, k, int(self.n_particles[k]),
                _fmt(self.t_md[k]), _fmt(self.t_emd[k]), _fmt(self.t_comm[k]), _fmt(self.t_wait[k]),
                _fmt(self.t_elapsed[k]), _fmt(self.P[k]), _fmt(self.W[k]),
                _fmt(self.imbalance), int(self.migrations), _fmt(self.energy),
            )


def _fmt(x):
    return repr(float(x))


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise MPD3Error(f"cannot write {path}: {exc}") from exc


def write_trace(trace, path):
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for row in trace:
            writer.writerows(row.lines())


def read_trace(path):
    """Parse a trace CSV back into :class:`TraceRow` objects."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            records = list(reader)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    if header is None or tuple(header) != TRACE_HEADER:
        raise ParseError(f"{path}: header does not match {','.join(TRACE_HEADER)}")
    by_step = {}
    for lineno, rec in enumerate(records, start=2):
        if len(rec) != len(TRACE_HEADER):
            raise ParseError(f"{path}:{lineno}: expected {len(TRACE_HEADER)} fields, got {len(rec)}")
        try:
            step, worker, n = int(rec[0]), int(rec[1]), int(rec[2])
            vals = [float(v) for v in rec[3:10]]
            imb, mig, energy = float(rec[10]), int(rec[11]), float(rec[12])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        by_step.setdefault(step, []).append((worker, n, vals, imb, mig, energy))
    trace = []
    for step in sorted(by_step):
        entries = sorted(by_step[step], key=lambda e: e[0])
        if [e[0] for e in entries] != list(range(len(entries))):
            raise ParseError(f"{path}: step {step} does not list workers 0..{len(entries) - 1}")
        cols = np.array([e[2] for e in entries])
        trace.append(TraceRow(
            step, np.array([e[1] for e in entries]), *cols.T,
            imbalance=entries[0][3], migrations=entries[0][4], energy=entries[0][5],
        ))
    return trace


def write_snapshot(state, path):
    """CSV of ``id,x,y,vx,vy,owner`` for every particle of a run state."""
    particles, owner = state.particles, state.decomposition.owner
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SNAPSHOT_HEADER)
        for k in np.argsort(particles.ids, kind="stable"):
            writer.writerow((
                int(particles.ids[k]), _fmt(particles.pos[k, 0]), _fmt(particles.pos[k, 1]),
                _fmt(particles.vel[k, 0]), _fmt(particles.vel[k, 1]), int(owner[k]),
            ))


def density_image(pos, bounds, bins=(128, 128)):
    """Grayscale image (rows top-down) of a 2D particle histogram; denser is lighter."""
    xmin, xmax, ymin, ymax = bounds
    hist, _, _ = np.histogram2d(pos[:, 0], pos[:, 1], bins=bins, range=((xmin, xmax), (ymin, ymax)))
    peak = hist.max()
    gray = np.zeros_like(hist) if peak == 0 else np.round(255.0 * hist / peak)
    return gray.T[::-1].astype(np.uint8)


def render_density(state, path, bins=(128, 128)):
    """Binary PPM (P6) mass-density map of a run state."""
    gray = density_image(state.particles.pos, state.decomposition.domain_bounds, bins)
    h, w = gray.shape
    rgb = np.repeat(gray[:, :, None], 3, axis=2)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())
    except OSError as exc:
        raise MPD3Error(f"cannot write {path}: {exc}") from exc


def read_ppm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P6":
        raise ParseError(f"{path}: not a binary PPM")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + w * h * 3], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


def summarize(trace):
    """Mean elapsed time per step and final imbalance of a trace."""
    if not trace:
        return {"steps": 0, "mean_elapsed": float("nan"), "final_imbalance": float("nan")}
    elapsed = np.array([row.t_elapsed.max() for row in trace])
    return {
        "steps": len(trace),
        "mean_elapsed": float(elapsed.mean()),
        "final_imbalance": float(trace[-1].imbalance),
    }
