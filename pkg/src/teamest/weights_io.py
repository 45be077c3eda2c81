"""Precomputed weight schedules on disk.

A schedule file is a zip archive with a ``header.json`` entry and one
``.npy`` entry per matrix, keyed ``agent{i}/t{t}/{name}`` (time-varying
weights) or ``agent{i}/{name}`` (SDOL). Entries carry a fixed timestamp so
writing the same schedule twice gives identical bytes. The header embeds
the topology and world model, so a file is self-describing.
"""
from __future__ import annotations

import io
import json
import zipfile
import zlib

import numpy as np

from .baseline import CombinerMatrix
from .errors import ScheduleFormatError
from .model import WorldModel
from .oedol import OedolSchedule
from .oracle import OdolSchedule, odol_schedule
from .sdol import AgentWeights, SdolWeights
from .topology import NetworkTopology

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)
OEDOL_FIELDS = ("A", "B", "C", "D", "Tc", "Hbar", "G", "cov")
SDOL_FIELDS = ("A", "B", "C", "D", "N", "L", "K", "M", "sigma_xi", "Hhat", "sigma_hat_n",
               "Hbar", "sigma_bar_n")


def _put(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def _npy(a) -> bytes:
    buf = io.BytesIO()
    # keep Fortran layout when present: BLAS rounding depends on it
    np.lib.format.write_array(buf, np.asarray(a, dtype=float), allow_pickle=False)
    return buf.getvalue()


def _header(algorithm: str, topo: NetworkTopology, model: WorldModel, **extra) -> dict:
    return {"format": FORMAT_VERSION, "algorithm": algorithm, "m": model.m, "p": model.p,
            "q": model.q, "edges": [list(e) for e in topo.sorted_edges()],
            "model": model.to_dict(), "fingerprint": model.fingerprint(), **extra}


def save_schedule(schedule, path) -> None:
    """Write an ODOL, OEDOL or SDOL schedule to ``path``."""
    entries = {}
    if isinstance(schedule, OdolSchedule):
        header = _header("odol", schedule.topo, schedule.model, T=schedule.T)
        for i in schedule.topo.agents:
            for t in range(1, schedule.T + 1):
                entries[f"agent{i}/t{t}/K"] = schedule.gains[i][t]
            entries[f"agent{i}/cov"] = schedule.cov[i - 1]
    elif isinstance(schedule, OedolSchedule):
        header = _header("oedol", schedule.tree, schedule.model, T=schedule.T)
        for i in schedule.tree.agents:
            for t in range(schedule.T + 1):
                for f in OEDOL_FIELDS:
                    entries[f"agent{i}/t{t}/{f}"] = getattr(schedule, f)[i][t]
    elif isinstance(schedule, SdolWeights):
        header = _header("sdol", schedule.topo, schedule.model, window_depth=schedule.window)
        entries["M"] = schedule.M
        agents = {}
        for i in schedule.topo.agents:
            w = schedule[i]
            for f in SDOL_FIELDS:
                entries[f"agent{i}/{f}"] = getattr(w, f)
            agents[str(i)] = {"extracted": [list(e) for e in w.extracted],
                              "received": [list(e) for e in w.received],
                              "condition": w.condition}
        header["agents"] = agents
    elif isinstance(schedule, CombinerMatrix):
        raise ScheduleFormatError("D-RLS weights are not cached; they are cheap to rebuild")
    else:
        raise ScheduleFormatError(f"cannot serialize {type(schedule).__name__}")
    with zipfile.ZipFile(path, "w") as zf:
        _put(zf, "header.json", json.dumps(header, sort_keys=True).encode())
        for name in sorted(entries):
            _put(zf, name + ".npy", _npy(entries[name]))


def read_header(path) -> dict:
    try:
        with zipfile.ZipFile(path) as zf:
            return json.loads(zf.read("header.json"))
    except (OSError, KeyError, zipfile.BadZipFile, ValueError) as exc:
        raise ScheduleFormatError(f"{path}: not a schedule file ({exc})") from None


def load_schedule(path):
    """Inverse of :func:`save_schedule`. Any damage raises :class:`ScheduleFormatError`."""
    try:
        with zipfile.ZipFile(path) as zf:
            if zf.testzip() is not None:
                raise ScheduleFormatError(f"{path}: checksum mismatch")
            header = json.loads(zf.read("header.json"))
            arrays = {n[:-4]: np.lib.format.read_array(io.BytesIO(zf.read(n)), allow_pickle=False)
                      for n in zf.namelist() if n.endswith(".npy")}
        return _rebuild(header, arrays)
    except ScheduleFormatError:
        raise
    except (OSError, KeyError, IndexError, TypeError, ValueError, zipfile.BadZipFile,
            EOFError, zlib.error) as exc:
        raise ScheduleFormatError(f"{path}: corrupted schedule file ({exc})") from None


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def _rebuild(header: dict, arrays: dict):
    if header.get("format") != FORMAT_VERSION:
        raise ScheduleFormatError(f"unsupported format version {header.get('format')!r}")
    model = WorldModel.from_dict(header["model"])
    if model.fingerprint() != header["fingerprint"]:
        raise ScheduleFormatError("model does not match its fingerprint")
    dims = (header.get("m"), header.get("p"), header.get("q"))
    if dims != (model.m, model.p, model.q):
        raise ScheduleFormatError(f"header dimensions {dims} disagree with the model "
                                  f"{(model.m, model.p, model.q)}")
    topo = NetworkTopology.from_edges(int(header["m"]), [tuple(e) for e in header["edges"]])
    alg = header["algorithm"]
    p, q = model.p, model.q
    if alg == "odol":
        T = int(header["T"])
        # agent order, hop tables and block sizes are cheap and follow from the topology
        ref = odol_schedule(topo, model, 1)
        gains = [()]
        cov = np.empty((model.m, T + 1, p, p))
        for i in topo.agents:
            Ks = [None]
            for t in range(1, T + 1):
                K = arrays[f"agent{i}/t{t}/K"]
                n = sum(1 for k in ref.order_hops[i] if k <= t - 1)
                _expect(K, (p, n * q), f"agent{i}/t{t}/K")
                Ks.append(K)
            gains.append(tuple(Ks))
            cov[i - 1] = _expect(arrays[f"agent{i}/cov"], (T + 1, p, p), f"agent{i}/cov")
        sizes = [()] + [tuple(sum(1 for k in ref.order_hops[i] if k <= t - 1)
                              for t in range(T + 1)) for i in topo.agents]
        return OdolSchedule(topo, model, T, ref.order, ref.order_hops, tuple(sizes),
                            tuple(gains), _frozen(cov))
    if alg == "oedol":
        T = int(header["T"])
        fields = {f: [()] for f in OEDOL_FIELDS}
        for i in topo.agents:
            d = topo.degree(i)
            shapes = {"A": (p, p), "B": (p, q), "C": (p, p * d), "D": (p * d, p),
                      "Tc": (p * d, p * d), "Hbar": (p * d, p), "G": (d, p, p), "cov": (p, p)}
            for f in OEDOL_FIELDS:
                fields[f].append(tuple(_expect(arrays[f"agent{i}/t{t}/{f}"], shapes[f],
                                               f"agent{i}/t{t}/{f}") for t in range(T + 1)))
        return OedolSchedule(topo, model, T, *(tuple(fields[f]) for f in OEDOL_FIELDS))
    if alg == "sdol":
        window = int(header["window_depth"])
        agents = [None]
        for i in topo.agents:
            meta = header["agents"][str(i)]
            ext = tuple(tuple(e) for e in meta["extracted"])
            rec = tuple(tuple(e) for e in meta["received"])
            vals = {f: arrays[f"agent{i}/{f}"] for f in SDOL_FIELDS}
            _expect(vals["A"], (p, p), f"agent{i}/A")
            _expect(vals["B"], (p, q), f"agent{i}/B")
            _expect(vals["C"], (p, q * len(rec)), f"agent{i}/C")
            _expect(vals["D"], (p, q * model.m), f"agent{i}/D")
            agents.append(AgentWeights(**vals, extracted=ext, received=rec,
                                       condition=float(meta["condition"])))
        M = _expect(arrays["M"], (p, q * model.m), "M")
        return SdolWeights(topo, model, window, M, tuple(agents))
    raise ScheduleFormatError(f"unknown algorithm {alg!r} in header")


def _expect(a: np.ndarray, shape: tuple, name: str) -> np.ndarray:
    if a.shape != tuple(shape):
        raise ScheduleFormatError(f"entry {name} has shape {a.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(a)):
        raise ScheduleFormatError(f"entry {name} holds non-finite values")
    return a


def schedule_identity(schedule) -> tuple:
    """``(algorithm, edges, model fingerprint, horizon or window)`` of a schedule."""
    if isinstance(schedule, OdolSchedule):
        return ("odol", tuple(schedule.topo.sorted_edges()), schedule.model.fingerprint(),
                schedule.T)
    if isinstance(schedule, OedolSchedule):
        return ("oedol", tuple(schedule.tree.sorted_edges()), schedule.model.fingerprint(),
                schedule.T)
    if isinstance(schedule, SdolWeights):
        return ("sdol", tuple(schedule.topo.sorted_edges()), schedule.model.fingerprint(),
                schedule.window)
    raise ScheduleFormatError(f"unknown schedule type {type(schedule).__name__}")


__all__ = ["save_schedule", "load_schedule", "read_header", "schedule_identity"]
