"""Readers and writers for every file the CLI consumes or produces."""

import csv
import math
import os
import struct
from enum import Enum
from typing import Any, Iterable, List, Optional, Sequence, Tuple

import jsonyx as json
import numpy as np
import regex

from .complex import Filtration
from .detector import DetectorModel
from .errors import FormatError
from .features import CORR_NAMES, FEATURE_NAMES, FEATURE_VERSION, FeatureVector
from .netlab import Dataset
from .persistence import CycleEdge, CycleRepresentative, Dot, PersistenceDiagram
from .schema import Activation, LayerSpec, ModelEntry, NetworkSpec, OutputRule
from .trace import ActivationTrace, CorrelationMatrix, Kernel

FORMAT_VERSIONS = {
    "network": "NET v1",
    "dataset": "csv x_1..x_d[,y]",
    "trace": "ATRC v1 (binary), csv",
    "correlation": "csv kernel header v1",
    "filtration": "csv dim,v0,v1,v2,filter",
    "diagram": "csv dim,birth,death",
    "cycles": "CYCLE/EDGE text v1",
    "features": f"csv v{FEATURE_VERSION}",
    "zoo": "csv net_path,label",
    "detector": "TDET v1",
}

TRACE_MAGIC = b"ATRC"
TRACE_VERSION = 1
DETECTOR_MAGIC = b"TDET"
DETECTOR_VERSION = 1

_NET_HEADER = regex.compile(r"^NET\s+v(?P<version>\d+)\s+layers=(?P<layers>\d+)\s+input=(?P<input>\d+)\s*$")
_LAYER_HEADER = regex.compile(r"^LAYER\s+(?P<rows>\d+)\s+(?P<cols>\d+)\s+activation=(?P<act>\w+)\s*$")
_OUTPUT_LINE = regex.compile(r"^OUTPUT\s+(?P<rule>\w+)\s*$")
_CYCLE_HEADER = regex.compile(r"^CYCLE\s+id=(?P<id>\d+)\s+birth=(?P<birth>\S+)\s+death=(?P<death>\S+)\s*$")
_EDGE_LINE = regex.compile(r"^EDGE\s+(?P<i>\d+)\s+(?P<j>\d+)\s+(?P<w>\S+)\s+(?P<li>-?\d+)\s+(?P<lj>-?\d+)\s*$")


def _fmt(value: float) -> str:
    return repr(float(value)) if math.isfinite(value) else ("inf" if value > 0 else "-inf")


def _parse_float(text: str, path: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise FormatError(f"not a number: {text!r}", path, line) from None


def _open_lines(path: str) -> List[str]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return [line.rstrip("\n") for line in f]
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", path) from None


def _csv_rows(path: str) -> List[List[str]]:
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            return [row for row in csv.reader(f) if row]
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", path) from None


def dumps_report(obj: Any) -> str:
    """jsonyx text of a report, with non-finite floats spelled as strings."""
    return json.dumps(_sanitize(obj), indent=2, indent_leaves=False, ensure_ascii=False)


def _sanitize(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return _sanitize(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        return value if math.isfinite(value) else _fmt(value)
    return obj


# networks


def write_network(net: NetworkSpec, path: str) -> None:
    lines = [f"NET v1 layers={len(net.layers)} input={net.input_dim}"]
    for layer in net.layers:
        lines.append(f"LAYER {layer.rows} {layer.cols} activation={layer.activation.value}")
        lines.extend(" ".join(_fmt(v) for v in row) for row in layer.weight)
        lines.append(" ".join(_fmt(v) for v in layer.bias))
    lines.append(f"OUTPUT {net.output_rule.value}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_network(path: str) -> NetworkSpec:
    lines = [(k + 1, line.strip()) for k, line in enumerate(_open_lines(path)) if line.strip()]
    if not lines:
        raise FormatError("empty network file", path)
    pos = 0

    def take() -> Tuple[int, str]:
        nonlocal pos
        if pos >= len(lines):
            raise FormatError("unexpected end of network file", path, lines[-1][0])
        item = lines[pos]
        pos += 1
        return item

    lineno, text = take()
    header = _NET_HEADER.match(text)
    if not header or header["version"] != "1":
        raise FormatError("expected header 'NET v1 layers=<L> input=<d>'", path, lineno)

    layers = []
    for k in range(int(header["layers"])):
        lineno, text = take()
        spec = _LAYER_HEADER.match(text)
        if not spec:
            raise FormatError(f"expected LAYER header for layer {k}", path, lineno)
        rows, cols = int(spec["rows"]), int(spec["cols"])
        try:
            activation = Activation(spec["act"])
        except ValueError:
            raise FormatError(f"unknown activation {spec['act']!r}", path, lineno) from None
        weight = []
        for _ in range(rows + 1):
            lineno, text = take()
            values = [_parse_float(tok, path, lineno) for tok in text.split()]
            expected = cols if len(weight) < rows else rows
            if len(values) != expected:
                raise FormatError(f"layer {k}: expected {expected} values, got {len(values)}", path, lineno)
            weight.append(values)
        try:
            layers.append(LayerSpec(weight=weight[:rows], bias=weight[rows], activation=activation))
        except ValueError as exc:
            raise FormatError(f"layer {k}: {exc}", path, lineno) from None

    lineno, text = take()
    output = _OUTPUT_LINE.match(text)
    if not output:
        raise FormatError("expected 'OUTPUT argmax|identity'", path, lineno)
    try:
        net = NetworkSpec(layers=layers, output_rule=OutputRule(output["rule"]))
    except ValueError as exc:
        raise FormatError(str(exc), path, lineno) from None
    if net.input_dim != int(header["input"]):
        raise FormatError(f"header declares input={header['input']} but layer 0 has {net.input_dim} columns", path, 1)
    return net


# datasets


def write_dataset(path: str, X, y=None) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        header = [f"x_{k + 1}" for k in range(X.shape[1])]
        if y is not None:
            header.append("y")
        writer.writerow(header)
        for k, row in enumerate(X):
            out = [_fmt(v) for v in row]
            if y is not None:
                out.append(str(int(y[k])))
            writer.writerow(out)


def read_dataset(path: str) -> Dataset:
    """Rows of x_1..x_d with an optional y column; ``y`` is None when absent."""
    rows = _csv_rows(path)
    if not rows:
        raise FormatError("empty dataset file", path)
    header = rows[0]
    has_y = header[-1] == "y"
    d = len(header) - int(has_y)
    if d < 1 or any(name != f"x_{k + 1}" for k, name in enumerate(header[:d])):
        raise FormatError("header must be x_1..x_d with an optional trailing y", path, 1)
    X = np.empty((len(rows) - 1, d))
    y = np.empty(len(rows) - 1, dtype=np.int64)
    for k, row in enumerate(rows[1:]):
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", path, k + 2)
        X[k] = [_parse_float(v, path, k + 2) for v in row[:d]]
        if has_y:
            y[k] = int(_parse_float(row[d], path, k + 2))
    return Dataset(X, y if has_y else None)


# activation traces


def write_trace(trace: ActivationTrace, path: str) -> None:
    n, m = trace.values.shape
    if path.endswith(".csv"):
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow([str(i) for i in trace.neuron_ids])
            writer.writerow([str(layer) for layer in trace.layer_of])
            writer.writerows([_fmt(v) for v in row] for row in trace.values)
        return
    with open(path, "wb") as f:
        f.write(struct.pack("<4sIQQ", TRACE_MAGIC, TRACE_VERSION, n, m))
        f.write(trace.layer_of.astype("<u4").tobytes())
        f.write(np.ascontiguousarray(trace.values, dtype="<f8").tobytes())


def read_trace(path: str) -> ActivationTrace:
    if path.endswith(".csv"):
        rows = _csv_rows(path)
        if len(rows) < 2:
            raise FormatError("trace csv needs a neuron-id row and a layer row", path)
        values = [[_parse_float(v, path, k + 3) for v in row] for k, row in enumerate(rows[2:])]
        try:
            return ActivationTrace(
                values=np.array(values).reshape(len(values), len(rows[0])),
                layer_of=[int(v) for v in rows[1]],
                neuron_ids=[int(v) for v in rows[0]],
            )
        except ValueError as exc:
            raise FormatError(str(exc), path) from None
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", path) from None
    head = struct.calcsize("<4sIQQ")
    if len(blob) < head:
        raise FormatError("truncated trace header", path)
    magic, version, n, m = struct.unpack_from("<4sIQQ", blob)
    if magic != TRACE_MAGIC or version != TRACE_VERSION:
        raise FormatError(f"not an ATRC v{TRACE_VERSION} file", path)
    expected = head + 4 * m + 8 * n * m
    if len(blob) != expected:
        raise FormatError(f"trace payload has {len(blob)} bytes, expected {expected}", path)
    layer_of = np.frombuffer(blob, dtype="<u4", count=m, offset=head).astype(np.int64)
    values = np.frombuffer(blob, dtype="<f8", count=n * m, offset=head + 4 * m).reshape(n, m)
    try:
        return ActivationTrace(values=values, layer_of=layer_of)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


# correlation matrices


def write_correlation(M: CorrelationMatrix, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow([f"kernel={M.kernel.value}", "layer", *[str(i) for i in M.kept_neurons]])
        for k in range(M.size):
            writer.writerow([str(M.kept_neurons[k]), str(M.layer_of[k]), *[_fmt(v) for v in M.rho[k]]])


def read_correlation(path: str) -> CorrelationMatrix:
    rows = _csv_rows(path)
    if not rows:
        raise FormatError("empty correlation file", path)
    header = regex.match(r"^kernel=(?P<kernel>\w+)$", rows[0][0])
    if not header or len(rows[0]) < 2 or rows[0][1] != "layer":
        raise FormatError("header must start with 'kernel=<k>,layer'", path, 1)
    m = len(rows[0]) - 2
    if len(rows) != m + 1:
        raise FormatError(f"expected {m} matrix rows, got {len(rows) - 1}", path)
    rho = np.empty((m, m))
    layer_of, kept = [], []
    for k, row in enumerate(rows[1:]):
        if len(row) != m + 2:
            raise FormatError(f"expected {m + 2} fields, got {len(row)}", path, k + 2)
        kept.append(int(row[0]))
        layer_of.append(int(row[1]))
        rho[k] = [_parse_float(v, path, k + 2) for v in row[2:]]
    try:
        return CorrelationMatrix(rho=rho, kernel=Kernel(header["kernel"]), kept_neurons=kept, layer_of=layer_of)
    except ValueError as exc:
        raise FormatError(str(exc), path) from None


# filtrations, diagrams and cycles


def write_filtration(F: Filtration, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["dim", "v0", "v1", "v2", "filter"])
        for simplex in F:
            verts = [str(v) for v in simplex.vertices] + [""] * (3 - len(simplex.vertices))
            writer.writerow([str(simplex.dim), *verts, _fmt(simplex.filter_value)])


def write_diagram(dg: PersistenceDiagram, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["dim", "birth", "death"])
        for dot in sorted(dg.dots, key=lambda d: (d.dim, d.birth, d.death)):
            writer.writerow([str(dot.dim), _fmt(dot.birth), _fmt(dot.death)])


def read_diagram(path: str) -> PersistenceDiagram:
    rows = _csv_rows(path)
    if not rows or rows[0] != ["dim", "birth", "death"]:
        raise FormatError("header must be 'dim,birth,death'", path, 1)
    dots = []
    for k, row in enumerate(rows[1:]):
        if len(row) != 3:
            raise FormatError(f"expected 3 fields, got {len(row)}", path, k + 2)
        dim = int(_parse_float(row[0], path, k + 2))
        birth, death = _parse_float(row[1], path, k + 2), _parse_float(row[2], path, k + 2)
        if dim not in (0, 1) or death < birth:
            raise FormatError(f"invalid dot ({row[0]}, {row[1]}, {row[2]})", path, k + 2)
        dots.append(Dot(dim, birth, death))
    return PersistenceDiagram(dots=dots)


def write_cycles(cycles: Sequence[CycleRepresentative], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for k, cycle in enumerate(cycles):
            f.write(f"CYCLE id={k} birth={_fmt(cycle.birth)} death={_fmt(cycle.death)}\n")
            for e in cycle.edges:
                f.write(f"EDGE {e.i} {e.j} {_fmt(e.weight)} {e.layer_i} {e.layer_j}\n")


def read_cycles(path: str) -> List[CycleRepresentative]:
    cycles: List[CycleRepresentative] = []
    current: Optional[dict] = None
    for lineno, line in enumerate(_open_lines(path), start=1):
        text = line.strip()
        if not text:
            continue
        head = _CYCLE_HEADER.match(text)
        if head:
            if current is not None:
                cycles.append(CycleRepresentative(**current))
            current = {
                "birth": _parse_float(head["birth"], path, lineno),
                "death": _parse_float(head["death"], path, lineno),
                "edges": [],
            }
            continue
        edge = _EDGE_LINE.match(text)
        if not edge or current is None:
            raise FormatError(f"unexpected line {text!r}", path, lineno)
        current["edges"].append(
            CycleEdge(int(edge["i"]), int(edge["j"]), _parse_float(edge["w"], path, lineno), int(edge["li"]), int(edge["lj"]))
        )
    if current is not None:
        cycles.append(CycleRepresentative(**current))
    return cycles


# feature tables and model zoos


def write_features(
    path: str,
    rows: Iterable[Tuple[str, FeatureVector]],
    baseline: Optional[Sequence[FeatureVector]] = None,
) -> None:
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["model", "label", *FEATURE_NAMES, *(CORR_NAMES if baseline is not None else [])])
        for k, (model_id, fv) in enumerate(rows):
            label = "" if fv.model_label is None else str(fv.model_label)
            extra = [_fmt(v) for v in baseline[k].values] if baseline is not None else []
            writer.writerow([model_id, label, *[_fmt(v) for v in fv.values], *extra])


def read_features(path: str) -> Tuple[List[str], List[FeatureVector], List[FeatureVector]]:
    """(model ids, topological feature vectors, Corr baseline vectors or [])."""
    rows = _csv_rows(path)
    if not rows or rows[0][:2] != ["model", "label"] or rows[0][2:14] != FEATURE_NAMES:
        raise FormatError(f"header must be model,label,{','.join(FEATURE_NAMES)}[,{','.join(CORR_NAMES)}]", path, 1)
    with_baseline = rows[0][14:] == CORR_NAMES
    if len(rows[0]) > 14 and not with_baseline:
        raise FormatError("unexpected extra feature columns", path, 1)
    ids, topo, base = [], [], []
    for k, row in enumerate(rows[1:]):
        if len(row) != len(rows[0]):
            raise FormatError(f"expected {len(rows[0])} fields, got {len(row)}", path, k + 2)
        label = int(_parse_float(row[1], path, k + 2)) if row[1] != "" else None
        values = [_parse_float(v, path, k + 2) for v in row[2:]]
        ids.append(row[0])
        try:
            topo.append(FeatureVector(values=values[:12], model_label=label))
            if with_baseline:
                base.append(FeatureVector(values=values[12:], names=CORR_NAMES, model_label=label))
        except ValueError as exc:
            raise FormatError(str(exc), path, k + 2) from None
    return ids, topo, base


def write_zoo(entries: Sequence[ModelEntry], directory: str, manifest: str = "zoo.csv") -> str:
    os.makedirs(directory, exist_ok=True)
    manifest_path = os.path.join(directory, manifest)
    with open(manifest_path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["net_path", "label"])
        for entry in entries:
            name = f"{entry.model_id}.net"
            write_network(entry.network, os.path.join(directory, name))
            writer.writerow([name, "" if entry.label is None else str(entry.label)])
    return manifest_path


def read_zoo(path: str) -> List[ModelEntry]:
    rows = _csv_rows(path)
    if not rows or rows[0] != ["net_path", "label"]:
        raise FormatError("header must be 'net_path,label'", path, 1)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    for k, row in enumerate(rows[1:]):
        if len(row) != 2:
            raise FormatError(f"expected 2 fields, got {len(row)}", path, k + 2)
        net_path = row[0] if os.path.isabs(row[0]) else os.path.join(base, row[0])
        label = int(row[1]) if row[1] != "" else None
        if label not in (None, 0, 1):
            raise FormatError(f"label must be 0 or 1, got {row[1]}", path, k + 2)
        model_id = os.path.splitext(os.path.basename(row[0]))[0]
        entries.append(ModelEntry(model_id=model_id, network=read_network(net_path), label=label))
    return entries


# detectors


def save_detector(model: DetectorModel, path: str) -> None:
    names = ",".join(model.feature_names).encode("utf-8")
    k, h = model.kept.size, model.hidden_size
    with open(path, "wb") as f:
        f.write(struct.pack("<4sII", DETECTOR_MAGIC, DETECTOR_VERSION, len(model.feature_names)))
        f.write(struct.pack("<I", len(names)) + names)
        f.write(struct.pack("<II", k, h))
        f.write(model.kept.astype("<u4").tobytes())
        for arr in (model.mean, model.std, model.hidden_weight, model.hidden_bias, model.output_weight):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        f.write(struct.pack("<d", model.output_bias))


def load_detector(path: str) -> DetectorModel:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as exc:
        raise FormatError(f"cannot read file: {exc.strerror}", path) from None
    try:
        magic, version, n_features = struct.unpack_from("<4sII", blob, 0)
        if magic != DETECTOR_MAGIC or version != DETECTOR_VERSION:
            raise FormatError(f"not a TDET v{DETECTOR_VERSION} file", path)
        offset = 12
        (name_len,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        names = blob[offset : offset + name_len].decode("utf-8").split(",")
        offset += name_len
        k, h = struct.unpack_from("<II", blob, offset)
        offset += 8

        def take(dtype: str, count: int) -> np.ndarray:
            nonlocal offset
            arr = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
            offset += arr.nbytes
            return arr

        kept = take("<u4", k).astype(np.int64)
        mean, std = take("<f8", k), take("<f8", k)
        hidden_weight = take("<f8", h * k).reshape(h, k)
        hidden_bias, output_weight = take("<f8", h), take("<f8", h)
        (output_bias,) = struct.unpack_from("<d", blob, offset)
        offset += 8
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"truncated or corrupt detector file: {exc}", path) from None
    if offset != len(blob) or len(names) != n_features:
        raise FormatError("detector file has an inconsistent layout", path)
    return DetectorModel(
        feature_names=names,
        kept=kept,
        mean=mean,
        std=std,
        hidden_weight=hidden_weight,
        hidden_bias=hidden_bias,
        output_weight=output_weight,
        output_bias=output_bias,
    )
