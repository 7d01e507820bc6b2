"""Delimited-text and image I/O for the measurement-design pipeline.

Formats
-------
- Matrices: plain CSV, row-major, no header, full double precision.
- Mask lists: the n masks stacked vertically into an (n*m1) x m2 CSV.
- Observations: two-column CSV ``mask_index,value`` with 0-based indices.
- Traces: CSV with header ``method,trial,sample_size,normalized_error``.
- Summaries: CSV with header ``method,sample_size,q25,median,q75``.
- Images: binary 8-bit portable graymap (PGM, magic "P5").
- Configs: flat ``key = value`` text files whose keys mirror the experiment
  fields one-to-one; every key doubles as a command-line flag.
"""

from __future__ import annotations

import io

import numpy as np

from .harness import ExperimentConfig, INIT_METHODS
from .recovery import RecoveryOptions

FLOAT_FMT = "%.17g"


# ---------------------------------------------------------------------------
# Matrices, masks, observations


def write_matrix(path, matrix):
    """Row-major headerless CSV with full double precision."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    np.savetxt(path, matrix, delimiter=",", fmt=FLOAT_FMT)


def read_matrix(path):
    matrix = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    return matrix


def write_masks(path, masks):
    """Stack n masks of shape (m1, m2) into an (n*m1) x m2 CSV."""
    masks = [np.asarray(A, dtype=float) for A in masks]
    if not masks:
        raise ValueError("need at least one mask")
    shape = masks[0].shape
    if any(A.shape != shape for A in masks):
        raise ValueError("all masks must share one shape")
    write_matrix(path, np.vstack(masks))


def read_masks(path, m1):
    """Split a stacked mask CSV back into its list of (m1, m2) masks."""
    stacked = read_matrix(path)
    m1 = int(m1)
    if m1 < 1 or stacked.shape[0] % m1 != 0:
        raise ValueError(
            f"stacked mask file has {stacked.shape[0]} rows, not a multiple of m1={m1}"
        )
    return [stacked[i * m1 : (i + 1) * m1].copy() for i in range(stacked.shape[0] // m1)]


def write_observations(path, y):
    """Two-column CSV: 0-based mask index, observed value."""
    y = np.asarray(y, dtype=float).ravel()
    rows = np.column_stack([np.arange(len(y), dtype=float), y])
    np.savetxt(path, rows, delimiter=",", fmt=FLOAT_FMT)


def read_observations(path):
    """Read observations, reordering by the stored mask indices."""
    rows = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    if rows.shape[1] != 2:
        raise ValueError(f"observation files have two columns, got {rows.shape[1]}")
    idx = rows[:, 0].astype(int)
    if np.any(rows[:, 0] != idx):
        raise ValueError("mask indices must be integers")
    if sorted(idx) != list(range(len(idx))):
        raise ValueError("mask indices must be a permutation of 0..n-1")
    y = np.empty(len(idx))
    y[idx] = rows[:, 1]
    return y


# ---------------------------------------------------------------------------
# Traces and summaries


def write_traces(path, traces):
    lines = ["method,trial,sample_size,normalized_error"]
    for trace in traces:
        for size, err in zip(trace.sample_sizes, trace.errors):
            lines.append(f"{trace.method},{trace.trial},{size},{FLOAT_FMT % err}")
    _write_text(path, "\n".join(lines) + "\n")


def write_summary(path, rows):
    lines = ["method,sample_size,q25,median,q75"]
    for row in rows:
        lines.append(
            f"{row.method},{row.sample_size},{FLOAT_FMT % row.q25},"
            f"{FLOAT_FMT % row.median},{FLOAT_FMT % row.q75}"
        )
    _write_text(path, "\n".join(lines) + "\n")


def _write_text(path, text):
    with open(path, "w", newline="\n") as handle:
        handle.write(text)


# ---------------------------------------------------------------------------
# Portable graymap (binary, 8-bit)


def write_pgm(path, pixels):
    """Write an 8-bit grayscale image as binary PGM (magic P5)."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 2:
        raise ValueError(f"expected a 2-D pixel grid, got shape {pixels.shape}")
    if np.issubdtype(pixels.dtype, np.floating):
        if np.any(pixels < -0.5) or np.any(pixels > 255.5):
            raise ValueError("float pixel values must lie in [0, 255] to write 8-bit PGM")
        pixels = np.rint(pixels)
    pixels = pixels.astype(np.int64)
    if pixels.min() < 0 or pixels.max() > 255:
        raise ValueError("pixel values must lie in [0, 255] for 8-bit PGM")
    h, w = pixels.shape
    with open(path, "wb") as handle:
        handle.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        handle.write(pixels.astype(np.uint8).tobytes())


def read_pgm(path):
    """Read a binary 8-bit PGM into a float array of pixel values."""
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM file (missing P5 magic)")
    fields, pos = [], 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if not 0 < maxval < 256:
        raise ValueError(f"only 8-bit graymaps are supported, got maxval={maxval}")
    raw = data[pos : pos + w * h]
    if len(raw) != w * h:
        raise ValueError("truncated PGM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).astype(float)


# ---------------------------------------------------------------------------
# Flat key-value configuration

_TRUTHY = {"1", "true", "yes", "on"}
_FALSY = {"0", "false", "no", "off"}


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in _TRUTHY:
        return True
    if lowered in _FALSY:
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_float(text):
    lowered = text.strip().lower()
    if lowered in ("", "auto", "none"):
        return None
    return float(text)


def _parse_stride(text):
    lowered = text.strip().lower()
    if lowered in ("", "auto", "none"):
        return None
    return tuple(int(part) for part in text.replace(",", " ").split())


def _parse_init_method(text):
    method = text.strip()
    if method not in INIT_METHODS and method != "auto":
        raise ValueError(f"initMethod must be one of {INIT_METHODS + ('auto',)}, got {method!r}")
    return method


# flat key -> (target dataclass, attribute, parser).  The flat keys are also
# the command-line flag names, so the two interfaces stay in lockstep.
CONFIG_SPEC = {
    "m1": ("config", "m1", int),
    "m2": ("config", "m2", int),
    "R": ("config", "rank", int),
    "sigma2": ("config", "sigma2", float),
    "eta2": ("config", "eta2", float),
    "n_ini": ("config", "n_ini", int),
    "n_seq": ("config", "n_seq", int),
    "R_ini": ("config", "rank_ini", int),
    "initMethod": ("config", "init_method", _parse_init_method),
    "trials": ("config", "trials", int),
    "seed": ("config", "seed", int),
    "batchSize": ("config", "batch_size", int),
    "batchRandomFraction": ("config", "batch_random_fraction", float),
    "evalStride": ("config", "eval_stride", _parse_stride),
    "lambda": ("recovery", "lam", _parse_optional_float),
    "lambdaScale": ("recovery", "lam_scale", float),
    "alpha": ("recovery", "alpha", float),
    "maxIters": ("recovery", "max_iters", int),
    "relTol": ("recovery", "rel_tol", float),
    "rankThreshold": ("recovery", "rank_threshold", float),
    "continuation": ("recovery", "continuation", _parse_bool),
}


def parse_config_text(text):
    """Parse flat ``key = value`` lines into a raw {key: string} mapping.

    Blank lines and ``#`` comments are ignored.  Keys must be known and
    unique.  Values stay unparsed so command-line overrides can be merged
    before typed conversion.
    """
    raw = {}
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in CONFIG_SPEC:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        raw[key] = value
    return raw


def read_config(path):
    with open(path) as handle:
        return parse_config_text(handle.read())


def build_config(raw):
    """Typed ExperimentConfig from a raw {flat key: string} mapping.

    ``initMethod = auto`` resolves to the unbiased-bases construction when
    the geometry supports it and the flipped-frames construction otherwise.
    """
    from .harness import default_init_method  # local to avoid cycle at import

    values = {"config": {}, "recovery": {}}
    for key, text in raw.items():
        target, attr, parser = CONFIG_SPEC[key]
        try:
            values[target][attr] = parser(str(text))
        except ValueError as exc:
            raise ValueError(f"config key {key!r}: {exc}") from exc
    cfg = dict(values["config"])
    if values["recovery"]:
        cfg["recovery"] = RecoveryOptions(**values["recovery"])
    if cfg.get("init_method", "auto") == "auto":
        probe = ExperimentConfig(**{**cfg, "init_method": "flip"})
        cfg["init_method"] = default_init_method(
            probe.m1, probe.m2, probe.n_ini, probe.rank_ini
        )
    return ExperimentConfig(**cfg)


def config_to_text(config):
    """Serialize a config back to flat key = value text (lossless round trip)."""
    lines = []
    for key, (target, attr, _) in CONFIG_SPEC.items():
        obj = config if target == "config" else config.recovery
        value = getattr(obj, attr)
        if value is None:
            text = "auto"
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = FLOAT_FMT % value
        elif isinstance(value, tuple):
            text = ",".join(str(v) for v in value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def write_config(path, config):
    _write_text(path, config_to_text(config))
