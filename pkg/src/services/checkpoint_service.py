"""
SGCK1 checkpoint files

Layout (little-endian): magic "SGCK1", u32 format version, u32 manifest length, the
manifest as UTF-8 JSON, then the raw parameter payload. Payload values are f32 unless
the manifest records a float64 model. Entry offsets are byte offsets into the payload.
"""

import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from src.autograd.ema import ExponentialMovingAverage
from src.autograd.layers import Module
from src.autograd.optim import Adam
from src.config import Config
from src.exceptions import CheckpointError, FormatError
from src.models.reports import CheckpointManifest, EntryKind, ManifestEntry
from src.utils.logging_config import get_logger

logger = get_logger(__name__)

MAGIC = b"SGCK1"
FORMAT_VERSION = 1
PREFIX = struct.Struct("<II")
DTYPES = {"float32": "<f4", "float64": "<f8"}


def _payload_dtype(module: Module) -> str:
    dtypes = {np.dtype(p.dtype).name for p in module.parameters().values()}
    return "float64" if "float64" in dtypes else "float32"


def build_checkpoint(
    model: Module,
    config: Config | None = None,
    optimizer: Adam | None = None,
    ema: ExponentialMovingAverage | None = None,
    epoch: int = 0,
    model_name: str = "predictor",
) -> tuple[CheckpointManifest, bytes]:
    """Serialize parameters, optimizer moments and EMA shadow into a manifest and payload"""
    dtype = _payload_dtype(model)
    wire = np.dtype(DTYPES[dtype])
    arrays: list[tuple[EntryKind, str, np.ndarray]] = [
        (EntryKind.PARAM, name, p.data) for name, p in model.parameters().items()
    ]
    if optimizer is not None:
        state = optimizer.state
        arrays += [(EntryKind.ADAM_M, name, value) for name, value in state.first_moment.items()]
        arrays += [(EntryKind.ADAM_V, name, value) for name, value in state.second_moment.items()]
    if ema is not None:
        arrays += [(EntryKind.EMA, name, value) for name, value in ema.state.shadow.items()]

    entries, chunks, offset = [], [], 0
    for kind, name, value in arrays:
        data = np.ascontiguousarray(value, dtype=wire).tobytes(order="C")
        entries.append(ManifestEntry(name=name, kind=kind, shape=list(np.shape(value)), offset=offset))
        chunks.append(data)
        offset += len(data)

    manifest = CheckpointManifest(
        version=FORMAT_VERSION,
        model=model_name,
        dtype=dtype,
        entries=entries,
        config=config.snapshot() if config is not None else {},
        ema=ema is not None,
        optimizer_step=optimizer.state.step if optimizer is not None else 0,
        epoch=epoch,
    )
    return manifest, b"".join(chunks)


def save_checkpoint(
    path: str | Path,
    model: Module,
    config: Config | None = None,
    optimizer: Adam | None = None,
    ema: ExponentialMovingAverage | None = None,
    epoch: int = 0,
    model_name: str = "predictor",
) -> CheckpointManifest:
    """
    Write a checkpoint file

    Returns:
        The manifest that was written
    """
    manifest, payload = build_checkpoint(model, config, optimizer, ema, epoch, model_name)
    header = manifest.model_dump_json().encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + PREFIX.pack(manifest.version, len(header)) + header + payload)
    logger.info(f"Saved {model_name} checkpoint with {len(manifest.entries)} entries to {path}")
    return manifest


def read_checkpoint(path: str | Path) -> tuple[CheckpointManifest, dict[tuple[EntryKind, str], np.ndarray]]:
    """
    Parse a checkpoint file into its manifest and arrays keyed by (kind, name)

    Raises:
        FormatError: on bad magic or truncation, with the byte offset
        CheckpointError: on an unsupported version or a malformed manifest
    """
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise FormatError("not an SGCK1 checkpoint (bad magic)", offset=0)
    start = len(MAGIC) + PREFIX.size
    if len(data) < start:
        raise FormatError("truncated checkpoint header", offset=len(data))
    version, manifest_len = PREFIX.unpack_from(data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})", "version")
    if len(data) < start + manifest_len:
        raise FormatError("truncated checkpoint manifest", offset=len(data))
    try:
        manifest = CheckpointManifest.model_validate_json(data[start : start + manifest_len])
    except ValidationError as err:
        raise CheckpointError(f"malformed checkpoint manifest: {err.errors()[0]['msg']}", "manifest") from err
    if manifest.dtype not in DTYPES:
        raise CheckpointError(f"unsupported payload dtype {manifest.dtype}", "dtype")

    payload = memoryview(data)[start + manifest_len :]
    wire = np.dtype(DTYPES[manifest.dtype])
    arrays: dict[tuple[EntryKind, str], np.ndarray] = {}
    for entry in manifest.entries:
        end = entry.offset + entry.count * wire.itemsize
        if end > len(payload):
            raise FormatError(
                f"payload ends before entry {entry.kind}:{entry.name}", offset=start + manifest_len + len(payload)
            )
        values = np.frombuffer(payload, dtype=wire, count=entry.count, offset=entry.offset)
        arrays[(entry.kind, entry.name)] = values.reshape(entry.shape).copy()
    return manifest, arrays


def load_checkpoint(
    path: str | Path,
    model: Module,
    optimizer: Adam | None = None,
    ema: ExponentialMovingAverage | None = None,
    use_ema: bool | None = None,
) -> CheckpointManifest:
    """
    Restore a checkpoint into `model` (and optionally its optimizer and EMA)

    Args:
        path: Checkpoint file
        model: Module whose parameter names and shapes must match the manifest
        optimizer: Receives the stored Adam moments and step counter
        ema: Receives the stored shadow weights
        use_ema: Load the EMA shadow as live weights; defaults to the manifest's EMA flag

    Returns:
        The checkpoint manifest

    Raises:
        CheckpointError: naming the first missing or mismatched entry
    """
    manifest, arrays = read_checkpoint(path)
    params = model.parameters()
    stored = {e.name for e in manifest.params(EntryKind.PARAM)}
    for name in sorted(set(params) | stored):
        if name not in stored:
            raise CheckpointError("parameter missing from checkpoint", name)
        if name not in params:
            raise CheckpointError("checkpoint entry has no matching parameter", name)
        shape = arrays[(EntryKind.PARAM, name)].shape
        if shape != params[name].shape:
            raise CheckpointError(f"shape {shape} does not match parameter shape {params[name].shape}", name)

    use_ema = manifest.ema if use_ema is None else use_ema
    source = EntryKind.EMA if use_ema else EntryKind.PARAM
    if use_ema and not manifest.params(EntryKind.EMA):
        raise CheckpointError("checkpoint holds no EMA shadow weights", "ema")
    model.load_state_dict({name: arrays[(source, name)] for name in params})

    if optimizer is not None:
        state = optimizer.state
        state.first_moment = {e.name: arrays[(EntryKind.ADAM_M, e.name)] for e in manifest.params(EntryKind.ADAM_M)}
        state.second_moment = {e.name: arrays[(EntryKind.ADAM_V, e.name)] for e in manifest.params(EntryKind.ADAM_V)}
        state.step = manifest.optimizer_step
    if ema is not None and manifest.ema:
        for name in ema.state.shadow:
            if (EntryKind.EMA, name) not in arrays:
                raise CheckpointError("EMA shadow missing from checkpoint", name)
            ema.state.shadow[name] = arrays[(EntryKind.EMA, name)].astype(ema.state.shadow[name].dtype)
    logger.debug(f"Loaded checkpoint {path} ({'EMA' if use_ema else 'live'} weights)")
    return manifest


def describe_checkpoint(path: str | Path) -> str:
    """Human-readable manifest summary"""
    manifest, _ = read_checkpoint(path)
    kinds = {kind: len(manifest.params(kind)) for kind in EntryKind}
    total = sum(e.count for e in manifest.params(EntryKind.PARAM))
    lines = [
        f"model={manifest.model}",
        f"version={manifest.version}",
        f"dtype={manifest.dtype}",
        f"epoch={manifest.epoch}",
        f"optimizer_step={manifest.optimizer_step}",
        f"ema={str(manifest.ema).lower()}",
        f"parameters={total}",
    ]
    lines += [f"entries.{kind.value}={count}" for kind, count in kinds.items() if count]
    for key in ("seed", "d_model", "diffusion_steps", "vocab_size", "num_joints"):
        if key in manifest.config:
            lines.append(f"config.{key}={manifest.config[key]}")
    return "\n".join(lines) + "\n"
