"""Dataset directory I/O.

Layout::

    <dir>/manifest.json          ids + generator seed/params
    <dir>/images/<id>.pgm        binary P5, 16-bit big-endian samples
    <dir>/masks/<id>.pbm         binary P4 (optional per sample)
    <dir>/meta/<id>.json         {"label": <class name>, "spacing_mm": float}

Pixels are stored as value/65535, so save->load round-trips are bit-exact for
rasters already on that grid (the phantom generator emits such rasters).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .types import CLASS_NAMES, LABEL_BY_NAME, ImageGray, PhantomDataset, RoiMask, Sample


def write_pgm(path, pixels: np.ndarray) -> None:
    """16-bit binary PGM from a [0,1] float raster."""
    u16 = np.round(np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0) * 65535.0)
    u16 = u16.astype(">u2")
    h, w = u16.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n65535\n".encode("ascii"))
        fh.write(u16.tobytes())


def _read_header_tokens(data: bytes, count: int) -> tuple[list, int]:
    """Parse whitespace/comment-separated header tokens; returns (tokens, offset)."""
    tokens: list = []
    i = 0
    while len(tokens) < count:
        if i >= len(data):
            raise ValueError("truncated netpbm header")
        c = data[i : i + 1]
        if c == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
                j += 1
            tokens.append(data[i:j].decode("ascii"))
            i = j
    return tokens, i + 1  # single whitespace after the last header token


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(data, 4)
    if tokens[0] != "P5":
        raise ValueError(f"{path}: expected binary PGM (P5), got {tokens[0]!r}")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM (maxval 65535), got {maxval}")
    raw = np.frombuffer(data[offset : offset + 2 * w * h], dtype=">u2")
    if raw.size != w * h:
        raise ValueError(f"{path}: truncated pixel data")
    return raw.reshape(h, w).astype(np.float64) / 65535.0


def write_pbm(path, bits: np.ndarray) -> None:
    """Binary PBM; bit 1 marks ROI pixels."""
    bits = np.asarray(bits).astype(bool)
    h, w = bits.shape
    packed = np.packbits(bits, axis=1)
    with open(path, "wb") as fh:
        fh.write(f"P4\n{w} {h}\n".encode("ascii"))
        fh.write(packed.tobytes())


def read_pbm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, offset = _read_header_tokens(data, 3)
    if tokens[0] != "P4":
        raise ValueError(f"{path}: expected binary PBM (P4), got {tokens[0]!r}")
    w, h = int(tokens[1]), int(tokens[2])
    row_bytes = (w + 7) // 8
    raw = np.frombuffer(data[offset : offset + row_bytes * h], dtype=np.uint8)
    if raw.size != row_bytes * h:
        raise ValueError(f"{path}: truncated mask data")
    bits = np.unpackbits(raw.reshape(h, row_bytes), axis=1)[:, :w]
    return bits.astype(bool)


def save_dataset(ds: PhantomDataset, out_dir) -> None:
    out_dir = Path(out_dir)
    for sub in ("images", "masks", "meta"):
        (out_dir / sub).mkdir(parents=True, exist_ok=True)
    for s in ds.samples:
        write_pgm(out_dir / "images" / f"{s.id}.pgm", s.image.pixels)
        if s.mask is not None:
            write_pbm(out_dir / "masks" / f"{s.id}.pbm", s.mask.bits)
        meta = {"label": CLASS_NAMES[s.label], "spacing_mm": s.image.spacing_mm}
        (out_dir / "meta" / f"{s.id}.json").write_text(json.dumps(meta, sort_keys=True))
    manifest = {"ids": ds.ids(), "seed": ds.seed, "params": ds.params}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def load_dataset(in_dir) -> PhantomDataset:
    in_dir = Path(in_dir)
    manifest_path = in_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json under {in_dir}")
    manifest = json.loads(manifest_path.read_text())
    samples = []
    for sample_id in manifest["ids"]:
        img_path = in_dir / "images" / f"{sample_id}.pgm"
        meta_path = in_dir / "meta" / f"{sample_id}.json"
        if not img_path.exists():
            raise FileNotFoundError(f"missing image file {img_path}")
        if not meta_path.exists():
            raise FileNotFoundError(f"missing meta sidecar {meta_path}")
        meta = json.loads(meta_path.read_text())
        label_name = meta.get("label")
        if label_name not in LABEL_BY_NAME:
            raise ValueError(f"{meta_path}: unknown label {label_name!r}")
        pixels = read_pgm(img_path)
        mask = None
        mask_path = in_dir / "masks" / f"{sample_id}.pbm"
        if mask_path.exists():
            bits = read_pbm(mask_path)
            if bits.shape != pixels.shape:
                raise ValueError(
                    f"{mask_path}: mask {bits.shape} does not match image {pixels.shape}"
                )
            mask = RoiMask(bits)
        samples.append(
            Sample(
                image=ImageGray(pixels, float(meta["spacing_mm"])),
                label=LABEL_BY_NAME[label_name],
                id=sample_id,
                mask=mask,
            )
        )
    return PhantomDataset(samples=samples, seed=manifest.get("seed", 0),
                          params=manifest.get("params", {}))
