"""The OXW container: named float32 tensors in a 64-byte aligned blob,
preceded by a JSON header that holds the generator manifest and the
tensor table.

Layout: the 8-byte magic, a little-endian uint32 header length, the
UTF-8 JSON header padded with spaces so that the blob starts on an
aligned offset, then the blob. Tensor offsets are relative to the start
of the blob.
"""

# Standard library imports
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

# Third-party imports
import numpy as np
from pydantic import BaseModel, Field, ValidationError

# Application imports
from common.storage import IDataStore, IDataStoreFactory
from oxymap.errors import ContainerFormatError
from oxymap.neural.manifest import GeneratorManifest

PathLike = Union[Path, str]

OXW_MAGIC = b"OXW\x00\x00\x00\x00\x01"
OXW_VERSION = 1
ALIGN = 64

Role = Literal["generator", "oracle"]


class TensorEntry(BaseModel):
    """One row of the tensor table."""

    name: str
    shape: List[int]
    dtype: Literal["float32"] = "float32"
    offset: int = Field(ge=0)
    nbytes: int = Field(ge=0)


class OxwHeader(BaseModel):
    """The JSON header of a container."""

    version: int = OXW_VERSION
    role: Role
    align: int = ALIGN
    architecture: GeneratorManifest
    tensors: List[TensorEntry]
    metadata: Dict = Field(default_factory=dict)


@dataclass
class OxwContainer:
    """A decoded container. Tensors are held in double precision."""

    role: Role
    architecture: GeneratorManifest
    tensors: Dict[str, np.ndarray]
    metadata: Dict = field(default_factory=dict)


def _pad_size(size: int, align: int = ALIGN) -> int:
    return (size + align - 1) // align * align


def _layout(
    tensors: Dict[str, np.ndarray]
) -> Tuple[List[TensorEntry], List[bytes]]:
    """Assigns aligned blob offsets to tensors in insertion order."""
    entries, chunks, offset = [], [], 0
    for name, value in tensors.items():
        data = np.ascontiguousarray(value, dtype="<f4").tobytes()
        entries.append(
            TensorEntry(
                name=name,
                shape=list(np.shape(value)),
                offset=offset,
                nbytes=len(data),
            )
        )
        padded = _pad_size(len(data))
        chunks.append(data + b"\0" * (padded - len(data)))
        offset += padded
    return entries, chunks


def encode_oxw(container: OxwContainer) -> bytes:
    """Serializes a container. Equal containers encode to equal bytes."""
    entries, chunks = _layout(container.tensors)
    header = OxwHeader(
        role=container.role,
        architecture=container.architecture,
        tensors=entries,
        metadata=container.metadata,
    )
    text = json.dumps(header.model_dump(), sort_keys=True).encode("utf-8")
    prefix = len(OXW_MAGIC) + 4
    text += b" " * (_pad_size(prefix + len(text)) - prefix - len(text))
    return OXW_MAGIC + struct.pack("<I", len(text)) + text + b"".join(chunks)


def decode_oxw(raw: bytes) -> OxwContainer:
    """Parses a serialized container.

    Raises:
        `ContainerFormatError` if the bytes are not a valid container.
    """
    # Read header
    prefix = len(OXW_MAGIC) + 4
    if len(raw) < prefix or raw[: len(OXW_MAGIC)] != OXW_MAGIC:
        raise ContainerFormatError("The data is not an OXW container.")
    (length,) = struct.unpack("<I", raw[len(OXW_MAGIC) : prefix])
    try:
        header = OxwHeader(**json.loads(raw[prefix : prefix + length]))
    except (ValueError, ValidationError) as e:
        raise ContainerFormatError(
            f"Unable to parse the OXW header. {e}"
        ) from None
    if header.version != OXW_VERSION:
        raise ContainerFormatError(
            f"Unsupported OXW version {header.version}; expected "
            f"{OXW_VERSION}."
        )

    # Slice tensors out of the blob
    blob = raw[prefix + length :]
    tensors = {}
    for entry in header.tensors:
        count = int(np.prod(entry.shape, dtype=np.int64))
        if entry.nbytes != 4 * count or (
            entry.offset + entry.nbytes > len(blob)
        ):
            raise ContainerFormatError(
                f'Tensor "{entry.name}" of shape {entry.shape} does not fit '
                f"its table entry ({entry.nbytes} byte(s) at offset "
                f"{entry.offset}, blob of {len(blob)} byte(s))."
            )
        values = np.frombuffer(
            blob, dtype="<f4", count=count, offset=entry.offset
        )
        tensors[entry.name] = values.astype(np.float64).reshape(entry.shape)
    return OxwContainer(
        role=header.role,
        architecture=header.architecture,
        tensors=tensors,
        metadata=header.metadata,
    )


def save_oxw(
    container: OxwContainer,
    fpath: PathLike,
    store: Optional[IDataStore] = None,
) -> Path:
    """Writes a container and returns its resolved path."""
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "wb") as f:
        f.write(encode_oxw(container))
    return store.resolve(fpath)


def load_oxw(
    fpath: PathLike, store: Optional[IDataStore] = None
) -> OxwContainer:
    """Reads a container.

    Raises:
        `ContainerFormatError` if the file is not a valid container.
    """
    store = store or IDataStoreFactory.get()
    with store.open_file(fpath, "rb") as f:
        return decode_oxw(f.read())
