"""Double-precision convolution kernels for the inference engine.

Every kernel works on channel-first arrays `(C, H, W)`. Work can be
spread over a thread pool; it is always cut into the same fixed bands,
so results do not depend on the number of workers.
"""

# Standard library imports
from concurrent.futures import Executor
from typing import Callable, List, Optional

# Third-party imports
import numpy as np
from django.conf import settings

# Application imports
from oxymap.errors import DimensionMismatchError


def _run_bands(
    fn: Callable[[int, int], None],
    total: int,
    band: int,
    executor: Optional[Executor],
) -> None:
    """Calls `fn(start, stop)` over consecutive bands of `band` items."""
    starts = list(range(0, total, band))
    if executor is None or len(starts) == 1:
        for s in starts:
            fn(s, min(s + band, total))
        return
    futures = [executor.submit(fn, s, min(s + band, total)) for s in starts]
    for future in futures:
        future.result()


def _check_bias(bias: np.ndarray, c_out: int) -> np.ndarray:
    bias = np.asarray(bias, dtype=np.float64)
    if bias.shape != (c_out,):
        raise DimensionMismatchError(
            f"Expected a bias of shape ({c_out},), received {bias.shape}."
        )
    return bias


def conv2d_3x3(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 1,
    pad: int = 1,
    executor: Optional[Executor] = None,
    band_rows: Optional[int] = None,
) -> np.ndarray:
    """Cross-correlates an input with 3x3 kernels under zero padding,
    as nine shifted channel contractions.

    Raises:
        `DimensionMismatchError` if the kernel, bias and input disagree.

    Args:
        x (`np.ndarray`): The input shaped `(C_in, H, W)`.

        weight (`np.ndarray`): The kernels shaped `(C_out, C_in, 3, 3)`.

        bias (`np.ndarray`): The biases shaped `(C_out,)`.

        stride (`int`): The step between output samples. Defaults to 1.

        pad (`int`): The zero padding per side. Defaults to 1.

        executor (`Executor`): Runs row bands concurrently when given.

        band_rows (`int`): Output rows per band. Defaults to
            `ENGINE_BAND_ROWS` from the settings.

    Returns:
        (`np.ndarray`): The output shaped `(C_out, H_out, W_out)`.
    """
    # Validate shapes
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise DimensionMismatchError(
            f"Expected an input (C, H, W) and kernels (C_out, C_in, 3, 3), "
            f"received {x.shape} and {weight.shape}."
        )
    c_out, c_in = weight.shape[:2]
    if x.shape[0] != c_in:
        raise DimensionMismatchError(
            f"The kernels expect {c_in} input channel(s), received "
            f"{x.shape[0]}."
        )
    bias = _check_bias(bias, c_out)
    if stride < 1 or pad < 0:
        raise ValueError("The stride must be positive and the padding >= 0.")

    # Pad and size the output
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    h_out = (xp.shape[1] - 3) // stride + 1
    w_out = (xp.shape[2] - 3) // stride + 1
    if h_out < 1 or w_out < 1:
        raise DimensionMismatchError(
            f"A {x.shape[1]}x{x.shape[2]} input is too small for a 3x3 "
            f"kernel with padding {pad}."
        )
    out = np.empty((c_out, h_out, w_out))

    def fill(r0: int, r1: int) -> None:
        acc = np.broadcast_to(
            bias[:, np.newaxis, np.newaxis], (c_out, r1 - r0, w_out)
        ).copy()
        for di in range(3):
            rows = slice(r0 * stride + di, (r1 - 1) * stride + di + 1, stride)
            for dj in range(3):
                cols = slice(dj, (w_out - 1) * stride + dj + 1, stride)
                acc += np.tensordot(
                    weight[:, :, di, dj], xp[:, rows, cols], axes=(1, 0)
                )
        out[:, r0:r1] = acc

    _run_bands(fill, h_out, band_rows or settings.ENGINE_BAND_ROWS, executor)
    return out


def maxpool_2x2(x: np.ndarray) -> np.ndarray:
    """Takes the maximum of every non-overlapping 2x2 window.

    Raises:
        `DimensionMismatchError` if either spatial size is odd.
    """
    x = np.asarray(x, dtype=np.float64)
    c, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionMismatchError(
            f"Max pooling needs even spatial sizes, received {h}x{w}."
        )
    return x.reshape(c, h // 2, 2, w // 2, 2).max(axis=(2, 4))


def upconv_3x3(
    x: np.ndarray,
    weight: np.ndarray,
    bias: np.ndarray,
    stride: int = 2,
    padding: int = 1,
    output_padding: int = 1,
    executor: Optional[Executor] = None,
    band_channels: int = 16,
) -> np.ndarray:
    """Applies a 3x3 transposed convolution. Each input sample scatters
    its kernel-weighted contribution to the output at `stride` spacing;
    `padding` is cropped from the leading edge and `output_padding`
    extends the trailing edge, so the defaults double the input size.

    Raises:
        `DimensionMismatchError` if the kernel, bias and input disagree.

    Args:
        x (`np.ndarray`): The input shaped `(C_in, H, W)`.

        weight (`np.ndarray`): The kernels shaped `(C_in, C_out, 3, 3)`.

        bias (`np.ndarray`): The biases shaped `(C_out,)`.

        stride (`int`): The upsampling factor. Defaults to 2.

        padding (`int`): The implicit input padding. Defaults to 1.

        output_padding (`int`): Extra trailing output rows and columns.
            Defaults to 1.

        executor (`Executor`): Runs output-channel bands concurrently.

        band_channels (`int`): Output channels per band.

    Returns:
        (`np.ndarray`): The output shaped
            `(C_out, (H - 1) stride - 2 padding + 3 + output_padding, ...)`.
    """
    # Validate shapes
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
        raise DimensionMismatchError(
            f"Expected an input (C, H, W) and kernels (C_in, C_out, 3, 3), "
            f"received {x.shape} and {weight.shape}."
        )
    c_in, c_out = weight.shape[:2]
    if x.shape[0] != c_in:
        raise DimensionMismatchError(
            f"The kernels expect {c_in} input channel(s), received "
            f"{x.shape[0]}."
        )
    bias = _check_bias(bias, c_out)
    if not 0 <= output_padding < stride:
        raise ValueError(
            "The output padding must be non-negative and smaller than the "
            "stride."
        )

    # Size the scatter buffer and the cropped output
    _, h, w = x.shape
    h_out = (h - 1) * stride - 2 * padding + 3 + output_padding
    w_out = (w - 1) * stride - 2 * padding + 3 + output_padding
    h_buf = max((h - 1) * stride + 3, padding + h_out)
    w_buf = max((w - 1) * stride + 3, padding + w_out)
    out = np.empty((c_out, h_out, w_out))

    def fill(o0: int, o1: int) -> None:
        buf = np.zeros((o1 - o0, h_buf, w_buf))
        for di in range(3):
            rows = slice(di, di + (h - 1) * stride + 1, stride)
            for dj in range(3):
                cols = slice(dj, dj + (w - 1) * stride + 1, stride)
                buf[:, rows, cols] += np.tensordot(
                    weight[:, o0:o1, di, dj], x, axes=(0, 0)
                )
        out[o0:o1] = (
            buf[:, padding : padding + h_out, padding : padding + w_out]
            + bias[o0:o1, np.newaxis, np.newaxis]
        )

    _run_bands(fill, c_out, band_channels, executor)
    return out


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def leaky_relu(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


ACTIVATIONS: List[str] = ["none", "relu", "leaky_relu", "tanh"]


def activate(x: np.ndarray, name: str, slope: float = 0.0) -> np.ndarray:
    """Applies a named activation.

    Raises:
        `ValueError` if the activation is unknown.
    """
    if name == "relu":
        return relu(x)
    if name == "leaky_relu":
        return leaky_relu(x, slope)
    if name == "tanh":
        return np.tanh(x)
    if name == "none":
        return x
    raise ValueError(
        f'Unknown activation "{name}". Expected one of '
        f"{', '.join(ACTIVATIONS)}."
    )
